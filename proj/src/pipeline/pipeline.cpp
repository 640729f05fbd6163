#include "slim/pipeline/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "slim/chem/sampler.hpp"
#include "slim/editor/pairs.hpp"
#include "slim/eval/benchmark.hpp"
#include "slim/numcore/linalg.hpp"
#include "slim/numcore/rng.hpp"
#include "slim/probe/probe.hpp"
#include "slim/steer/steer.hpp"

namespace slim::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<Stage, 12> kOrder{Stage::GenPairs,  Stage::TrainEditor,      Stage::ScanLayers,
                                       Stage::ExtractActs, Stage::TrainSae,      Stage::ExtractDirection,
                                       Stage::TuneAlpha, Stage::Steer,            Stage::Evaluate,
                                       Stage::Ablate,    Stage::Interpret,        Stage::Report};

constexpr std::array<std::string_view, 12> kNames{"gen-pairs", "train-editor",      "scan-layers", "extract-acts",
                                                  "train-sae", "extract-direction", "tune-alpha",  "steer",
                                                  "evaluate",  "ablate",            "interpret",   "report"};

constexpr int kStampVersion = 1;

// SAE variants trained side by side; the first is the full objective.
struct Variant {
  const char* tag;       // file suffix and direction-arm suffix
  const char* arm;       // ablation arm name
};
constexpr std::array<Variant, 3> kVariants{{{"", "slim"}, {"_vanilla", "vanilla-sae"}, {"_nograd", "slim-no-lgrad"}}};

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string pname(chem::Property p) { return std::string(chem::name(p)); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception&) {
    throw IoError(path.string() + ": malformed JSON");
  }
}

class Runner {
 public:
  Runner(const PipelineConfig& cfg, const Log& log) : cfg_(cfg), log_(log), wd_(cfg.work_dir) {
    json canon = to_json(cfg);
    canon.erase("work_dir");
    hash_ = hex(fnv1a(canon.dump()));
  }

  StageResult run(Stage s, bool force) {
    StageResult r{s, false, {}};
    if (!force && fresh(s)) {
      r.skipped = true;
      r.summary.push_back(std::string(name(s)) + ": up to date");
      say(r.summary.back());
      return r;
    }
    summary_ = &r.summary;
    for (const char* sub : {"stamps", "pairs", "directions", "records"}) fs::create_directories(wd_ / sub);
    switch (s) {
      case Stage::GenPairs: gen_pairs(); break;
      case Stage::TrainEditor: train_editor(); break;
      case Stage::ScanLayers: scan_layers(); break;
      case Stage::ExtractActs: extract_acts(); break;
      case Stage::TrainSae: train_sae(); break;
      case Stage::ExtractDirection: extract_direction(); break;
      case Stage::TuneAlpha: tune_alpha(); break;
      case Stage::Steer: steer(); break;
      case Stage::Evaluate: evaluate(); break;
      case Stage::Ablate: ablate(); break;
      case Stage::Interpret: interpret(); break;
      case Stage::Report: report(); break;
    }
    summary_ = nullptr;
    write_text(stamp(s), json{{"stage", name(s)}, {"version", kStampVersion}, {"config_hash", hash_}}.dump(2) + "\n");
    return r;
  }

 private:
  // --- bookkeeping -------------------------------------------------------

  fs::path stamp(Stage s) const { return wd_ / "stamps" / (std::string(name(s)) + ".json"); }

  bool fresh(Stage s) const {
    if (!fs::exists(stamp(s))) return false;
    try {
      const json j = read_json(stamp(s));
      return j.value("config_hash", "") == hash_ && j.value("version", 0) == kStampVersion;
    } catch (const IoError&) {
      return false;
    }
  }

  void need(Stage upstream, Stage self) const {
    if (fresh(upstream)) return;
    throw MissingArtifact(std::string(name(upstream)),
                          std::string(name(self)) + " needs the output of " + std::string(name(upstream)) +
                              (fs::exists(stamp(upstream)) ? " (stale for this config)" : "") + "; run `slim " +
                              std::string(name(upstream)) + "` first");
  }

  void ensure(Stage upstream) {
    if (fresh(upstream)) return;
    auto* saved = summary_;
    Runner(cfg_, log_).run(upstream, false);
    summary_ = saved;
  }

  void say(const std::string& line) const {
    if (log_) log_(line);
  }

  void note(const std::string& line) {
    say(line);
    if (summary_ != nullptr) summary_->push_back(line);
  }

  // --- shared inputs -----------------------------------------------------

  std::vector<chem::Molecule> molecules(std::string_view stream, int n) const {
    Rng rng(cfg_.seed, stream);
    std::vector<chem::Molecule> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(chem::sample_molecule(rng, {cfg_.data.min_atoms, cfg_.data.max_atoms}));
    return out;
  }

  int best_layer() const { return read_json(wd_ / "scan.json").at("best_layer").get<int>(); }

  fs::path direction_path(const std::string& kind, chem::Property p) const {
    return wd_ / "directions" / (kind + "_" + pname(p) + ".json");
  }

  std::optional<steer::Direction> maybe_direction(const std::string& kind, chem::Property p) const {
    const auto path = direction_path(kind, p);
    if (!fs::exists(path)) return std::nullopt;
    return steer::load_direction(path);
  }

  editor::Sampling sampling() const {
    return {cfg_.steer.temperature, cfg_.steer.top_p, cfg_.steer.max_tokens};
  }

  eval::BenchmarkSpec spec(chem::Property p, int layer, std::string_view stream) const {
    return {{p, cfg_.direction}, layer, cfg_.steer.n, sampling(), hash_combine(cfg_.seed, fnv1a(stream))};
  }

  // Direction arms that tune-alpha, steer and ablate consider, in report order.
  std::vector<std::string> direction_arms() const {
    std::vector<std::string> arms{"random", "caa", "grad"};
    for (const auto& v : kVariants) arms.push_back(std::string("slim") + v.tag);
    return arms;
  }

  static std::string arm_label(const std::string& kind) {
    for (const auto& v : kVariants)
      if (kind == std::string("slim") + v.tag) return v.arm;
    return kind;
  }

  std::map<std::string, std::map<chem::Property, double>> tuned_alphas() const {
    std::map<std::string, std::map<chem::Property, double>> out;
    const json j = read_json(wd_ / "alpha.json");
    for (const auto& [arm, per] : j.items()) {
      for (const auto& [prop, v] : per.items()) out[arm][*chem::property_from_name(prop)] = v.at("best_alpha");
    }
    return out;
  }

  // --- stages ------------------------------------------------------------

  void gen_pairs() {
    if (cfg_.backend == Backend::TinyTransformer) {
      editor::CorpusOptions o;
      o.pairs = static_cast<std::size_t>(cfg_.data.corpus_pairs);
      o.off_target = cfg_.data.corpus_off_target;
      o.sizes = {cfg_.data.min_atoms, cfg_.data.max_atoms};
      o.properties = cfg_.properties;
      Rng rng(cfg_.seed, "corpus");
      const auto corpus = editor::make_corpus(o, rng);
      editor::write_corpus(wd_ / "corpus.tsv", corpus);
      note("gen-pairs: " + std::to_string(corpus.size()) + " SFT pairs -> corpus.tsv");
    }
    const Rng base(cfg_.seed, "grad-pairs");
    for (auto p : cfg_.properties) {
      Rng rng = base.fork(static_cast<std::uint64_t>(p));
      std::vector<editor::EditPair> pairs;
      int misses = 0;
      while (static_cast<int>(pairs.size()) < cfg_.data.pairs_per_property) {
        const auto mol = chem::sample_molecule(rng, {cfg_.data.min_atoms, cfg_.data.max_atoms});
        try {
          pairs.push_back(editor::make_edit_pair(mol, {p, cfg_.direction}, rng));
        } catch (const chem::ChemError&) {
          if (++misses > 100 * cfg_.data.pairs_per_property) {
            throw ConfigError("gen-pairs: cannot build " + pname(p) + " pairs in this molecule size range");
          }
        }
      }
      editor::write_corpus(wd_ / "pairs" / (pname(p) + ".tsv"), pairs);
    }
    note("gen-pairs: " + std::to_string(cfg_.data.pairs_per_property) + " direction pairs per property -> pairs/");
  }

  void train_editor() {
    if (cfg_.backend == Backend::Synthetic) {
      write_text(wd_ / "editor.json", json{{"kind", "synthetic"}, {"config", to_json(cfg_).at("synthetic")}}.dump(2) + "\n");
      note("train-editor: synthetic backend needs no training (" + std::to_string(cfg_.synthetic.layers) +
           " layers, width " + std::to_string(cfg_.synthetic.width) + ", planted layer " +
           std::to_string(cfg_.synthetic.planted_layer) + ")");
      return;
    }
    ensure(Stage::GenPairs);
    const auto corpus = editor::read_corpus(wd_ / "corpus.tsv");
    editor::TinyTransformerEditor model(cfg_.transformer);
    const auto rep = editor::train_tiny_editor(model, corpus, cfg_.train, [&](int e, int s, int n, double loss) {
      if (s % 50 == 0 || s == n) say("  epoch " + std::to_string(e) + " step " + std::to_string(s) + "/" +
                                     std::to_string(n) + " loss " + fmt(loss, 4));
    });
    model.save(wd_ / "editor.json");
    write_text(wd_ / "train_report.json", json{{"initial_loss", rep.initial_loss},
                                                {"epoch_loss", rep.epoch_loss},
                                                {"heldout_loss", rep.heldout_loss},
                                                {"heldout_token_accuracy", rep.heldout_token_accuracy},
                                                {"train_pairs", rep.train_pairs},
                                                {"heldout_pairs", rep.heldout_pairs},
                                                {"dropped_pairs", rep.dropped_pairs}}
                                               .dump(2) + "\n");
    note("train-editor: loss " + fmt(rep.initial_loss, 4) + " -> " + fmt(rep.epoch_loss.back(), 4) + ", held-out " +
         fmt(rep.heldout_loss, 4) + " (token accuracy " + fmt(rep.heldout_token_accuracy, 3) + ")");
  }

  void scan_layers() {
    if (cfg_.backend == Backend::Synthetic) {
      ensure(Stage::TrainEditor);
    } else {
      need(Stage::TrainEditor, Stage::ScanLayers);
    }
    const auto ed = load_editor(cfg_);
    const auto mols = molecules("scan-molecules", cfg_.data.scan_molecules);
    const auto res = probe::layer_scan(*ed, mols, cfg_.properties, {1.0, 0.2, cfg_.seed});
    json props = json::array();
    for (auto p : res.properties) props.push_back(pname(p));
    json r2 = json::array();
    for (Eigen::Index l = 0; l < res.r2.rows(); ++l) {
      json row = json::array();
      for (Eigen::Index c = 0; c < res.r2.cols(); ++c) row.push_back(res.r2(l, c));
      r2.push_back(row);
    }
    write_text(wd_ / "scan.json", json{{"best_layer", res.best_layer}, {"properties", props}, {"r2", r2}}.dump(2) + "\n");
    probe::write_r2_csv(wd_ / "r2.csv", res);
    const Vector mean = res.mean_r2();
    std::string line = "scan-layers: l* = " + std::to_string(res.best_layer) + "; mean R2 by layer:";
    for (Eigen::Index l = 0; l < mean.size(); ++l) line += " " + fmt(mean(l));
    note(line);
  }

  void extract_acts() {
    need(Stage::ScanLayers, Stage::ExtractActs);
    const auto ed = load_editor(cfg_);
    const int layer = best_layer();
    const auto acts =
        probe::extract_activations(*ed, molecules("sae-molecules", cfg_.data.sae_molecules), layer, cfg_.properties);
    probe::save_activations(wd_ / "acts.json", acts);
    note("extract-acts: " + std::to_string(acts.rows()) + " x " + std::to_string(acts.hidden.cols()) +
         " activations at layer " + std::to_string(layer));
  }

  void train_sae() {
    need(Stage::ScanLayers, Stage::TrainSae);
    ensure(Stage::ExtractActs);
    ensure(Stage::GenPairs);
    if (cfg_.backend == Backend::TinyTransformer) need(Stage::TrainEditor, Stage::TrainSae);
    const auto ed = load_editor(cfg_);
    const int layer = best_layer();
    const auto acts = probe::load_activations(wd_ / "acts.json");

    Matrix G(static_cast<Eigen::Index>(cfg_.properties.size()), ed->width());
    for (std::size_t i = 0; i < cfg_.properties.size(); ++i) {
      const auto p = cfg_.properties[i];
      const auto pairs = editor::read_corpus(wd_ / "pairs" / (pname(p) + ".tsv"));
      auto d = steer::grad_direction(*ed, pairs, layer);
      d.source = "pairs/" + pname(p) + ".tsv";
      steer::save_direction(direction_path("grad", p), d);
      G.row(static_cast<Eigen::Index>(i)) = d.vector.transpose();
    }
    note("train-sae: gradient directions from " + std::to_string(cfg_.data.pairs_per_property) +
         " pairs per property at layer " + std::to_string(layer));

    std::ostringstream hist;
    hist << "variant,epoch,recon,sparse,sup,contrast,grad,total\n";
    json align = json::object();
    for (const auto& v : kVariants) {
      sae::SaeConfig sc = cfg_.sae;
      if (std::string(v.tag) == "_vanilla") sc = eval::vanilla_config(sc);
      if (std::string(v.tag) == "_nograd") sc = eval::no_grad_config(sc);
      const std::string label = v.arm;
      const auto [model, result] =
          sae::train_sae(acts, sc.lambda.grad > 0 ? &G : nullptr, sc, [&](int epoch, const sae::LossBreakdown& l) {
            if (epoch % 10 == 0 || epoch == sc.epochs) {
              say("  " + label + " epoch " + std::to_string(epoch) + " total " + fmt(l.total, 5) + " recon " +
                  fmt(l.recon, 5));
            }
          });
      sae::save_checkpoint(wd_ / ("sae" + std::string(v.tag) + ".json"), model);
      for (std::size_t e = 0; e < result.history.size(); ++e) {
        const auto& l = result.history[e];
        hist << label << ',' << e + 1 << ',' << fmt(l.recon, 6) << ',' << fmt(l.sparse, 6) << ',' << fmt(l.sup, 6)
             << ',' << fmt(l.contrast, 6) << ',' << fmt(l.grad, 6) << ',' << fmt(l.total, 6) << '\n';
      }
      std::string line = "train-sae: " + label + " alignment cos:";
      for (std::size_t i = 0; i < cfg_.properties.size(); ++i) {
        const double c = sae::alignment_cosine(model, G.row(static_cast<Eigen::Index>(i)).transpose(), sc.k);
        align[label][pname(cfg_.properties[i])] = c;
        line += " " + pname(cfg_.properties[i]) + " " + fmt(c);
      }
      note(line);
    }
    write_text(wd_ / "sae_history.csv", hist.str());
    write_text(wd_ / "alignment.json", align.dump(2) + "\n");
  }

  void extract_direction() {
    need(Stage::TrainSae, Stage::ExtractDirection);
    const auto acts = probe::load_activations(wd_ / "acts.json");
    for (auto p : cfg_.properties) {
      const auto grad = steer::load_direction(direction_path("grad", p));
      auto caa = steer::caa_direction(acts, p);
      caa.source = "acts.json";
      steer::save_direction(direction_path("caa", p), caa);
      auto rnd = steer::random_direction(static_cast<int>(grad.size()),
                                         hash_combine(cfg_.seed, static_cast<std::uint64_t>(p)));
      rnd.properties = {p};
      steer::save_direction(direction_path("random", p), rnd);
      std::string line = "extract-direction: " + pname(p) + " cos(caa, grad) " + fmt(cosine(caa.vector, grad.vector));
      for (const auto& v : kVariants) {
        const std::string file = "sae" + std::string(v.tag) + ".json";
        const auto model = sae::load_checkpoint(wd_ / file);
        const std::string kind = std::string("slim") + v.tag;
        try {
          auto d = steer::slim_direction(model, grad, model.config().k);
          d.source = file;
          steer::save_direction(direction_path(kind, p), d);
          line += "; " + std::string(v.arm) + " support " + std::to_string(d.support.size()) + " cos " +
                  fmt(cosine(d.vector, grad.vector));
        } catch (const DegenerateError&) {
          fs::remove(direction_path(kind, p));
          line += "; " + std::string(v.arm) + " degenerate (omitted)";
        }
      }
      note(line);
    }
  }

  void tune_alpha() {
    need(Stage::ExtractDirection, Stage::TuneAlpha);
    const auto ed = load_editor(cfg_);
    const int layer = best_layer();
    const auto val = molecules("validation-molecules", cfg_.data.validation);
    json out = json::object();
    for (const auto& kind : direction_arms()) {
      for (auto p : cfg_.properties) {
        const auto d = maybe_direction(kind, p);
        if (!d) continue;
        const auto s = eval::tune_alpha(*ed, val, *d, cfg_.steer.alpha_grid, spec(p, layer, "validation"), cfg_.steer.tau);
        out[kind][pname(p)] = {{"best_alpha", s.best_alpha}, {"grid", s.grid}, {"acc", s.acc}};
      }
      std::string line = "tune-alpha: " + arm_label(kind) + " alpha";
      if (out.contains(kind)) {
        for (const auto& [prop, v] : out[kind].items()) line += " " + prop + "=" + fmt(v["best_alpha"].get<double>(), 1);
      }
      note(line);
    }
    write_text(wd_ / "alpha.json", out.dump(2) + "\n");
  }

  void steer() {
    need(Stage::TuneAlpha, Stage::Steer);
    const auto ed = load_editor(cfg_);
    const int layer = best_layer();
    const auto test = molecules("test-molecules", cfg_.data.test);
    const auto alphas = tuned_alphas();
    for (auto p : cfg_.properties) {
      const auto sft = eval::run_benchmark(*ed, test, {}, spec(p, layer, "test"));
      eval::write_records_json(wd_ / "records" / ("sft_" + pname(p) + ".json"), sft);
      if (const auto d = maybe_direction("slim", p)) {
        const double a = alphas.at("slim").at(p);
        const auto recs = eval::run_benchmark(*ed, test, {"slim", d, a}, spec(p, layer, "test"));
        eval::write_records_json(wd_ / "records" / ("slim_" + pname(p) + ".json"), recs);
      }
    }
    note("steer: " + std::to_string(cfg_.data.test) + " test molecules x " + std::to_string(cfg_.steer.n) +
         " candidates per arm -> records/");
    if (cfg_.properties.size() >= 2) {
      std::vector<steer::Direction> ds;
      std::vector<double> as;
      for (std::size_t i = 0; i < 2; ++i) {
        const auto d = maybe_direction("slim", cfg_.properties[i]);
        if (!d) return;
        ds.push_back(*d);
        as.push_back(alphas.at("slim").at(cfg_.properties[i]));
      }
      auto multi = steer::combine(ds, as);
      const auto sp = spec(cfg_.properties[0], layer, "test");
      const auto recs = eval::run_benchmark(*ed, test, {"multi", multi, 1.0}, sp);
      eval::write_records_json(wd_ / "records" / "multi.json", recs);
      note("steer: multi-property " + pname(cfg_.properties[0]) + "+" + pname(cfg_.properties[1]) + " arm, |d| " +
           fmt(multi.vector.norm()));
    }
  }

  void evaluate() {
    need(Stage::Steer, Stage::Evaluate);
    std::ostringstream csv;
    csv << "property,method,alpha,valid_fraction,acc_0.15,acc_0.65\n";
    json rows = json::array();
    auto add = [&](const std::string& prop, const std::string& method, const std::vector<eval::EditRecord>& recs,
                   const std::vector<editor::Task>& tasks) {
      const double valid = static_cast<double>(std::count_if(recs.begin(), recs.end(), [](const auto& r) { return r.valid; })) /
                           static_cast<double>(recs.size());
      std::array<double, 2> acc{};
      for (std::size_t t = 0; t < eval::kTaus.size(); ++t) {
        acc[t] = tasks.size() == 1 ? eval::acc_at_tau(recs, eval::kTaus[t], tasks[0])
                                   : eval::joint_success(recs, tasks, eval::kTaus[t]);
      }
      csv << prop << ',' << method << ',' << fmt(recs.front().alpha) << ',' << fmt(valid) << ',' << fmt(acc[0], 2)
          << ',' << fmt(acc[1], 2) << '\n';
      rows.push_back({{"property", prop}, {"method", method}, {"alpha", recs.front().alpha}, {"valid_fraction", valid},
                      {"acc_0.15", acc[0]}, {"acc_0.65", acc[1]}});
      return acc[0];
    };
    for (auto p : cfg_.properties) {
      const editor::Task task{p, cfg_.direction};
      const double base = add(pname(p), "sft", eval::read_records_json(wd_ / "records" / ("sft_" + pname(p) + ".json")), {task});
      const auto slim_path = wd_ / "records" / ("slim_" + pname(p) + ".json");
      if (fs::exists(slim_path)) {
        const double s = add(pname(p), "slim", eval::read_records_json(slim_path), {task});
        note("evaluate: " + pname(p) + " Acc@0.15 sft " + fmt(base, 1) + " -> slim " + fmt(s, 1));
      }
    }
    if (fs::exists(wd_ / "records" / "multi.json")) {
      const std::vector<editor::Task> tasks{{cfg_.properties[0], cfg_.direction}, {cfg_.properties[1], cfg_.direction}};
      const std::string label = pname(cfg_.properties[0]) + "+" + pname(cfg_.properties[1]);
      const double base =
          add(label, "sft", eval::read_records_json(wd_ / "records" / ("sft_" + pname(cfg_.properties[0]) + ".json")), tasks);
      const double m = add(label, "multi", eval::read_records_json(wd_ / "records" / "multi.json"), tasks);
      note("evaluate: joint " + label + " success@0.15 sft " + fmt(base, 1) + " -> multi " + fmt(m, 1));
    }
    write_text(wd_ / "results.csv", csv.str());
    write_text(wd_ / "results.json", rows.dump(2) + "\n");
  }

  void ablate() {
    need(Stage::TuneAlpha, Stage::Ablate);
    const auto ed = load_editor(cfg_);
    const int layer = best_layer();
    const auto test = molecules("test-molecules", cfg_.data.test);
    const auto alphas = tuned_alphas();
    std::vector<eval::AblationArm> arms(1);
    arms[0].name = "sft";
    for (auto p : cfg_.properties) arms[0].per_property[p] = eval::Arm{};
    for (const auto& kind : direction_arms()) {
      eval::AblationArm arm;
      arm.name = arm_label(kind);
      for (auto p : cfg_.properties) {
        const auto d = maybe_direction(kind, p);
        if (!d) break;
        arm.per_property[p] = eval::Arm{kind, d, alphas.at(kind).at(p)};
      }
      if (arm.per_property.size() == cfg_.properties.size()) arms.push_back(std::move(arm));
    }
    auto rep = eval::ablation_matrix(*ed, test, arms, cfg_.properties, spec(cfg_.properties[0], layer, "test"));
    const json align = read_json(wd_ / "alignment.json");
    for (const auto& [arm, per] : align.items()) {
      for (const auto& [prop, v] : per.items()) rep.alignment[arm][*chem::property_from_name(prop)] = v.get<double>();
    }
    eval::write_grid_csv(wd_ / "ablation.csv", rep);
    eval::write_grid_json(wd_ / "ablation.json", rep);
    eval::write_delta_svg(wd_ / "ablation.svg", rep);
    for (const auto& arm : arms) {
      std::string line = "ablate: " + arm.name + " Acc@0.15";
      for (const auto& c : rep.cells)
        if (c.arm == arm.name && c.tau == 0.15) line += " " + pname(c.property) + " " + fmt(c.acc, 1);
      note(line);
    }
  }

  void interpret() {
    need(Stage::TrainSae, Stage::Interpret);
    need(Stage::TuneAlpha, Stage::Interpret);
    const auto model = sae::load_checkpoint(wd_ / "sae.json");
    const auto acts = probe::load_activations(wd_ / "acts.json");
    const auto rep = eval::feature_report(model, acts, cfg_.interpret_top_n);
    eval::write_feature_csv(wd_ / "features.csv", rep);

    // Steer with the best single feature per property.
    const auto ed = load_editor(cfg_);
    const int layer = best_layer();
    const auto test = molecules("test-molecules", cfg_.data.test);
    const auto alphas = tuned_alphas();
    json steering = json::array();
    for (const auto& row : rep.best) {
      const auto p = row.property;
      const double a = (alphas.count("slim") && alphas.at("slim").count(p) ? alphas.at("slim").at(p) : 1.0) *
                       (row.rho >= 0 ? 1.0 : -1.0) * (cfg_.direction == editor::Dir::Up ? 1.0 : -1.0);
      const auto sp = spec(p, layer, "test");
      const auto recs = eval::run_benchmark(*ed, test, {"feature", steer::feature_direction(model, row.feature), a}, sp);
      const double acc = eval::acc_at_tau(recs, 0.15, sp.task);
      steering.push_back({{"property", pname(p)}, {"feature", row.feature}, {"rho", row.rho}, {"delta", row.delta},
                          {"alpha", a}, {"acc_0.15", acc}});
      note("interpret: " + pname(p) + " best feature " + std::to_string(row.feature) + " rho " + fmt(row.rho) +
           " delta " + fmt(row.delta) + "; steering Acc@0.15 " + fmt(acc, 1));
    }
    json constant = json::array();
    for (const auto& [p, j] : rep.constant) constant.push_back({{"property", pname(p)}, {"feature", j}});
    write_text(wd_ / "features.json", json{{"feature_steering", steering}, {"constant_features", constant}}.dump(2) + "\n");
  }

  void report() {
    need(Stage::Evaluate, Stage::Report);
    need(Stage::Ablate, Stage::Report);
    need(Stage::Interpret, Stage::Report);
    const json scan = read_json(wd_ / "scan.json");
    const json align = read_json(wd_ / "alignment.json");
    const json results = read_json(wd_ / "results.json");
    const json ablation = read_json(wd_ / "ablation.json");
    const json features = read_json(wd_ / "features.json");
    const json alpha = read_json(wd_ / "alpha.json");

    std::ostringstream md;
    md << "# SLIM pipeline report\n\n";
    md << "Backend: " << name(cfg_.backend) << ", seed " << cfg_.seed << ", direction " << editor::name(cfg_.direction)
       << ".\n\n";
    md << "## Layer scan\n\nSelected layer: " << scan.at("best_layer").get<int>() << "\n\n| layer |";
    for (const auto& p : scan.at("properties")) md << ' ' << p.get<std::string>() << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < scan.at("properties").size(); ++i) md << "---|";
    md << '\n';
    for (std::size_t l = 0; l < scan.at("r2").size(); ++l) {
      md << "| " << l << " |";
      for (const auto& v : scan.at("r2")[l]) md << ' ' << fmt(v.get<double>()) << " |";
      md << '\n';
    }
    md << "\n## Gradient alignment\n\n| SAE | property | cos |\n|---|---|---|\n";
    for (const auto& [arm, per] : align.items())
      for (const auto& [p, v] : per.items()) md << "| " << arm << " | " << p << " | " << fmt(v.get<double>()) << " |\n";
    md << "\n## Steering results\n\n| property | method | alpha | valid | Acc@0.15 | Acc@0.65 |\n|---|---|---|---|---|---|\n";
    for (const auto& r : results) {
      md << "| " << r.at("property").get<std::string>() << " | " << r.at("method").get<std::string>() << " | "
         << fmt(r.at("alpha").get<double>(), 2) << " | " << fmt(r.at("valid_fraction").get<double>(), 2) << " | "
         << fmt(r.at("acc_0.15").get<double>(), 1) << " | " << fmt(r.at("acc_0.65").get<double>(), 1) << " |\n";
    }
    md << "\n## Ablation (Acc@0.15 / Acc@0.65)\n\n| arm | property | alpha | Acc@0.15 | Acc@0.65 |\n|---|---|---|---|---|\n";
    const auto& cells = ablation.at("cells");
    for (std::size_t i = 0; i + 1 < cells.size(); i += 2) {
      md << "| " << cells[i].at("arm").get<std::string>() << " | " << cells[i].at("property").get<std::string>() << " | "
         << fmt(cells[i].at("alpha").get<double>(), 2) << " | " << fmt(cells[i].at("acc").get<double>(), 1) << " | "
         << fmt(cells[i + 1].at("acc").get<double>(), 1) << " |\n";
    }
    md << "\n## Interpretable features\n\n| property | feature | rho | delta | steering Acc@0.15 |\n|---|---|---|---|---|\n";
    for (const auto& f : features.at("feature_steering")) {
      md << "| " << f.at("property").get<std::string>() << " | " << f.at("feature").get<int>() << " | "
         << fmt(f.at("rho").get<double>()) << " | " << fmt(f.at("delta").get<double>()) << " | "
         << fmt(f.at("acc_0.15").get<double>(), 1) << " |\n";
    }
    write_text(wd_ / "report.md", md.str());
    json config = to_json(cfg_);
    config.erase("work_dir");  // reports are location independent
    write_text(wd_ / "report.json", json{{"config", config},
                                         {"scan", scan},
                                         {"alignment", align},
                                         {"alpha", alpha},
                                         {"results", results},
                                         {"ablation", ablation},
                                         {"features", features}}
                                            .dump(2) + "\n");
    note("report: report.md, report.json");
  }

  const PipelineConfig& cfg_;
  const Log& log_;
  fs::path wd_;
  std::string hash_;
  std::vector<std::string>* summary_ = nullptr;
};

}  // namespace

std::span<const Stage> all_stages() { return kOrder; }

std::string_view name(Stage s) { return kNames[static_cast<std::size_t>(s)]; }

std::optional<Stage> stage_from_name(std::string_view s) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == s) return kOrder[i];
  return std::nullopt;
}

std::unique_ptr<editor::Editor> load_editor(const PipelineConfig& cfg) {
  if (cfg.backend == Backend::Synthetic) return std::make_unique<editor::SyntheticLinearEditor>(cfg.synthetic);
  const auto path = cfg.work_dir / "editor.json";
  if (!fs::exists(path)) throw MissingArtifact("train-editor", "no trained editor; run `slim train-editor` first");
  return std::make_unique<editor::TinyTransformerEditor>(editor::TinyTransformerEditor::load(path));
}

StageResult run_stage(const PipelineConfig& cfg, Stage stage, bool force, const Log& log) {
  return Runner(cfg, log).run(stage, force);
}

std::vector<StageResult> run_all(const PipelineConfig& cfg, bool force, const Log& log) {
  std::vector<StageResult> out;
  for (Stage s : kOrder) out.push_back(run_stage(cfg, s, force, log));
  return out;
}

std::vector<fs::path> report_files() {
  return {"scan.json",   "r2.csv",       "alignment.json", "alpha.json",    "results.csv", "results.json",
          "ablation.csv", "ablation.json", "ablation.svg",  "features.csv", "features.json", "report.md",
          "report.json"};
}

}  // namespace slim::pipeline
