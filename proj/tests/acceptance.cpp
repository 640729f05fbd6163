// Acceptance harness: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,5,10] [--work-dir DIR]
//
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "slim/chem/edit.hpp"
#include "slim/chem/fingerprint.hpp"
#include "slim/chem/properties.hpp"
#include "slim/chem/sampler.hpp"
#include "slim/chem/smiles.hpp"
#include "slim/editor/synthetic.hpp"
#include "slim/eval/benchmark.hpp"
#include "slim/numcore/linalg.hpp"
#include "slim/pipeline/pipeline.hpp"
#include "slim/probe/probe.hpp"
#include "slim/steer/steer.hpp"
#include "support/chem_table.hpp"
#include "support/metric_oracles.hpp"
#include "support/sae_fixture.hpp"
#include "support/synthetic_pairs.hpp"
#include "support/tape_cases.hpp"

using namespace slim;
using chem::Property;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Accumulates sub-checks; the first failures are kept for the summary line.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    pass_ = false;
    if (failures_.size() < 3) failures_.push_back(what);
  }
  void info(const std::string& s) { info_.push_back(s); }
  Outcome outcome() const {
    std::string d;
    for (const auto& s : info_) d += (d.empty() ? "" : "; ") + s;
    for (const auto& s : failures_) d += (d.empty() ? "" : "; ") + ("FAILED " + s);
    return {pass_, d};
  }

 private:
  bool pass_ = true;
  std::vector<std::string> info_, failures_;
};

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1e", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

const std::vector<Property> kCountingAndMass{Property::MW, Property::HBA, Property::HBD};

// --- shared synthetic pipeline run ----------------------------------------

struct SyntheticRun {
  pipeline::PipelineConfig cfg;
  double seconds = 0;
};

pipeline::PipelineConfig synthetic_config(const fs::path& wd) {
  pipeline::PipelineConfig cfg = pipeline::parse_config(json::object());
  cfg.work_dir = wd;
  return cfg;
}

double timed_run(const pipeline::PipelineConfig& cfg) {
  fs::remove_all(cfg.work_dir);
  const auto t0 = std::chrono::steady_clock::now();
  pipeline::run_all(cfg);
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

class Harness {
 public:
  explicit Harness(fs::path root) : root_(std::move(root)) {}

  const SyntheticRun& synthetic() {
    if (!run_) {
      SyntheticRun r{synthetic_config(root_ / "synthetic-a"), 0};
      std::cerr << "  (running the full synthetic pipeline)\n";
      r.seconds = timed_run(r.cfg);
      run_ = r;
    }
    return *run_;
  }

  // 1 ------------------------------------------------------------------------
  Outcome gradient_fidelity() {
    Checks c;
    Rng rng(2024, "acceptance-ops");
    double worst_op = 0;
    std::string worst_name;
    const auto cases = testing::op_cases();
    for (const auto& oc : cases) {
      const double e = testing::op_gradient_error(oc, rng, 100);
      if (e > worst_op) worst_op = e, worst_name = oc.name;
      c.expect(e <= 1e-6, oc.name + " rel err " + sci(e));
    }
    const char* terms[] = {"recon", "sparse", "sup", "contrast", "grad"};
    const sae::LossWeights weights[] = {{0, 0, 0, 0}, {0, 0, 1, 0}, {0, 1, 0, 0}, {1, 0, 0, 0}, {0, 0, 0, 1}};
    double worst_loss[5] = {};
    for (int inst = 0; inst < 100; ++inst) {
      const auto f = testing::make_fixture(4, 2, 8, {Property::MW, Property::HBD}, 1000 + static_cast<std::uint64_t>(inst));
      for (int t = 0; t < 5; ++t) worst_loss[t] = std::max(worst_loss[t], testing::term_gradient_error(f, weights[t]));
    }
    std::string losses;
    for (int t = 0; t < 5; ++t) {
      c.expect(worst_loss[t] <= 1e-5, std::string(terms[t]) + " rel err " + sci(worst_loss[t]));
      losses += std::string(t ? " " : "") + terms[t] + " " + sci(worst_loss[t]);
    }
    c.info(std::to_string(cases.size()) + " ops x 100: worst " + sci(worst_op) + " (" + worst_name + ")");
    c.info("losses x 100 worst: " + losses);
    return c.outcome();
  }

  // 2 ------------------------------------------------------------------------
  Outcome dictionary_recovery() {
    Checks c;
    const int d = 16, atoms_n = 64, n = 16384;
    Rng rng(5, "dict");
    Matrix atoms(d, atoms_n);
    for (Eigen::Index i = 0; i < atoms.size(); ++i) atoms.data()[i] = rng.normal();
    for (int j = 0; j < atoms_n; ++j) atoms.col(j).normalize();
    probe::ActivationMatrix acts;
    acts.properties = {Property::MW};
    acts.hidden = Matrix::Zero(n, d);
    acts.labels = Matrix::Zero(n, 1);
    for (int r = 0; r < n; ++r) {
      for (int s = 0; s < 3; ++s) {
        const auto j = static_cast<Eigen::Index>(rng.below(atoms_n));
        acts.hidden.row(r) += rng.uniform(0.5, 1.5) * atoms.col(j).transpose();
      }
      acts.labels(r, 0) = rng.normal();
    }
    sae::SaeConfig cfg;
    cfg.d = d;
    cfg.expansion = 8;
    cfg.k = 8;
    cfg.lambda = {0, 0, 0.6, 0};
    cfg.epochs = 100;
    cfg.batch = 16;
    cfg.lr = 1e-3;
    cfg.properties = acts.properties;
    const auto [model, result] = sae::train_sae(acts, nullptr, cfg);
    const Matrix cos = atoms.transpose() * model.W_d();  // decoder columns are unit norm
    int hits = 0;
    for (int j = 0; j < atoms_n; ++j) hits += cos.row(j).cwiseAbs().maxCoeff() >= 0.9;
    c.expect(hits >= 52, "recovered " + std::to_string(hits) + "/64 < 80%");
    c.info("recovered " + std::to_string(hits) + "/64 atoms at |cos| >= 0.9 (D=" + std::to_string(cfg.D()) +
           ", final recon " + fmt(result.history.back().recon, 4) + ")");
    return c.outcome();
  }

  // 3 ------------------------------------------------------------------------
  Outcome layer_scan() {
    Checks c;
    Rng rng(9, "acceptance-scan");
    std::vector<chem::Molecule> mols;
    for (int i = 0; i < 500; ++i) mols.push_back(chem::sample_molecule(rng, {2, 12}));
    int hits = 0;
    double min_planted = 1;
    for (std::uint64_t s = 0; s < 10; ++s) {
      editor::SyntheticConfig cfg;
      cfg.seed = 100 + s;
      editor::SyntheticLinearEditor ed(cfg);
      const auto res = probe::layer_scan(ed, mols, chem::kAllProperties, {1.0, 0.2, s});
      hits += res.best_layer == 3;
      min_planted = std::min(min_planted, res.mean_r2()(3));
    }
    c.expect(hits >= 9, "planted layer found in " + std::to_string(hits) + "/10 seeds");
    c.expect(min_planted >= 0.99, "planted mean R2 " + fmt(min_planted, 4));
    c.info("l* = 3 in " + std::to_string(hits) + "/10 seeds; planted mean R2 >= " + fmt(min_planted, 4));
    return c.outcome();
  }

  // 4 ------------------------------------------------------------------------
  Outcome gradient_alignment() {
    Checks c;
    const auto& run = synthetic();
    const json align = read_json(run.cfg.work_dir / "alignment.json");
    std::string with, without;
    for (auto p : run.cfg.properties) {
      const std::string n(chem::name(p));
      const double a = align.at("slim").at(n);
      c.expect(a >= 0.9, n + " cos " + fmt(a));
      with += " " + n + " " + fmt(a);
      without += " " + n + " " + fmt(align.at("slim-no-lgrad").at(n).get<double>());
    }
    const json ab = read_json(run.cfg.work_dir / "ablation.json");
    c.expect(ab.at("alignment").contains("slim-no-lgrad"), "ablation output lacks the no-L_grad cosine");
    c.info("lambda_g=0.5:" + with);
    c.info("lambda_g=0:" + without);
    return c.outcome();
  }

  // 5 ------------------------------------------------------------------------
  Outcome steering_monotonicity() {
    Checks c;
    const auto& run = synthetic();
    editor::SyntheticLinearEditor ed(run.cfg.synthetic);
    Rng rng(run.cfg.seed, "acceptance-monotone");
    std::vector<chem::Molecule> mols;
    for (int i = 0; i < 40; ++i) mols.push_back(chem::sample_molecule(rng, {2, 12}));
    for (auto p : kCountingAndMass) {
      const std::string n(chem::name(p));
      const auto dir = steer::load_direction(run.cfg.work_dir / "directions" / ("slim_" + n + ".json"));
      const eval::BenchmarkSpec spec{{p, editor::Dir::Up}, run.cfg.synthetic.planted_layer, 5, {}, 77};
      const auto sft = eval::run_benchmark(ed, mols, {}, spec);
      std::vector<double> means;
      for (double a : {0.0, 0.5, 1.0, 2.0}) {
        const auto recs = eval::run_benchmark(ed, mols, {"slim", dir, a}, spec);
        if (a == 0.0) {
          bool same = recs.size() == sft.size();
          for (std::size_t i = 0; same && i < recs.size(); ++i)
            same = recs[i].candidate == sft[i].candidate && recs[i].after == sft[i].after;
          c.expect(same, n + " alpha=0 differs from SFT");
        }
        double sum = 0;
        int valid = 0;
        for (const auto& r : recs) {
          if (!r.valid) continue;
          sum += r.after[static_cast<std::size_t>(p)] - r.before[static_cast<std::size_t>(p)];
          ++valid;
        }
        means.push_back(sum / std::max(valid, 1));
      }
      for (std::size_t i = 1; i < means.size(); ++i) c.expect(means[i] > means[i - 1], n + " not increasing");
      c.info(n + " " + fmt(means[0]) + " < " + fmt(means[1]) + " < " + fmt(means[2]) + " < " + fmt(means[3]));
    }
    c.info("200 candidates per alpha; alpha=0 identical to SFT");
    return c.outcome();
  }

  // 6 ------------------------------------------------------------------------
  Outcome direction_recovery() {
    Checks c;
    editor::SyntheticLinearEditor ed;
    std::string line = "cos to planted g_p:";
    for (auto p : chem::kAllProperties) {
      const auto pairs = testing::synthetic_pairs(p, 500, static_cast<std::uint64_t>(p) + 101);
      const auto d = steer::grad_direction(ed, pairs, ed.config().planted_layer);
      const double cs = cosine(d.vector, ed.ascent_direction(p));
      c.expect(cs >= 0.9, std::string(chem::name(p)) + " cos " + fmt(cs));
      line += " " + std::string(chem::name(p)) + " " + fmt(cs);
    }
    c.info(line);
    const auto& run = synthetic();
    const json ab = read_json(run.cfg.work_dir / "ablation.json");
    for (const char* arm : {"sft", "random", "caa", "slim"}) {
      std::set<std::string> props;
      for (const auto& cell : ab.at("cells"))
        if (cell.at("arm") == arm) props.insert(cell.at("property").get<std::string>());
      c.expect(props.size() == run.cfg.properties.size(), std::string("ablation grid missing arm ") + arm);
    }
    c.info("ablation grid has sft/random/caa/slim for all " + std::to_string(run.cfg.properties.size()) +
           " properties");
    return c.outcome();
  }

  // 7 ------------------------------------------------------------------------
  Outcome metric_oracles() {
    Checks c;
    Rng rng(17, "acceptance-metrics");
    for (int t = 0; t < 200; ++t) {
      const auto recs = testing::random_records(rng);
      const Property p = chem::kAllProperties[rng.below(5)];
      const editor::Task task{p, rng.bernoulli(0.5) ? editor::Dir::Up : editor::Dir::Down};
      const double tau = std::round(rng.uniform() * 20) / 20;
      c.expect(eval::acc_at_tau(recs, tau, task) == testing::brute_acc(recs, tau, {task}), "acc_at_tau case " + std::to_string(t));
    }
    for (int t = 0; t < 200; ++t) {
      const auto recs = testing::random_records(rng);
      std::vector<editor::Task> tasks;
      for (auto p : chem::kAllProperties)
        if (rng.bernoulli(0.4)) tasks.push_back({p, rng.bernoulli(0.5) ? editor::Dir::Up : editor::Dir::Down});
      if (tasks.empty()) tasks.push_back({Property::MW, editor::Dir::Up});
      const double tau = std::round(rng.uniform() * 20) / 20;
      c.expect(eval::joint_success(recs, tasks, tau) == testing::brute_acc(recs, tau, tasks),
               "joint_success case " + std::to_string(t));
    }
    for (int t = 0; t < 200; ++t) {
      const std::size_t n = 2 + rng.below(20);
      std::vector<double> u(n), v(n);
      for (std::size_t i = 0; i < n; ++i) {
        u[i] = static_cast<double>(rng.below(6));
        v[i] = static_cast<double>(rng.below(6));
      }
      const auto got = eval::spearman(u, v);
      const double want = testing::brute_spearman(u, v);
      c.expect(std::isfinite(want) ? got && std::abs(*got - want) <= 1e-12 : !got, "spearman case " + std::to_string(t));
    }
    c.info("600 randomized metric cases agree with brute force");

    Rng mrng(31, "acceptance-tanimoto");
    for (int i = 0; i < 1000; ++i) {
      const auto fa = chem::morgan_fingerprint(chem::sample_molecule(mrng, {1, 12}));
      const auto fb = chem::morgan_fingerprint(chem::sample_molecule(mrng, {1, 12}));
      const double ab = chem::tanimoto(fa, fb);
      c.expect(ab == chem::tanimoto(fb, fa) && ab >= 0 && ab <= 1 && chem::tanimoto(fa, fa) == 1.0,
               "tanimoto pair " + std::to_string(i));
    }
    c.info("tanimoto identity/symmetry/bounds on 1000 pairs");

    // Every record set written by the synthetic run, plus the ablation grid.
    const auto& run = synthetic();
    int sets = 0;
    for (const auto& entry : fs::directory_iterator(run.cfg.work_dir / "records")) {
      const auto recs = eval::read_records_json(entry.path());
      for (auto p : run.cfg.properties) {
        const editor::Task task{p, run.cfg.direction};
        c.expect(eval::acc_at_tau(recs, 0.15, task) >= eval::acc_at_tau(recs, 0.65, task),
                 entry.path().filename().string());
        ++sets;
      }
    }
    const json cells = read_json(run.cfg.work_dir / "ablation.json").at("cells");
    for (std::size_t i = 0; i + 1 < cells.size(); i += 2) {
      c.expect(cells[i].at("acc").get<double>() >= cells[i + 1].at("acc").get<double>(), "ablation cell");
      ++sets;
    }
    c.info("Acc@0.15 >= Acc@0.65 on " + std::to_string(sets) + " record sets");
    return c.outcome();
  }

  // 8 ------------------------------------------------------------------------
  Outcome chem_oracles() {
    Checks c;
    for (const auto& row : testing::kPropertyTable) {
      const auto m = chem::parse_smiles(row.smiles);
      const bool ok = std::abs(chem::property(m, Property::MW) - row.mw) < 1e-9 &&
                      chem::property(m, Property::HBA) == row.hba && chem::property(m, Property::HBD) == row.hbd &&
                      chem::property(m, Property::RotBond) == row.rot &&
                      std::abs(chem::property(m, Property::LogPHat) - row.logp) < 1e-9;
      c.expect(ok, row.smiles);
    }
    c.info("10-molecule table matches (C MW " + fmt(chem::property(chem::parse_smiles("C"), Property::MW)) +
           ", CCCC RotBond " + fmt(chem::property(chem::parse_smiles("CCCC"), Property::RotBond), 0) + ")");
    auto valence_ok = [](const chem::Molecule& m) {
      for (int i = 0; i < static_cast<int>(m.size()); ++i) {
        if (m.atom(i).hydrogens < 0 || m.bond_order_sum(i) + m.atom(i).hydrogens != chem::valence(m.atom(i).element))
          return false;
      }
      return true;
    };
    Rng rng(43, "acceptance-valence");
    long edits = 0;
    for (int i = 0; i < 10000; ++i) {
      const auto m = chem::sample_molecule(rng, {1, 14});
      c.expect(valence_ok(m), "sample " + chem::to_smiles(m));
      for (const auto& a : chem::standard_catalog()) {
        if (!chem::is_feasible(m, a)) continue;
        c.expect(valence_ok(chem::apply_edit(m, a)), a.label() + " on " + chem::to_smiles(m));
        ++edits;
      }
    }
    c.info("valence holds on 10000 samples and " + std::to_string(edits) + " edit applications");
    return c.outcome();
  }

  // 9 ------------------------------------------------------------------------
  Outcome transformer_demo() {
    Checks c;
    auto cfg = pipeline::parse_config(json{{"backend", "tiny-transformer"}, {"properties", {"MW", "HBA", "HBD"}}});
    cfg.work_dir = root_ / "transformer";
    std::cerr << "  (training the tiny transformer and running its pipeline)\n";
    const double secs = timed_run(cfg);
    const json tr = read_json(cfg.work_dir / "train_report.json");
    c.info("SFT loss " + fmt(tr.at("initial_loss").get<double>()) + " -> held-out " +
           fmt(tr.at("heldout_loss").get<double>()));
    int valid = 0, total = 0, wins = 0;
    std::string line;
    for (auto p : cfg.properties) {
      const std::string n(chem::name(p));
      const editor::Task task{p, cfg.direction};
      const auto sft = eval::read_records_json(cfg.work_dir / "records" / ("sft_" + n + ".json"));
      for (const auto& r : sft) valid += r.valid, ++total;
      const double base = eval::acc_at_tau(sft, 0.15, task);
      const auto slim_path = cfg.work_dir / "records" / ("slim_" + n + ".json");
      const double steered = fs::exists(slim_path) ? eval::acc_at_tau(eval::read_records_json(slim_path), 0.15, task) : base;
      wins += steered > base;
      line += " " + n + " " + fmt(base, 0) + "->" + fmt(steered, 0);
    }
    const double parse = static_cast<double>(valid) / total;
    c.expect(parse >= 0.9, "parse rate " + fmt(parse));
    c.expect(wins >= 2, "SLIM beats SFT on " + std::to_string(wins) + "/3");
    c.info("SFT candidates parsing " + fmt(100 * parse, 1) + "%");
    c.info("Acc@0.15 SFT->SLIM:" + line + " (" + std::to_string(wins) + "/3 improved)");
    c.info("pipeline " + fmt(secs / 60, 1) + " min");
    return c.outcome();
  }

  // 10 -----------------------------------------------------------------------
  Outcome determinism() {
    Checks c;
    const auto& run = synthetic();
    const auto b = synthetic_config(root_ / "synthetic-b");
    std::cerr << "  (repeating the synthetic pipeline)\n";
    timed_run(b);
    int same = 0;
    for (const auto& f : pipeline::report_files()) {
      const bool eq = slurp(run.cfg.work_dir / f) == slurp(b.work_dir / f) && fs::exists(b.work_dir / f);
      c.expect(eq, f.string() + " differs");
      same += eq;
    }
    c.info(std::to_string(same) + "/" + std::to_string(pipeline::report_files().size()) + " report files byte-identical");

    Rng rng(12, "acceptance-combine");
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
      const int d = 4 + static_cast<int>(rng.below(60));
      const int m = 1 + static_cast<int>(rng.below(4));
      Matrix h(1 + static_cast<Eigen::Index>(rng.below(8)), d);
      for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = rng.normal();
      std::vector<steer::Direction> ds;
      std::vector<double> as;
      Matrix seq = h;
      for (int j = 0; j < m; ++j) {
        ds.push_back(steer::random_direction(d, rng.next_u64()));
        as.push_back(rng.uniform(-5, 5));
        seq = steer::apply_steering(seq, ds.back(), as.back());
      }
      const Matrix once = steer::apply_steering(h, steer::combine(ds, as), 1.0);
      worst = std::max(worst, (once - seq).cwiseAbs().maxCoeff());
    }
    c.expect(worst <= 1e-12, "combine linearity error " + sci(worst));
    c.info("combine linearity max error " + sci(worst));
    c.expect(run.seconds <= 600, "full synthetic pipeline took " + fmt(run.seconds, 0) + " s");
    c.info("full synthetic pipeline " + fmt(run.seconds, 0) + " s");
    return c.outcome();
  }

 private:
  fs::path root_;
  std::optional<SyntheticRun> run_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  std::string work_dir = (fs::temp_directory_path() / "slim-acceptance").string();
  app.add_option("--only", only, "criteria to run (default all)")->delimiter(',');
  app.add_option("--work-dir", work_dir, "scratch directory");
  CLI11_PARSE(app, argc, argv);

  Harness h(work_dir);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient fidelity", [&] { return h.gradient_fidelity(); }},
      {"dictionary recovery", [&] { return h.dictionary_recovery(); }},
      {"layer scan", [&] { return h.layer_scan(); }},
      {"gradient alignment", [&] { return h.gradient_alignment(); }},
      {"steering monotonicity", [&] { return h.steering_monotonicity(); }},
      {"direction recovery", [&] { return h.direction_recovery(); }},
      {"metric oracles", [&] { return h.metric_oracles(); }},
      {"chem oracles", [&] { return h.chem_oracles(); }},
      {"tiny-transformer demo", [&] { return h.transformer_demo(); }},
      {"determinism and composition", [&] { return h.determinism(); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << criteria[i].first << ", "
              << fmt(secs, 1) << " s): " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
