#include "slim/eval/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "slim/numcore/rng.hpp"

namespace slim::eval {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace

std::vector<EditRecord> run_benchmark(const editor::Editor& ed, std::span<const chem::Molecule> molecules,
                                      const Arm& arm, const BenchmarkSpec& spec) {
  if (spec.n < 1) throw ConfigError("run_benchmark: n must be positive");
  std::optional<editor::Injection> inj;
  if (arm.method == "sft") {
    if (arm.alpha != 0.0) throw ConfigError("run_benchmark: method sft takes no steering strength");
  } else {
    if (!arm.direction) throw ConfigError("run_benchmark: method " + arm.method + " needs a direction");
    inj = steer::injection(*arm.direction, spec.layer, arm.alpha);
  }
  const Rng base(spec.seed, "benchmark");
  std::vector<EditRecord> out;
  out.reserve(molecules.size() * static_cast<std::size_t>(spec.n));
  for (std::size_t i = 0; i < molecules.size(); ++i) {
    const auto cands =
        ed.generate(molecules[i], spec.task, spec.n, spec.sampling, base.fork(i), inj ? &*inj : nullptr);
    for (const auto& c : cands) {
      EditRecord r = make_record(i, molecules[i], c);
      r.method = arm.method;
      r.alpha = arm.alpha;
      r.seed = spec.seed;
      out.push_back(std::move(r));
    }
  }
  return out;
}

AlphaSearch tune_alpha(const editor::Editor& ed, std::span<const chem::Molecule> validation,
                       const steer::Direction& direction, std::span<const double> grid, const BenchmarkSpec& spec,
                       double tau) {
  if (grid.empty()) throw ConfigError("tune_alpha: empty grid");
  AlphaSearch s;
  s.grid.assign(grid.begin(), grid.end());
  double best = -1;
  for (double a : grid) {
    const Arm arm{name(direction.kind).data(), direction, a};
    const double acc = acc_at_tau(run_benchmark(ed, validation, arm, spec), tau, spec.task);
    s.acc.push_back(acc);
    if (acc > best || (acc == best && a < s.best_alpha)) {
      best = acc;
      s.best_alpha = a;
    }
  }
  return s;
}

AblationReport ablation_matrix(const editor::Editor& ed, std::span<const chem::Molecule> molecules,
                               std::span<const AblationArm> arms, std::span<const chem::Property> properties,
                               const BenchmarkSpec& base) {
  AblationReport rep;
  for (const auto& arm : arms) {
    for (auto p : properties) {
      const auto it = arm.per_property.find(p);
      if (it == arm.per_property.end()) {
        throw ConfigError("ablation: arm " + arm.name + " has no setting for " + std::string(chem::name(p)));
      }
      BenchmarkSpec spec = base;
      spec.task.property = p;
      const auto records = run_benchmark(ed, molecules, it->second, spec);
      for (double tau : kTaus) rep.cells.push_back({arm.name, p, tau, acc_at_tau(records, tau, spec.task), it->second.alpha});
    }
  }
  return rep;
}

sae::SaeConfig vanilla_config(sae::SaeConfig cfg) {
  cfg.lambda.contrast = 0;
  cfg.lambda.sup = 0;
  cfg.lambda.grad = 0;
  return cfg;
}

sae::SaeConfig no_grad_config(sae::SaeConfig cfg) {
  cfg.lambda.grad = 0;
  return cfg;
}

FeatureReport feature_report(const sae::GatedSae& sae, const probe::ActivationMatrix& acts, int top_n) {
  if (top_n < 1) throw ConfigError("feature_report: top_n must be positive");
  const Matrix z = sae.encode(acts.hidden);
  const auto n = static_cast<std::size_t>(z.rows());
  const std::size_t q = n / 4;
  if (q < 1) throw ConfigError("feature_report: need at least 4 molecules");
  FeatureReport rep;
  for (auto p : sae.config().properties) {
    const Vector yv = acts.label(p);
    const std::vector<double> y(yv.data(), yv.data() + yv.size());
    const Matrix gate = sae.gate(p);
    std::vector<int> feats(static_cast<std::size_t>(sae.D()));
    std::iota(feats.begin(), feats.end(), 0);
    std::stable_sort(feats.begin(), feats.end(), [&](int a, int b) { return gate(0, a) > gate(0, b); });
    feats.resize(std::min<std::size_t>(feats.size(), static_cast<std::size_t>(top_n)));

    std::vector<FeatureRow> rows;
    for (int j : feats) {
      const Vector a = z.col(j);
      const std::vector<double> av(a.data(), a.data() + a.size());
      const auto rho = spearman(av, y);
      if (!rho) {
        rep.constant.emplace_back(p, j);
        continue;
      }
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t u, std::size_t v) { return av[u] > av[v]; });
      double top = 0, bottom = 0;
      for (std::size_t i = 0; i < q; ++i) {
        top += y[order[i]];
        bottom += y[order[n - 1 - i]];
      }
      FeatureRow r{j, p, gate(0, j), top / static_cast<double>(q), bottom / static_cast<double>(q), 0, *rho};
      r.delta = r.top_mean - r.bottom_mean;
      rows.push_back(r);
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const FeatureRow& a, const FeatureRow& b) { return std::abs(a.rho) > std::abs(b.rho); });
    if (!rows.empty()) rep.best.push_back(rows.front());
    rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
  }
  return rep;
}

void write_records_json(const std::filesystem::path& path, std::span<const EditRecord> records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json before, after;
    for (auto p : chem::kAllProperties) {
      before[std::string(chem::name(p))] = r.value_before(p);
      if (r.valid) after[std::string(chem::name(p))] = r.value_after(p);
    }
    nlohmann::json j = {{"source_index", r.source_index}, {"source", r.source}, {"candidate", r.candidate},
                        {"valid", r.valid},               {"before", before},   {"method", r.method},
                        {"alpha", r.alpha},               {"seed", r.seed}};
    if (r.valid) {
      j["after"] = after;
      j["similarity"] = *r.similarity;
    }
    arr.push_back(j);
  }
  open_out(path) << arr.dump(1) << '\n';
}

std::vector<EditRecord> read_records_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<EditRecord> out;
  try {
    const auto arr = nlohmann::json::parse(in);
    for (const auto& j : arr) {
      EditRecord r;
      r.source_index = j.at("source_index");
      r.source = j.at("source");
      r.candidate = j.at("candidate");
      r.valid = j.at("valid");
      r.method = j.at("method");
      r.alpha = j.at("alpha");
      r.seed = j.at("seed");
      for (auto p : chem::kAllProperties) {
        const std::string key(chem::name(p));
        r.before[static_cast<std::size_t>(p)] = j.at("before").at(key);
        if (r.valid) r.after[static_cast<std::size_t>(p)] = j.at("after").at(key);
      }
      if (r.valid) r.similarity = j.at("similarity").get<double>();
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed records (" + e.what() + ")");
  }
  return out;
}

void write_grid_csv(const std::filesystem::path& path, const AblationReport& report) {
  auto out = open_out(path);
  out << "arm,property,tau,alpha,acc\n";
  for (const auto& c : report.cells) {
    out << c.arm << ',' << chem::name(c.property) << ',' << fixed(c.tau, 2) << ',' << fixed(c.alpha, 3) << ','
        << fixed(c.acc, 2) << '\n';
  }
}

void write_grid_json(const std::filesystem::path& path, const AblationReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    cells.push_back(
        {{"arm", c.arm}, {"property", std::string(chem::name(c.property))}, {"tau", c.tau}, {"alpha", c.alpha}, {"acc", c.acc}});
  }
  nlohmann::json align = nlohmann::json::object();
  for (const auto& [arm, per] : report.alignment) {
    for (const auto& [p, v] : per) align[arm][std::string(chem::name(p))] = v;
  }
  open_out(path) << nlohmann::json{{"cells", cells}, {"alignment", align}}.dump(2) << '\n';
}

void write_feature_csv(const std::filesystem::path& path, const FeatureReport& report) {
  auto out = open_out(path);
  out << "property,feature,gate,top_mean,bottom_mean,delta,rho\n";
  for (const auto& r : report.rows) {
    out << chem::name(r.property) << ',' << r.feature << ',' << fixed(r.gate, 6) << ',' << fixed(r.top_mean) << ','
        << fixed(r.bottom_mean) << ',' << fixed(r.delta) << ',' << fixed(r.rho) << '\n';
  }
}

void write_delta_svg(const std::filesystem::path& path, const AblationReport& report, double tau) {
  std::map<std::pair<std::string, chem::Property>, double> acc;
  std::vector<std::string> arms;
  std::vector<chem::Property> props;
  for (const auto& c : report.cells) {
    if (c.tau != tau) continue;
    acc[{c.arm, c.property}] = c.acc;
    if (std::find(arms.begin(), arms.end(), c.arm) == arms.end()) arms.push_back(c.arm);
    if (std::find(props.begin(), props.end(), c.property) == props.end()) props.push_back(c.property);
  }
  std::vector<std::string> shown;
  for (const auto& a : arms)
    if (a != "sft") shown.push_back(a);
  const int bar = 14, gap = 30, height = 240, mid = height / 2;
  const int width = 60 + static_cast<int>(props.size()) * (static_cast<int>(shown.size()) * bar + gap);
  static const char* kColors[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948"};
  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height + 40 << "\">\n";
  out << "<line x1=\"40\" y1=\"" << mid << "\" x2=\"" << width << "\" y2=\"" << mid << "\" stroke=\"black\"/>\n";
  int x = 50;
  for (auto p : props) {
    const double base = acc.count({"sft", p}) ? acc[{"sft", p}] : 0.0;
    for (std::size_t a = 0; a < shown.size(); ++a) {
      const double d = acc.count({shown[a], p}) ? acc[{shown[a], p}] - base : 0.0;
      const int h = static_cast<int>(std::lround(std::abs(d) * (mid - 10) / 100.0));
      out << "<rect x=\"" << x << "\" y=\"" << (d >= 0 ? mid - h : mid) << "\" width=\"" << bar - 2 << "\" height=\""
          << h << "\" fill=\"" << kColors[a % 6] << "\"><title>" << shown[a] << ' ' << fixed(d, 1)
          << "</title></rect>\n";
      x += bar;
    }
    out << "<text x=\"" << x - static_cast<int>(shown.size()) * bar << "\" y=\"" << height + 20
        << "\" font-size=\"11\">" << chem::name(p) << "</text>\n";
    x += gap;
  }
  for (std::size_t a = 0; a < shown.size(); ++a) {
    out << "<text x=\"" << 50 + 90 * static_cast<int>(a) << "\" y=\"14\" font-size=\"11\" fill=\"" << kColors[a % 6]
        << "\">" << shown[a] << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace slim::eval
