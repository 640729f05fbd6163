#include "slim/probe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "slim/numcore/linalg.hpp"
#include "slim/numcore/matrix_io.hpp"

namespace slim::probe {

namespace {

constexpr std::size_t kMinScanMolecules = 100;

std::uint64_t row_key(const Matrix& m, Eigen::Index r, std::uint64_t seed) {
  std::uint64_t h = mix64(seed);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    std::uint64_t bits;
    const double v = m(r, c);
    std::memcpy(&bits, &v, sizeof bits);
    h = hash_combine(h, bits);
  }
  return h;
}

void check_labels(const ActivationMatrix& a) {
  require_finite(a.labels, "activation labels");
  for (Eigen::Index j = 0; j < a.labels.cols(); ++j) {
    const auto col = a.labels.col(j);
    if (a.rows() > 1 && (col.array() - col.mean()).square().sum() <= 0.0) {
      throw NumericError("activations: zero-variance labels for " +
                         std::string(chem::name(a.properties[static_cast<std::size_t>(j)])));
    }
  }
}

}  // namespace

Vector ActivationMatrix::label(chem::Property p) const {
  const auto it = std::find(properties.begin(), properties.end(), p);
  if (it == properties.end()) throw ConfigError("activations: no labels for " + std::string(chem::name(p)));
  return labels.col(it - properties.begin());
}

editor::Task capture_task(std::size_t index, std::span<const chem::Property> properties) {
  if (properties.empty()) return {};
  return {properties[index % properties.size()], editor::Dir::Up};
}

std::vector<ActivationMatrix> extract_all_layers(const editor::Editor& ed, std::span<const chem::Molecule> molecules,
                                                 std::span<const chem::Property> properties) {
  if (molecules.empty()) throw ConfigError("extract_activations: empty molecule list");
  const auto n = static_cast<Eigen::Index>(molecules.size());
  std::vector<ActivationMatrix> out(static_cast<std::size_t>(ed.num_layers()));
  for (int l = 0; l < ed.num_layers(); ++l) {
    auto& a = out[static_cast<std::size_t>(l)];
    a.layer = l;
    a.hidden.resize(n, ed.width());
    a.properties.assign(properties.begin(), properties.end());
    a.labels.resize(n, static_cast<Eigen::Index>(properties.size()));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& mol = molecules[static_cast<std::size_t>(i)];
    const auto states = ed.forward_capture(mol, capture_task(static_cast<std::size_t>(i), properties));
    for (std::size_t l = 0; l < states.size(); ++l) {
      out[l].hidden.row(i) = states[l].colwise().mean();
    }
    for (std::size_t p = 0; p < properties.size(); ++p) {
      const double v = chem::property(mol, properties[p]);
      for (auto& a : out) a.labels(i, static_cast<Eigen::Index>(p)) = v;
    }
  }
  for (const auto& a : out) {
    require_finite(a.hidden, "activations");
    check_labels(a);
  }
  return out;
}

ActivationMatrix extract_activations(const editor::Editor& ed, std::span<const chem::Molecule> molecules, int layer,
                                     std::span<const chem::Property> properties) {
  if (layer < 0 || layer >= ed.num_layers()) throw ConfigError("extract_activations: layer out of range");
  auto all = extract_all_layers(ed, molecules, properties);
  return std::move(all[static_cast<std::size_t>(layer)]);
}

ScanResult scan_layers(std::span<const ActivationMatrix> layers, const ScanOptions& opts) {
  if (layers.empty()) throw ConfigError("layer_scan: no layers");
  const auto& first = layers.front();
  const auto n = first.rows();
  if (static_cast<std::size_t>(n) < kMinScanMolecules) throw ConfigError("layer_scan: need at least 100 molecules");
  if (first.properties.empty()) throw ConfigError("layer_scan: no properties");
  if (!(opts.test_fraction > 0 && opts.test_fraction < 1)) throw ConfigError("layer_scan: bad test fraction");

  // Split by label-row content so that reordering molecules keeps the split.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::vector<std::uint64_t> keys(order.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    Matrix row(1, first.labels.cols() + first.hidden.cols());
    row << first.labels.row(i), layers.back().hidden.row(i);
    keys[static_cast<std::size_t>(i)] = row_key(row, 0, opts.seed);
  }
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return keys[static_cast<std::size_t>(a)] < keys[static_cast<std::size_t>(b)];
  });
  const auto n_test = std::max<Eigen::Index>(2, static_cast<Eigen::Index>(std::llround(opts.test_fraction * static_cast<double>(n))));
  std::vector<Eigen::Index> test(order.begin(), order.begin() + n_test);
  std::vector<Eigen::Index> train(order.begin() + n_test, order.end());

  ScanResult result;
  result.properties = first.properties;
  result.r2.resize(static_cast<Eigen::Index>(layers.size()), static_cast<Eigen::Index>(first.properties.size()));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& a = layers[l];
    require_shape(a.rows() == n && a.labels.cols() == first.labels.cols(), "layer_scan layers");
    const Matrix x_train = a.hidden(train, Eigen::all);
    const Matrix x_test = a.hidden(test, Eigen::all);
    for (Eigen::Index p = 0; p < a.labels.cols(); ++p) {
      const Vector y_train = a.labels(train, p);
      const Vector y_test = a.labels(test, p);
      const auto model = ridge_fit(x_train, y_train, opts.lambda);
      result.r2(static_cast<Eigen::Index>(l), p) = r_squared(y_test, model.predict(x_test));
    }
  }
  const Vector mean = result.mean_r2();
  result.best_layer = 0;
  for (Eigen::Index l = 1; l < mean.size(); ++l) {
    if (mean(l) > mean(result.best_layer)) result.best_layer = static_cast<int>(l);
  }
  return result;
}

ScanResult layer_scan(const editor::Editor& ed, std::span<const chem::Molecule> molecules,
                      std::span<const chem::Property> properties, const ScanOptions& opts) {
  const auto layers = extract_all_layers(ed, molecules, properties);
  return scan_layers(layers, opts);
}

void write_r2_csv(const std::filesystem::path& path, const ScanResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "layer";
  for (auto p : result.properties) out << ',' << chem::name(p);
  out << ",mean\n" << std::setprecision(6) << std::fixed;
  const Vector mean = result.mean_r2();
  for (Eigen::Index l = 0; l < result.r2.rows(); ++l) {
    out << l;
    for (Eigen::Index p = 0; p < result.r2.cols(); ++p) out << ',' << result.r2(l, p);
    out << ',' << mean(l) << '\n';
  }
}

void save_activations(const std::filesystem::path& manifest, const ActivationMatrix& acts) {
  TensorBundle bundle;
  bundle.add("hidden", acts.hidden);
  bundle.add("labels", acts.labels);
  nlohmann::json props = nlohmann::json::array();
  for (auto p : acts.properties) props.push_back(std::string(chem::name(p)));
  bundle.meta = {{"kind", "activations"}, {"layer", acts.layer}, {"properties", props}};
  save_bundle(manifest, bundle);
}

ActivationMatrix load_activations(const std::filesystem::path& manifest) {
  const auto bundle = load_bundle(manifest);
  if (bundle.meta.value("kind", "") != "activations") throw IoError(manifest.string() + ": not an activation file");
  ActivationMatrix a;
  a.layer = bundle.meta.at("layer");
  a.hidden = bundle.get("hidden");
  a.labels = bundle.get("labels");
  for (const auto& name : bundle.meta.at("properties")) {
    const auto p = chem::property_from_name(name.get<std::string>());
    if (!p) throw IoError(manifest.string() + ": unknown property");
    a.properties.push_back(*p);
  }
  return a;
}

}  // namespace slim::probe
