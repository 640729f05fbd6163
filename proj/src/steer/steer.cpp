#include "slim/steer/steer.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "slim/numcore/linalg.hpp"
#include "slim/numcore/matrix_io.hpp"
#include "slim/numcore/rng.hpp"

namespace slim::steer {

namespace {

constexpr double kDegenerateNorm = 1e-12;

constexpr std::array<std::pair<DirectionKind, std::string_view>, 6> kKindNames{{{DirectionKind::Grad, "grad"},
                                                                              {DirectionKind::Caa, "caa"},
                                                                              {DirectionKind::Random, "random"},
                                                                              {DirectionKind::Slim, "slim"},
                                                                              {DirectionKind::Feature, "feature"},
                                                                              {DirectionKind::Multi, "multi"}}};

Vector unit(const Vector& v, std::string_view what) {
  const double n = v.norm();
  if (!(n > kDegenerateNorm)) throw DegenerateError(std::string(what) + ": zero direction");
  return v / n;
}

}  // namespace

std::string_view name(DirectionKind k) {
  for (const auto& [kind, text] : kKindNames)
    if (kind == k) return text;
  return "?";
}

std::optional<DirectionKind> kind_from_name(std::string_view s) {
  for (const auto& [kind, text] : kKindNames)
    if (text == s) return kind;
  return std::nullopt;
}

Direction grad_direction(const editor::Editor& ed, std::span<const editor::EditPair> pairs, int layer) {
  if (pairs.empty()) throw ConfigError("grad_direction: no pairs");
  const chem::Property property = pairs.front().task.property;
  Vector acc = Vector::Zero(ed.width());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].task.property != property) throw ConfigError("grad_direction: pairs mix properties");
    const Vector pooled = ed.grad_logprob_at_layer(pairs[i], layer).colwise().mean().transpose();
    const double n = pooled.norm();
    if (!(n >= kDegenerateNorm)) {
      throw DegenerateError("DegenerateGradient: pooled gradient of pair " + std::to_string(i) + " vanishes");
    }
    acc += pooled / n;
  }
  acc /= static_cast<double>(pairs.size());
  Direction d;
  d.kind = DirectionKind::Grad;
  d.properties = {property};
  d.raw_norm = acc.norm();
  d.vector = unit(acc, "DegenerateGradient: grad_direction average");
  return d;
}

Direction caa_direction(const Matrix& high, const Matrix& low) {
  if (high.rows() == 0 || low.rows() == 0 || high.cols() != low.cols()) {
    throw ConfigError("caa_direction: groups must be nonempty with equal widths");
  }
  const Vector diff = (high.colwise().mean() - low.colwise().mean()).transpose();
  Direction d;
  d.kind = DirectionKind::Caa;
  d.raw_norm = diff.norm();
  d.vector = unit(diff, "caa_direction");
  return d;
}

Direction caa_direction(const probe::ActivationMatrix& acts, chem::Property property) {
  const Vector y = acts.label(property);
  const auto [pos, neg] = sae::contrastive_groups({y.data(), static_cast<std::size_t>(y.size())});
  Direction d = caa_direction(acts.hidden(pos, Eigen::all), acts.hidden(neg, Eigen::all));
  d.properties = {property};
  return d;
}

Direction random_direction(int d, std::uint64_t seed) {
  if (d < 1) throw ConfigError("random_direction: dimension must be positive");
  Rng rng(seed, "random-direction");
  Vector v(d);
  for (int i = 0; i < d; ++i) v(i) = rng.normal();
  Direction out;
  out.kind = DirectionKind::Random;
  out.raw_norm = v.norm();
  out.vector = unit(v, "random_direction");
  return out;
}

Direction slim_direction(const sae::GatedSae& sae, const Direction& grad, int k) {
  if (k <= 0) throw ConfigError("slim_direction: k must be positive");
  require_shape(grad.size() == sae.d(), "slim_direction");
  const Vector code = sae.encode(grad.vector.transpose()).row(0).transpose();
  Direction d;
  d.kind = DirectionKind::Slim;
  d.properties = grad.properties;
  d.k = k;
  Vector kept = Vector::Zero(code.size());
  for (Eigen::Index j : top_k_indices(code, k)) {
    if (code(j) == 0.0) continue;
    kept(j) = code(j);
    d.support.push_back(static_cast<int>(j));
    d.magnitudes.push_back(code(j));
  }
  const Vector rec = sae.W_d() * kept;
  d.raw_norm = rec.norm();
  if (!(d.raw_norm > kDegenerateNorm)) throw DegenerateError("slim_direction: decoded direction vanishes");
  d.vector = rec / d.raw_norm;
  return d;
}

Direction feature_direction(const sae::GatedSae& sae, int j) {
  if (j < 0 || j >= sae.D()) throw ConfigError("feature_direction: feature " + std::to_string(j) + " out of range");
  Direction d;
  d.kind = DirectionKind::Feature;
  d.feature = j;
  d.vector = sae.W_d().col(j);
  d.raw_norm = d.vector.norm();
  return d;
}

Direction combine(std::span<const Direction> directions, std::span<const double> alphas) {
  if (directions.empty() || directions.size() != alphas.size()) {
    throw ConfigError("combine: need one alpha per direction");
  }
  Direction out;
  out.kind = DirectionKind::Multi;
  out.vector = Vector::Zero(directions.front().size());
  for (std::size_t i = 0; i < directions.size(); ++i) {
    require_shape(directions[i].size() == out.size(), "combine");
    out.vector += alphas[i] * directions[i].vector;
    for (auto p : directions[i].properties) out.properties.push_back(p);
  }
  out.alphas.assign(alphas.begin(), alphas.end());
  out.raw_norm = out.vector.norm();
  return out;
}

Matrix apply_steering(const Matrix& h, const Direction& d, double alpha) {
  require_shape(h.cols() == d.size(), "apply_steering");
  return h.rowwise() + alpha * d.vector.transpose();
}

editor::Injection injection(const Direction& d, int layer, double alpha) { return {layer, alpha * d.vector}; }

void save_direction(const std::filesystem::path& manifest, const Direction& d) {
  TensorBundle b;
  b.add("direction", d.vector.transpose());
  nlohmann::json props = nlohmann::json::array();
  for (auto p : d.properties) props.push_back(std::string(chem::name(p)));
  b.meta = {{"kind", "direction"},
            {"direction_kind", std::string(name(d.kind))},
            {"properties", props},
            {"k", d.k},
            {"source", d.source},
            {"raw_norm", d.raw_norm},
            {"support", d.support},
            {"magnitudes", d.magnitudes},
            {"feature", d.feature},
            {"alphas", d.alphas}};
  save_bundle(manifest, b);
}

Direction load_direction(const std::filesystem::path& manifest) {
  const auto b = load_bundle(manifest);
  const auto& m = b.meta;
  if (m.value("kind", "") != "direction") throw IoError(manifest.string() + ": not a direction file");
  const auto kind = kind_from_name(m.at("direction_kind").get<std::string>());
  if (!kind) throw IoError(manifest.string() + ": unknown direction kind");
  Direction d;
  d.kind = *kind;
  d.vector = b.get("direction").row(0).transpose();
  for (const auto& p : m.at("properties")) {
    const auto prop = chem::property_from_name(p.get<std::string>());
    if (!prop) throw IoError(manifest.string() + ": unknown property");
    d.properties.push_back(*prop);
  }
  d.k = m.at("k");
  d.source = m.at("source");
  d.raw_norm = m.at("raw_norm");
  d.support = m.at("support").get<std::vector<int>>();
  d.magnitudes = m.at("magnitudes").get<std::vector<double>>();
  d.feature = m.at("feature");
  d.alphas = m.at("alphas").get<std::vector<double>>();
  return d;
}

}  // namespace slim::steer
