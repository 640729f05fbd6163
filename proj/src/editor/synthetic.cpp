#include "slim/editor/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "slim/chem/sampler.hpp"
#include "slim/chem/smiles.hpp"
#include "slim/numcore/tape.hpp"

namespace slim::editor {

namespace {

constexpr std::size_t kProps = chem::kAllProperties.size();
constexpr int kStatsSamples = 4096;
constexpr double kBiasNorm = 0.5;

std::size_t index_of(chem::Property p) { return static_cast<std::size_t>(p); }

}  // namespace

SyntheticLinearEditor::SyntheticLinearEditor(SyntheticConfig cfg) : cfg_(cfg) {
  if (cfg_.layers < 1 || cfg_.planted_layer < 0 || cfg_.planted_layer >= cfg_.layers) {
    throw ConfigError("synthetic editor: planted layer out of range");
  }
  if (cfg_.width < static_cast<int>(kProps) + cfg_.layers) {
    throw ConfigError("synthetic editor: width must be at least 5 + layers");
  }
  if (!(cfg_.noise >= 0) || !(cfg_.logit_scale > 0)) throw ConfigError("synthetic editor: bad noise or scale");
  const auto d = cfg_.width;
  const auto& catalog = chem::standard_catalog();
  const auto actions = static_cast<Eigen::Index>(catalog.size());

  // Orthonormal basis: first 5 columns are the planted directions, the
  // next `layers` columns carry the per-layer biases.
  Rng basis_rng(cfg_.seed, "synthetic-basis");
  Matrix raw(d, static_cast<Eigen::Index>(kProps) + cfg_.layers);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = basis_rng.normal();
  const Matrix q = Eigen::HouseholderQR<Matrix>(raw).householderQ() * Matrix::Identity(d, raw.cols());
  planted_ = q.leftCols(kProps);
  for (int l = 0; l < cfg_.layers; ++l) biases_.push_back(kBiasNorm * q.col(static_cast<Eigen::Index>(kProps) + l));

  // Property statistics and mean declared action effects over a fixed sample.
  Rng stats_rng(cfg_.seed, "synthetic-stats");
  std::array<double, kProps> sum{}, sq{};
  Matrix effect_sum = Matrix::Zero(kProps, actions);
  Vector effect_count = Vector::Zero(actions);
  for (int s = 0; s < kStatsSamples; ++s) {
    const auto mol = chem::sample_molecule(stats_rng, {1, 12});
    for (std::size_t p = 0; p < kProps; ++p) {
      const double v = chem::property(mol, chem::kAllProperties[p]);
      sum[p] += v;
      sq[p] += v * v;
    }
    for (Eigen::Index a = 0; a < actions; ++a) {
      const auto& action = catalog[static_cast<std::size_t>(a)];
      if (!chem::is_feasible(mol, action)) continue;
      const auto delta = chem::declared_delta(mol, action);
      for (std::size_t p = 0; p < kProps; ++p) effect_sum(static_cast<Eigen::Index>(p), a) += delta[p];
      effect_count(a) += 1;
    }
  }
  for (std::size_t p = 0; p < kProps; ++p) {
    mean_[p] = sum[p] / kStatsSamples;
    sd_[p] = std::sqrt(std::max(sq[p] / kStatsSamples - mean_[p] * mean_[p], 1e-12));
  }
  effects_ = Matrix::Zero(kProps, actions);
  for (Eigen::Index a = 0; a < actions; ++a) {
    if (effect_count(a) > 0) effects_.col(a) = effect_sum.col(a) / effect_count(a);
  }
  for (Eigen::Index p = 0; p < effects_.rows(); ++p) {
    const double peak = effects_.row(p).cwiseAbs().maxCoeff();
    if (peak > 0) effects_.row(p) /= peak;
    for (Eigen::Index a = 0; a < actions; ++a) {
      if (std::abs(effects_(p, a)) < 0.05) effects_(p, a) = 0.0;
    }
  }

  base_ = Vector::Zero(actions);
  for (Eigen::Index a = 0; a < actions; ++a) {
    const auto kind = catalog[static_cast<std::size_t>(a)].kind;
    if (kind == chem::EditKind::NoOp) base_(a) = 1.5;
    if (kind == chem::EditKind::DeleteTerminalAtom) base_(a) = 1.0;
  }
}

Vector SyntheticLinearEditor::phi(const chem::Molecule& mol) const {
  Vector out(kProps + 1);
  for (std::size_t p = 0; p < kProps; ++p) {
    out(static_cast<Eigen::Index>(p)) = (chem::property(mol, chem::kAllProperties[p]) - mean_[p]) / sd_[p];
  }
  out(kProps) = 1.0;
  return out;
}

Matrix SyntheticLinearEditor::layer_map(int layer) const {
  if (layer < 0 || layer >= cfg_.layers) throw ConfigError("synthetic editor: layer out of range");
  Matrix a = Matrix::Zero(cfg_.width, kProps + 1);
  if (layer == cfg_.planted_layer) a.leftCols(kProps) = planted_;
  a.col(kProps) = biases_[static_cast<std::size_t>(layer)];
  return a;
}

Vector SyntheticLinearEditor::ascent_direction(chem::Property p) const {
  return planted_.col(static_cast<Eigen::Index>(index_of(p)));
}

std::vector<Matrix> SyntheticLinearEditor::forward_capture(const chem::Molecule& source, const Task&) const {
  const Vector f = phi(source);
  const auto key = hash_combine(cfg_.seed, fnv1a(chem::to_smiles(source)));
  std::vector<Matrix> out;
  for (int l = 0; l < cfg_.layers; ++l) {
    Vector h = layer_map(l) * f;
    if (cfg_.noise > 0) {
      Rng noise = Rng(key).fork(static_cast<std::uint64_t>(l));
      for (Eigen::Index i = 0; i < h.size(); ++i) h(i) += cfg_.noise * noise.normal();
    }
    out.push_back(h.transpose());
  }
  return out;
}

Matrix SyntheticLinearEditor::readout(const Task& task) const {
  const std::size_t p = index_of(task.property);
  Vector w = Vector::Constant(kProps, cfg_.crosstalk);
  w(static_cast<Eigen::Index>(p)) = 1.0;
  // catalog x d: sum_q w_q u_q g_q^T
  return sign(task.dir) * cfg_.kappa * effects_.transpose() * w.asDiagonal() * planted_.transpose();
}

Vector SyntheticLinearEditor::logits(const Vector& h, const Task& task) const {
  require_shape(h.size() == cfg_.width, "synthetic logits");
  const Vector prior = sign(task.dir) * cfg_.kappa_prior * effects_.row(static_cast<Eigen::Index>(index_of(task.property))).transpose();
  return cfg_.logit_scale * (base_ + prior + readout(task) * h);
}

std::vector<Candidate> SyntheticLinearEditor::generate(const chem::Molecule& source, const Task& task, int n,
                                                       const Sampling& sampling, const Rng& rng,
                                                       const Injection* injection) const {
  if (n < 0) throw ConfigError("generate: n must be nonnegative");
  Vector h = forward_capture(source, task)[static_cast<std::size_t>(cfg_.planted_layer)].transpose();
  if (injection != nullptr) {
    require_shape(injection->vector.size() == cfg_.width, "synthetic injection");
    if (injection->layer == cfg_.planted_layer) h += injection->vector;
  }
  const auto& catalog = chem::standard_catalog();
  Vector l = logits(h, task);
  for (Eigen::Index a = 0; a < l.size(); ++a) {
    if (!chem::is_feasible(source, catalog[static_cast<std::size_t>(a)])) l(a) = -std::numeric_limits<double>::infinity();
  }
  std::vector<Candidate> out;
  for (int i = 0; i < n; ++i) {
    Rng child = rng.fork(static_cast<std::uint64_t>(i));
    const int a = sample_nucleus({l.data(), static_cast<std::size_t>(l.size())}, sampling.temperature,
                                 sampling.top_p, child);
    chem::Molecule mol = chem::apply_edit(source, catalog[static_cast<std::size_t>(a)]);
    out.push_back({chem::to_smiles(mol), std::move(mol)});
  }
  return out;
}

std::vector<int> SyntheticLinearEditor::action_indices(const EditPair& pair) const {
  if (pair.actions.empty()) throw ConfigError("synthetic editor: pair has no recorded actions");
  const auto& catalog = chem::standard_catalog();
  std::vector<int> idx;
  for (const auto& a : pair.actions) {
    const auto it = std::find(catalog.begin(), catalog.end(), a);
    if (it == catalog.end()) throw ConfigError("synthetic editor: action not in catalog");
    idx.push_back(static_cast<int>(it - catalog.begin()));
  }
  return idx;
}

double SyntheticLinearEditor::log_prob(const EditPair& pair) const {
  const Vector h = forward_capture(pair.source, pair.task)[static_cast<std::size_t>(cfg_.planted_layer)].transpose();
  const Vector l = logits(h, pair.task);
  const double lse = l.maxCoeff() + std::log((l.array() - l.maxCoeff()).exp().sum());
  double total = 0;
  for (int a : action_indices(pair)) total += l(a) - lse;
  return total;
}

Matrix SyntheticLinearEditor::grad_logprob_at_layer(const EditPair& pair, int layer) const {
  if (layer < 0 || layer >= cfg_.layers) throw ConfigError("synthetic editor: layer out of range");
  const auto actions = action_indices(pair);
  const Matrix h = forward_capture(pair.source, pair.task)[static_cast<std::size_t>(layer)];

  ad::Tape tape;
  const ad::Var hv = tape.leaf(h);
  Matrix grad = Matrix::Zero(1, cfg_.width);
  if (layer == cfg_.planted_layer) {
    const Vector prior =
        sign(pair.task.dir) * cfg_.kappa_prior * effects_.row(static_cast<Eigen::Index>(index_of(pair.task.property))).transpose();
    const ad::Var bias = tape.constant((base_ + prior).transpose());
    const ad::Var u = tape.constant(readout(pair.task));
    const ad::Var logit = cfg_.logit_scale * (ad::matmul_nt(hv, u) + bias);
    std::vector<ad::Var> rows(actions.size(), logit);
    const ad::Var nll = ad::cross_entropy(ad::concat_rows(rows), actions);
    const ad::Var logp = ad::scale(nll, -static_cast<double>(actions.size()));
    const auto g = tape.backward(logp);
    grad = g[hv];
  }
  if (!(grad.norm() > 1e-12)) throw DegenerateError("DegenerateGradient: zero gradient at layer " + std::to_string(layer));
  return grad;
}

}  // namespace slim::editor
