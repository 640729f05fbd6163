#include "slim/sae/sae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "slim/numcore/adam.hpp"
#include "slim/numcore/linalg.hpp"
#include "slim/numcore/matrix_io.hpp"
#include "slim/numcore/rng.hpp"
#include "slim/numcore/tape.hpp"

namespace slim::sae {

namespace {

constexpr int kMinContrastBatch = 8;
// Appended to projected rows before normalizing so that an all-zero
// projection cannot divide by zero.
constexpr double kNormGuard = 1e-6;

Matrix normal(Rng& rng, Eigen::Index r, Eigen::Index c, double sd) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sd * rng.normal();
  return m;
}

Matrix sigmoid(const Matrix& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

}  // namespace

GatedSae::GatedSae(SaeConfig cfg, const Matrix& mean) : cfg_(std::move(cfg)) {
  if (cfg_.d < 1 || cfg_.expansion < 1 || cfg_.k < 1 || cfg_.properties.empty()) {
    throw ConfigError("sae: invalid dimensions or empty property list");
  }
  if (!(cfg_.tau_c > 0)) throw ConfigError("sae: tau_c must be positive");
  require_shape(mean.rows() == 1 && mean.cols() == cfg_.d, "sae mean");
  const int d = cfg_.d, D = cfg_.D();
  Rng rng(cfg_.seed, "sae-init");
  t_.push_back(normal(rng, D, d, 1.0 / std::sqrt(d)));
  t_.push_back(normal(rng, D, d, 1.0 / std::sqrt(d)));
  t_.push_back(t_[1].transpose());
  t_.push_back(mean);
  for (std::size_t p = 0; p < cfg_.properties.size(); ++p) {
    t_.push_back(Matrix::Zero(1, D));
    t_.push_back(normal(rng, D, cfg_.head_hidden, std::sqrt(2.0 / D)));
    t_.push_back(Matrix::Zero(1, cfg_.head_hidden));
    t_.push_back(normal(rng, cfg_.head_hidden, 1, std::sqrt(1.0 / cfg_.head_hidden)));
    t_.push_back(Matrix::Zero(1, 1));
    t_.push_back(normal(rng, D, cfg_.proj_hidden, std::sqrt(2.0 / D)));
    t_.push_back(Matrix::Zero(1, cfg_.proj_hidden));
    t_.push_back(normal(rng, cfg_.proj_hidden, cfg_.proj_out, std::sqrt(1.0 / cfg_.proj_hidden)));
    t_.push_back(Matrix::Zero(1, cfg_.proj_out));
  }
  project_constraints();
  label_mean.assign(cfg_.properties.size(), 0.0);
  label_sd.assign(cfg_.properties.size(), 1.0);
}

std::size_t GatedSae::property_index(chem::Property p) const {
  const auto it = std::find(cfg_.properties.begin(), cfg_.properties.end(), p);
  if (it == cfg_.properties.end()) throw ConfigError("sae: property " + std::string(chem::name(p)) + " not trained");
  return static_cast<std::size_t>(it - cfg_.properties.begin());
}

std::vector<std::string> GatedSae::tensor_names() const {
  static const char* kSlotNames[kSlots] = {"gate",    "head.w1", "head.b1", "head.w2", "head.b2",
                                           "proj.w1", "proj.b1", "proj.w2", "proj.b2"};
  std::vector<std::string> names{"W_g", "W_m", "W_d", "b_d"};
  for (auto p : cfg_.properties) {
    for (const char* s : kSlotNames) names.push_back(std::string(chem::name(p)) + "." + s);
  }
  return names;
}

Matrix GatedSae::encode(const Matrix& H) const {
  require_shape(H.cols() == cfg_.d, "sae encode");
  const Matrix xc = H.rowwise() - b_d().row(0);
  const Matrix gate = sigmoid(xc * W_g().transpose());
  const Matrix mag = (xc * W_m().transpose()).cwiseMax(0.0);
  return gate.cwiseProduct(mag);
}

Matrix GatedSae::decode(const Matrix& Z) const {
  require_shape(Z.cols() == D(), "sae decode");
  return (Z * W_d().transpose()).rowwise() + b_d().row(0);
}

Matrix GatedSae::gate(chem::Property p) const {
  const Matrix& logits = t_[static_cast<std::size_t>(slot(property_index(p), Gate))];
  return sigmoid(logits.cwiseMax(-kGateLogitClamp).cwiseMin(kGateLogitClamp));
}

Matrix GatedSae::gated_code(const Matrix& Z, chem::Property p) const {
  require_shape(Z.cols() == D(), "sae gated_code");
  return Z.array().rowwise() * gate(p).row(0).array();
}

void GatedSae::project_constraints() {
  Matrix& wd = t_[2];
  for (Eigen::Index j = 0; j < wd.cols(); ++j) {
    const double n = wd.col(j).norm();
    if (n > 0) wd.col(j) /= n;
  }
  for (std::size_t p = 0; p < cfg_.properties.size(); ++p) {
    Matrix& g = t_[static_cast<std::size_t>(slot(p, Gate))];
    g = g.cwiseMax(-kGateLogitClamp).cwiseMin(kGateLogitClamp);
  }
}

std::pair<std::vector<int>, std::vector<int>> contrastive_groups(std::span<const double> labels) {
  if (labels.size() < static_cast<std::size_t>(kMinContrastBatch)) {
    throw ConfigError("contrastive_groups: batch must hold at least 8 rows");
  }
  std::vector<int> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return labels[a] > labels[b]; });
  const std::size_t q = labels.size() / 4;
  std::vector<int> pos(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(q));
  std::vector<int> neg(order.end() - static_cast<std::ptrdiff_t>(q), order.end());
  return {pos, neg};
}

LossEvaluation sae_losses(const GatedSae& sae, const Matrix& H, const Matrix& Y, const Matrix* grad_dirs,
                          bool want_grads) {
  const auto& cfg = sae.config();
  const auto P = cfg.properties.size();
  const auto n = H.rows();
  require_shape(H.cols() == cfg.d && Y.rows() == n && Y.cols() == static_cast<Eigen::Index>(P), "sae_losses batch");
  if (grad_dirs != nullptr) {
    require_shape(grad_dirs->rows() == static_cast<Eigen::Index>(P) && grad_dirs->cols() == cfg.d, "sae_losses grad_dirs");
  }
  if (n < 1) throw ConfigError("sae_losses: empty batch");

  ad::Tape tape;
  std::vector<ad::Var> w;
  for (const auto& t : sae.tensors()) w.push_back(want_grads ? tape.leaf(t) : tape.constant(t));
  auto W = [&](int i) { return w[static_cast<std::size_t>(i)]; };
  auto encode = [&](ad::Var x) {
    const ad::Var xc = ad::sub_row(x, W(3));
    return ad::mul(ad::sigmoid(ad::matmul_nt(xc, W(0))), ad::relu(ad::matmul_nt(xc, W(1))));
  };
  const double inv_n = 1.0 / static_cast<double>(n);

  LossEvaluation out;
  LossBreakdown& lb = out.loss;
  const ad::Var h = tape.constant(H);
  const ad::Var z = encode(h);
  const ad::Var h_hat = ad::add_row(ad::matmul_nt(z, W(2)), W(3));
  const ad::Var diff = ad::sub(h, h_hat);
  const ad::Var recon = ad::scale(ad::sum(ad::mul(diff, diff)), inv_n);
  const ad::Var sparse = ad::scale(ad::sum(z), inv_n);

  std::vector<ad::Var> sup_terms, contrast_terms, grad_terms;
  for (std::size_t p = 0; p < P; ++p) {
    const auto pe = static_cast<Eigen::Index>(p);
    const ad::Var zp = ad::mul_row(z, ad::sigmoid(W(sae.slot(p, GatedSae::Gate))));

    const ad::Var hidden = ad::relu(ad::add_row(ad::matmul(zp, W(sae.slot(p, GatedSae::HeadW1))),
                                                W(sae.slot(p, GatedSae::HeadB1))));
    const ad::Var pred = ad::add_row(ad::matmul(hidden, W(sae.slot(p, GatedSae::HeadW2))),
                                     W(sae.slot(p, GatedSae::HeadB2)));
    const ad::Var err = ad::sub(pred, tape.constant(Y.col(pe)));
    sup_terms.push_back(ad::mean(ad::mul(err, err)));

    bool contrasted = false;
    if (n >= kMinContrastBatch) {
      const Vector col = Y.col(pe);
      const auto [pos, neg] = contrastive_groups({col.data(), static_cast<std::size_t>(col.size())});
      if (pos.size() >= 2) {
        std::vector<int> rows(pos);
        rows.insert(rows.end(), neg.begin(), neg.end());
        const auto m = static_cast<Eigen::Index>(rows.size());
        const auto np = static_cast<Eigen::Index>(pos.size());
        const ad::Var sel = ad::embedding(zp, rows);
        const ad::Var ph = ad::relu(ad::add_row(ad::matmul(sel, W(sae.slot(p, GatedSae::ProjW1))),
                                                W(sae.slot(p, GatedSae::ProjB1))));
        const ad::Var proj = ad::add_row(ad::matmul(ph, W(sae.slot(p, GatedSae::ProjW2))),
                                         W(sae.slot(p, GatedSae::ProjB2)));
        const std::vector<ad::Var> guarded{proj, tape.constant(Matrix::Constant(m, 1, kNormGuard))};
        const ad::Var e = ad::div_col(proj, ad::l2_norm(ad::concat_cols(guarded)));
        const ad::Var ex = ad::exp(ad::scale(ad::matmul_nt(e, e), 1.0 / cfg.tau_c));
        Matrix same = Matrix::Zero(m, m);
        same.topLeftCorner(np, np).setOnes();
        same.diagonal().setZero();
        Matrix others = Matrix::Ones(m, m);
        others.diagonal().setZero();
        const ad::Var num = ad::slice(ad::row_sum(ad::mul(ex, tape.constant(same))), 0, 0, np, 1);
        const ad::Var den = ad::slice(ad::row_sum(ad::mul(ex, tape.constant(others))), 0, 0, np, 1);
        contrast_terms.push_back(ad::mean(ad::sub(ad::log(den), ad::log(num))));
        contrasted = true;
      }
    }
    if (!contrasted) lb.contrast_skipped.push_back(cfg.properties[p]);

    if (grad_dirs != nullptr) {
      const Matrix dg = grad_dirs->row(pe);
      const ad::Var code = encode(tape.constant(dg));
      const Vector code_v = code.value().row(0).transpose();
      Matrix mask = Matrix::Zero(1, code_v.size());
      for (auto i : top_k_indices(code_v, cfg.k)) mask(0, i) = 1.0;
      const ad::Var kept = ad::mul(code, tape.constant(mask));
      if (kept.value().norm() > 0) {
        const ad::Var rec = ad::matmul_nt(kept, W(2));
        const ad::Var one = tape.constant(Matrix::Ones(1, 1));
        grad_terms.push_back(ad::sub(one, ad::cosine(rec, tape.constant(dg))));
      } else {
        grad_terms.push_back(tape.constant(Matrix::Ones(1, 1)));
      }
    }
  }

  auto average = [&](const std::vector<ad::Var>& terms) {
    ad::Var acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = acc + terms[i];
    return ad::scale(acc, 1.0 / static_cast<double>(terms.size()));
  };
  auto total_of = [&](const std::vector<ad::Var>& terms) {
    ad::Var acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = acc + terms[i];
    return acc;
  };

  ad::Var total = recon + cfg.lambda.sparse * sparse;
  const ad::Var sup = average(sup_terms);
  total = total + cfg.lambda.sup * sup;
  lb.recon = recon.scalar();
  lb.sparse = sparse.scalar();
  lb.sup = sup.scalar();
  if (!contrast_terms.empty()) {
    const ad::Var contrast = average(contrast_terms);
    total = total + cfg.lambda.contrast * contrast;
    lb.contrast = contrast.scalar();
  }
  if (!grad_terms.empty()) {
    const ad::Var g = total_of(grad_terms);
    total = total + cfg.lambda.grad * g;
    lb.grad = g.scalar();
  }
  lb.total = total.scalar();
  if (want_grads) {
    const auto grads = tape.backward(total);
    for (const auto& v : w) out.grads.push_back(grads.has(v) ? grads[v] : Matrix::Zero(v.rows(), v.cols()));
  }
  return out;
}

double alignment_cosine(const GatedSae& sae, const Vector& direction, int k) {
  require_shape(direction.size() == sae.d(), "alignment_cosine");
  const Vector code = sae.encode(direction.transpose()).row(0).transpose();
  const Vector rec = sae.W_d() * top_k_mask(code, k);
  if (!(rec.norm() > 0)) return 0.0;
  return cosine(rec, direction);
}

Matrix normalized_labels(const GatedSae& sae, const probe::ActivationMatrix& acts) {
  const auto& props = sae.config().properties;
  Matrix Y(acts.rows(), static_cast<Eigen::Index>(props.size()));
  for (std::size_t p = 0; p < props.size(); ++p) {
    Y.col(static_cast<Eigen::Index>(p)) = (acts.label(props[p]).array() - sae.label_mean[p]) / sae.label_sd[p];
  }
  return Y;
}

std::pair<GatedSae, TrainResult> train_sae(const probe::ActivationMatrix& acts, const Matrix* grad_dirs,
                                           const SaeConfig& cfg, const SaeProgress& progress) {
  if (acts.rows() < 2) throw ConfigError("train_sae: need at least two activation rows");
  if (acts.hidden.cols() != cfg.d) throw ConfigError("train_sae: activation width does not match d");
  if (cfg.batch < 1 || cfg.epochs < 1 || !(cfg.lr > 0)) throw ConfigError("train_sae: bad hyperparameters");
  GatedSae sae(cfg, acts.hidden.colwise().mean());
  for (std::size_t p = 0; p < cfg.properties.size(); ++p) {
    const Vector y = acts.label(cfg.properties[p]);
    sae.label_mean[p] = y.mean();
    const double sd = std::sqrt((y.array() - y.mean()).square().mean());
    sae.label_sd[p] = sd > 0 ? sd : 1.0;
  }
  const Matrix Y = normalized_labels(sae, acts);

  Rng rng(cfg.seed, "sae-train");
  Adam adam(AdamConfig{cfg.lr});
  std::vector<Matrix*> params;
  for (auto& t : sae.tensors()) params.push_back(&t);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(acts.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    LossBreakdown mean;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const auto len = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), order.size() - start);
      const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(start + len));
      const Matrix H = acts.hidden(idx, Eigen::all);
      const Matrix Yb = Y(idx, Eigen::all);
      auto eval = sae_losses(sae, H, Yb, grad_dirs, true);
      const auto& l = eval.loss;
      if (!std::isfinite(l.total)) {
        throw NumericError("train_sae: non-finite loss at epoch " + std::to_string(epoch + 1) +
                           " (recon " + std::to_string(l.recon) + ", sparse " + std::to_string(l.sparse) +
                           ", sup " + std::to_string(l.sup) + ", contrast " + std::to_string(l.contrast) +
                           ", grad " + std::to_string(l.grad) + ")");
      }
      adam.step(params, eval.grads);
      sae.project_constraints();
      mean.recon += l.recon;
      mean.sparse += l.sparse;
      mean.sup += l.sup;
      mean.contrast += l.contrast;
      mean.grad += l.grad;
      mean.total += l.total;
      ++batches;
    }
    for (double* v : {&mean.recon, &mean.sparse, &mean.sup, &mean.contrast, &mean.grad, &mean.total}) *v /= batches;
    result.history.push_back(mean);
    if (progress) progress(epoch + 1, mean);
  }
  return {std::move(sae), std::move(result)};
}

void save_checkpoint(const std::filesystem::path& manifest, const GatedSae& sae) {
  TensorBundle bundle;
  const auto names = sae.tensor_names();
  for (std::size_t i = 0; i < names.size(); ++i) bundle.add(names[i], sae.tensors()[i]);
  const auto& c = sae.config();
  nlohmann::json props = nlohmann::json::array();
  for (auto p : c.properties) props.push_back(std::string(chem::name(p)));
  bundle.meta = {{"kind", "gated-sae"},
                 {"sae_version", kSaeFormatVersion},
                 {"d", c.d},
                 {"D", c.D()},
                 {"k", c.k},
                 {"lambda",
                  {{"contrast", c.lambda.contrast},
                   {"sup", c.lambda.sup},
                   {"sparse", c.lambda.sparse},
                   {"grad", c.lambda.grad}}},
                 {"tau_c", c.tau_c},
                 {"head_hidden", c.head_hidden},
                 {"proj_hidden", c.proj_hidden},
                 {"proj_out", c.proj_out},
                 {"lr", c.lr},
                 {"batch", c.batch},
                 {"epochs", c.epochs},
                 {"properties", props},
                 {"seed", c.seed},
                 {"label_mean", sae.label_mean},
                 {"label_sd", sae.label_sd}};
  save_bundle(manifest, bundle);
}

GatedSae load_checkpoint(const std::filesystem::path& manifest) {
  const auto bundle = load_bundle(manifest);
  const auto& m = bundle.meta;
  if (m.value("kind", "") != "gated-sae") throw IoError(manifest.string() + ": not an SAE checkpoint");
  if (m.value("sae_version", -1) != kSaeFormatVersion) {
    throw IoError(manifest.string() + ": SAE checkpoint version " + std::to_string(m.value("sae_version", -1)) +
                  ", expected " + std::to_string(kSaeFormatVersion));
  }
  SaeConfig c;
  c.d = m.at("d");
  const int D = m.at("D");
  if (D % c.d != 0) throw IoError(manifest.string() + ": D is not a multiple of d");
  c.expansion = D / c.d;
  c.k = m.at("k");
  c.lambda = {m.at("lambda").at("contrast"), m.at("lambda").at("sup"), m.at("lambda").at("sparse"),
              m.at("lambda").at("grad")};
  c.tau_c = m.at("tau_c");
  c.head_hidden = m.at("head_hidden");
  c.proj_hidden = m.at("proj_hidden");
  c.proj_out = m.at("proj_out");
  c.lr = m.at("lr");
  c.batch = m.at("batch");
  c.epochs = m.at("epochs");
  c.seed = m.at("seed");
  c.properties.clear();
  for (const auto& name : m.at("properties")) {
    const auto p = chem::property_from_name(name.get<std::string>());
    if (!p) throw IoError(manifest.string() + ": unknown property");
    c.properties.push_back(*p);
  }
  GatedSae sae(c, bundle.get("b_d"));
  const auto names = sae.tensor_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Matrix& t = bundle.get(names[i]);
    if (t.rows() != sae.tensors()[i].rows() || t.cols() != sae.tensors()[i].cols()) {
      throw IoError(manifest.string() + ": shape mismatch for " + names[i]);
    }
    sae.tensors()[i] = t;
  }
  sae.label_mean = m.at("label_mean").get<std::vector<double>>();
  sae.label_sd = m.at("label_sd").get<std::vector<double>>();
  return sae;
}

}  // namespace slim::sae
