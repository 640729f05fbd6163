#include "slim/editor/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "slim/chem/smiles.hpp"
#include "slim/editor/tokenizer.hpp"
#include "slim/numcore/adam.hpp"
#include "slim/numcore/matrix_io.hpp"
#include "slim/numcore/tape.hpp"

namespace slim::editor {

namespace {

constexpr int kPerLayer = 12;
constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;

enum Slot { Ln1G, Ln1B, Wqkv, Bqkv, Wo, Bo, Ln2G, Ln2B, W1, B1, W2, B2 };

int slot(int layer, Slot s) { return 2 + kPerLayer * layer + s; }
int final_slot(int layers, int i) { return 2 + kPerLayer * layers + i; }  // 0 gain, 1 bias, 2 w_out

/// Training/scoring example: inputs are all tokens but the last; row i
/// predicts token i+1 and is weighted 1 when that token belongs to the
/// target (after [SEP]).
struct Example {
  std::vector<int> input;
  std::vector<int> target;
  std::vector<double> weight;
};

Example make_example(const EditPair& pair) {
  const auto seq = Tokenizer::full_sequence(pair);
  const auto sep = std::find(seq.begin(), seq.end(), Tokenizer::sep()) - seq.begin();
  Example ex;
  ex.input.assign(seq.begin(), seq.end() - 1);
  ex.target.assign(seq.begin() + 1, seq.end());
  for (std::size_t i = 0; i < ex.input.size(); ++i) {
    ex.weight.push_back(static_cast<std::ptrdiff_t>(i) >= sep ? 1.0 : 0.0);
  }
  return ex;
}

RowVector layer_norm_row(const RowVector& x, const Matrix& gain, const Matrix& bias) {
  const double mu = x.mean();
  const double var = (x.array() - mu).square().sum() / static_cast<double>(x.size());
  const double inv_sd = 1.0 / std::sqrt(var + kLayerNormEps);
  const RowVector xhat = (x.array() - mu) * inv_sd;
  return (xhat.array() * gain.row(0).array()) + bias.row(0).array();
}

}  // namespace

/// Builds the forward pass of a batch of packed sequences on a tape.
struct TransformerGraph {
  struct Hooks {
    const Injection* injection = nullptr;
    int replace_layer = -1;
    const Matrix* replacement = nullptr;
    ad::Var* replaced = nullptr;
    std::vector<Matrix>* capture = nullptr;
  };

  TransformerGraph(const TinyTransformerEditor& model, ad::Tape& tape, bool trainable) : m(model), t(tape) {
    for (const auto& param : m.params_) w.push_back(trainable ? t.leaf(param) : t.constant(param));
  }

  ad::Var W(int i) const { return w[static_cast<std::size_t>(i)]; }

  ad::Var hidden(const std::vector<int>& tokens, const std::vector<int>& lengths, const Hooks& hooks) {
    const auto& cfg = m.cfg_;
    std::vector<int> positions;
    for (int len : lengths) {
      if (len > cfg.context) throw ShapeError("transformer: sequence longer than context");
      for (int i = 0; i < len; ++i) positions.push_back(i);
    }
    ad::Var x = ad::embedding(W(0), tokens) + ad::embedding(W(1), positions);
    const int dh = cfg.width / cfg.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = 0; l < cfg.layers; ++l) {
      const ad::Var a = ad::layer_norm(x, W(slot(l, Ln1G)), W(slot(l, Ln1B)), kLayerNormEps);
      const ad::Var qkv = ad::add_row(ad::matmul(a, W(slot(l, Wqkv))), W(slot(l, Bqkv)));
      std::vector<ad::Var> seqs;
      Eigen::Index r0 = 0;
      for (int len : lengths) {
        std::vector<ad::Var> heads;
        for (int h = 0; h < cfg.heads; ++h) {
          const ad::Var q = ad::slice(qkv, r0, h * dh, len, dh);
          const ad::Var k = ad::slice(qkv, r0, cfg.width + h * dh, len, dh);
          const ad::Var v = ad::slice(qkv, r0, 2 * cfg.width + h * dh, len, dh);
          const ad::Var att = ad::softmax(ad::scale(ad::matmul_nt(q, k), inv_sqrt), true);
          heads.push_back(ad::matmul(att, v));
        }
        seqs.push_back(cfg.heads == 1 ? heads[0] : ad::concat_cols(heads));
        r0 += len;
      }
      const ad::Var attn = seqs.size() == 1 ? seqs[0] : ad::concat_rows(seqs);
      x = x + ad::add_row(ad::matmul(attn, W(slot(l, Wo))), W(slot(l, Bo)));
      const ad::Var b = ad::layer_norm(x, W(slot(l, Ln2G)), W(slot(l, Ln2B)), kLayerNormEps);
      const ad::Var f = ad::relu(ad::add_row(ad::matmul(b, W(slot(l, W1))), W(slot(l, B1))));
      x = x + ad::add_row(ad::matmul(f, W(slot(l, W2))), W(slot(l, B2)));

      if (hooks.replace_layer == l) {
        require_shape(hooks.replacement->rows() == x.rows() && hooks.replacement->cols() == x.cols(),
                      "transformer hidden replacement");
        x = t.leaf(*hooks.replacement);
        if (hooks.replaced != nullptr) *hooks.replaced = x;
      }
      if (hooks.injection != nullptr && hooks.injection->layer == l) {
        x = ad::add_row(x, t.constant(hooks.injection->vector.transpose()));
      }
      if (hooks.capture != nullptr) hooks.capture->push_back(x.value());
    }
    return x;
  }

  ad::Var logits(ad::Var x) {
    const int L = m.cfg_.layers;
    return ad::matmul(ad::layer_norm(x, W(final_slot(L, 0)), W(final_slot(L, 1)), kLayerNormEps),
                      W(final_slot(L, 2)));
  }

  const TinyTransformerEditor& m;
  ad::Tape& t;
  std::vector<ad::Var> w;
};

/// Incremental decoder with a key/value cache. Mirrors TransformerGraph
/// arithmetic one position at a time.
class Decoder {
 public:
  Decoder(const TinyTransformerEditor& model, const Injection* injection) : m_(model), inj_(injection) {
    const auto& cfg = m_.cfg_;
    keys_.assign(static_cast<std::size_t>(cfg.layers), Matrix(cfg.context, cfg.width));
    values_.assign(static_cast<std::size_t>(cfg.layers), Matrix(cfg.context, cfg.width));
  }

  int position() const { return t_; }

  RowVector push(int token) {
    const auto& cfg = m_.cfg_;
    if (t_ >= cfg.context) throw ShapeError("decoder: context exhausted");
    const int dh = cfg.width / cfg.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    RowVector x = m_.p(0).row(token) + m_.p(1).row(t_);
    for (int l = 0; l < cfg.layers; ++l) {
      const auto li = static_cast<std::size_t>(l);
      const RowVector a = layer_norm_row(x, m_.p(slot(l, Ln1G)), m_.p(slot(l, Ln1B)));
      const RowVector qkv = a * m_.p(slot(l, Wqkv)) + m_.p(slot(l, Bqkv));
      keys_[li].row(t_) = qkv.segment(cfg.width, cfg.width);
      values_[li].row(t_) = qkv.segment(2 * cfg.width, cfg.width);
      RowVector attn(cfg.width);
      for (int h = 0; h < cfg.heads; ++h) {
        const auto K = keys_[li].block(0, h * dh, t_ + 1, dh);
        const auto V = values_[li].block(0, h * dh, t_ + 1, dh);
        Vector s = (K * qkv.segment(h * dh, dh).transpose()) * inv_sqrt;
        s = (s.array() - s.maxCoeff()).exp();
        s /= s.sum();
        attn.segment(h * dh, dh) = s.transpose() * V;
      }
      x += attn * m_.p(slot(l, Wo)) + m_.p(slot(l, Bo));
      const RowVector b = layer_norm_row(x, m_.p(slot(l, Ln2G)), m_.p(slot(l, Ln2B)));
      const RowVector f = (b * m_.p(slot(l, W1)) + m_.p(slot(l, B1))).cwiseMax(0.0);
      x += f * m_.p(slot(l, W2)) + m_.p(slot(l, B2));
      if (inj_ != nullptr && inj_->layer == l) x += inj_->vector.transpose();
    }
    ++t_;
    const int L = cfg.layers;
    return layer_norm_row(x, m_.p(final_slot(L, 0)), m_.p(final_slot(L, 1))) * m_.p(final_slot(L, 2));
  }

 private:
  const TinyTransformerEditor& m_;
  const Injection* inj_;
  std::vector<Matrix> keys_, values_;
  int t_ = 0;
};

TinyTransformerEditor::TinyTransformerEditor(TransformerConfig cfg) : cfg_(cfg) {
  if (cfg_.layers < 1 || cfg_.width < 1 || cfg_.heads < 1 || cfg_.width % cfg_.heads != 0 || cfg_.ff < 1 ||
      cfg_.context < 8) {
    throw ConfigError("transformer: invalid dimensions");
  }
  const int d = cfg_.width;
  const int V = Tokenizer::vocab_size();
  Rng rng(cfg_.seed, "transformer-init");
  auto normal = [&](int r, int c, double sd) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sd * rng.normal();
    return m;
  };
  const double resid_sd = kInitStd / std::sqrt(2.0 * cfg_.layers);
  params_.push_back(normal(V, d, kInitStd));
  params_.push_back(normal(cfg_.context, d, kInitStd));
  for (int l = 0; l < cfg_.layers; ++l) {
    params_.push_back(Matrix::Ones(1, d));
    params_.push_back(Matrix::Zero(1, d));
    params_.push_back(normal(d, 3 * d, kInitStd));
    params_.push_back(Matrix::Zero(1, 3 * d));
    params_.push_back(normal(d, d, resid_sd));
    params_.push_back(Matrix::Zero(1, d));
    params_.push_back(Matrix::Ones(1, d));
    params_.push_back(Matrix::Zero(1, d));
    params_.push_back(normal(d, cfg_.ff, kInitStd));
    params_.push_back(Matrix::Zero(1, cfg_.ff));
    params_.push_back(normal(cfg_.ff, d, resid_sd));
    params_.push_back(Matrix::Zero(1, d));
  }
  params_.push_back(Matrix::Ones(1, d));
  params_.push_back(Matrix::Zero(1, d));
  params_.push_back(normal(d, V, kInitStd));
}

std::vector<std::string> TinyTransformerEditor::parameter_names() const {
  static const char* kSlotNames[kPerLayer] = {"ln1_gain", "ln1_bias", "w_qkv", "b_qkv", "w_o",  "b_o",
                                              "ln2_gain", "ln2_bias", "w_ff1", "b_ff1", "w_ff2", "b_ff2"};
  std::vector<std::string> names{"token_embedding", "position_embedding"};
  for (int l = 0; l < cfg_.layers; ++l) {
    for (const char* s : kSlotNames) names.push_back("block" + std::to_string(l) + "." + s);
  }
  names.insert(names.end(), {"final_gain", "final_bias", "w_out"});
  return names;
}

std::vector<Matrix> TinyTransformerEditor::forward_capture(const chem::Molecule& source, const Task& task) const {
  const auto tokens = Tokenizer::prompt(source, task);
  ad::Tape tape;
  TransformerGraph g(*this, tape, false);
  std::vector<Matrix> out;
  TransformerGraph::Hooks hooks;
  hooks.capture = &out;
  g.hidden(tokens, {static_cast<int>(tokens.size())}, hooks);
  return out;
}

Matrix TinyTransformerEditor::sequence_logits(const std::vector<int>& tokens, const Injection* injection) const {
  ad::Tape tape;
  TransformerGraph g(*this, tape, false);
  TransformerGraph::Hooks hooks;
  hooks.injection = injection;
  return g.logits(g.hidden(tokens, {static_cast<int>(tokens.size())}, hooks)).value();
}

std::vector<Matrix> TinyTransformerEditor::sequence_hidden(const std::vector<int>& tokens) const {
  ad::Tape tape;
  TransformerGraph g(*this, tape, false);
  std::vector<Matrix> out;
  TransformerGraph::Hooks hooks;
  hooks.capture = &out;
  g.hidden(tokens, {static_cast<int>(tokens.size())}, hooks);
  return out;
}

Matrix TinyTransformerEditor::incremental_logits(const std::vector<int>& tokens, const Injection* injection) const {
  Decoder dec(*this, injection);
  Matrix out(static_cast<Eigen::Index>(tokens.size()), Tokenizer::vocab_size());
  for (std::size_t i = 0; i < tokens.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = dec.push(tokens[i]);
  return out;
}

std::vector<Candidate> TinyTransformerEditor::generate(const chem::Molecule& source, const Task& task, int n,
                                                       const Sampling& sampling, const Rng& rng,
                                                       const Injection* injection) const {
  if (n < 0) throw ConfigError("generate: n must be nonnegative");
  if (injection != nullptr) require_shape(injection->vector.size() == cfg_.width, "transformer injection");
  const auto prompt = Tokenizer::prompt(source, task);
  if (static_cast<int>(prompt.size()) >= cfg_.context) throw ShapeError("generate: prompt exceeds context");
  Decoder primed(*this, injection);
  RowVector last;
  for (int tok : prompt) last = primed.push(tok);

  std::vector<Candidate> out;
  for (int i = 0; i < n; ++i) {
    Rng child = rng.fork(static_cast<std::uint64_t>(i));
    Decoder dec = primed;
    RowVector logits = last;
    std::vector<int> generated;
    while (static_cast<int>(generated.size()) < sampling.max_tokens) {
      const int tok = sample_nucleus({logits.data(), static_cast<std::size_t>(logits.size())}, sampling.temperature,
                                     sampling.top_p, child);
      if (tok == Tokenizer::eos()) break;
      generated.push_back(tok);
      if (dec.position() >= cfg_.context) break;
      logits = dec.push(tok);
    }
    Candidate c{Tokenizer::decode(generated), std::nullopt};
    try {
      c.molecule = chem::parse_smiles(c.text);
    } catch (const chem::ChemError&) {
    }
    out.push_back(std::move(c));
  }
  return out;
}

double TinyTransformerEditor::log_prob(const EditPair& pair) const {
  const Example ex = make_example(pair);
  ad::Tape tape;
  TransformerGraph g(*this, tape, false);
  const ad::Var x = g.hidden(ex.input, {static_cast<int>(ex.input.size())}, {});
  const ad::Var ce = ad::cross_entropy(g.logits(x), ex.target, ex.weight);
  return -ce.scalar() * std::accumulate(ex.weight.begin(), ex.weight.end(), 0.0);
}

double TinyTransformerEditor::log_prob_with_hidden(const EditPair& pair, int layer, const Matrix& hidden) const {
  const Example ex = make_example(pair);
  ad::Tape tape;
  TransformerGraph g(*this, tape, false);
  TransformerGraph::Hooks hooks;
  hooks.replace_layer = layer;
  hooks.replacement = &hidden;
  const ad::Var x = g.hidden(ex.input, {static_cast<int>(ex.input.size())}, hooks);
  const ad::Var ce = ad::cross_entropy(g.logits(x), ex.target, ex.weight);
  return -ce.scalar() * std::accumulate(ex.weight.begin(), ex.weight.end(), 0.0);
}

Matrix TinyTransformerEditor::grad_logprob_at_layer(const EditPair& pair, int layer) const {
  if (layer < 0 || layer >= cfg_.layers) throw ConfigError("transformer: layer out of range");
  const Example ex = make_example(pair);
  const int len = static_cast<int>(ex.input.size());
  // First pass records the hidden state; the second makes it a leaf.
  Matrix hidden;
  {
    ad::Tape tape;
    TransformerGraph g(*this, tape, false);
    std::vector<Matrix> capture;
    TransformerGraph::Hooks hooks;
    hooks.capture = &capture;
    g.hidden(ex.input, {len}, hooks);
    hidden = capture[static_cast<std::size_t>(layer)];
  }
  ad::Tape tape;
  TransformerGraph g(*this, tape, false);
  ad::Var leaf;
  TransformerGraph::Hooks hooks;
  hooks.replace_layer = layer;
  hooks.replacement = &hidden;
  hooks.replaced = &leaf;
  const ad::Var x = g.hidden(ex.input, {len}, hooks);
  const double count = std::accumulate(ex.weight.begin(), ex.weight.end(), 0.0);
  const ad::Var logp = ad::scale(ad::cross_entropy(g.logits(x), ex.target, ex.weight), -count);
  Matrix grad = tape.backward(logp)[leaf];
  if (!(grad.colwise().mean().norm() > 1e-12)) {
    throw DegenerateError("DegenerateGradient: zero pooled gradient at layer " + std::to_string(layer));
  }
  return grad;
}

void TinyTransformerEditor::save(const std::filesystem::path& manifest) const {
  TensorBundle bundle;
  const auto names = parameter_names();
  for (std::size_t i = 0; i < params_.size(); ++i) bundle.add(names[i], params_[i]);
  bundle.meta = {{"kind", "tiny-transformer"},
                 {"layers", cfg_.layers},
                 {"width", cfg_.width},
                 {"heads", cfg_.heads},
                 {"ff", cfg_.ff},
                 {"context", cfg_.context},
                 {"seed", cfg_.seed},
                 {"vocab", Tokenizer::vocab_size()}};
  save_bundle(manifest, bundle);
}

TinyTransformerEditor TinyTransformerEditor::load(const std::filesystem::path& manifest) {
  const TensorBundle bundle = load_bundle(manifest);
  const auto& meta = bundle.meta;
  if (meta.value("kind", "") != "tiny-transformer") throw IoError(manifest.string() + ": not a transformer checkpoint");
  if (meta.value("vocab", 0) != Tokenizer::vocab_size()) throw IoError(manifest.string() + ": vocabulary mismatch");
  TransformerConfig cfg;
  cfg.layers = meta.at("layers");
  cfg.width = meta.at("width");
  cfg.heads = meta.at("heads");
  cfg.ff = meta.at("ff");
  cfg.context = meta.at("context");
  cfg.seed = meta.at("seed");
  TinyTransformerEditor model(cfg);
  const auto names = model.parameter_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Matrix& m = bundle.get(names[i]);
    if (m.rows() != model.params_[i].rows() || m.cols() != model.params_[i].cols()) {
      throw IoError(manifest.string() + ": shape mismatch for " + names[i]);
    }
    model.params_[i] = m;
  }
  return model;
}

namespace {

struct Batch {
  std::vector<int> tokens, targets, lengths;
  std::vector<double> weights;
};

Batch pack(const std::vector<Example>& examples, std::span<const std::size_t> idx) {
  Batch b;
  for (std::size_t i : idx) {
    const auto& ex = examples[i];
    b.tokens.insert(b.tokens.end(), ex.input.begin(), ex.input.end());
    b.targets.insert(b.targets.end(), ex.target.begin(), ex.target.end());
    b.weights.insert(b.weights.end(), ex.weight.begin(), ex.weight.end());
    b.lengths.push_back(static_cast<int>(ex.input.size()));
  }
  return b;
}

/// Weighted mean loss and token accuracy of a set of examples, no gradients.
std::pair<double, double> evaluate(const TinyTransformerEditor& model, const std::vector<Example>& examples,
                                   const std::vector<std::size_t>& idx) {
  double loss = 0, weight = 0, correct = 0;
  for (std::size_t start = 0; start < idx.size(); start += 64) {
    const auto span = std::span(idx).subspan(start, std::min<std::size_t>(64, idx.size() - start));
    const Batch b = pack(examples, span);
    ad::Tape tape;
    TransformerGraph g(model, tape, false);
    const ad::Var logits = g.logits(g.hidden(b.tokens, b.lengths, {}));
    const double w = std::accumulate(b.weights.begin(), b.weights.end(), 0.0);
    loss += ad::cross_entropy(logits, b.targets, b.weights).scalar() * w;
    weight += w;
    const Matrix& l = logits.value();
    for (Eigen::Index r = 0; r < l.rows(); ++r) {
      if (b.weights[static_cast<std::size_t>(r)] == 0.0) continue;
      Eigen::Index arg = 0;
      l.row(r).maxCoeff(&arg);
      correct += arg == b.targets[static_cast<std::size_t>(r)];
    }
  }
  return {loss / weight, correct / weight};
}

}  // namespace

TrainReport train_tiny_editor(TinyTransformerEditor& model, const std::vector<EditPair>& pairs, const TrainConfig& cfg,
                              const TrainProgress& progress) {
  if (cfg.epochs < 1 || cfg.batch < 1 || !(cfg.lr > 0)) throw ConfigError("train_tiny_editor: bad hyperparameters");
  TrainReport report;
  std::vector<Example> examples;
  for (const auto& pair : pairs) {
    Example ex = make_example(pair);
    if (static_cast<int>(ex.input.size()) > model.config().context) {
      ++report.dropped_pairs;
      continue;
    }
    examples.push_back(std::move(ex));
  }
  if (examples.size() < 2) throw ConfigError("train_tiny_editor: need at least two usable pairs");

  Rng rng(cfg.seed, "transformer-train");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const auto n_hold = std::clamp<std::size_t>(static_cast<std::size_t>(cfg.holdout * static_cast<double>(order.size())),
                                              1, order.size() - 1);
  std::vector<std::size_t> heldout(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
  report.train_pairs = train.size();
  report.heldout_pairs = heldout.size();

  // Initial loss on a fixed slice of the training set keeps this cheap.
  const std::vector<std::size_t> probe(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(train.size(), 512)));
  report.initial_loss = evaluate(model, examples, probe).first;

  Adam adam(AdamConfig{cfg.lr});
  std::vector<Matrix*> params;
  for (auto& m : model.parameters()) params.push_back(&m);
  const int steps = static_cast<int>((train.size() + static_cast<std::size_t>(cfg.batch) - 1) / static_cast<std::size_t>(cfg.batch));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(train);
    double total = 0;
    for (int s = 0; s < steps; ++s) {
      const std::size_t start = static_cast<std::size_t>(s) * static_cast<std::size_t>(cfg.batch);
      const auto span = std::span(train).subspan(start, std::min<std::size_t>(cfg.batch, train.size() - start));
      const Batch b = pack(examples, span);
      ad::Tape tape;
      TransformerGraph g(model, tape, true);
      const ad::Var loss = ad::cross_entropy(g.logits(g.hidden(b.tokens, b.lengths, {})), b.targets, b.weights);
      const double value = loss.scalar();
      if (!std::isfinite(value)) {
        throw NumericError("train_tiny_editor: non-finite loss at epoch " + std::to_string(epoch + 1) + " step " +
                           std::to_string(s + 1));
      }
      const auto grads = tape.backward(loss);
      std::vector<Matrix> gs;
      double sq = 0;
      for (const auto& v : g.w) {
        gs.push_back(grads.has(v) ? grads[v] : Matrix::Zero(v.rows(), v.cols()));
        sq += gs.back().squaredNorm();
      }
      const double norm = std::sqrt(sq);
      if (cfg.clip_norm > 0 && norm > cfg.clip_norm) {
        for (auto& gm : gs) gm *= cfg.clip_norm / norm;
      }
      adam.step(params, gs);
      total += value;
      if (progress) progress(epoch + 1, s + 1, steps, value);
    }
    report.epoch_loss.push_back(total / steps);
  }
  const auto [hl, acc] = evaluate(model, examples, heldout);
  report.heldout_loss = hl;
  report.heldout_token_accuracy = acc;
  return report;
}

}  // namespace slim::editor
