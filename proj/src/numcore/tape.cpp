#include "slim/numcore/tape.hpp"

#include <cmath>
#include <string>

namespace slim::ad {

namespace {

const Matrix& val(Var v) { return v.value(); }

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw Error("ad: operands live on different tapes");
  return *a.tape;
}

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw Error("ad: null Var");
  return *a.tape;
}

Tape::Node unary(Op op, Var a, Matrix value) {
  Tape::Node n;
  n.op = op;
  n.a = a.id;
  n.value = std::move(value);
  return n;
}

Tape::Node binary(Op op, Var a, Var b, Matrix value) {
  Tape::Node n;
  n.op = op;
  n.a = a.id;
  n.b = b.id;
  n.value = std::move(value);
  return n;
}

void check_same_shape(Var a, Var b, const char* what) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), what);
}

void check_row(Var a, Var row, const char* what) {
  require_shape(row.rows() == 1 && row.cols() == a.cols(), what);
}

Matrix softmax_rows(const Matrix& x, bool causal) {
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::Index width = causal ? std::min<Eigen::Index>(i + 1, x.cols()) : x.cols();
    const auto row = x.row(i).head(width);
    const double mx = row.maxCoeff();
    auto out = y.row(i).head(width);
    out = (row.array() - mx).exp().matrix();
    out /= out.sum();
  }
  return y;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::MatMul: return "matmul";
    case Op::MatMulNT: return "matmul_nt";
    case Op::Transpose: return "transpose";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::AddRow: return "add_row";
    case Op::SubRow: return "sub_row";
    case Op::MulRow: return "mul_row";
    case Op::DivCol: return "div_col";
    case Op::Scale: return "scale";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Softmax: return "softmax";
    case Op::LayerNorm: return "layer_norm";
    case Op::Embedding: return "embedding";
    case Op::CrossEntropy: return "cross_entropy";
    case Op::L2Norm: return "l2_norm";
    case Op::Cosine: return "cosine";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::RowSum: return "row_sum";
    case Op::Slice: return "slice";
    case Op::ConcatCols: return "concat_cols";
    case Op::ConcatRows: return "concat_rows";
  }
  return "?";
}

const Matrix& Var::value() const {
  if (tape == nullptr) throw Error("ad: null Var");
  return tape->value(id);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("ad: scalar() on non-scalar");
  return v(0, 0);
}

const Matrix& Gradients::operator[](Var v) const {
  if (!has(v)) throw Error("ad: no gradient recorded for node " + std::to_string(v.id));
  return grads_[static_cast<std::size_t>(v.id)];
}

bool Gradients::has(Var v) const {
  return v.id >= 0 && static_cast<std::size_t>(v.id) < present_.size() &&
         present_[static_cast<std::size_t>(v.id)];
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::leaf(Matrix value) {
  require_finite(value, "ad::leaf");
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(Matrix value) {
  require_finite(value, "ad::constant");
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_shape(a.cols() == b.rows(), "matmul");
  return t.push(binary(Op::MatMul, a, b, val(a) * val(b)));
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_shape(a.cols() == b.cols(), "matmul_nt");
  return t.push(binary(Op::MatMulNT, a, b, val(a) * val(b).transpose()));
}

Var transpose(Var a) { return tape_of(a).push(unary(Op::Transpose, a, val(a).transpose())); }

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a, b, "add");
  return t.push(binary(Op::Add, a, b, val(a) + val(b)));
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a, b, "sub");
  return t.push(binary(Op::Sub, a, b, val(a) - val(b)));
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a, b, "mul");
  return t.push(binary(Op::Mul, a, b, val(a).cwiseProduct(val(b))));
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  check_row(a, row, "add_row");
  Matrix out = val(a).rowwise() + val(row).row(0);
  return t.push(binary(Op::AddRow, a, row, std::move(out)));
}

Var sub_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  check_row(a, row, "sub_row");
  Matrix out = val(a).rowwise() - val(row).row(0);
  return t.push(binary(Op::SubRow, a, row, std::move(out)));
}

Var mul_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  check_row(a, row, "mul_row");
  Matrix out = val(a).array().rowwise() * val(row).row(0).array();
  return t.push(binary(Op::MulRow, a, row, std::move(out)));
}

Var div_col(Var a, Var col) {
  Tape& t = same_tape(a, col);
  require_shape(col.cols() == 1 && col.rows() == a.rows(), "div_col");
  if ((val(col).array() == 0.0).any()) throw NumericError("div_col: division by zero");
  Matrix out = val(a).array().colwise() / val(col).col(0).array();
  return t.push(binary(Op::DivCol, a, col, std::move(out)));
}

Var scale(Var a, double s) {
  Tape::Node n = unary(Op::Scale, a, s * val(a));
  n.s0 = s;
  return tape_of(a).push(std::move(n));
}

Var relu(Var a) { return tape_of(a).push(unary(Op::Relu, a, val(a).cwiseMax(0.0))); }

Var sigmoid(Var a) {
  Matrix y = (1.0 + (-val(a).array()).exp()).inverse().matrix();
  return tape_of(a).push(unary(Op::Sigmoid, a, std::move(y)));
}

Var tanh(Var a) { return tape_of(a).push(unary(Op::Tanh, a, val(a).array().tanh().matrix())); }

Var exp(Var a) {
  Matrix y = val(a).array().exp().matrix();
  require_finite(y, "ad::exp");
  return tape_of(a).push(unary(Op::Exp, a, std::move(y)));
}

Var log(Var a) {
  if ((val(a).array() <= 0.0).any()) throw NumericError("ad::log: nonpositive input");
  return tape_of(a).push(unary(Op::Log, a, val(a).array().log().matrix()));
}

Var softmax(Var a, bool causal) {
  if (causal) require_shape(a.rows() <= a.cols(), "softmax(causal)");
  Tape::Node n = unary(Op::Softmax, a, softmax_rows(val(a), causal));
  n.flag = causal;
  return tape_of(a).push(std::move(n));
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  Tape& t = same_tape(a, gain);
  same_tape(a, bias);
  check_row(a, gain, "layer_norm gain");
  check_row(a, bias, "layer_norm bias");
  const Matrix& x = val(a);
  const auto c = static_cast<double>(x.cols());
  Matrix xhat(x.rows(), x.cols());
  std::vector<double> inv_sd(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().sum() / c;
    inv_sd[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mu) * inv_sd[static_cast<std::size_t>(i)];
  }
  Matrix y = (xhat.array().rowwise() * val(gain).row(0).array()).rowwise() + val(bias).row(0).array();
  Tape::Node n = binary(Op::LayerNorm, a, gain, std::move(y));
  n.c = bias.id;
  n.aux = std::move(xhat);
  n.weight = std::move(inv_sd);
  return t.push(std::move(n));
}

Var embedding(Var table, std::span<const int> rows) {
  const Matrix& w = val(table);
  Matrix out(static_cast<Eigen::Index>(rows.size()), w.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= w.rows()) throw ShapeError("embedding: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = w.row(rows[i]);
  }
  Tape::Node n = unary(Op::Embedding, table, std::move(out));
  n.index.assign(rows.begin(), rows.end());
  return tape_of(table).push(std::move(n));
}

Var cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights) {
  const Matrix& x = val(logits);
  require_shape(static_cast<Eigen::Index>(targets.size()) == x.rows(), "cross_entropy targets");
  require_shape(weights.empty() || weights.size() == targets.size(), "cross_entropy weights");
  Matrix p = softmax_rows(x, false);
  double total_w = 0.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (w < 0.0) throw Error("cross_entropy: negative weight");
    if (w == 0.0) continue;
    if (targets[i] < 0 || targets[i] >= x.cols()) throw ShapeError("cross_entropy: bad target");
    const auto r = static_cast<Eigen::Index>(i);
    const double mx = x.row(r).maxCoeff();
    const double lse = mx + std::log((x.row(r).array() - mx).exp().sum());
    loss += w * (lse - x(r, targets[i]));
    total_w += w;
  }
  if (total_w <= 0.0) throw Error("cross_entropy: no weighted rows");
  Matrix out(1, 1);
  out(0, 0) = loss / total_w;
  Tape::Node n = unary(Op::CrossEntropy, logits, std::move(out));
  n.aux = std::move(p);
  n.index.assign(targets.begin(), targets.end());
  n.weight.resize(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    n.weight[i] = (weights.empty() ? 1.0 : weights[i]) / total_w;
  }
  return tape_of(logits).push(std::move(n));
}

Var l2_norm(Var a) {
  Matrix out = val(a).rowwise().norm();
  if ((out.array() == 0.0).any()) throw NumericError("l2_norm: zero row");
  return tape_of(a).push(unary(Op::L2Norm, a, std::move(out)));
}

Var cosine(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a, b, "cosine");
  const double na = val(a).norm();
  const double nb = val(b).norm();
  if (na == 0.0 || nb == 0.0) throw DegenerateError("ad::cosine: zero vector");
  Matrix out(1, 1);
  out(0, 0) = val(a).cwiseProduct(val(b)).sum() / (na * nb);
  return t.push(binary(Op::Cosine, a, b, std::move(out)));
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = val(a).sum();
  return tape_of(a).push(unary(Op::Sum, a, std::move(out)));
}

Var mean(Var a) {
  if (val(a).size() == 0) throw ShapeError("mean: empty");
  Matrix out(1, 1);
  out(0, 0) = val(a).mean();
  return tape_of(a).push(unary(Op::Mean, a, std::move(out)));
}

Var row_sum(Var a) {
  return tape_of(a).push(unary(Op::RowSum, a, val(a).rowwise().sum()));
}

Var slice(Var a, Eigen::Index row0, Eigen::Index col0, Eigen::Index rows, Eigen::Index cols) {
  require_shape(row0 >= 0 && col0 >= 0 && rows >= 0 && cols >= 0 && row0 + rows <= a.rows() &&
                    col0 + cols <= a.cols(),
                "slice");
  Tape::Node n = unary(Op::Slice, a, val(a).block(row0, col0, rows, cols));
  n.r0 = row0;
  n.c0 = col0;
  return tape_of(a).push(std::move(n));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty");
  Eigen::Index cols = 0;
  for (Var p : parts) {
    same_tape(parts[0], p);
    require_shape(p.rows() == parts[0].rows(), "concat_cols");
    cols += p.cols();
  }
  Tape::Node n;
  n.op = Op::ConcatCols;
  n.value.resize(parts[0].rows(), cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    n.value.middleCols(at, p.cols()) = val(p);
    at += p.cols();
    n.index.push_back(p.id);
  }
  return parts[0].tape->push(std::move(n));
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: empty");
  Eigen::Index rows = 0;
  for (Var p : parts) {
    same_tape(parts[0], p);
    require_shape(p.cols() == parts[0].cols(), "concat_rows");
    rows += p.rows();
  }
  Tape::Node n;
  n.op = Op::ConcatRows;
  n.value.resize(rows, parts[0].cols());
  Eigen::Index at = 0;
  for (Var p : parts) {
    n.value.middleRows(at, p.rows()) = val(p);
    at += p.rows();
    n.index.push_back(p.id);
  }
  return parts[0].tape->push(std::move(n));
}

Gradients Tape::backward(Var output) const {
  if (output.tape != this) throw Error("backward: output from another tape");
  if (value(output.id).size() != 1) throw ShapeError("backward: output must be scalar");

  Gradients g;
  g.grads_.resize(nodes_.size());
  g.present_.assign(nodes_.size(), false);

  auto accumulate = [&](int id, const auto& contribution) {
    if (id < 0) return;
    const auto k = static_cast<std::size_t>(id);
    if (nodes_[k].op == Op::Constant) return;
    if (g.present_[k]) {
      g.grads_[k] += contribution;
    } else {
      g.grads_[k] = contribution;
      g.present_[k] = true;
    }
  };
  auto accumulate_block = [&](int id, Eigen::Index r0, Eigen::Index c0, const Matrix& contribution) {
    const auto k = static_cast<std::size_t>(id);
    if (nodes_[k].op == Op::Constant) return;
    if (!g.present_[k]) {
      g.grads_[k] = Matrix::Zero(nodes_[k].value.rows(), nodes_[k].value.cols());
      g.present_[k] = true;
    }
    g.grads_[k].block(r0, c0, contribution.rows(), contribution.cols()) += contribution;
  };

  g.grads_[static_cast<std::size_t>(output.id)] = Matrix::Ones(1, 1);
  g.present_[static_cast<std::size_t>(output.id)] = true;

  for (int id = output.id; id >= 0; --id) {
    const auto k = static_cast<std::size_t>(id);
    if (!g.present_[k]) continue;
    const Node& n = nodes_[k];
    // Interior gradients are consumed here; only leaves keep theirs.
    const Matrix G = n.op == Op::Leaf ? g.grads_[k] : std::move(g.grads_[k]);
    const auto A = [&]() -> const Matrix& { return nodes_[static_cast<std::size_t>(n.a)].value; };
    const auto B = [&]() -> const Matrix& { return nodes_[static_cast<std::size_t>(n.b)].value; };

    switch (n.op) {
      case Op::Leaf:
      case Op::Constant:
        break;
      case Op::MatMul:
        accumulate(n.a, G * B().transpose());
        accumulate(n.b, A().transpose() * G);
        break;
      case Op::MatMulNT:
        accumulate(n.a, G * B());
        accumulate(n.b, G.transpose() * A());
        break;
      case Op::Transpose:
        accumulate(n.a, G.transpose());
        break;
      case Op::Add:
        accumulate(n.a, G);
        accumulate(n.b, G);
        break;
      case Op::Sub:
        accumulate(n.a, G);
        accumulate(n.b, -G);
        break;
      case Op::Mul:
        accumulate(n.a, G.cwiseProduct(B()));
        accumulate(n.b, G.cwiseProduct(A()));
        break;
      case Op::AddRow:
        accumulate(n.a, G);
        accumulate(n.b, G.colwise().sum());
        break;
      case Op::SubRow:
        accumulate(n.a, G);
        accumulate(n.b, -G.colwise().sum());
        break;
      case Op::MulRow: {
        Matrix ga = G.array().rowwise() * B().row(0).array();
        accumulate(n.a, ga);
        accumulate(n.b, G.cwiseProduct(A()).colwise().sum());
        break;
      }
      case Op::DivCol: {
        const auto c = B().col(0).array();
        Matrix ga = G.array().colwise() / c;
        Matrix gc = -(G.cwiseProduct(A()).rowwise().sum().array() / c.square()).matrix();
        accumulate(n.a, ga);
        accumulate(n.b, gc);
        break;
      }
      case Op::Scale:
        accumulate(n.a, n.s0 * G);
        break;
      case Op::Relu:
        accumulate(n.a, (A().array() > 0.0).select(G.array(), 0.0).matrix());
        break;
      case Op::Sigmoid:
        accumulate(n.a, G.cwiseProduct((n.value.array() * (1.0 - n.value.array())).matrix()));
        break;
      case Op::Tanh:
        accumulate(n.a, G.cwiseProduct((1.0 - n.value.array().square()).matrix()));
        break;
      case Op::Exp:
        accumulate(n.a, G.cwiseProduct(n.value));
        break;
      case Op::Log:
        accumulate(n.a, G.cwiseQuotient(A()));
        break;
      case Op::Softmax: {
        const Matrix& y = n.value;
        const Vector dot = G.cwiseProduct(y).rowwise().sum();
        Matrix gx = y.cwiseProduct((G.colwise() - dot));
        accumulate(n.a, gx);
        break;
      }
      case Op::LayerNorm: {
        const Matrix& xhat = n.aux;
        const auto gain = B().row(0).array();
        Matrix dxhat = G.array().rowwise() * gain;
        Matrix gx(G.rows(), G.cols());
        for (Eigen::Index i = 0; i < G.rows(); ++i) {
          const double m1 = dxhat.row(i).mean();
          const double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
          gx.row(i) = n.weight[static_cast<std::size_t>(i)] *
                      (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
        }
        accumulate(n.a, gx);
        accumulate(n.b, G.cwiseProduct(xhat).colwise().sum());
        accumulate(n.c, G.colwise().sum());
        break;
      }
      case Op::Embedding: {
        Matrix gt = Matrix::Zero(A().rows(), A().cols());
        for (std::size_t i = 0; i < n.index.size(); ++i) {
          gt.row(n.index[i]) += G.row(static_cast<Eigen::Index>(i));
        }
        accumulate(n.a, gt);
        break;
      }
      case Op::CrossEntropy: {
        Matrix gx = n.aux;
        for (std::size_t i = 0; i < n.index.size(); ++i) {
          const auto r = static_cast<Eigen::Index>(i);
          if (n.weight[i] == 0.0) {
            gx.row(r).setZero();
            continue;
          }
          gx(r, n.index[i]) -= 1.0;
          gx.row(r) *= n.weight[i];
        }
        accumulate(n.a, G(0, 0) * gx);
        break;
      }
      case Op::L2Norm: {
        Matrix gx = A().array().colwise() * (G.col(0).array() / n.value.col(0).array());
        accumulate(n.a, gx);
        break;
      }
      case Op::Cosine: {
        const double na = A().norm();
        const double nb = B().norm();
        const double c = n.value(0, 0);
        accumulate(n.a, G(0, 0) * (B() / (na * nb) - c * A() / (na * na)));
        accumulate(n.b, G(0, 0) * (A() / (na * nb) - c * B() / (nb * nb)));
        break;
      }
      case Op::Sum:
        accumulate(n.a, Matrix::Constant(A().rows(), A().cols(), G(0, 0)));
        break;
      case Op::Mean:
        accumulate(n.a, Matrix::Constant(A().rows(), A().cols(),
                                         G(0, 0) / static_cast<double>(A().size())));
        break;
      case Op::RowSum: {
        Matrix gx = G.col(0).replicate(1, A().cols());
        accumulate(n.a, gx);
        break;
      }
      case Op::Slice: {
        accumulate_block(n.a, n.r0, n.c0, G);
        break;
      }
      case Op::ConcatCols: {
        Eigen::Index at = 0;
        for (int part : n.index) {
          const auto w = nodes_[static_cast<std::size_t>(part)].value.cols();
          accumulate(part, G.middleCols(at, w));
          at += w;
        }
        break;
      }
      case Op::ConcatRows: {
        Eigen::Index at = 0;
        for (int part : n.index) {
          const auto h = nodes_[static_cast<std::size_t>(part)].value.rows();
          accumulate(part, G.middleRows(at, h));
          at += h;
        }
        break;
      }
    }
  }
  return g;
}

}  // namespace slim::ad
