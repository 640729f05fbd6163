#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "slim/numcore/types.hpp"

namespace slim::ad {

/// Closed op set. Everything the SAE losses and the tiny editor need,
/// nothing more.
enum class Op : std::uint8_t {
  Leaf,
  Constant,
  MatMul,      // A B
  MatMulNT,    // A B^T
  Transpose,
  Add,
  Sub,
  Mul,         // elementwise
  AddRow,      // A + 1 r   (r is 1 x c)
  SubRow,
  MulRow,
  DivCol,      // A / c 1^T (c is r x 1)
  Scale,       // s A, s a constant
  Relu,
  Sigmoid,
  Tanh,
  Exp,
  Log,
  Softmax,     // row-wise, optional causal mask
  LayerNorm,   // row-wise, with gain and bias rows
  Embedding,   // gather rows of a table
  CrossEntropy,// mean weighted NLL of row-wise softmax
  L2Norm,      // row-wise norms, r x 1
  Cosine,      // two same-shape tensors, flattened
  Sum,
  Mean,
  RowSum,      // r x 1
  Slice,
  ConcatCols,
  ConcatRows,
};

const char* op_name(Op op);

class Tape;

/// Handle to a node on a tape. Cheap to copy.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
};

/// Gradients produced by a backward pass; indexed by the Var they belong to.
class Gradients {
 public:
  const Matrix& operator[](Var v) const;
  bool has(Var v) const;

 private:
  friend class Tape;
  std::vector<Matrix> grads_;
  std::vector<bool> present_;
};

/// Append-only computation record. Nodes are stored in creation order, which
/// is a topological order, so backward is a single reverse sweep.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value);
  Var constant(Matrix value);

  /// Reverse sweep from a 1x1 output. Only leaves and ops reachable from
  /// `output` receive gradients.
  Gradients backward(Var output) const;

  std::size_t size() const { return nodes_.size(); }
  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  // Op constructors are free functions below; they call push().
  struct Node {
    Op op = Op::Leaf;
    int a = -1;
    int b = -1;
    int c = -1;
    Matrix value;
    Matrix aux;  // op-specific cache (softmax output, normalized input, ...)
    std::vector<int> index;  // embedding rows, CE targets, concat inputs
    std::vector<double> weight;  // CE row weights
    double s0 = 0.0;  // scalar parameter
    Eigen::Index r0 = 0, c0 = 0;  // slice origin
    bool flag = false;  // causal mask for softmax
  };
  Var push(Node node);
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

 private:
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var a, Var row);
Var sub_row(Var a, Var row);
Var mul_row(Var a, Var row);
Var div_col(Var a, Var col);
Var scale(Var a, double s);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var softmax(Var a, bool causal = false);
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
Var embedding(Var table, std::span<const int> rows);
/// Mean over rows with positive weight of -log softmax(logits)[target].
/// An empty `weights` means uniform weights of one.
Var cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights = {});
Var l2_norm(Var a);
Var cosine(Var a, Var b);
Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);
Var slice(Var a, Eigen::Index row0, Eigen::Index col0, Eigen::Index rows, Eigen::Index cols);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace slim::ad
