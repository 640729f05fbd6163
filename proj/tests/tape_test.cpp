#include <gtest/gtest.h>

#include <functional>
#include <string>

#include "slim/numcore/rng.hpp"
#include "slim/numcore/tape.hpp"
#include "support/tape_cases.hpp"

namespace slim {
namespace {

using ad::Tape;
using ad::Var;


TEST(Tape, SquareAtThree) {
  Tape t;
  const Var x = t.leaf(Matrix::Constant(1, 1, 3.0));
  const Var y = ad::mul(x, x);
  EXPECT_DOUBLE_EQ(t.backward(y)[x](0, 0), 6.0);
}

TEST(Tape, SigmoidAtZero) {
  Tape t;
  const Var x = t.leaf(Matrix::Zero(1, 1));
  const Var y = ad::sigmoid(x);
  EXPECT_DOUBLE_EQ(t.backward(y)[x](0, 0), 0.25);
}

TEST(Tape, NonScalarOutputRejected) {
  Tape t;
  const Var x = t.leaf(Matrix::Ones(2, 2));
  EXPECT_THROW(t.backward(ad::relu(x)), ShapeError);
}

TEST(Tape, SharedSubexpressionAccumulates) {
  Tape t;
  const Var x = t.leaf(Matrix::Constant(1, 1, 2.0));
  const Var y = ad::mul(x, x);
  const Var z = ad::add(y, ad::mul(y, x));  // x^2 + x^3
  EXPECT_DOUBLE_EQ(t.backward(z)[x](0, 0), 2 * 2.0 + 3 * 4.0);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape t;
  const Var x = t.leaf(Matrix::Ones(1, 1));
  const Var c = t.constant(Matrix::Constant(1, 1, 4.0));
  const auto g = t.backward(ad::mul(x, c));
  EXPECT_FALSE(g.has(c));
  EXPECT_DOUBLE_EQ(g[x](0, 0), 4.0);
}

TEST(Tape, EveryOpMatchesFiniteDifferences) {
  Rng rng(2024, "tape-fd");
  for (const auto& c : testing::op_cases()) EXPECT_LE(testing::op_gradient_error(c, rng, 100), 1e-6) << c.name;
}

}  // namespace
}  // namespace slim
