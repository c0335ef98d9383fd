#include <gtest/gtest.h>

#include <cmath>

#include "anuw/ops.hpp"
#include "anuw/tape.hpp"

using namespace anuw;

TEST(Tensor, ShapeAndStorageAgree) {
  Tensor t({2, 3, 4}, 1.5);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(t.at(1, 2, 3), 1.5);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
  EXPECT_THROW(t.reshaped({5, 5}), ShapeError);
  EXPECT_EQ(t.reshaped({24}).size(), 24u);
}

TEST(Tensor, BitwiseEquality) {
  Tensor a({2}, std::vector<double>{1.0, 2.0});
  Tensor b = a;
  EXPECT_EQ(a, b);
  b[1] = std::nextafter(2.0, 3.0);
  EXPECT_FALSE(a == b);
  EXPECT_FALSE(a == a.reshaped({2, 1}));
}

TEST(PixelMask, ComplementPartitionsPixels) {
  PixelMask m(3, 3);
  m.set(0, 0, true);
  m.set(2, 1, true);
  const PixelMask c = m.complement();
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NE(m[i], c[i]);
  EXPECT_EQ(m.count() + c.count(), 9u);
  EXPECT_EQ(PixelMask::from_tensor(m.to_tensor()), m);
}

TEST(Parameter, ZeroGradClearsGradient) {
  Parameter p("p", Tensor({3}, 2.0));
  EXPECT_EQ(p.grad().shape(), p.value().shape());
  p.grad().fill(7.0);
  p.zero_grad();
  for (double g : p.grad().values()) EXPECT_EQ(g, 0.0);
}

TEST(Tape, SumGivesOnes) {
  Parameter p("p", Tensor({4}, std::vector<double>{1, -2, 3, 0.5}));
  Tape t;
  t.backward(sum(t.parameter(p)));
  for (double g : p.grad().values()) EXPECT_EQ(g, 1.0);
}

TEST(Tape, SumOfSquares) {
  Parameter p("p", Tensor({2}, std::vector<double>{1, 2}));
  Tape t;
  Var v = t.parameter(p);
  t.backward(sum(mul(v, v)));
  EXPECT_DOUBLE_EQ(p.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(p.grad()[1], 4.0);
}

TEST(Tape, ParameterNodeIsSharedWithinATape) {
  Parameter p("p", Tensor({1}, 3.0));
  Tape t;
  Var a = t.parameter(p);
  Var b = t.parameter(p);
  EXPECT_EQ(a.id(), b.id());
  t.backward(sum(add(a, b)));
  EXPECT_EQ(p.grad()[0], 2.0);
}

TEST(Tape, GradientsAccumulateAcrossTapesUntilZeroed) {
  Parameter p("p", Tensor({1}, 3.0));
  for (int k = 0; k < 2; ++k) {
    Tape t;
    t.backward(sum(t.parameter(p)));
  }
  EXPECT_EQ(p.grad()[0], 2.0);
  p.zero_grad();
  EXPECT_EQ(p.grad()[0], 0.0);
}

TEST(Tape, BackwardRejectsNonScalar) {
  Parameter p("p", Tensor({2}, 1.0));
  Tape t;
  EXPECT_THROW(t.backward(t.parameter(p)), ShapeError);
}

TEST(Tape, BackwardOnlyOnce) {
  Parameter p("p", Tensor({2}, 1.0));
  Tape t;
  Var s = sum(t.parameter(p));
  t.backward(s);
  EXPECT_THROW(t.backward(s), std::logic_error);
}

TEST(Tape, InferenceTapeCannotBackward) {
  Parameter p("p", Tensor({2}, 1.0));
  Tape t(Tape::Mode::inference);
  Var s = sum(t.parameter(p));
  EXPECT_DOUBLE_EQ(s.value()[0], 2.0);
  EXPECT_FALSE(t.requires_grad(s));
  EXPECT_THROW(t.backward(s), std::logic_error);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Parameter p("p", Tensor({2}, 1.0));
  Tape t;
  Var c = t.constant(Tensor({2}, 5.0));
  Var s = sum(mul(t.parameter(p), c));
  EXPECT_FALSE(t.requires_grad(c));
  t.backward(s);
  EXPECT_EQ(p.grad()[0], 5.0);
  EXPECT_EQ(t.grad(c)[0], 0.0);
}

TEST(Tape, RepeatedPassesAreBitIdentical) {
  Parameter w("w", Tensor({2, 1, 3, 3}));
  Parameter b("b", Tensor({2}, 0.1));
  for (std::size_t i = 0; i < w.value().size(); ++i) w.value()[i] = std::sin(1.0 + i);
  Tensor x({1, 5, 5});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::cos(0.3 * i);
  auto run = [&] {
    w.zero_grad();
    b.zero_grad();
    Tape t;
    Var y = sum(sigmoid(conv2d(t.constant(x), t.parameter(w), t.parameter(b), 1, 1)));
    t.backward(y);
    return std::make_pair(y.value(), w.grad());
  };
  const auto first = run();
  const auto second = run();
  EXPECT_EQ(first.first, second.first);
  EXPECT_EQ(first.second, second.second);
}
