#include <gtest/gtest.h>

#include <random>

#include "anuw/ops.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace anuw;

namespace {

Tensor eval(const std::function<Var(Tape&)>& f) {
  Tape t(Tape::Mode::inference);
  return f(t).value();
}

}  // namespace

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_tensor({1, 4, 5}, rng);
  const Tensor y = kernels::conv2d_forward(x, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), 1, 0);
  EXPECT_EQ(y, x);
}

TEST(Conv2d, ZeroKernelGivesZeros) {
  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor({2, 4, 4}, rng);
  const Tensor y = kernels::conv2d_forward(x, Tensor({3, 2, 3, 3}), Tensor({3}), 1, 1);
  EXPECT_EQ(y.shape(), (Shape{3, 4, 4}));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, MatchesLoopOracle) {
  std::mt19937_64 rng(3);
  struct Case { std::size_t c, h, w, o, k, stride, pad; };
  for (const Case& cs : {Case{2, 4, 4, 3, 3, 1, 1}, Case{3, 7, 5, 2, 3, 2, 1}, Case{1, 6, 6, 4, 1, 1, 0},
                         Case{4, 5, 6, 2, 5, 1, 2}, Case{2, 8, 8, 2, 3, 2, 0}}) {
    const Tensor x = oracle::random_tensor({cs.c, cs.h, cs.w}, rng);
    const Tensor w = oracle::random_tensor({cs.o, cs.c, cs.k, cs.k}, rng);
    const Tensor b = oracle::random_tensor({cs.o}, rng);
    const Tensor got = kernels::conv2d_forward(x, w, b, cs.stride, cs.pad);
    const Tensor want = oracle::conv2d(x, w, b, cs.stride, cs.pad);
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_LE(max_abs_diff(got, want), 1e-12);
  }
}

TEST(Conv2d, ShapeErrorsNameTheDimensions) {
  Tape t;
  Var x = t.constant(Tensor({2, 4, 4}));
  try {
    conv2d(x, t.constant(Tensor({1, 3, 3, 3})), t.constant(Tensor({1})), 1, 1);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find('3'), std::string::npos) << e.what();
  }
  EXPECT_THROW(conv2d(x, t.constant(Tensor({1, 2, 3, 3})), t.constant(Tensor({2})), 1, 1), ShapeError);
  EXPECT_THROW(conv2d(x, t.constant(Tensor({1, 2, 7, 7})), t.constant(Tensor({1})), 1, 0), ShapeError);
}

TEST(Maxpool2, ConstantAndSingleWindow) {
  const Tensor c = eval([](Tape& t) { return maxpool2(t.constant(Tensor({2, 4, 6}, 0.7))); });
  EXPECT_EQ(c.shape(), (Shape{2, 2, 3}));
  for (double v : c.values()) EXPECT_EQ(v, 0.7);
  const Tensor one = eval([](Tape& t) {
    return maxpool2(t.constant(Tensor({1, 2, 2}, std::vector<double>{1, 2, 3, 4})));
  });
  EXPECT_EQ(one[0], 4.0);
}

TEST(Maxpool2, MatchesLoopOracle) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 5; ++k) {
    const Tensor x = oracle::random_tensor({3, 8, 8}, rng);
    EXPECT_EQ(eval([&](Tape& t) { return maxpool2(t.constant(x)); }), oracle::maxpool2(x));
  }
}

TEST(Maxpool2, OddSizeIsAnError) {
  Tape t;
  EXPECT_THROW(maxpool2(t.constant(Tensor({1, 3, 4}))), ShapeError);
  EXPECT_THROW(maxpool2(t.constant(Tensor({1, 4, 5}))), ShapeError);
}

TEST(Maxpool2, TiesRouteGradientToFirstElement) {
  Parameter p("x", Tensor({1, 2, 2}, 1.0));
  Tape t;
  t.backward(sum(maxpool2(t.parameter(p))));
  EXPECT_EQ(p.grad()[0], 1.0);
  EXPECT_EQ(p.grad()[1], 0.0);
  EXPECT_EQ(p.grad()[2], 0.0);
  EXPECT_EQ(p.grad()[3], 0.0);
}

TEST(Upsample2, ConstantAndSinglePixel) {
  const Tensor c = eval([](Tape& t) { return upsample2(t.constant(Tensor({1, 3, 2}, -0.25))); });
  EXPECT_EQ(c.shape(), (Shape{1, 6, 4}));
  for (double v : c.values()) EXPECT_EQ(v, -0.25);
  const Tensor one = eval([](Tape& t) { return upsample2(t.constant(Tensor({1, 1, 1}, 3.5))); });
  EXPECT_EQ(one.shape(), (Shape{1, 2, 2}));
  for (double v : one.values()) EXPECT_EQ(v, 3.5);
}

TEST(Upsample2, MatchesBilinearOracle) {
  std::mt19937_64 rng(5);
  for (auto shape : {Shape{1, 3, 3}, Shape{2, 4, 5}, Shape{3, 2, 7}}) {
    const Tensor x = oracle::random_tensor(shape, rng);
    const Tensor got = eval([&](Tape& t) { return upsample2(t.constant(x)); });
    EXPECT_LE(max_abs_diff(got, oracle::upsample2(x)), 1e-12);
  }
}

TEST(Softmax, Examples) {
  auto run = [](std::vector<double> v) {
    const std::size_t n = v.size();
    return eval([&](Tape& t) { return softmax(t.constant(Tensor({n}, v))); });
  };
  const Tensor a = run({0, 0});
  EXPECT_EQ(a[0], 0.5);
  EXPECT_EQ(a[1], 0.5);
  for (double c : {-30.0, 0.0, 4.0, 800.0}) {
    const Tensor b = run({c, c, c});
    for (double v : b.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  }
  const Tensor big = run({1000, 0});
  EXPECT_TRUE(big.all_finite());
  EXPECT_NEAR(big[0], 1.0, 1e-15);
  EXPECT_NEAR(big[1], 0.0, 1e-15);
}

TEST(Softmax, SumsToOneAndIsShiftInvariant) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 20; ++k) {
    const Tensor x = oracle::random_tensor({17}, rng, -5, 5);
    Tensor shifted = x;
    for (auto& v : shifted.values()) v += 3.25;
    const Tensor a = eval([&](Tape& t) { return softmax(t.constant(x)); });
    const Tensor b = eval([&](Tape& t) { return softmax(t.constant(shifted)); });
    double s = 0.0;
    for (double v : a.values()) {
      EXPECT_GT(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_LE(max_abs_diff(a, b), 1e-12);
    const auto want = oracle::softmax(std::vector<double>(x.values().begin(), x.values().end()));
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(a[i], want[i], 1e-15);
  }
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(7);
  const Tensor x = oracle::random_tensor({5, 9}, rng, -10, 10);
  const Tensor s = eval([&](Tape& t) { return softmax_rows(t.constant(x)); });
  for (std::size_t i = 0; i < 5; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < 9; ++j) r += s.at(i, j);
    EXPECT_NEAR(r, 1.0, 1e-12);
  }
}

TEST(Elementwise, Examples) {
  const Tensor s = eval([](Tape& t) { return sigmoid(t.constant(Tensor({1}, 0.0))); });
  EXPECT_EQ(s[0], 0.5);
  for (double x : {0.1, 2.0, 1e9}) {
    const Tensor r = eval([&](Tape& t) { return relu(t.constant(Tensor({1}, -x))); });
    EXPECT_EQ(r[0], 0.0);
  }
  const Tensor big = eval([](Tape& t) {
    return softplus(t.constant(Tensor({3}, std::vector<double>{-800, 0, 800})));
  });
  EXPECT_TRUE(big.all_finite());
  EXPECT_NEAR(big[1], std::log(2.0), 1e-15);
  EXPECT_EQ(big[2], 800.0);
  EXPECT_GT(big[0], -1.0);
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(8);
  const Tensor a = oracle::random_tensor({3, 4}, rng);
  const Tensor b = oracle::random_tensor({4, 2}, rng);
  const Tensor c = eval([&](Tape& t) { return matmul(t.constant(a), t.constant(b)); });
  EXPECT_LE(max_abs_diff(c, oracle::matmul(a, b)), 1e-12);
  for (int k = 0; k < 10; ++k) {
    const std::size_t m = 1 + rng() % 9, n = 1 + rng() % 9, p = 1 + rng() % 9;
    const Tensor x = oracle::random_tensor({m, p}, rng), y = oracle::random_tensor({p, n}, rng);
    EXPECT_LE(max_abs_diff(eval([&](Tape& t) { return matmul(t.constant(x), t.constant(y)); }),
                           oracle::matmul(x, y)),
              1e-12);
  }
}

TEST(ShapeErrors, BinaryAndStructuralOps) {
  Tape t;
  Var a = t.constant(Tensor({2, 3}));
  Var b = t.constant(Tensor({3, 2}));
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(mul(a, b), ShapeError);
  EXPECT_THROW(matmul(a, a), ShapeError);
  EXPECT_THROW(reshape(a, {4}), ShapeError);
  const Var maps[] = {t.constant(Tensor({1, 4, 4})), t.constant(Tensor({2, 4, 5}))};
  EXPECT_THROW(concat_channels(maps), ShapeError);
}

TEST(Structural, ConcatCropJoin) {
  std::mt19937_64 rng(9);
  const Tensor a = oracle::random_tensor({2, 4, 6}, rng), b = oracle::random_tensor({1, 4, 6}, rng);
  const Tensor c = eval([&](Tape& t) {
    const Var parts[] = {t.constant(a), t.constant(b)};
    return concat_channels(parts);
  });
  EXPECT_EQ(c.shape(), (Shape{3, 4, 6}));
  EXPECT_EQ(c.at(2, 3, 5), b.at(0, 3, 5));
  EXPECT_EQ(c.at(1, 0, 2), a.at(1, 0, 2));
  const Tensor round_trip = eval([&](Tape& t) {
    Var x = t.constant(a);
    return join_quadrants(crop(x, 0, 0, 2, 3), crop(x, 0, 3, 2, 3), crop(x, 2, 0, 2, 3),
                          crop(x, 2, 3, 2, 3));
  });
  EXPECT_EQ(round_trip, a);
}

// Central-difference checks of every primitive on random inputs in [-1, 1].
class PrimitiveGradients : public ::testing::Test {
 protected:
  std::mt19937_64 rng{42};

  void expect_grad(std::vector<Shape> shapes, const std::function<Var(Tape&, std::vector<Var>&)>& f,
                   int instances = 5) {
    for (int k = 0; k < instances; ++k) {
      std::vector<Parameter> ps;
      for (std::size_t i = 0; i < shapes.size(); ++i)
        ps.emplace_back("in" + std::to_string(i), oracle::random_tensor(shapes[i], rng));
      std::vector<Parameter*> ptrs;
      for (auto& p : ps) ptrs.push_back(&p);
      auto build = [&](Tape& t) {
        std::vector<Var> in;
        for (auto& p : ps) in.push_back(t.parameter(p));
        return f(t, in);
      };
      // A random projection keeps every output element in play.
      const Tensor proj = oracle::random_tensor(eval(build).shape(), rng);
      auto res = gradcheck::check(ptrs, [&](Tape& t) { return sum(mul(build(t), t.constant(proj))); });
      EXPECT_LT(res.max_rel_error, 1e-4) << "instance " << k;
    }
  }
};

TEST_F(PrimitiveGradients, Conv2d) {
  expect_grad({{2, 5, 5}, {3, 2, 3, 3}, {3}},
              [](Tape&, std::vector<Var>& v) { return conv2d(v[0], v[1], v[2], 1, 1); });
  expect_grad({{2, 6, 5}, {2, 2, 3, 3}, {2}},
              [](Tape&, std::vector<Var>& v) { return conv2d(v[0], v[1], v[2], 2, 1); });
  expect_grad({{3, 4, 4}, {2, 3, 1, 1}, {2}},
              [](Tape&, std::vector<Var>& v) { return conv2d(v[0], v[1], v[2], 1, 0); });
}

TEST_F(PrimitiveGradients, PoolingAndResampling) {
  expect_grad({{2, 4, 6}}, [](Tape&, std::vector<Var>& v) { return maxpool2(v[0]); });
  expect_grad({{2, 3, 4}}, [](Tape&, std::vector<Var>& v) { return upsample2(v[0]); });
}

TEST_F(PrimitiveGradients, Activations) {
  expect_grad({{3, 4}}, [](Tape&, std::vector<Var>& v) { return relu(v[0]); });
  expect_grad({{3, 4}}, [](Tape&, std::vector<Var>& v) { return sigmoid(v[0]); });
  expect_grad({{3, 4}}, [](Tape&, std::vector<Var>& v) { return softplus(v[0]); });
  expect_grad({{7}}, [](Tape&, std::vector<Var>& v) { return softmax(v[0]); });
  expect_grad({{3, 5}}, [](Tape&, std::vector<Var>& v) { return softmax_rows(v[0]); });
}

TEST_F(PrimitiveGradients, Arithmetic) {
  expect_grad({{2, 3}, {2, 3}}, [](Tape&, std::vector<Var>& v) { return add(v[0], v[1]); });
  expect_grad({{2, 3}, {2, 3}}, [](Tape&, std::vector<Var>& v) { return sub(v[0], v[1]); });
  expect_grad({{2, 3}, {2, 3}}, [](Tape&, std::vector<Var>& v) { return mul(v[0], v[1]); });
  expect_grad({{2, 3}}, [](Tape&, std::vector<Var>& v) { return affine(v[0], -1.7, 0.3); });
  expect_grad({{2, 3}}, [](Tape&, std::vector<Var>& v) { return mean(v[0]); });
}

TEST_F(PrimitiveGradients, LinearAlgebra) {
  expect_grad({{3, 4}, {4, 2}}, [](Tape&, std::vector<Var>& v) { return matmul(v[0], v[1]); });
  expect_grad({{3, 4}}, [](Tape&, std::vector<Var>& v) { return transpose(v[0]); });
  expect_grad({{3, 4}}, [](Tape&, std::vector<Var>& v) { return reshape(v[0], {2, 6}); });
  expect_grad({{5, 3}}, [](Tape&, std::vector<Var>& v) { return center_rows(v[0]); });
  expect_grad({{6, 3}, {6, 3}, {6, 2}},
              [](Tape&, std::vector<Var>& v) { return attention(v[0], v[1], v[2]); });
}

TEST_F(PrimitiveGradients, Structural) {
  expect_grad({{1, 4, 4}, {2, 4, 4}}, [](Tape&, std::vector<Var>& v) {
    const Var parts[] = {v[0], v[1]};
    return concat_channels(parts);
  });
  expect_grad({{3, 4, 4}, {3}}, [](Tape&, std::vector<Var>& v) { return scale_channels(v[0], v[1]); });
  expect_grad({{2, 6, 6}}, [](Tape&, std::vector<Var>& v) { return crop(v[0], 1, 2, 3, 4); });
  expect_grad({{2, 2, 3}, {2, 2, 3}, {2, 2, 3}, {2, 2, 3}}, [](Tape&, std::vector<Var>& v) {
    return join_quadrants(v[0], v[1], v[2], v[3]);
  });
}

TEST(Attention, MatchesDenseSoftmaxProduct) {
  std::mt19937_64 rng(10);
  const Tensor q = oracle::random_tensor({7, 3}, rng, -2, 2), k = oracle::random_tensor({7, 3}, rng, -2, 2);
  const Tensor v = oracle::random_tensor({7, 4}, rng);
  const Tensor got = eval([&](Tape& t) { return attention(t.constant(q), t.constant(k), t.constant(v)); });
  const Tensor scores = oracle::matmul(q, oracle::transpose(k));
  Tensor s({7, 7});
  for (std::size_t i = 0; i < 7; ++i) {
    std::vector<double> row(7);
    for (std::size_t j = 0; j < 7; ++j) row[j] = scores.at(i, j);
    const auto r = oracle::softmax(row);
    for (std::size_t j = 0; j < 7; ++j) s.at(i, j) = r[j];
  }
  EXPECT_LE(max_abs_diff(got, oracle::matmul(s, v)), 1e-12);
}
