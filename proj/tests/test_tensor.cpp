#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "lsds/gradcheck.hpp"
#include "lsds/tensor.hpp"

using namespace lsds;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// y = 3x on the forward pass but the backward rule claims dy/dx = 2.
Tensor corrupted_triple(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= 3.0;
  return Tensor::from_op(x.shape(), std::move(out), {x},
                         [](std::span<const double>, std::span<const double> g, std::span<Tensor> in) {
                           auto buf = in[0].grad_buffer();
                           for (std::size_t k = 0; k < g.size(); ++k) buf[k] += 2.0 * g[k];
                         });
}

}  // namespace

TEST(Tensor, SingleElementSoftmaxIsOne) {
  EXPECT_DOUBLE_EQ(softmax(Tensor::row({0.0})).item(), 1.0);
}

TEST(Tensor, ConcatAlongLastAxis) {
  EXPECT_EQ(concat_cols({Tensor::row({1, 2}), Tensor::row({3})}).to_vector(), (std::vector<double>{1, 2, 3}));
}

TEST(Tensor, ScatterAddSumsRowsIntoTarget) {
  const std::vector<std::size_t> idx = {0, 0};
  Tensor src = Tensor::matrix(2, 2, {1, 1, 2, 0});
  EXPECT_EQ(scatter_add_rows(src, idx, 1).to_vector(), (std::vector<double>{3, 1}));
}

TEST(Tensor, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
  EXPECT_THROW(concat_cols({Tensor::zeros({2, 1}), Tensor::zeros({3, 1})}), DimensionError);
}

TEST(Tensor, NonFiniteInputsRejected) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(softmax(Tensor::row({0.0, inf})), NumericError);
  EXPECT_THROW(log(Tensor::row({std::nan("")})), NumericError);
}

TEST(Backward, SquareGivesTwoX) {
  Tensor x = Tensor::row({1, 2}, true);
  backward(sum_all(x * x));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{2, 4}));
}

TEST(Backward, LinearMapGivesColumnSums) {
  Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  Tensor x = Tensor::column({0.5, -1, 2}, true);
  backward(sum_all(matmul(a, x)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{5, 7, 9}));
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x = Tensor::row({1, 2}, true);
  EXPECT_THROW(backward(x * x), ContractError);
}

TEST(Backward, UnreachableTensorGradIsZero) {
  Tensor x = Tensor::row({1, 2}, true);
  Tensor y = Tensor::row({3, 4}, true);
  backward(sum_all(x * y));
  Tensor z = Tensor::row({5, 6}, true);
  backward(sum_all(x));
  for (double g : y.grad()) EXPECT_EQ(g, 0.0);
  for (double g : z.grad_buffer()) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(x.grad()[0], 1.0);
}

TEST(Backward, RepeatedUseAccumulates) {
  Tensor x = Tensor::scalar(3.0, true);
  backward(x * x * x);  // 3x^2
  EXPECT_DOUBLE_EQ(x.grad()[0], 27.0);
}

TEST(Backward, ThreeLayerMlpMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  Tensor x = random_tensor({5, 4}, rng, false);
  Tensor w1 = random_tensor({4, 6}, rng), w2 = random_tensor({6, 6}, rng), w3 = random_tensor({6, 1}, rng);
  auto loss = [&] { return sum_all(tanh(matmul(tanh(matmul(tanh(matmul(x, w1)), w2)), w3))); };
  EXPECT_LT(grad_check_params(loss, {w1, w2, w3}), 1e-4);
}

TEST(Backward, Deterministic) {
  std::mt19937_64 rng(5);
  Tensor a = random_tensor({4, 4}, rng), b = random_tensor({4, 3}, rng);
  auto run = [&] {
    backward(sum_all(softmax(matmul(a, b)) * tanh(b.detach().at(0, 0) * matmul(a, b))));
    return std::vector<double>(a.grad().begin(), a.grad().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Backward, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::row({1, 2}, true);
  NoGradGuard guard;
  EXPECT_FALSE(grad_enabled());
  EXPECT_FALSE((x * x).requires_grad());
}

TEST(GradCheck, LinearFunctionHasZeroError) {
  // Dyadic point and step keep every finite difference exact.
  EXPECT_EQ(grad_check([](const Tensor& x) { return sum_all(x); }, Tensor::row({0.5, -1.0, 2.0}), 0x1p-10), 0.0);
  EXPECT_LT(grad_check([](const Tensor& x) { return sum_all(x); }, Tensor::row({0.3, -1.0, 2.0})), 1e-10);
}

TEST(GradCheck, TanhScalar) {
  EXPECT_LT(grad_check([](const Tensor& x) { return sum_all(tanh(x)); }, Tensor::row({0.3})), 1e-6);
}

TEST(GradCheck, SoftmaxThenDot) {
  std::mt19937_64 rng(2);
  Tensor w = random_tensor({1, 4}, rng, false);
  EXPECT_LT(grad_check([&](const Tensor& x) { return sum_all(softmax(x) * w); }, random_tensor({1, 4}, rng)),
            1e-4);
}

TEST(GradCheck, NonScalarFunctionIsContractError) {
  EXPECT_THROW(grad_check([](const Tensor& x) { return x; }, Tensor::row({1, 2})), ContractError);
}

TEST(GradCheck, CorruptedBackwardRuleIsCaught) {
  const double err = grad_check([](const Tensor& x) { return sum_all(corrupted_triple(x)); }, Tensor::row({0.5, -1.0}));
  EXPECT_GT(err, 1e-4);
}

TEST(GradCheck, EveryPrimitiveAtTenRandomPoints) {
  std::mt19937_64 rng(99);
  using Fn = std::function<Tensor(const Tensor&)>;
  const std::vector<std::size_t> idx = {1, 0, 1, 2};
  Tensor other = random_tensor({3, 3}, rng, false);
  const std::vector<std::pair<std::string, Fn>> ops = {
      {"matmul", [&](const Tensor& x) { return matmul(x, other); }},
      {"add", [&](const Tensor& x) { return x + other; }},
      {"sub", [&](const Tensor& x) { return other - x; }},
      {"mul", [&](const Tensor& x) { return x * x * other; }},
      {"scale", [](const Tensor& x) { return scale(x, 2.5); }},
      {"concat", [&](const Tensor& x) { return concat_cols({x, x * other}); }},
      {"sum0", [](const Tensor& x) { return sum(x * x, 0); }},
      {"mean1", [](const Tensor& x) { return mean(x * x, 1); }},
      {"gather", [&](const Tensor& x) { return gather_rows(x * x, idx); }},
      {"scatter", [&](const Tensor& x) { return scatter_add_rows(gather_rows(x * x, idx), idx, 3); }},
      {"tanh", [](const Tensor& x) { return tanh(x); }},
      {"sigmoid", [](const Tensor& x) { return sigmoid(x); }},
      {"relu", [](const Tensor& x) { return relu(x); }},
      {"exp", [](const Tensor& x) { return exp(x); }},
      {"log", [](const Tensor& x) { return log(add_scalar(x * x, 0.5)); }},
      {"abs", [](const Tensor& x) { return abs(x); }},
      {"softmax", [](const Tensor& x) { return softmax(x); }},
      {"broadcast", [](const Tensor& x) { return broadcast_rows(sum(x * x, 0), 3); }},
  };
  for (const auto& [name, op] : ops) {
    Tensor w = random_tensor(op(Tensor::zeros({3, 3})).shape(), rng, false);
    for (int k = 0; k < 10; ++k) {
      EXPECT_LT(grad_check([&](const Tensor& x) { return sum_all(op(x) * w); }, random_tensor({3, 3}, rng)), 1e-4)
          << name;
    }
  }
}

TEST(Tensor, GatherScatterEqualsIncidenceMatrix) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = dim(rng), m = dim(rng), cols = dim(rng);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> idx(m);
    for (auto& i : idx) i = pick(rng);
    Tensor a = random_tensor({n, cols}, rng, false);
    std::vector<double> inc(m * n, 0.0);
    for (std::size_t k = 0; k < m; ++k) inc[k * n + idx[k]] = 1.0;
    Tensor p = Tensor::matrix(m, n, inc);
    Tensor gathered = gather_rows(a, idx);
    Tensor dense_g = matmul(p, a);
    for (std::size_t k = 0; k < gathered.size(); ++k) EXPECT_DOUBLE_EQ(gathered.data()[k], dense_g.data()[k]);
    Tensor scattered = scatter_add_rows(gathered, idx, n);
    std::vector<double> pt(n * m);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) pt[c * m + r] = inc[r * n + c];
    Tensor dense_s = matmul(Tensor::matrix(n, m, pt), dense_g);
    for (std::size_t k = 0; k < scattered.size(); ++k) EXPECT_NEAR(scattered.data()[k], dense_s.data()[k], 1e-12);
  }
}
