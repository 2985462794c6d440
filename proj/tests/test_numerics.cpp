#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "rnnlab/activations.hpp"
#include "rnnlab/finite_difference.hpp"
#include "rnnlab/matrix.hpp"
#include "rnnlab/rng.hpp"
#include "test_support.hpp"

using namespace rnnlab;

namespace {

Matrix naive_product(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) h -= v * std::log(v);
  return h;
}

}  // namespace

TEST_CASE("gemm identity and annihilator") {
  Rng rng(1);
  const Matrix m = testing::random_matrix(rng, 3, 4);
  CHECK(gemm(Matrix::identity(3), m) == m);
  CHECK(gemm(Matrix(2, 3), m) == Matrix(2, 4));
}

TEST_CASE("gemm matches the triple loop exactly") {
  Rng rng(7);
  const Matrix a = testing::random_matrix(rng, 4, 4);
  const Matrix b = testing::random_matrix(rng, 4, 4);
  CHECK(gemm(a, b) == naive_product(a, b));

  for (int trial = 0; trial < 50; ++trial) {
    const auto r = 1 + rng.next_u64() % 16;
    const auto k = 1 + rng.next_u64() % 16;
    const auto c = 1 + rng.next_u64() % 16;
    const Matrix x = testing::random_matrix(rng, r, k);
    const Matrix y = testing::random_matrix(rng, k, c);
    REQUIRE(gemm(x, y) == naive_product(x, y));

    Matrix tn(r, c);
    gemm_tn_acc(transpose(x), y, tn);
    CHECK(tn == naive_product(x, y));
    Matrix nt(r, c);
    gemm_nt_acc(x, transpose(y), nt);
    CHECK(nt == naive_product(x, y));
  }
}

TEST_CASE("gemm rejects mismatched shapes") {
  CHECK_THROWS_AS(gemm(Matrix(2, 3), Matrix(2, 3)), InvalidArgument);
  Matrix c(2, 2);
  CHECK_THROWS_AS(gemm_acc(Matrix(2, 3), Matrix(3, 3), c), InvalidArgument);
}

TEST_CASE("activations") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(std::tanh(0.0) == 0.0);
  CHECK(sigmoid(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(sigmoid_grad(0.0) == 0.25);
  CHECK(tanh_grad(0.0) == 1.0);
  CHECK(sigmoid(-1000.0) == 0.0);
  CHECK(sigmoid(1000.0) == 1.0);
  CHECK(std::isfinite(sigmoid_grad(-800.0)));
  const double s = sigmoid(0.3);
  CHECK(sigmoid_grad(0.3) == doctest::Approx(s * (1 - s)));
  const double t = std::tanh(0.3);
  CHECK(tanh_grad(0.3) == doctest::Approx(1 - t * t));
}

TEST_CASE("softmax") {
  const auto uniform = softmax(std::vector<double>{0, 0, 0, 0});
  for (double p : uniform) CHECK(p == 0.25);

  const auto p = softmax(std::vector<double>{std::log(1.0), std::log(3.0)});
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-14));

  Rng rng(3);
  std::vector<double> logits(10);
  for (double& v : logits) v = rng.uniform(-5, 5);
  double previous = -1.0;
  for (double temperature : {1.0, 10.0, 100.0}) {
    const auto q = softmax(logits, temperature);
    double total = 0.0;
    for (double v : q) total += v;
    CHECK(std::abs(total - 1.0) < 1e-12);
    const double h = entropy(q);
    CHECK(h > previous);
    previous = h;
  }
  CHECK(previous < std::log(10.0));
  CHECK(std::log(10.0) - previous < 1e-3);

  std::vector<double> shifted = logits;
  for (double& v : shifted) v += 123.0;
  const auto a = softmax(logits);
  const auto b = softmax(shifted);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);

  CHECK_THROWS_AS(softmax(logits, 0.0), InvalidArgument);
  CHECK_THROWS_AS(softmax(logits, -1.0), InvalidArgument);
}

TEST_CASE("log_softmax agrees with softmax") {
  const std::vector<double> logits{1.0, -2.0, 0.5, 3.0};
  std::vector<double> out(4);
  log_softmax(logits, 1.7, out);
  const auto p = softmax(logits, 1.7);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::exp(out[i]) == doctest::Approx(p[i]).epsilon(1e-14));
}

TEST_CASE("log_sum_exp") {
  CHECK(log_sum_exp(std::vector<double>{0, 0}) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  CHECK(log_sum_exp(std::vector<double>{-3.25}) == -3.25);
  CHECK(log_sum_exp(std::vector<double>{1000, 1000}) ==
        doctest::Approx(1000 + std::numbers::ln2).epsilon(1e-15));
  CHECK_THROWS_AS(log_sum_exp(std::vector<double>{}), InvalidArgument);
}

TEST_CASE("bernoulli masks") {
  Rng rng(11);
  CHECK(bernoulli_mask(rng, 3, 5, 1.0) == Matrix(3, 5, 1.0));
  for (double keep : {0.25, 0.5, 0.9}) {
    const Matrix mask = bernoulli_mask(rng, 1000, 1000, keep);
    double total = 0.0;
    for (double v : mask.data()) {
      REQUIRE((v == 0.0 || v == 1.0 / keep));
      total += v;
    }
    CHECK(std::abs(total / 1e6 - 1.0) < 0.01);
  }
  Rng a(5), b(5);
  CHECK(bernoulli_mask(a, 4, 4, 0.5) == bernoulli_mask(b, 4, 4, 0.5));
  CHECK_THROWS_AS(bernoulli_mask(rng, 2, 2, 0.0), InvalidArgument);
  CHECK_THROWS_AS(bernoulli_mask(rng, 2, 2, 1.5), InvalidArgument);
}

TEST_CASE("rng state round trip continues the same stream") {
  Rng rng(42);
  for (int i = 0; i < 17; ++i) rng.next_u64();
  Rng resumed(rng.state());
  for (int i = 0; i < 100; ++i) REQUIRE(rng.next_u64() == resumed.next_u64());

  // Reference values of the documented algorithm (SplitMix64 stream at seed 0).
  Rng zero(0);
  CHECK(zero.next_u64() == 0xE220A8397B1DCDAFULL);
  CHECK(zero.next_u64() == 0x6E789E6AA1B965F4ULL);
}

TEST_CASE("finite differences") {
  const auto quadratic = [](std::span<const double> t) { return t[0] * t[0] + t[1] * t[1]; };
  const auto g = finite_difference_gradient(quadratic, std::vector<double>{1, 2}, 1e-5);
  CHECK(std::abs(g[0] - 2) < 1e-8);
  CHECK(std::abs(g[1] - 4) < 1e-8);

  const auto sig = [](std::span<const double> t) { return sigmoid(t[0]); };
  CHECK(std::abs(finite_difference_gradient(sig, std::vector<double>{0.0}, 1e-5)[0] - 0.25) < 1e-10);

  const auto blows_up = [](std::span<const double> t) {
    return t[1] > 0.5 ? std::numeric_limits<double>::infinity() : t[0];
  };
  try {
    finite_difference_gradient(blows_up, std::vector<double>{0.0, 0.5}, 1e-3);
    FAIL("expected NonFiniteObjective");
  } catch (const NonFiniteObjective& e) {
    CHECK(e.index() == 1);
  }
}
