#include <cmath>
#include <vector>

#include "doctest.h"
#include "rnnlab/finite_difference.hpp"
#include "rnnlab/mogrifier.hpp"
#include "test_support.hpp"

using namespace rnnlab;
using rnnlab::testing::append;
using rnnlab::testing::append_tensors;
using rnnlab::testing::random_matrix;
using rnnlab::testing::read;
using rnnlab::testing::read_tensors;

namespace {

double gradient_check(const MogrifierParams& params, const Matrix& h, const Matrix& x, Rng& rng) {
  const Matrix r_h = random_matrix(rng, h.rows(), h.cols());
  const Matrix r_x = random_matrix(rng, x.rows(), x.cols());
  std::vector<double> theta;
  append_tensors(params, theta);
  append(h, theta);
  append(x, theta);
  const auto objective = [&](std::span<const double> values) {
    MogrifierParams p = params;
    Matrix hh = h, xx = x;
    std::size_t offset = 0;
    read_tensors(p, values, offset);
    read(hh, values, offset);
    read(xx, values, offset);
    const MogrifyResult out = mogrify_forward(p, hh, xx);
    return testing::dot(r_h, out.h) + testing::dot(r_x, out.x);
  };
  const MogrifyResult out = mogrify_forward(params, h, x);
  const MogrifyGradients g = mogrify_backward(params, out.cache, r_h, r_x);
  std::vector<double> analytic;
  append_tensors(g.params, analytic);
  append(g.h, analytic);
  append(g.x, analytic);
  return max_relative_error(analytic, finite_difference_gradient(objective, theta, 1e-5));
}

}  // namespace

TEST_CASE("zero rounds and zero weights are the identity") {
  Rng rng(1);
  const Matrix h = random_matrix(rng, 2, 5);
  const Matrix x = random_matrix(rng, 2, 3);
  for (std::size_t r = 0; r <= 6; ++r) {
    for (std::size_t rank : {0u, 2u}) {
      if (r == 0 && rank) continue;
      const MogrifyResult out = mogrify_forward(zero_mogrifier_params(3, 5, r, rank), h, x);
      CHECK(out.h == h);
      CHECK(out.x == x);
    }
  }
}

TEST_CASE("returned ladder entries follow the index law") {
  Rng rng(2);
  const Matrix h = random_matrix(rng, 1, 4);
  const Matrix x = random_matrix(rng, 1, 4);
  for (std::size_t r = 0; r <= 6; ++r) {
    const MogrifierParams p = init_mogrifier_params(rng, 4, 4, r);
    const MogrifyResult out = mogrify_forward(p, h, x);
    // Ladder index of h^i is i/2 (i even) and of x^i is (i+1)/2 (i odd, x^-1 at 0).
    const std::size_t h_index = 2 * (r / 2);
    const long x_index = 2 * static_cast<long>((r + 1) / 2) - 1;
    REQUIRE(out.cache.hs.size() == r / 2 + 1);
    REQUIRE(out.cache.xs.size() == (r + 1) / 2 + 1);
    CHECK(out.h == out.cache.hs[h_index / 2]);
    CHECK(out.x == out.cache.xs[static_cast<std::size_t>((x_index + 1) / 2)]);
    CHECK(out.cache.gates.size() == r);
  }
  // r = 5 returns (h^4, x^5); r = 2 returns (h^2, x^1).
  const MogrifyResult five = mogrify_forward(init_mogrifier_params(rng, 4, 4, 5), h, x);
  CHECK(five.cache.hs.size() == 3);
  CHECK(five.cache.xs.size() == 4);
  const MogrifyResult two = mogrify_forward(init_mogrifier_params(rng, 4, 4, 2), h, x);
  CHECK(two.h == two.cache.hs[1]);
  CHECK(two.x == two.cache.xs[1]);
}

TEST_CASE("one round by hand") {
  MogrifierParams p = zero_mogrifier_params(2, 1, 1);
  p.rounds[0].full = Matrix::from_rows({{1.0, -1.0}});  // 1 x 2 maps h onto x
  const Matrix h = Matrix::row_vector({0.5});
  const Matrix x = Matrix::row_vector({3.0, 4.0});
  const MogrifyResult out = mogrify_forward(p, h, x);
  CHECK(out.h == h);
  CHECK(out.x[0] == doctest::Approx(3.0 * 2.0 / (1.0 + std::exp(-0.5))).epsilon(1e-15));
  CHECK(out.x[1] == doctest::Approx(4.0 * 2.0 / (1.0 + std::exp(0.5))).epsilon(1e-15));
}

TEST_CASE("r = 0 passes gradients through") {
  const MogrifierParams p = zero_mogrifier_params(3, 3, 0);
  Rng rng(3);
  const Matrix h = random_matrix(rng, 1, 3);
  const Matrix x = random_matrix(rng, 1, 3);
  const Matrix gh = random_matrix(rng, 1, 3);
  const Matrix gx = random_matrix(rng, 1, 3);
  const MogrifyGradients g = mogrify_backward(p, mogrify_forward(p, h, x).cache, gh, gx);
  CHECK(g.h == gh);
  CHECK(g.x == gx);
}

TEST_CASE("mogrifier gradients match finite differences") {
  Rng rng(17);
  SUBCASE("r = 4 dense, n = m = 6") {
    const MogrifierParams p = init_mogrifier_params(rng, 6, 6, 4);
    CHECK(gradient_check(p, random_matrix(rng, 1, 6), random_matrix(rng, 1, 6), rng) < 1e-5);
  }
  SUBCASE("r in {1, 2, 5}, dense and low rank, rectangular") {
    for (std::size_t r : {1u, 2u, 5u}) {
      for (std::size_t rank : {0u, 2u}) {
        MogrifierParams p = zero_mogrifier_params(5, 4, r, rank);
        testing::randomize(p, rng, -1.0, 1.0);
        CAPTURE(r);
        CAPTURE(rank);
        CHECK(gradient_check(p, random_matrix(rng, 2, 4), random_matrix(rng, 2, 5), rng) < 1e-5);
      }
    }
  }
}

TEST_CASE("low-rank factors agree with the dense product") {
  Rng rng(23);
  MogrifierParams low = zero_mogrifier_params(6, 6, 4, 2);
  testing::randomize(low, rng, -1.0, 1.0);
  MogrifierParams dense = zero_mogrifier_params(6, 6, 4);
  for (std::size_t k = 0; k < 4; ++k) dense.rounds[k].full = gemm(low.rounds[k].left, low.rounds[k].right);

  const Matrix h = random_matrix(rng, 3, 6);
  const Matrix x = random_matrix(rng, 3, 6);
  const MogrifyResult a = mogrify_forward(low, h, x);
  const MogrifyResult b = mogrify_forward(dense, h, x);
  CHECK(a.h == b.h);
  CHECK(a.x == b.x);

  const Matrix gh = random_matrix(rng, 3, 6);
  const Matrix gx = random_matrix(rng, 3, 6);
  const MogrifyGradients ga = mogrify_backward(low, a.cache, gh, gx);
  const MogrifyGradients gb = mogrify_backward(dense, b.cache, gh, gx);
  CHECK(ga.h == gb.h);
  CHECK(ga.x == gb.x);
  // Factor gradients are the dense gradient pushed through the product.
  for (std::size_t k = 0; k < 4; ++k) {
    Matrix left(6, 2);
    gemm_nt_acc(gb.params.rounds[k].full, low.rounds[k].right, left);
    CHECK(ga.params.rounds[k].left == left);
  }
}

TEST_CASE("dimension mismatch is rejected") {
  const MogrifierParams p = zero_mogrifier_params(3, 4, 2);
  CHECK_THROWS_AS(mogrify_forward(p, Matrix(1, 3), Matrix(1, 3)), InvalidArgument);
  CHECK_THROWS_AS(mogrify_forward(p, Matrix(2, 4), Matrix(1, 3)), InvalidArgument);
}
