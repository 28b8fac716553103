#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "oracles.hpp"
#include "realsteer/error.hpp"
#include "realsteer/linalg.hpp"
#include "realsteer/rng.hpp"
#include "realsteer/spatial.hpp"
#include "realsteer/tensor.hpp"
#include "test_helpers.hpp"

using namespace realsteer;
using testing::code_of;

namespace {

double residual(const DenseMatrix& a, const EigenPair& p) { return (a * p.vector - p.value * p.vector).norm(); }

}  // namespace

TEST_SUITE("numeric") {
  TEST_CASE("tensor shape checks and record access") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    t.at({1, 2}) = 5.0f;
    CHECK(t[5] == 5.0f);
    CHECK(t.record(1)[2] == 5.0f);
    CHECK(code_of([] { Tensor({2, 2}, std::vector<float>(3)); }) == ErrorCode::ShapeMismatch);
    CHECK(t.reshaped({3, 2}).dim(0) == 3);
  }

  TEST_CASE("rng streams are reproducible and keyed") {
    SeededRng a(7), b(7), c(8);
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next_u64();
      CHECK(x == b.next_u64());
      CHECK(x != c.next_u64());
    }
    SeededRng r(0);
    double sum = 0, sq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double v = r.normal();
      sum += v;
      sq += v * v;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
    SeededRng u(3);
    for (int i = 0; i < 1000; ++i) CHECK(u.below(7) < 7);
    CHECK(SeededRng(1).derive(2, 3).next_u64() == SeededRng(1).derive(2, 3).next_u64());
    CHECK(derive_seed(0, 1) != derive_seed(0, 2));
  }

  TEST_CASE("center_columns") {
    const Tensor c = center_columns(Tensor({2, 1}, {1.0f, 3.0f}));
    CHECK(c[0] == -1.0f);
    CHECK(c[1] == 1.0f);
    const Tensor single = center_columns(Tensor({1, 3}, {4.0f, -2.0f, 9.0f}));
    for (float v : single.values()) CHECK(v == 0.0f);
    SeededRng rng(11);
    const Tensor m = oracle::random_tensor(rng, {10, 4}, 3.0);
    const Tensor z = center_columns(m);
    for (std::size_t j = 0; j < 4; ++j) {
      double mean = 0;
      for (std::size_t i = 0; i < 10; ++i) mean += z[i * 4 + j];
      CHECK(std::abs(mean / 10) < 1e-6);
    }
    CHECK(code_of([] { center_columns(Tensor({0, 3})); }) == ErrorCode::EmptyInput);
  }

  TEST_CASE("topk_eigh hand examples") {
    DenseMatrix d = DenseMatrix::Zero(3, 3);
    d.diagonal() << 3, 2, 1;
    auto pairs = topk_eigh(d, 2);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].value == doctest::Approx(3.0));
    CHECK(pairs[1].value == doctest::Approx(2.0));
    CHECK(pairs[0].vector(0) == doctest::Approx(1.0));
    CHECK(pairs[1].vector(1) == doctest::Approx(1.0));

    DenseMatrix cc(2, 2);
    cc << 1, 2, 2, 4;
    pairs = topk_eigh(cc, 2);
    CHECK(pairs[0].value == doctest::Approx(5.0));
    CHECK(pairs[0].vector(0) == doctest::Approx(1.0 / std::sqrt(5.0)));
    CHECK(pairs[0].vector(1) == doctest::Approx(2.0 / std::sqrt(5.0)));
    CHECK(std::abs(pairs[1].value) < 1e-12);
    CHECK(std::abs(pairs[0].vector.dot(pairs[1].vector)) < 1e-12);
    CHECK(pairs[1].vector(0) > 0.0);
  }

  TEST_CASE("topk_eigh errors") {
    DenseMatrix a(2, 2);
    a << 1, 0.5, 0.4, 1;
    CHECK(code_of([&] { topk_eigh(a, 1); }) == ErrorCode::NotSymmetric);
    const DenseMatrix s = DenseMatrix::Identity(3, 3);
    CHECK(code_of([&] { topk_eigh(s, 0); }) == ErrorCode::KOutOfRange);
    CHECK(code_of([&] { topk_eigh(s, 4); }) == ErrorCode::KOutOfRange);
    EighOptions starve;
    starve.dense_cutoff = 0;
    starve.max_iterations = 1;
    starve.accept_tolerance = 1e-300;
    SeededRng rng(5);
    const DenseMatrix g = oracle::random_matrix(rng, 80, 80);
    const DenseMatrix psd = g * g.transpose();
    CHECK(code_of([&] { topk_eigh(psd, 2, starve); }) == ErrorCode::NoConvergence);
  }

  TEST_CASE("topk_eigh matches the dense oracle on both solver paths") {
    SeededRng rng(21);
    for (int trial = 0; trial < 6; ++trial) {
      const int n = trial < 3 ? 16 : 120;
      const int rank = 2 + trial;
      const DenseMatrix f = oracle::random_matrix(rng, n, rank);
      const DenseMatrix a = f * f.transpose();
      Eigen::SelfAdjointEigenSolver<DenseMatrix> dense(a);
      const auto pairs = topk_eigh(a, 3);
      for (int k = 0; k < 3; ++k) {
        const double expect = dense.eigenvalues()(n - 1 - k);
        CHECK(std::abs(pairs[static_cast<std::size_t>(k)].value - expect) <= 1e-6 * std::max(1.0, std::abs(expect)));
        CHECK(residual(a, pairs[static_cast<std::size_t>(k)]) <= 1e-6 * (a.norm() + 1));
        CHECK(std::abs(pairs[static_cast<std::size_t>(k)].vector.norm() - 1.0) < 1e-9);
      }
      CHECK(pairs[0].value >= pairs[1].value);
      CHECK(pairs[1].value >= pairs[2].value);
    }
  }

  TEST_CASE("gram route equals the explicit matrix") {
    SeededRng rng(2);
    const DenseMatrix c = oracle::random_matrix(rng, 40, 2);
    const DenseMatrix a = c * c.transpose();
    const auto gram = topk_eigh_gram(c, 3);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> dense(a);
    CHECK(gram[0].value == doctest::Approx(dense.eigenvalues()(39)).epsilon(1e-10));
    CHECK(gram[1].value == doctest::Approx(dense.eigenvalues()(38)).epsilon(1e-10));
    CHECK(std::abs(gram[2].value) < 1e-9);
    for (const auto& p : gram) CHECK(residual(a, p) <= 1e-8 * (a.norm() + 1));
  }

  TEST_CASE("eigenvector sign convention") {
    DenseVector v(3);
    v << 0.0, -0.6, 0.8;
    canonicalize_sign(v);
    CHECK(v(1) > 0);
  }

  TEST_CASE("interpolation examples") {
    const Tensor constant({2, 3, 5}, 0.37f);
    for (auto mode : {InterpMode::Nearest, InterpMode::Bilinear}) {
      const Tensor up = interpolate_spatial(constant, 7, 11, mode);
      for (float v : up.values()) {
        if (mode == InterpMode::Nearest) CHECK(v == 0.37f);
        else CHECK(std::abs(v - 0.37f) <= 1e-6);
      }
    }
    const Tensor quad({1, 2, 2}, {1, 2, 3, 4});
    const Tensor near = interpolate_spatial(quad, 4, 4, InterpMode::Nearest);
    const float expect[16] = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    for (int i = 0; i < 16; ++i) CHECK(near[static_cast<std::size_t>(i)] == expect[i]);
    const Tensor row = interpolate_spatial(Tensor({1, 1, 2}, {0, 1}), 1, 4, InterpMode::Bilinear);
    CHECK(row[0] == doctest::Approx(0.0));
    CHECK(row[1] == doctest::Approx(0.25));
    CHECK(row[2] == doctest::Approx(0.75));
    CHECK(row[3] == doctest::Approx(1.0));
    CHECK(code_of([&] { interpolate_spatial(quad, 0, 3, InterpMode::Bilinear); }) == ErrorCode::ZeroExtent);
  }

  TEST_CASE("interpolation identity and range") {
    SeededRng rng(9);
    const Tensor f = oracle::random_tensor(rng, {3, 6, 5});
    CHECK(interpolate_spatial(f, 6, 5, InterpMode::Nearest) == f);
    const Tensor same = interpolate_spatial(f, 6, 5, InterpMode::Bilinear);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(std::abs(same[i] - f[i]) <= 1e-6);
    const Tensor up = interpolate_spatial(f, 13, 9, InterpMode::Bilinear);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto src = f.values().subspan(c * 30, 30);
      const auto [lo, hi] = std::minmax_element(src.begin(), src.end());
      for (float v : up.values().subspan(c * 117, 117)) {
        CHECK(v >= *lo - 1e-6f);
        CHECK(v <= *hi + 1e-6f);
      }
    }
  }

  TEST_CASE("centered log-magnitude spectrum") {
    const Tensor zero({4, 4});
    const Tensor zs = dft2d_centered_logmag(zero);
    for (float v : zs.values()) CHECK(v == 0.0f);
    const Tensor c({4, 4}, 0.5f);
    const Tensor s = dft2d_centered_logmag(c);
    for (std::size_t i = 0; i < 16; ++i) {
      if (i == 2 * 4 + 2) CHECK(s[i] == doctest::Approx(std::log1p(16 * 0.5)));
      else CHECK(std::abs(s[i]) < 1e-6);
    }
    Tensor wave({8, 8});
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) wave[y * 8 + x] = static_cast<float>(std::cos(2 * M_PI * x / 8.0));
    const Tensor ws = dft2d_centered_logmag(wave);
    const auto peak = std::max_element(ws.values().begin(), ws.values().end()) - ws.values().begin();
    CHECK((peak == 4 * 8 + 3 || peak == 4 * 8 + 5));
    CHECK(ws[4 * 8 + 3] == doctest::Approx(ws[4 * 8 + 5]));
    CHECK(ws[4 * 8 + 3] == doctest::Approx(std::log1p(32.0)).epsilon(1e-5));
  }

  TEST_CASE("spectrum matches the direct DFT oracle") {
    SeededRng rng(4);
    for (auto [h, w] : std::vector<std::pair<std::size_t, std::size_t>>{{16, 16}, {8, 4}, {5, 7}, {1, 6}, {12, 9}}) {
      const Tensor plane = oracle::random_tensor(rng, {h, w});
      const Tensor fast = dft2d_centered_logmag(plane);
      const auto slow = oracle::direct_logmag(plane);
      for (std::size_t i = 0; i < plane.size(); ++i) CHECK(std::abs(fast[i] - slow[i]) <= 1e-4);
    }
  }

  TEST_CASE("spectrum magnitude is translation invariant for periodic shifts") {
    SeededRng rng(8);
    const Tensor plane = oracle::random_tensor(rng, {8, 16});
    Tensor shifted({8, 16});
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 16; ++x) shifted[((y + 3) % 8) * 16 + (x + 5) % 16] = plane[y * 16 + x];
    const Tensor a = dft2d_centered_logmag(plane), b = dft2d_centered_logmag(shifted);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-4);
    Tensor bad({2, 2});
    bad[1] = std::nanf("");
    CHECK(code_of([&] { dft2d_centered_logmag(bad); }) == ErrorCode::NonFiniteInput);
  }

  TEST_CASE("numeric operations are pure") {
    SeededRng rng(31);
    const Tensor f = oracle::random_tensor(rng, {2, 5, 5});
    CHECK(interpolate_spatial(f, 9, 9, InterpMode::Bilinear) == interpolate_spatial(f, 9, 9, InterpMode::Bilinear));
    const DenseMatrix g = oracle::random_matrix(rng, 60, 3);
    const DenseMatrix a = g * g.transpose();
    const auto p1 = topk_eigh(a, 2), p2 = topk_eigh(a, 2);
    CHECK(p1[0].value == p2[0].value);
    CHECK(p1[1].vector == p2[1].vector);
  }
}
