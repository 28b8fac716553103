#include "realsteer/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "realsteer/error.hpp"
#include "realsteer/rng.hpp"

namespace realsteer {

namespace {

constexpr double kSymmetryTolerance = 1e-5;

void check_symmetric(const DenseMatrix& a) {
  require(a.rows() == a.cols(), ErrorCode::NotSymmetric, "matrix is not square");
  const double scale = a.cwiseAbs().maxCoeff();
  const double worst = (a - a.transpose()).cwiseAbs().maxCoeff();
  require(worst <= kSymmetryTolerance * scale, ErrorCode::NotSymmetric,
          "asymmetry " + std::to_string(worst) + " exceeds tolerance");
}

// Modified Gram-Schmidt with one reorthogonalization pass. Columns that lose
// all but a 1e-10 fraction of their norm are dropped.
DenseMatrix orthonormalize(const DenseMatrix& block) {
  DenseMatrix q(block.rows(), block.cols());
  Eigen::Index kept = 0;
  for (Eigen::Index j = 0; j < block.cols(); ++j) {
    DenseVector v = block.col(j);
    const double original = v.norm();
    if (original == 0.0 || !std::isfinite(original)) continue;
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index i = 0; i < kept; ++i) v -= q.col(i).dot(v) * q.col(i);
    const double remaining = v.norm();
    if (remaining <= 1e-10 * original) continue;
    q.col(kept++) = v / remaining;
  }
  return q.leftCols(kept);
}

double clamp_psd(double value, double scale) {
  return (value < 0.0 && value > -1e-12 * (scale + 1.0)) ? 0.0 : value;
}

std::vector<EigenPair> finalize(std::vector<EigenPair> pairs, double scale) {
  for (EigenPair& p : pairs) {
    p.value = clamp_psd(p.value, scale);
    canonicalize_sign(p.vector);
  }
  return pairs;
}

std::vector<EigenPair> lobpcg(const DenseMatrix& a, Eigen::Index k, const EighOptions& options) {
  const Eigen::Index n = a.rows();
  const Eigen::Index block = std::min<Eigen::Index>(n, std::max<Eigen::Index>(2 * k, k + 4));
  const double norm = a.norm();
  const double target = options.target_tolerance * (norm + 1.0);
  const double accept = options.accept_tolerance * (norm + 1.0);

  SeededRng rng(0x10B9C6ull);
  DenseMatrix start(n, block);
  for (Eigen::Index j = 0; j < block; ++j)
    for (Eigen::Index i = 0; i < n; ++i) start(i, j) = rng.normal();

  DenseMatrix x = orthonormalize(start);
  DenseMatrix p(n, 0);
  DenseVector theta;

  auto rayleigh_ritz = [&](const DenseMatrix& basis) {
    DenseMatrix s = basis.transpose() * a * basis;
    s = 0.5 * (s + s.transpose());
    const std::vector<EigenPair> ritz = jacobi_eigh(s);
    const Eigen::Index keep = std::min<Eigen::Index>(block, static_cast<Eigen::Index>(ritz.size()));
    DenseMatrix y(basis.cols(), keep);
    theta.resize(keep);
    for (Eigen::Index j = 0; j < keep; ++j) {
      y.col(j) = ritz[j].vector;
      theta(j) = ritz[j].value;
    }
    return DenseMatrix(basis * y);
  };

  x = rayleigh_ritz(x);
  double worst = 0.0;
  for (int iteration = 0; iteration < options.max_iterations; ++iteration) {
    const DenseMatrix ax = a * x;
    const DenseMatrix r = ax - x * theta.asDiagonal();
    worst = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) worst = std::max(worst, r.col(j).norm());
    if (worst <= target) break;

    DenseMatrix span(n, x.cols() + r.cols() + p.cols());
    span << x, r, p;
    const DenseMatrix basis = orthonormalize(span);
    const DenseMatrix next = rayleigh_ritz(basis);
    p = next - x * (x.transpose() * next);
    x = next;
  }
  {
    const DenseMatrix r = a * x - x * theta.asDiagonal();
    worst = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) worst = std::max(worst, r.col(j).norm());
  }
  require(worst <= accept, ErrorCode::NoConvergence,
          "residual " + std::to_string(worst) + " above " + std::to_string(accept) + " after " +
              std::to_string(options.max_iterations) + " iterations");

  std::vector<EigenPair> pairs;
  for (Eigen::Index j = 0; j < k; ++j) {
    DenseVector v = x.col(j);
    v.normalize();
    pairs.push_back({v.dot(a * v), v});
  }
  return finalize(std::move(pairs), norm);
}

}  // namespace

DenseMatrix to_dense(const Tensor& m) {
  require(m.rank() == 2, ErrorCode::ShapeMismatch, "expected a 2-D tensor");
  DenseMatrix out(m.dim(0), m.dim(1));
  for (std::size_t i = 0; i < m.dim(0); ++i)
    for (std::size_t j = 0; j < m.dim(1); ++j) out(i, j) = m[i * m.dim(1) + j];
  return out;
}

DenseMatrix center_columns(const DenseMatrix& m) {
  require(m.rows() >= 1, ErrorCode::EmptyInput, "cannot center zero rows");
  const DenseVector mean = m.colwise().mean().transpose();
  return m.rowwise() - mean.transpose();
}

Tensor center_columns(const Tensor& m) {
  require(m.rank() == 2, ErrorCode::ShapeMismatch, "expected an N x D tensor");
  require(m.dim(0) >= 1, ErrorCode::EmptyInput, "cannot center zero rows");
  const std::size_t rows = m.dim(0);
  const std::size_t cols = m.dim(1);
  std::vector<double> mean(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) mean[j] += m[i * cols + j];
  for (double& v : mean) v /= static_cast<double>(rows);
  Tensor out(m.shape());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out[i * cols + j] = static_cast<float>(static_cast<double>(m[i * cols + j]) - mean[j]);
  return out;
}

void canonicalize_sign(DenseVector& v) {
  if (v.size() == 0) return;
  const double scale = v.cwiseAbs().maxCoeff();
  if (scale == 0.0) return;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-9 * scale) {
      if (v(i) < 0.0) v = -v;
      return;
    }
  }
}

std::vector<EigenPair> jacobi_eigh(const DenseMatrix& input) {
  require(input.rows() == input.cols(), ErrorCode::NotSymmetric, "matrix is not square");
  const Eigen::Index n = input.rows();
  DenseMatrix s = 0.5 * (input + input.transpose());
  DenseMatrix v = DenseMatrix::Identity(n, n);
  const double total = s.norm();

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += s(p, q) * s(p, q);
    if (std::sqrt(2.0 * off) <= 1e-15 * total || off == 0.0) break;

    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = s(p, q);
        if (apq == 0.0) continue;
        const double tau = (s(q, q) - s(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = t * c;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double sip = s(i, p);
          const double siq = s(i, q);
          s(i, p) = c * sip - sn * siq;
          s(i, q) = sn * sip + c * siq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double spi = s(p, i);
          const double sqi = s(q, i);
          s(p, i) = c * spi - sn * sqi;
          s(q, i) = sn * spi + c * sqi;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double vip = v(i, p);
          const double viq = v(i, q);
          v(i, p) = c * vip - sn * viq;
          v(i, q) = sn * vip + c * viq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return s(a, a) > s(b, b); });
  std::vector<EigenPair> pairs;
  pairs.reserve(order.size());
  for (Eigen::Index j : order) pairs.push_back({s(j, j), v.col(j)});
  return pairs;
}

std::vector<EigenPair> topk_eigh(const DenseMatrix& a, Eigen::Index k, const EighOptions& options) {
  check_symmetric(a);
  require(k >= 1 && k <= a.rows(), ErrorCode::KOutOfRange,
          "k=" + std::to_string(k) + " outside [1, " + std::to_string(a.rows()) + "]");
  require(a.allFinite(), ErrorCode::NonFiniteInput, "matrix has non-finite entries");
  const Eigen::Index block = std::max<Eigen::Index>(2 * k, k + 4);
  if (a.rows() <= options.dense_cutoff || 3 * block >= a.rows()) {
    std::vector<EigenPair> all = jacobi_eigh(a);
    all.resize(static_cast<std::size_t>(k));
    return finalize(std::move(all), a.norm());
  }
  return lobpcg(a, k, options);
}

std::vector<EigenPair> topk_eigh(const Tensor& a, Eigen::Index k, const EighOptions& options) {
  return topk_eigh(to_dense(a), k, options);
}

std::vector<EigenPair> topk_eigh_gram(const DenseMatrix& c, Eigen::Index k) {
  const Eigen::Index dim = c.rows();
  require(k >= 1 && k <= dim, ErrorCode::KOutOfRange,
          "k=" + std::to_string(k) + " outside [1, " + std::to_string(dim) + "]");
  require(c.allFinite(), ErrorCode::NonFiniteInput, "cross-covariance has non-finite entries");

  const DenseMatrix gram = c.transpose() * c;
  const std::vector<EigenPair> small = jacobi_eigh(gram);
  const double leading = small.empty() ? 0.0 : std::max(small.front().value, 0.0);

  std::vector<EigenPair> pairs;
  for (const EigenPair& g : small) {
    if (static_cast<Eigen::Index>(pairs.size()) == k) break;
    if (leading <= 0.0 || g.value <= 1e-10 * leading) break;
    DenseVector u = c * g.vector / std::sqrt(g.value);
    for (const EigenPair& prev : pairs) u -= prev.vector.dot(u) * prev.vector;
    u.normalize();
    pairs.push_back({g.value, std::move(u)});
  }
  for (Eigen::Index j = 0; static_cast<Eigen::Index>(pairs.size()) < k && j < dim; ++j) {
    DenseVector u = DenseVector::Unit(dim, j);
    for (int pass = 0; pass < 2; ++pass)
      for (const EigenPair& prev : pairs) u -= prev.vector.dot(u) * prev.vector;
    const double norm = u.norm();
    if (norm < 1e-6) continue;
    u /= norm;
    const double rayleigh = (c.transpose() * u).squaredNorm();
    pairs.push_back({rayleigh, std::move(u)});
  }
  return finalize(std::move(pairs), gram.norm());
}

}  // namespace realsteer
