#include "realsteer/spca.hpp"

#include <algorithm>
#include <cmath>

#include "realsteer/error.hpp"

namespace realsteer {

LabelMatrix::LabelMatrix(std::vector<int> labels) : labels_(std::move(labels)) {
  for (int v : labels_)
    require(v == 0 || v == 1, ErrorCode::InvalidArgument, "labels must be 0 (real) or 1 (fake)");
}

std::size_t LabelMatrix::count(HardLabel which) const noexcept {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), static_cast<int>(which)));
}

bool LabelMatrix::both_classes_present() const noexcept {
  return count(HardLabel::Real) > 0 && count(HardLabel::Fake) > 0;
}

DenseMatrix LabelMatrix::one_hot() const {
  DenseMatrix y = DenseMatrix::Zero(static_cast<Eigen::Index>(labels_.size()), 2);
  for (std::size_t i = 0; i < labels_.size(); ++i) y(static_cast<Eigen::Index>(i), labels_[i]) = 1.0;
  return y;
}

void NoiseSchedule::validate() const {
  require(!a.empty(), ErrorCode::EmptyInput, "noise schedule has no steps");
  require(a.size() == b.size(), ErrorCode::ShapeMismatch, "noise schedule a/b lengths differ");
  for (std::size_t t = 0; t < a.size(); ++t)
    require(a[t] >= 0.0 && b[t] >= 0.0 && std::isfinite(a[t]) && std::isfinite(b[t]), ErrorCode::InvalidArgument,
            "noise schedule coefficients must be finite and nonnegative");
}

NoiseSchedule NoiseSchedule::rectified_flow(std::size_t steps) {
  require(steps >= 1, ErrorCode::InvalidArgument, "schedule needs at least one step");
  NoiseSchedule s;
  for (std::size_t t = 0; t < steps; ++t) {
    const double frac = static_cast<double>(t) / static_cast<double>(steps);
    s.a.push_back(frac);
    s.b.push_back(1.0 - frac);
  }
  return s;
}

void DirectionSet::validate() const {
  require(!directions.empty(), ErrorCode::EmptyInput, "direction set is empty");
  require(latent_shape.size() == 3, ErrorCode::ShapeMismatch, "latent shape must be (C, H, W)");
  for (std::size_t t = 0; t < directions.size(); ++t) {
    require(directions[t].t == t, ErrorCode::InvalidArgument, "directions must be ordered by timestep");
    require(directions[t].delta.shape() == latent_shape, ErrorCode::ShapeMismatch,
            "direction " + std::to_string(t) + " has shape " + shape_to_string(directions[t].delta.shape()));
  }
}

namespace {

DenseMatrix flatten_rows(const Tensor& z) {
  require(z.rank() >= 2, ErrorCode::ShapeMismatch, "expected N x D latents");
  const auto n = static_cast<Eigen::Index>(z.dim(0));
  const auto d = static_cast<Eigen::Index>(z.record_size());
  DenseMatrix out(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) out(i, j) = z[static_cast<std::size_t>(i * d + j)];
  return out;
}

void check_rows(const Tensor& z, const LabelMatrix& y) {
  require(z.rank() >= 2, ErrorCode::ShapeMismatch, "expected N x D latents");
  require(z.dim(0) == y.rows(), ErrorCode::ShapeMismatch,
          std::to_string(z.dim(0)) + " latent rows vs " + std::to_string(y.rows()) + " labels");
  require(z.dim(0) >= 2, ErrorCode::TooFewSamples, "need at least two samples");
}

// Z_c^T Y as per-class sums of centered rows: column 0 real, column 1 fake.
DenseMatrix cross_covariance(const DenseMatrix& centered, const LabelMatrix& y) {
  DenseMatrix c = DenseMatrix::Zero(centered.cols(), 2);
  for (Eigen::Index i = 0; i < centered.rows(); ++i) c.col(y.label(static_cast<std::size_t>(i))) += centered.row(i).transpose();
  return c;
}

}  // namespace

double hsic_linear(const Tensor& z, const LabelMatrix& y) {
  check_rows(z, y);
  const DenseMatrix centered = center_columns(flatten_rows(z));
  return cross_covariance(centered, y).squaredNorm();
}

SteeringDirection compute_direction(const TimestepLatents& zt, const LabelMatrix& y, std::size_t k) {
  check_rows(zt.z, y);
  require(shape_volume(zt.latent_shape) == zt.z.record_size(), ErrorCode::ShapeMismatch,
          "latent shape " + shape_to_string(zt.latent_shape) + " does not match row length " +
              std::to_string(zt.z.record_size()));
  require(y.both_classes_present(), ErrorCode::DegenerateLabels,
          "both predicted-real and predicted-fake samples are required");

  const DenseMatrix centered = center_columns(flatten_rows(zt.z));
  const DenseMatrix c = cross_covariance(centered, y);
  const std::vector<EigenPair> pairs = topk_eigh_gram(c, static_cast<Eigen::Index>(k));

  DenseVector combined = DenseVector::Zero(c.rows());
  for (const EigenPair& p : pairs) combined += p.value * p.vector;
  const double raw_norm = combined.norm();
  require(raw_norm > 0.0 && std::isfinite(raw_norm), ErrorCode::DegenerateLabels,
          "class means coincide; the supervised kernel is zero");

  const double n_real = static_cast<double>(y.count(HardLabel::Real));
  const double n_fake = static_cast<double>(y.count(HardLabel::Fake));
  const DenseVector toward_real = c.col(0) / n_real - c.col(1) / n_fake;
  if (combined.dot(toward_real) < 0.0) combined = -combined;
  combined /= raw_norm;

  SteeringDirection out;
  out.t = zt.t;
  out.delta = Tensor(zt.latent_shape);
  for (Eigen::Index j = 0; j < combined.size(); ++j) out.delta[static_cast<std::size_t>(j)] = static_cast<float>(combined(j));
  for (const EigenPair& p : pairs) out.eigenvalues.push_back(p.value);
  out.raw_norm = raw_norm;
  return out;
}

Tensor noise_to_timestep(const Tensor& z_clean, std::size_t t, const NoiseSchedule& schedule, SeededRng& rng) {
  schedule.validate();
  require(t < schedule.steps(), ErrorCode::TimestepOutOfRange,
          "timestep " + std::to_string(t) + " outside [0, " + std::to_string(schedule.steps()) + ")");
  const double a = schedule.a[t];
  const double b = schedule.b[t];
  Tensor out(z_clean.shape());
  for (std::size_t i = 0; i < z_clean.size(); ++i) {
    double v = a * z_clean[i];
    if (b != 0.0) v += b * rng.normal();
    out[i] = static_cast<float>(v);
  }
  return out;
}

Tensor noise_to_timestep(const Tensor& z_clean, std::size_t t, const NoiseSchedule& schedule, std::uint64_t seed,
                         std::uint64_t sample) {
  SeededRng rng = SeededRng(seed).derive(sample, t);
  return noise_to_timestep(z_clean, t, schedule, rng);
}

std::uint64_t sample_key(std::span<const float> sample) { return fnv1a64(sample.data(), sample.size_bytes()); }

DirectionSet build_direction_set(const Tensor& clean_latents, const LabelMatrix& y, const NoiseSchedule& schedule,
                                 std::uint64_t seed, DirectionProvenance provenance, std::size_t k) {
  schedule.validate();
  require(clean_latents.rank() == 4, ErrorCode::ShapeMismatch,
          "expected N x C x H x W clean latents, got " + shape_to_string(clean_latents.shape()));
  require(clean_latents.dim(0) == y.rows(), ErrorCode::ShapeMismatch, "latent and label counts differ");
  require(y.both_classes_present(), ErrorCode::DegenerateLabels,
          "both predicted-real and predicted-fake samples are required");

  const std::size_t n = clean_latents.dim(0);
  const std::size_t d = clean_latents.record_size();
  const Shape latent_shape(clean_latents.shape().begin() + 1, clean_latents.shape().end());

  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = sample_key(clean_latents.record(i));

  DirectionSet set;
  set.latent_shape = latent_shape;
  for (std::size_t t = 0; t < schedule.steps(); ++t) {
    TimestepLatents zt{t, Tensor({n, d}), latent_shape};
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor clean(Shape{d}, std::vector<float>(clean_latents.record(i).begin(), clean_latents.record(i).end()));
      const Tensor noised = noise_to_timestep(clean, t, schedule, seed, keys[i]);
      std::copy(noised.values().begin(), noised.values().end(), zt.z.record(i).begin());
    }
    set.directions.push_back(compute_direction(zt, y, k));
  }
  provenance.seed = seed;
  provenance.fn_count = y.count(HardLabel::Real);
  provenance.tp_count = y.count(HardLabel::Fake);
  if (provenance.source_shape.empty()) provenance.source_shape = latent_shape;
  set.provenance = std::move(provenance);
  return set;
}

Tensor project_2d(const Tensor& z, const LabelMatrix& y) {
  check_rows(z, y);
  require(y.both_classes_present(), ErrorCode::DegenerateLabels,
          "both predicted-real and predicted-fake samples are required");
  const DenseMatrix raw = flatten_rows(z);
  require(raw.cols() >= 2, ErrorCode::ShapeMismatch, "projection needs at least two latent dimensions");
  const DenseMatrix c = cross_covariance(center_columns(raw), y);
  const std::vector<EigenPair> pairs = topk_eigh_gram(c, 2);
  Tensor out({z.dim(0), 2});
  for (Eigen::Index i = 0; i < raw.rows(); ++i)
    for (std::size_t j = 0; j < 2; ++j)
      out[static_cast<std::size_t>(i) * 2 + j] = static_cast<float>(raw.row(i).dot(pairs[j].vector));
  return out;
}

}  // namespace realsteer
