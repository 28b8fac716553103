#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "realsteer/linalg.hpp"
#include "realsteer/rng.hpp"
#include "realsteer/spatial.hpp"
#include "realsteer/tensor.hpp"

namespace realsteer {

/// Detector hard label. Column 0 of a LabelMatrix is "predicted real"
/// (a false negative when the sample is generated), column 1 "predicted fake".
enum class HardLabel : int { Real = 0, Fake = 1 };

/// N one-hot rows of width 2 stored compactly as hard labels.
class LabelMatrix {
 public:
  LabelMatrix() = default;
  explicit LabelMatrix(std::vector<int> labels);

  std::size_t rows() const noexcept { return labels_.size(); }
  int label(std::size_t i) const { return labels_.at(i); }
  const std::vector<int>& labels() const noexcept { return labels_; }
  std::size_t count(HardLabel which) const noexcept;
  bool both_classes_present() const noexcept;
  /// Dense N x 2 one-hot form.
  DenseMatrix one_hot() const;

 private:
  std::vector<int> labels_;
};

/// Noising coefficients z_t = a_t * z_clean + b_t * eps.
struct NoiseSchedule {
  std::vector<double> a;
  std::vector<double> b;

  std::size_t steps() const noexcept { return a.size(); }
  void validate() const;
  /// a_t = t/T, b_t = 1 - t/T.
  static NoiseSchedule rectified_flow(std::size_t steps);
};

struct TimestepLatents {
  std::size_t t = 0;
  Tensor z;           ///< N x D flattened latents.
  Shape latent_shape; ///< (C, H, W) with C*H*W == D.
};

struct SteeringDirection {
  std::size_t t = 0;
  Tensor delta;                     ///< C x H x W, unit norm.
  std::vector<double> eigenvalues;  ///< Nonincreasing.
  double raw_norm = 0.0;            ///< Norm of the eigenvalue-weighted combination.
  std::string oriented_toward = "predicted-real";
};

struct TransferRecord {
  Shape from;
  Shape to;
  InterpMode mode = InterpMode::Bilinear;
  bool renormalized = true;
};

struct DirectionProvenance {
  std::string generator_id;
  std::string detector_id;
  std::size_t tp_count = 0;
  std::size_t fn_count = 0;
  std::uint64_t seed = 0;
  Shape source_shape;
  std::vector<TransferRecord> transfers;
};

struct DirectionSet {
  std::vector<SteeringDirection> directions;
  Shape latent_shape;
  DirectionProvenance provenance;

  std::size_t steps() const noexcept { return directions.size(); }
  const SteeringDirection& at(std::size_t t) const { return directions.at(t); }
  void validate() const;
};

/// Linear-kernel empirical HSIC, Tr(H K_ZZ H K_YY), evaluated in the factored
/// form ||Z_c^T Y||_F^2 with Z_c the column-centered data.
double hsic_linear(const Tensor& z, const LabelMatrix& y);

/// Unit steering direction at one timestep: top-k eigenpairs of
/// A = Z_c^T Y Y^T Z_c, combined with eigenvalue weights and oriented from
/// the predicted-fake class mean toward the predicted-real class mean.
SteeringDirection compute_direction(const TimestepLatents& zt, const LabelMatrix& y, std::size_t k = 2);

Tensor noise_to_timestep(const Tensor& z_clean, std::size_t t, const NoiseSchedule& schedule, SeededRng& rng);
/// Noise stream keyed by (seed, sample_key, t).
Tensor noise_to_timestep(const Tensor& z_clean, std::size_t t, const NoiseSchedule& schedule, std::uint64_t seed,
                         std::uint64_t sample_key);

/// Digest of a sample's bytes; keys the noise drawn for it so the result does
/// not depend on dataset order.
std::uint64_t sample_key(std::span<const float> sample);

/// One direction per timestep from clean latents (N x C x H x W).
DirectionSet build_direction_set(const Tensor& clean_latents, const LabelMatrix& y, const NoiseSchedule& schedule,
                                 std::uint64_t seed, DirectionProvenance provenance = {}, std::size_t k = 2);

/// Coordinates U^T z on the top-2 supervised eigenvectors (N x 2).
Tensor project_2d(const Tensor& z, const LabelMatrix& y);

}  // namespace realsteer
