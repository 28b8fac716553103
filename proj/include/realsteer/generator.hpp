#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "realsteer/spca.hpp"
#include "realsteer/steering.hpp"
#include "realsteer/tensor.hpp"

namespace realsteer {

/// Shape of the toy latent distribution. Clean latents are
///   z_T = mu_c + artifact_mean * phi + content_scale * P z_0 + perturbation * sum_t xi_t
/// where P projects onto a low-dimensional content subspace (low-frequency
/// cosine modes per channel plus one checkerboard "generator artifact" mode phi).
struct ToyParameters {
  double content_scale = 1.0;
  double perturbation = 0.02;
  double artifact_mean = 4.0;
  std::size_t modes_per_axis = 2;
  std::size_t image_channels = 3;
  double decoder_gain = 0.5;
  double class_radius = 3.0;

  friend bool operator==(const ToyParameters&, const ToyParameters&) = default;
};

/// Linear decoder x = clamp(W z + bias, lo, hi). The toy W mixes channels per
/// pixel, so it is resolution-consistent; `mixing` holds the per-pixel block.
struct DecoderSpec {
  std::string kind = "linear";
  Shape image_shape;
  Tensor weights;  ///< D_img x D.
  Tensor bias;     ///< D_img.
  Tensor mixing;   ///< image_channels x C.
  float clamp_lo = 0.0f;
  float clamp_hi = 1.0f;
};

struct GeneratorManifest {
  std::string id;
  std::uint64_t seed = 0;
  Shape latent_shape;  ///< (C, H, W)
  NoiseSchedule schedule;
  std::size_t class_count = 0;
  ToyParameters toy;
  DecoderSpec decoder;
  Tensor class_means;    ///< class_count x D
  Tensor content_basis;  ///< r x D, orthonormal rows; the last row is the artifact mode.

  std::size_t steps() const noexcept { return schedule.steps(); }
  std::size_t latent_size() const { return shape_volume(latent_shape); }
  std::span<const float> artifact() const { return content_basis.record(content_basis.dim(0) - 1); }
};

struct Prompt {
  std::optional<std::string> text;
  std::optional<int> class_id;

  static Prompt of_class(int id) { return Prompt{std::nullopt, id}; }
  static Prompt of_text(std::string t) { return Prompt{std::move(t), std::nullopt}; }
  void validate(std::size_t class_count) const;
  std::string describe() const;
  friend bool operator==(const Prompt&, const Prompt&) = default;
};

/// Latents z_0 (noise) ... z_T (clean) of one sampling run.
struct LatentTrajectory {
  std::vector<Tensor> latents;
  std::vector<Tensor> velocities;
  std::vector<double> lambdas;
  std::uint64_t seed = 0;
  Prompt prompt;

  const Tensor& clean() const { return latents.back(); }
};

/// Directions plus per-step magnitudes. A schedule (lambda, a, b) expands to
/// magnitudes via lambda_profile.
struct SteeringPlan {
  const DirectionSet* directions = nullptr;
  std::vector<double> lambdas;

  static SteeringPlan from_schedule(const DirectionSet& directions, const SteeringSchedule& schedule);
};

GeneratorManifest make_toy_manifest(std::uint64_t seed, std::size_t steps, Shape latent_shape, std::size_t class_count,
                                    ToyParameters toy = {});

/// Orthonormal content basis for a latent shape (smooth modes, then artifact).
Tensor toy_content_basis(const Shape& latent_shape, std::size_t modes_per_axis, const Tensor& mixing);

LatentTrajectory sample_trajectory(const GeneratorManifest& manifest, const Prompt& prompt, std::uint64_t seed,
                                   const SteeringPlan* steering = nullptr);

/// Re-applies recorded velocities and magnitudes from z_0.
Tensor replay_trajectory(const LatentTrajectory& trajectory, const DirectionSet* directions);

Tensor decode_latent(const GeneratorManifest& manifest, const Tensor& z);

/// A sample of the toy "real data" distribution: the generator's content
/// distribution without the artifact offset, rendered by the same decoder.
Tensor sample_real_latent(const GeneratorManifest& manifest, const Prompt& prompt, std::uint64_t seed);

struct ToyDetectorOptions {
  std::uint64_t seed = 1;
  double target_fnr = 0.15;
  std::size_t pilot_samples = 2000;
  /// Share of the planted direction on the artifact mode, as an angle from the
  /// smooth content subspace.
  double artifact_angle = 0.7853981633974483;
  double logit_gain = 2.0;
};

/// Logistic detector over decoded images, score = sigmoid(w . x + bias),
/// labelling fake when score >= threshold.
struct ToyLinearParams {
  Tensor weights;  ///< Image-shaped.
  double bias = 0.0;
  double threshold = 0.5;
  Tensor planted_direction;  ///< Latent-shaped, unit norm, equals -normalize(W^T w).
};

/// Plants a toy-linear detector for a manifest: its latent pullback lies in
/// the decoder row space and the content subspace, is orthogonal to every
/// class mean, and its bias is set so the given fraction of unsteered samples
/// scores below the threshold.
ToyLinearParams plant_toy_linear(const GeneratorManifest& manifest, const ToyDetectorOptions& options = {});

double toy_linear_logit(const ToyLinearParams& params, const Tensor& image);

}  // namespace realsteer
