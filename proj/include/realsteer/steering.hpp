#pragma once

#include <cstddef>
#include <vector>

#include "realsteer/spatial.hpp"
#include "realsteer/spca.hpp"
#include "realsteer/tensor.hpp"

namespace realsteer {

/// Constant magnitude over an inclusive timestep interval [start, end].
struct SteeringSchedule {
  double lambda = 0.0;
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t steps = 1;

  void validate() const;
  friend bool operator==(const SteeringSchedule&, const SteeringSchedule&) = default;
};

double lambda_at(const SteeringSchedule& schedule, std::size_t t);

/// Per-step magnitudes lambda_0..lambda_{T-1} of a schedule.
std::vector<double> lambda_profile(const SteeringSchedule& schedule);

/// z_prev + v + lambda_t * delta, accumulated in double. lambda_t == 0 returns
/// exactly z_prev + v.
Tensor apply_step(const Tensor& z_prev, const Tensor& v, double lambda_t, const Tensor& delta);

struct TransferConfig {
  std::size_t height = 0;
  std::size_t width = 0;
  InterpMode mode = InterpMode::Bilinear;
  bool renormalize = true;
};

/// Resamples every direction to (C, height, width). raw_norm is rescaled to
/// the norm of the interpolated unnormalized direction so raw_norm * delta
/// still equals Interp(original raw direction).
DirectionSet transfer_direction_set(const DirectionSet& set, const TransferConfig& config);

}  // namespace realsteer
