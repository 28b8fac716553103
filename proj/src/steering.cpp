#include "realsteer/steering.hpp"

#include <cmath>

#include "realsteer/error.hpp"

namespace realsteer {

void SteeringSchedule::validate() const {
  require(std::isfinite(lambda) && lambda >= 0.0, ErrorCode::InvalidArgument, "lambda must be finite and >= 0");
  require(start <= end && end < steps, ErrorCode::InvalidArgument,
          "interval [" + std::to_string(start) + ", " + std::to_string(end) + "] invalid for " + std::to_string(steps) +
              " steps");
}

double lambda_at(const SteeringSchedule& schedule, std::size_t t) {
  require(t < schedule.steps, ErrorCode::TimestepOutOfRange,
          "timestep " + std::to_string(t) + " outside [0, " + std::to_string(schedule.steps) + ")");
  return (schedule.start <= t && t <= schedule.end) ? schedule.lambda : 0.0;
}

std::vector<double> lambda_profile(const SteeringSchedule& schedule) {
  schedule.validate();
  std::vector<double> out(schedule.steps);
  for (std::size_t t = 0; t < schedule.steps; ++t) out[t] = lambda_at(schedule, t);
  return out;
}

Tensor apply_step(const Tensor& z_prev, const Tensor& v, double lambda_t, const Tensor& delta) {
  require(z_prev.shape() == v.shape(), ErrorCode::ShapeMismatch,
          "latent " + shape_to_string(z_prev.shape()) + " vs velocity " + shape_to_string(v.shape()));
  Tensor out(z_prev.shape());
  if (lambda_t == 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = z_prev[i] + v[i];
    return out;
  }
  require(z_prev.shape() == delta.shape(), ErrorCode::ShapeMismatch,
          "latent " + shape_to_string(z_prev.shape()) + " vs direction " + shape_to_string(delta.shape()));
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(static_cast<double>(z_prev[i]) + v[i] + lambda_t * delta[i]);
  return out;
}

DirectionSet transfer_direction_set(const DirectionSet& set, const TransferConfig& config) {
  set.validate();
  require(config.height >= 1 && config.width >= 1, ErrorCode::ZeroExtent, "transfer target has zero extent");

  DirectionSet out;
  out.latent_shape = {set.latent_shape[0], config.height, config.width};
  out.provenance = set.provenance;
  out.provenance.transfers.push_back({set.latent_shape, out.latent_shape, config.mode, config.renormalize});

  for (const SteeringDirection& d : set.directions) {
    SteeringDirection moved = d;
    moved.delta = interpolate_spatial(d.delta, config.height, config.width, config.mode);
    const double norm = l2_norm(moved.delta.values());
    moved.raw_norm = d.raw_norm * norm;
    if (config.renormalize && norm > 0.0) {
      for (float& v : moved.delta.values()) v = static_cast<float>(v / norm);
    } else {
      moved.raw_norm = d.raw_norm;
    }
    out.directions.push_back(std::move(moved));
  }
  return out;
}

}  // namespace realsteer
