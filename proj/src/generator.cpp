#include "realsteer/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "realsteer/error.hpp"
#include "realsteer/linalg.hpp"
#include "realsteer/rng.hpp"

namespace realsteer {

namespace {

constexpr std::uint64_t kNoiseStream = 1;
constexpr std::uint64_t kPerturbStream = 2;
constexpr std::uint64_t kRealStream = 3;

DenseVector as_dense(std::span<const float> values) {
  DenseVector out(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) out(static_cast<Eigen::Index>(i)) = values[i];
  return out;
}

Tensor as_tensor(const DenseVector& v, Shape shape) {
  Tensor out(std::move(shape));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
  return out;
}

DenseMatrix basis_matrix(const Tensor& basis) {
  DenseMatrix out(static_cast<Eigen::Index>(basis.dim(1)), static_cast<Eigen::Index>(basis.dim(0)));
  for (std::size_t j = 0; j < basis.dim(0); ++j) out.col(static_cast<Eigen::Index>(j)) = as_dense(basis.record(j));
  return out;
}

// Spatial cosine modes cos(pi f (y + 0.5) / H) cos(pi g (x + 0.5) / W), f, g < modes.
std::vector<DenseVector> spatial_modes(std::size_t h, std::size_t w, std::size_t modes) {
  std::vector<DenseVector> out;
  for (std::size_t fy = 0; fy < modes; ++fy) {
    for (std::size_t fx = 0; fx < modes; ++fx) {
      DenseVector m(static_cast<Eigen::Index>(h * w));
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          m(static_cast<Eigen::Index>(y * w + x)) =
              std::cos(std::numbers::pi * static_cast<double>(fy) * (static_cast<double>(y) + 0.5) / static_cast<double>(h)) *
              std::cos(std::numbers::pi * static_cast<double>(fx) * (static_cast<double>(x) + 0.5) / static_cast<double>(w));
      m.normalize();
      out.push_back(std::move(m));
    }
  }
  return out;
}

DenseVector channel_field(const DenseVector& channel_weights, const DenseVector& plane) {
  const Eigen::Index hw = plane.size();
  DenseVector out(channel_weights.size() * hw);
  for (Eigen::Index c = 0; c < channel_weights.size(); ++c) out.segment(c * hw, hw) = channel_weights(c) * plane;
  return out;
}

void orthogonalize_against(DenseVector& v, const std::vector<DenseVector>& basis) {
  for (int pass = 0; pass < 2; ++pass)
    for (const DenseVector& b : basis) v -= b.dot(v) * b;
}

int class_of(const Prompt& prompt, std::size_t class_count) {
  prompt.validate(class_count);
  if (prompt.class_id) return *prompt.class_id;
  const std::string& text = *prompt.text;
  return static_cast<int>(fnv1a64(text.data(), text.size()) % class_count);
}

// mu_c + artifact_mean * phi + content_scale * P z, in double.
DenseVector content_target(const GeneratorManifest& m, int cls, const DenseVector& z, bool with_artifact) {
  const DenseMatrix basis = basis_matrix(m.content_basis);
  DenseVector target = as_dense(m.class_means.record(static_cast<std::size_t>(cls)));
  target += m.toy.content_scale * (basis * (basis.transpose() * z));
  if (with_artifact) target += m.toy.artifact_mean * as_dense(m.artifact());
  return target;
}

}  // namespace

void Prompt::validate(std::size_t class_count) const {
  require(text.has_value() != class_id.has_value(), ErrorCode::InvalidArgument,
          "a prompt carries exactly one of text or class id");
  if (class_id)
    require(*class_id >= 0 && static_cast<std::size_t>(*class_id) < class_count, ErrorCode::InvalidArgument,
            "class id " + std::to_string(*class_id) + " outside [0, " + std::to_string(class_count) + ")");
}

std::string Prompt::describe() const { return class_id ? "class:" + std::to_string(*class_id) : "text:" + *text; }

SteeringPlan SteeringPlan::from_schedule(const DirectionSet& directions, const SteeringSchedule& schedule) {
  return SteeringPlan{&directions, lambda_profile(schedule)};
}

Tensor toy_content_basis(const Shape& latent_shape, std::size_t modes_per_axis, const Tensor& mixing) {
  require(latent_shape.size() == 3, ErrorCode::ShapeMismatch, "latent shape must be (C, H, W)");
  const std::size_t channels = latent_shape[0];
  const std::size_t h = latent_shape[1];
  const std::size_t w = latent_shape[2];
  require(channels >= 1 && h >= 1 && w >= 1, ErrorCode::ZeroExtent, "latent shape has a zero extent");
  require(mixing.rank() == 2 && mixing.dim(1) == channels, ErrorCode::ShapeMismatch, "mixing must be K x C");

  // Channel profiles the decoder can see: orthonormalized rows of the mixing.
  std::vector<DenseVector> profiles;
  for (std::size_t k = 0; k < mixing.dim(0); ++k) {
    DenseVector row = as_dense(mixing.record(k));
    orthogonalize_against(row, profiles);
    if (row.norm() > 1e-9) profiles.push_back(row.normalized());
  }
  std::vector<DenseVector> basis;
  for (const DenseVector& plane : spatial_modes(h, w, std::min({modes_per_axis, h, w})))
    for (const DenseVector& profile : profiles) basis.push_back(channel_field(profile, plane));

  // Artifact: checkerboard whose channel profile is visible through the decoder.
  DenseVector profile = DenseVector::Zero(static_cast<Eigen::Index>(channels));
  for (std::size_t k = 0; k < mixing.dim(0); ++k) profile += as_dense(mixing.record(k));
  profile.normalize();
  DenseVector checker(static_cast<Eigen::Index>(h * w));
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) checker(static_cast<Eigen::Index>(y * w + x)) = ((x + y) % 2 == 0) ? 1.0 : -1.0;
  DenseVector artifact = channel_field(profile, checker);
  orthogonalize_against(artifact, basis);
  require(artifact.norm() > 1e-6, ErrorCode::ZeroExtent, "latent too small for an artifact mode");
  artifact.normalize();
  basis.push_back(std::move(artifact));

  Tensor out({basis.size(), channels * h * w});
  for (std::size_t j = 0; j < basis.size(); ++j)
    for (Eigen::Index i = 0; i < basis[j].size(); ++i) out[j * out.dim(1) + static_cast<std::size_t>(i)] = static_cast<float>(basis[j](i));
  return out;
}

GeneratorManifest make_toy_manifest(std::uint64_t seed, std::size_t steps, Shape latent_shape, std::size_t class_count,
                                    ToyParameters toy) {
  require(class_count >= 1, ErrorCode::ZeroClasses, "toy generator needs at least one class");
  require(steps >= 1, ErrorCode::InvalidArgument, "toy generator needs at least one step");
  require(latent_shape.size() == 3, ErrorCode::ShapeMismatch, "latent shape must be (C, H, W)");
  require(toy.image_channels >= 1 && toy.modes_per_axis >= 1, ErrorCode::InvalidArgument, "invalid toy parameters");

  GeneratorManifest m;
  m.id = "toy-flow-v1";
  m.seed = seed;
  m.latent_shape = latent_shape;
  m.schedule = NoiseSchedule::rectified_flow(steps);
  m.class_count = class_count;
  m.toy = toy;

  const std::size_t channels = latent_shape[0];
  const std::size_t pixels = latent_shape[1] * latent_shape[2];
  const std::size_t d = channels * pixels;

  // Decoder mixing depends only on the seed and channel counts, so every
  // resolution of the same seed shares it.
  SeededRng mix_rng = SeededRng(seed).derive(0x6D6978);
  m.decoder.mixing = Tensor({toy.image_channels, channels});
  const double scale = toy.decoder_gain / std::sqrt(static_cast<double>(channels));
  for (float& v : m.decoder.mixing.values()) v = static_cast<float>(scale * mix_rng.normal());

  m.decoder.image_shape = {toy.image_channels, latent_shape[1], latent_shape[2]};
  const std::size_t d_img = toy.image_channels * pixels;
  m.decoder.weights = Tensor({d_img, d});
  for (std::size_t k = 0; k < toy.image_channels; ++k)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t p = 0; p < pixels; ++p) m.decoder.weights[(k * pixels + p) * d + c * pixels + p] = m.decoder.mixing[k * channels + c];
  m.decoder.bias = Tensor({d_img}, 0.5f);

  m.content_basis = toy_content_basis(latent_shape, toy.modes_per_axis, m.decoder.mixing);
  const std::size_t smooth = m.content_basis.dim(0) - 1;
  SeededRng mean_rng = SeededRng(seed).derive(0x6D65616E);
  m.class_means = Tensor({class_count, d});
  for (std::size_t c = 0; c < class_count; ++c) {
    DenseVector coef(static_cast<Eigen::Index>(smooth));
    for (Eigen::Index j = 0; j < coef.size(); ++j) coef(j) = mean_rng.normal();
    coef *= toy.class_radius / coef.norm();
    DenseVector mean = DenseVector::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < smooth; ++j) mean += coef(static_cast<Eigen::Index>(j)) * as_dense(m.content_basis.record(j));
    for (std::size_t i = 0; i < d; ++i) m.class_means[c * d + i] = static_cast<float>(mean(static_cast<Eigen::Index>(i)));
  }
  return m;
}

LatentTrajectory sample_trajectory(const GeneratorManifest& manifest, const Prompt& prompt, std::uint64_t seed,
                                   const SteeringPlan* steering) {
  const int cls = class_of(prompt, manifest.class_count);
  const std::size_t steps = manifest.steps();
  const std::size_t d = manifest.latent_size();
  if (steering) {
    require(steering->directions != nullptr, ErrorCode::InvalidArgument, "steering plan without directions");
    require(steering->directions->steps() == steps, ErrorCode::ShapeMismatch,
            "direction set has " + std::to_string(steering->directions->steps()) + " steps, generator " +
                std::to_string(steps));
    require(steering->directions->latent_shape == manifest.latent_shape, ErrorCode::ShapeMismatch,
            "direction set shape " + shape_to_string(steering->directions->latent_shape) + " vs generator " +
                shape_to_string(manifest.latent_shape));
    require(steering->lambdas.size() == steps, ErrorCode::ShapeMismatch, "one magnitude per step required");
  }

  const SeededRng root(seed);
  SeededRng noise = root.derive(kNoiseStream);
  DenseVector z0(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < z0.size(); ++i) z0(i) = noise.normal();
  const DenseVector drift = (content_target(manifest, cls, z0, true) - z0) / static_cast<double>(steps);

  LatentTrajectory traj;
  traj.seed = seed;
  traj.prompt = prompt;
  traj.latents.push_back(as_tensor(z0, manifest.latent_shape));
  const Tensor no_direction;
  for (std::size_t t = 0; t < steps; ++t) {
    SeededRng perturb = root.derive(kPerturbStream, t);
    Tensor v(manifest.latent_shape);
    for (std::size_t i = 0; i < d; ++i)
      v[i] = static_cast<float>(drift(static_cast<Eigen::Index>(i)) + manifest.toy.perturbation * perturb.normal());
    const double lambda = steering ? steering->lambdas[t] : 0.0;
    const Tensor& delta = steering ? steering->directions->at(t).delta : no_direction;
    traj.latents.push_back(apply_step(traj.latents.back(), v, lambda, delta));
    traj.velocities.push_back(std::move(v));
    traj.lambdas.push_back(lambda);
  }
  return traj;
}

Tensor replay_trajectory(const LatentTrajectory& trajectory, const DirectionSet* directions) {
  require(!trajectory.latents.empty(), ErrorCode::EmptyInput, "empty trajectory");
  Tensor z = trajectory.latents.front();
  const Tensor no_direction;
  for (std::size_t t = 0; t < trajectory.velocities.size(); ++t) {
    const double lambda = trajectory.lambdas.at(t);
    require(lambda == 0.0 || directions != nullptr, ErrorCode::InvalidArgument, "steered trajectory needs directions");
    z = apply_step(z, trajectory.velocities[t], lambda, lambda == 0.0 ? no_direction : directions->at(t).delta);
  }
  return z;
}

Tensor decode_latent(const GeneratorManifest& manifest, const Tensor& z) {
  const DecoderSpec& dec = manifest.decoder;
  const std::size_t d = manifest.latent_size();
  require(z.size() == d && (z.shape() == manifest.latent_shape || z.rank() == 1), ErrorCode::ShapeMismatch,
          "latent " + shape_to_string(z.shape()) + " vs manifest " + shape_to_string(manifest.latent_shape));
  const std::size_t d_img = dec.weights.dim(0);
  Tensor image(dec.image_shape);
  for (std::size_t r = 0; r < d_img; ++r) {
    const float* row = dec.weights.data() + r * d;
    double acc = dec.bias[r];
    for (std::size_t i = 0; i < d; ++i) acc += static_cast<double>(row[i]) * z[i];
    image[r] = static_cast<float>(std::clamp(acc, static_cast<double>(dec.clamp_lo), static_cast<double>(dec.clamp_hi)));
  }
  return image;
}

Tensor sample_real_latent(const GeneratorManifest& manifest, const Prompt& prompt, std::uint64_t seed) {
  const int cls = class_of(prompt, manifest.class_count);
  const std::size_t d = manifest.latent_size();
  SeededRng rng = SeededRng(seed).derive(kRealStream);
  DenseVector z(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  DenseVector out = content_target(manifest, cls, z, false);
  const double spread = manifest.toy.perturbation * std::sqrt(static_cast<double>(manifest.steps()));
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += spread * rng.normal();
  return as_tensor(out, manifest.latent_shape);
}

double toy_linear_logit(const ToyLinearParams& params, const Tensor& image) {
  require(image.size() == params.weights.size(), ErrorCode::ShapeMismatch,
          "image " + shape_to_string(image.shape()) + " vs detector " + shape_to_string(params.weights.shape()));
  return dot(params.weights.values(), image.values()) + params.bias;
}

ToyLinearParams plant_toy_linear(const GeneratorManifest& manifest, const ToyDetectorOptions& options) {
  require(options.target_fnr > 0.0 && options.target_fnr < 1.0, ErrorCode::InvalidArgument, "target FNR must be in (0, 1)");
  require(options.pilot_samples >= 1, ErrorCode::InvalidArgument, "pilot needs samples");
  const std::size_t channels = manifest.latent_shape[0];
  const std::size_t h = manifest.latent_shape[1];
  const std::size_t w = manifest.latent_shape[2];
  const std::size_t pixels = h * w;
  const std::size_t k_img = manifest.decoder.mixing.dim(0);
  const DenseMatrix mixing = to_dense(manifest.decoder.mixing);  // K x C

  // Smooth directions visible through the decoder: M^T e_k on each cosine mode.
  std::vector<DenseVector> visible;
  for (const DenseVector& plane : spatial_modes(h, w, std::min({manifest.toy.modes_per_axis, h, w}))) {
    for (std::size_t k = 0; k < k_img; ++k) {
      DenseVector v = channel_field(mixing.row(static_cast<Eigen::Index>(k)).transpose(), plane);
      orthogonalize_against(v, visible);
      if (v.norm() < 1e-9) continue;
      visible.push_back(v.normalized());
    }
  }
  std::vector<DenseVector> class_parts;
  for (std::size_t c = 0; c < manifest.class_count; ++c) {
    const DenseVector mean = as_dense(manifest.class_means.record(c));
    DenseVector part = DenseVector::Zero(mean.size());
    for (const DenseVector& v : visible) part += v.dot(mean) * v;
    orthogonalize_against(part, class_parts);
    if (part.norm() > 1e-9) class_parts.push_back(part.normalized());
  }
  SeededRng rng = SeededRng(options.seed).derive(0x706C616E74);
  DenseVector smooth = DenseVector::Zero(static_cast<Eigen::Index>(manifest.latent_size()));
  for (const DenseVector& v : visible) smooth += rng.normal() * v;
  orthogonalize_against(smooth, class_parts);
  require(smooth.norm() > 1e-9, ErrorCode::InvalidArgument, "no visible direction orthogonal to the class means");
  smooth.normalize();

  const DenseVector artifact = as_dense(manifest.artifact());
  const DenseVector direction =
      std::cos(options.artifact_angle) * smooth + std::sin(options.artifact_angle) * artifact;
  const DenseVector pullback = options.logit_gain * direction.normalized();

  // w_p = (M M^T)^{-1} M g_p recovers W^T w = g for g in the decoder row space.
  const DenseMatrix solve = (mixing * mixing.transpose()).ldlt().solve(mixing);  // K x C
  ToyLinearParams params;
  params.weights = Tensor(manifest.decoder.image_shape);
  for (std::size_t p = 0; p < pixels; ++p) {
    DenseVector gp(static_cast<Eigen::Index>(channels));
    for (std::size_t c = 0; c < channels; ++c) gp(static_cast<Eigen::Index>(c)) = pullback(static_cast<Eigen::Index>(c * pixels + p));
    const DenseVector wp = solve * gp;
    for (std::size_t k = 0; k < k_img; ++k) params.weights[k * pixels + p] = static_cast<float>(wp(static_cast<Eigen::Index>(k)));
  }
  params.planted_direction = as_tensor(-direction.normalized(), manifest.latent_shape);

  std::vector<double> logits;
  logits.reserve(options.pilot_samples);
  const std::uint64_t pilot_seed = derive_seed(options.seed, 0x70696C6F74);
  for (std::size_t i = 0; i < options.pilot_samples; ++i) {
    const Prompt prompt = Prompt::of_class(static_cast<int>(i % manifest.class_count));
    const LatentTrajectory traj = sample_trajectory(manifest, prompt, derive_seed(pilot_seed, i));
    logits.push_back(toy_linear_logit(params, decode_latent(manifest, traj.clean())));
  }
  std::sort(logits.begin(), logits.end());
  const auto cut = static_cast<std::size_t>(options.target_fnr * static_cast<double>(logits.size()));
  params.bias = -logits[std::min(cut, logits.size() - 1)];
  params.threshold = 0.5;
  return params;
}

}  // namespace realsteer
