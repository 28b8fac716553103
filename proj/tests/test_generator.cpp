#include <doctest.h>

#include <cmath>

#include "realsteer/generator.hpp"
#include "test_helpers.hpp"

using namespace realsteer;
using testing::code_of;

namespace {

const GeneratorManifest& toy() {
  static const GeneratorManifest m = make_toy_manifest(0, 8, {4, 8, 8}, 4);
  return m;
}

DirectionSet repeat_direction(const GeneratorManifest& m, const Tensor& delta) {
  DirectionSet set;
  set.latent_shape = m.latent_shape;
  for (std::size_t t = 0; t < m.steps(); ++t) {
    SteeringDirection d;
    d.t = t;
    d.delta = delta.reshaped(m.latent_shape);
    d.raw_norm = 1.0;
    set.directions.push_back(d);
  }
  return set;
}

}  // namespace

TEST_SUITE("generator") {
  TEST_CASE("manifest construction") {
    const GeneratorManifest a = make_toy_manifest(3, 8, {4, 8, 8}, 4);
    const GeneratorManifest b = make_toy_manifest(3, 8, {4, 8, 8}, 4);
    CHECK(a.class_means == b.class_means);
    CHECK(a.decoder.weights == b.decoder.weights);
    CHECK(a.content_basis == b.content_basis);
    CHECK_FALSE(a.class_means == make_toy_manifest(4, 8, {4, 8, 8}, 4).class_means);
    for (std::size_t t = 0; t < 8; ++t) CHECK(a.schedule.a[t] == static_cast<double>(t) / 8.0);
    CHECK(code_of([] { make_toy_manifest(0, 8, {4, 8, 8}, 0); }) == ErrorCode::ZeroClasses);
    CHECK(code_of([] { make_toy_manifest(0, 8, {4, 8}, 2); }) == ErrorCode::ShapeMismatch);

    // Content basis rows are orthonormal.
    const Tensor& basis = a.content_basis;
    for (std::size_t i = 0; i < basis.dim(0); ++i)
      for (std::size_t j = 0; j < basis.dim(0); ++j)
        CHECK(dot(basis.record(i), basis.record(j)) == doctest::Approx(i == j ? 1.0 : 0.0));
  }

  TEST_CASE("prompts") {
    CHECK(code_of([] { Prompt::of_class(4).validate(4); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { Prompt{}.validate(4); }) == ErrorCode::InvalidArgument);
    const auto a = sample_trajectory(toy(), Prompt::of_text("a red barn"), 5);
    const auto b = sample_trajectory(toy(), Prompt::of_text("a red barn"), 5);
    CHECK(a.clean() == b.clean());
  }

  TEST_CASE("trajectories are deterministic") {
    const auto a = sample_trajectory(toy(), Prompt::of_class(1), 42);
    const auto b = sample_trajectory(toy(), Prompt::of_class(1), 42);
    REQUIRE(a.latents.size() == 9);
    for (std::size_t t = 0; t < a.latents.size(); ++t) CHECK(a.latents[t] == b.latents[t]);
    CHECK_FALSE(a.clean() == sample_trajectory(toy(), Prompt::of_class(1), 43).clean());

    const DirectionSet set = repeat_direction(toy(), Tensor({toy().latent_size()}, 0.0625f));
    const SteeringPlan plan = SteeringPlan::from_schedule(set, {1.5, 2, 6, 8});
    CHECK(sample_trajectory(toy(), Prompt::of_class(1), 42, &plan).clean() ==
          sample_trajectory(toy(), Prompt::of_class(1), 42, &plan).clean());
  }

  TEST_CASE("zero magnitude steering reproduces the unsteered trajectory") {
    const DirectionSet set = repeat_direction(toy(), Tensor({toy().latent_size()}, 0.0625f));
    const SteeringPlan plan = SteeringPlan::from_schedule(set, {0.0, 0, 7, 8});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto plain = sample_trajectory(toy(), Prompt::of_class(static_cast<int>(seed % 4)), seed);
      const auto zero = sample_trajectory(toy(), Prompt::of_class(static_cast<int>(seed % 4)), seed, &plan);
      for (std::size_t t = 0; t < plain.latents.size(); ++t) CHECK(plain.latents[t] == zero.latents[t]);
    }
  }

  TEST_CASE("steering displaces the clean latent by the summed magnitudes") {
    const Tensor delta({toy().latent_size()}, 0.0625f);
    const DirectionSet set = repeat_direction(toy(), delta);
    const SteeringPlan plan = SteeringPlan::from_schedule(set, {2.0, 3, 5, 8});
    const auto plain = sample_trajectory(toy(), Prompt::of_class(0), 9);
    const auto steered = sample_trajectory(toy(), Prompt::of_class(0), 9, &plan);
    for (std::size_t i = 0; i < delta.size(); ++i) CHECK(steered.clean()[i] - plain.clean()[i] == doctest::Approx(6.0 * 0.0625).epsilon(1e-4));
    CHECK(replay_trajectory(steered, &set) == steered.clean());
    CHECK(replay_trajectory(plain, nullptr) == plain.clean());
    CHECK(code_of([&] { replay_trajectory(steered, nullptr); }) == ErrorCode::InvalidArgument);
  }

  TEST_CASE("steering plan shape checks") {
    const GeneratorManifest other = make_toy_manifest(0, 8, {4, 4, 4}, 4);
    const DirectionSet set = repeat_direction(other, Tensor({other.latent_size()}, 0.125f));
    const SteeringPlan plan = SteeringPlan::from_schedule(set, {1.0, 0, 7, 8});
    CHECK(code_of([&] { sample_trajectory(toy(), Prompt::of_class(0), 1, &plan); }) == ErrorCode::ShapeMismatch);
  }

  TEST_CASE("clean latent mean per class") {
    // E[z_T] = mu_c + artifact_mean * phi: content noise and perturbations are zero mean.
    const GeneratorManifest& m = toy();
    const std::size_t d = m.latent_size();
    for (int cls = 0; cls < 2; ++cls) {
      std::vector<double> mean(d, 0.0);
      for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const Tensor z = sample_trajectory(m, Prompt::of_class(cls), seed).clean();
        for (std::size_t i = 0; i < d; ++i) mean[i] += z[i] / 1000.0;
      }
      const auto mu = m.class_means.record(static_cast<std::size_t>(cls));
      const auto phi = m.artifact();
      double err = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double e = mean[i] - (mu[i] + m.toy.artifact_mean * phi[i]);
        err += e * e;
      }
      CHECK(std::sqrt(err) <= 0.15 * l2_norm(mu));
      CHECK(std::abs(dot(mu, phi)) < 1e-5);
    }
  }

  TEST_CASE("decoder") {
    const GeneratorManifest& m = toy();
    const std::size_t d = m.latent_size();
    const Tensor zero(m.latent_shape);
    const Tensor img = decode_latent(m, zero);
    CHECK(img.shape() == m.decoder.image_shape);
    for (std::size_t r = 0; r < img.size(); ++r) CHECK(img[r] == std::clamp(m.decoder.bias[r], 0.0f, 1.0f));
    for (std::size_t i : {std::size_t{0}, std::size_t{77}, d - 1}) {
      Tensor e(m.latent_shape);
      e[i] = 1.0f;
      const Tensor x = decode_latent(m, e);
      for (std::size_t r = 0; r < x.size(); ++r) {
        const float expect = m.decoder.bias[r] + m.decoder.weights[r * d + i];
        REQUIRE(expect > 0.0f);
        REQUIRE(expect < 1.0f);
        CHECK(x[r] == doctest::Approx(expect).epsilon(1e-6));
      }
    }
    CHECK(code_of([&] { decode_latent(m, Tensor({3})); }) == ErrorCode::ShapeMismatch);
  }

  TEST_CASE("real proxy excludes the artifact offset") {
    const GeneratorManifest& m = toy();
    double gen = 0.0, real = 0.0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      gen += dot(sample_trajectory(m, Prompt::of_class(2), seed).clean().values(), m.artifact()) / 200;
      real += dot(sample_real_latent(m, Prompt::of_class(2), seed).values(), m.artifact()) / 200;
    }
    CHECK(gen == doctest::Approx(m.toy.artifact_mean).epsilon(0.1));
    CHECK(std::abs(real) < 0.3);
  }

  TEST_CASE("planted detector") {
    const GeneratorManifest& m = toy();
    const ToyLinearParams p = plant_toy_linear(m);
    CHECK(l2_norm(p.planted_direction.values()) == doctest::Approx(1.0));
    for (std::size_t c = 0; c < m.class_count; ++c) CHECK(std::abs(dot(p.planted_direction.values(), m.class_means.record(c))) < 1e-4);
    CHECK(plant_toy_linear(m).weights == p.weights);

    // Fraction predicted real over fresh seeds sits near the target FNR.
    std::size_t fn = 0;
    const std::size_t n = 2000;
    for (std::uint64_t seed = 0; seed < n; ++seed) {
      const Tensor x = decode_latent(m, sample_trajectory(m, Prompt::of_class(static_cast<int>(seed % 4)), seed + 1000000).clean());
      fn += toy_linear_logit(p, x) < std::log(p.threshold / (1 - p.threshold)) ? 1 : 0;
    }
    CHECK(static_cast<double>(fn) / n == doctest::Approx(0.15).epsilon(0.25));
  }

  TEST_CASE("steering along the planted direction raises the real rate monotonically") {
    const GeneratorManifest& m = toy();
    const ToyLinearParams p = plant_toy_linear(m);
    const DirectionSet set = repeat_direction(m, p.planted_direction);
    double previous = -1.0;
    for (double lambda : {0.0, 0.25, 0.5, 1.0, 1.5, 2.0}) {
      const SteeringPlan plan = SteeringPlan::from_schedule(set, {lambda, 0, 7, 8});
      std::size_t real = 0;
      for (std::uint64_t seed = 0; seed < 300; ++seed) {
        const auto traj = sample_trajectory(m, Prompt::of_class(static_cast<int>(seed % 4)), seed, &plan);
        const double score = 1.0 / (1.0 + std::exp(-toy_linear_logit(p, decode_latent(m, traj.clean()))));
        real += score < p.threshold ? 1 : 0;
      }
      const double rate = static_cast<double>(real) / 300.0;
      CHECK(rate >= previous);
      previous = rate;
    }
    CHECK(previous > 0.9);
  }
}
