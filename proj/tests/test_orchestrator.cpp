#include <doctest.h>

#include <algorithm>

#include "realsteer/detector.hpp"
#include "realsteer/orchestrator.hpp"
#include "realsteer/protocol.hpp"
#include "realsteer/store.hpp"
#include "test_helpers.hpp"

using namespace realsteer;
using testing::code_of;

namespace {

struct ToyWorld {
  GeneratorManifest manifest = make_toy_manifest(0, 8, {4, 8, 8}, 4);
  ToyLinearParams detector = plant_toy_linear(manifest);
  DirectionSet planted;

  ToyWorld() {
    planted.latent_shape = manifest.latent_shape;
    for (std::size_t t = 0; t < manifest.steps(); ++t) {
      SteeringDirection d;
      d.t = t;
      d.delta = detector.planted_direction;
      d.raw_norm = 1.0;
      planted.directions.push_back(d);
    }
  }
};

const ToyWorld& world() {
  static const ToyWorld w;
  return w;
}

std::vector<Prompt> class_prompts(std::size_t n) {
  std::vector<Prompt> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(Prompt::of_class(static_cast<int>(i % 4)));
  return out;
}

std::vector<Tensor> tagged(std::size_t n, float tag) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(Tensor({1, 2, 2}, tag + static_cast<float>(i) / 100.0f));
  return out;
}

}  // namespace

TEST_SUITE("orchestrator") {
  TEST_CASE("attack configuration") {
    CHECK_NOTHROW(AttackConfig{}.validate());
    AttackConfig c;
    c.budget = 0;
    CHECK(code_of([&] { c.validate(); }) == ErrorCode::BadConfig);
    c = {};
    c.lambda_min = 2;
    c.lambda_max = 1;
    CHECK(code_of([&] { c.validate(); }) == ErrorCode::BadConfig);
    c = {};
    c.strict_hard_label = false;
    CHECK(code_of([&] { c.validate(); }) == ErrorCode::BadConfig);
  }

  TEST_CASE("candidate schedules") {
    const AttackConfig cfg;
    for (std::size_t k = 0; k < 200; ++k) {
      const SteeringSchedule s = candidate_schedule(cfg, 8, 1234, k);
      CHECK_NOTHROW(s.validate());
      CHECK(s.lambda >= cfg.lambda_min);
      CHECK(s.lambda <= cfg.lambda_max);
      CHECK(s.steps == 8);
      CHECK(s == candidate_schedule(cfg, 8, 1234, k));
    }
    CHECK_FALSE(candidate_schedule(cfg, 8, 1, 0) == candidate_schedule(cfg, 8, 2, 0));
    CHECK(prompt_seed(5, 3) == prompt_seed(5, 3));
    CHECK(prompt_seed(5, 3) != prompt_seed(5, 4));
  }

  TEST_CASE("collection with nothing requested makes no queries") {
    ToyGenerator gen(world().manifest);
    auto det = open_endpoint(toy_linear_endpoint(world().detector));
    const auto prompts = class_prompts(4);
    const LabeledDataset ds = collect_labeled_dataset(gen, *det, prompts, {0, 0, 100}, 1);
    CHECK(ds.generations == 0);
    CHECK(ds.queries == 0);
    CHECK(ds.labels.rows() == 0);
    CHECK(det->log().size() == 0);
  }

  TEST_CASE("collection meets both quotas") {
    ToyGenerator gen(world().manifest);
    auto det = open_endpoint(toy_linear_endpoint(world().detector));
    const auto prompts = class_prompts(4);
    const LabeledDataset ds = collect_labeled_dataset(gen, *det, prompts, {50, 50, 2000}, 3);
    CHECK(ds.labels.count(HardLabel::Fake) == 50);
    CHECK(ds.labels.count(HardLabel::Real) == 50);
    CHECK(ds.clean.dim(0) == 100);
    // The last chunk is classified whole; rows past the point where both quotas filled are dropped.
    CHECK(ds.queries >= ds.generations);
    CHECK(ds.queries < ds.generations + 64);
    CHECK(det->log().size() == ds.queries);
    // About 50 / 0.15 generations are needed for the FN side; the negative
    // binomial spread is ~45, batching adds at most one chunk.
    CHECK(ds.generations >= 200);
    CHECK(ds.generations <= 600);

    ToyGenerator again(world().manifest);
    auto det2 = open_endpoint(toy_linear_endpoint(world().detector));
    const LabeledDataset ds2 = collect_labeled_dataset(again, *det2, prompts, {50, 50, 2000}, 3);
    CHECK(ds2.clean == ds.clean);
    CHECK(ds2.labels.labels() == ds.labels.labels());
  }

  TEST_CASE("unreachable quota") {
    ToyGenerator gen(world().manifest);
    auto det = open_endpoint(DetectorEndpoint::builtin("const-fake"));
    const auto prompts = class_prompts(4);
    try {
      collect_labeled_dataset(gen, *det, prompts, {0, 1, 100}, 1);
      FAIL("expected TargetUnreachable");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TargetUnreachable);
      CHECK(e.detail().find("fn=0") != std::string::npos);
    }
    CHECK(det->log().size() <= 100);
  }

  TEST_CASE("search exhausts its budget against an unbeatable detector") {
    ToyGenerator gen(world().manifest);
    auto det = open_endpoint(DetectorEndpoint::builtin("const-fake"));
    AttackConfig cfg;
    cfg.budget = 1;
    const AttackResult r = search_schedule(gen, *det, world().planted, Prompt::of_class(0), 0, cfg);
    CHECK_FALSE(r.success);
    CHECK(r.attempts_used == 1);
    CHECK_FALSE(r.winning.has_value());
    CHECK(r.final_verdict.label == 1);
  }

  TEST_CASE("search and campaign agree and are deterministic") {
    ToyGenerator gen(world().manifest);
    auto det = open_endpoint(toy_linear_endpoint(world().detector));
    const auto prompts = class_prompts(12);
    AttackConfig cfg;
    cfg.seed = 9;
    const CampaignSummary a = run_campaign(gen, *det, world().planted, prompts, cfg);
    auto det2 = open_endpoint(toy_linear_endpoint(world().detector));
    cfg.workers = 4;
    const CampaignSummary b = run_campaign(gen, *det2, world().planted, prompts, cfg);
    REQUIRE(a.results.size() == b.results.size());
    for (std::size_t i = 0; i < a.results.size(); ++i) {
      CHECK(a.results[i].success == b.results[i].success);
      CHECK(a.results[i].attempts_used == b.results[i].attempts_used);
      REQUIRE(a.results[i].attempts.size() == b.results[i].attempts.size());
      for (std::size_t k = 0; k < a.results[i].attempts.size(); ++k)
        CHECK(a.results[i].attempts[k].schedule == b.results[i].attempts[k].schedule);
    }
    for (std::size_t i : {std::size_t{0}, std::size_t{5}}) {
      auto det3 = open_endpoint(toy_linear_endpoint(world().detector));
      const AttackResult single = search_schedule(gen, *det3, world().planted, prompts[i], i, cfg);
      CHECK(single.success == a.results[i].success);
      CHECK(single.attempts_used == a.results[i].attempts_used);
      CHECK(single.seed == a.results[i].seed);
    }
  }

  TEST_CASE("larger budgets never lose a prompt") {
    ToyGenerator gen(world().manifest);
    const auto prompts = class_prompts(40);
    AttackConfig cfg;
    cfg.seed = 4;
    cfg.lambda_max = 0.3;  // weak steering so that some prompts need several attempts
    std::vector<bool> previous(prompts.size(), false);
    for (std::size_t budget : {1u, 3u, 10u}) {
      cfg.budget = budget;
      auto det = open_endpoint(toy_linear_endpoint(world().detector));
      const CampaignSummary s = run_campaign(gen, *det, world().planted, prompts, cfg);
      for (std::size_t i = 0; i < prompts.size(); ++i) {
        if (previous[i]) CHECK(s.results[i].success);
        previous[i] = s.results[i].success;
      }
    }
  }

  TEST_CASE("query accounting") {
    ToyGenerator gen(world().manifest);
    auto det = open_endpoint(toy_linear_endpoint(world().detector));
    const auto prompts = class_prompts(30);
    AttackConfig cfg;
    cfg.budget = 4;
    cfg.lambda_max = 0.5;
    const CampaignSummary s = run_campaign(gen, *det, world().planted, prompts, cfg);
    std::size_t attempts = 0, wins = 0, histogram = 0;
    for (const auto& r : s.results) {
      attempts += r.attempts_used;
      wins += r.success;
      CHECK(r.attempts.size() == r.attempts_used);
      CHECK(r.attempts_used <= cfg.budget);
      if (r.success) {
        CHECK(r.attempts.back().label == 0);
        CHECK(r.winning == r.attempts.back().schedule);
      } else {
        CHECK(r.attempts_used == cfg.budget);
      }
    }
    for (std::size_t c : s.histogram) histogram += c;
    CHECK(s.histogram.size() == cfg.budget + 1);
    CHECK(histogram == wins);
    CHECK(s.steered_queries == attempts);
    CHECK(s.baseline_queries == prompts.size());
    CHECK(s.query_count() == det->log().size());
    CHECK(*s.success_rate == doctest::Approx(static_cast<double>(wins) / 30));
  }

  TEST_CASE("toy pipeline succeeds on nearly every prompt") {
    ToyGenerator gen(world().manifest);
    auto det = open_endpoint(toy_linear_endpoint(world().detector));
    const auto prompts = class_prompts(100);
    const CampaignSummary s = run_campaign(gen, *det, world().planted, prompts, AttackConfig{});
    CHECK(*s.success_rate >= 0.9);
    CHECK(*s.baseline_success_rate < 0.4);
  }

  TEST_CASE("degenerate detectors and empty campaigns") {
    ToyGenerator gen(world().manifest);
    auto real = open_endpoint(DetectorEndpoint::builtin("const-real"));
    const auto prompts = class_prompts(6);
    const CampaignSummary s = run_campaign(gen, *real, world().planted, prompts, AttackConfig{});
    CHECK(*s.success_rate == 1.0);
    CHECK(*s.baseline_success_rate == 1.0);
    const CampaignSummary none = run_campaign(gen, *real, world().planted, {}, AttackConfig{});
    CHECK_FALSE(none.success_rate.has_value());
    CHECK(none.query_count() == 0);

    std::vector<AttackResult> results(1000);
    for (std::size_t i = 0; i < 194; ++i) results[i].success = true;
    CHECK(success_rate(results) == doctest::Approx(0.194));
    std::vector<AttackResult> pair(2);
    pair[0].success = true;
    CHECK(success_rate(pair) == 0.5);
    CHECK(code_of([] { success_rate({}); }) == ErrorCode::EmptyInput);

    DirectionSet wrong = world().planted;
    wrong.directions.pop_back();
    CHECK(code_of([&] { run_campaign(gen, *real, wrong, prompts, AttackConfig{}); }) == ErrorCode::ShapeMismatch);
  }

  TEST_CASE("calibration mix") {
    const auto reals = tagged(10, 0.0f), plain = tagged(5, 1.0f), steered = tagged(3, 2.0f);
    const CalibrationMix mix = export_calibration_mix(reals, plain, steered, 8);
    REQUIRE(mix.labels.size() == 12);
    CHECK(mix.images.dim(0) == 12);
    CHECK(std::count(mix.sources.begin(), mix.sources.end(), "real") == 6);
    CHECK(std::count(mix.sources.begin(), mix.sources.end(), "unsteered") == 3);
    CHECK(std::count(mix.sources.begin(), mix.sources.end(), "steered") == 3);
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(mix.labels[i] == (mix.sources[i] == "real" ? 0 : 1));
      const float tag = mix.images.record(i)[0];
      const char* expect = tag < 1.0f ? "real" : (tag < 2.0f ? "unsteered" : "steered");
      CHECK(mix.sources[i] == expect);
    }
    const CalibrationMix again = export_calibration_mix(reals, plain, steered, 8);
    CHECK(again.images == mix.images);
    CHECK(again.sources == mix.sources);
    CHECK_FALSE(export_calibration_mix(reals, plain, steered, 9).sources == mix.sources);

    const CalibrationMix empty = export_calibration_mix(reals, plain, {}, 8);
    CHECK(empty.labels.empty());
    CHECK(code_of([&] { export_calibration_mix(tagged(5, 0.0f), plain, steered, 1); }) == ErrorCode::InsufficientPool);
    CHECK(code_of([&] { export_calibration_mix(reals, tagged(2, 1.0f), steered, 1); }) == ErrorCode::InsufficientPool);
  }

  TEST_CASE("remote generator over the generate op") {
    testing::TempDir dir("remote-gen");
    write_json(dir / "generator.json", manifest_to_json(world().manifest));
    save_direction_set(dir / "dirset", world().planted);
    const GeneratorInfo info{"toy", world().manifest.latent_shape, world().manifest.decoder.image_shape, 8};
    RemoteGenerator remote(TOY_GENERATOR_SERVER_PATH, {"--manifest", (dir / "generator.json").string()}, info,
                           std::chrono::seconds(5), std::chrono::seconds(20));
    ToyGenerator local(world().manifest);

    const Generation plain = remote.generate(Prompt::of_class(2), 77, nullptr);
    const Generation again = remote.generate(Prompt::of_class(2), 77, nullptr);
    CHECK(encode_png(plain.image) == encode_png(again.image));
    REQUIRE(plain.clean_latent.has_value());
    CHECK(*plain.clean_latent == *local.generate(Prompt::of_class(2), 77, nullptr).clean_latent);

    const SteeringRequest zero{nullptr, (dir / "dirset").string(), {0.0, 0, 7, 8}};
    CHECK(remote.generate(Prompt::of_class(2), 77, &zero).image == plain.image);

    const SteeringRequest strong{nullptr, (dir / "dirset").string(), {2.0, 0, 7, 8}};
    const SteeringRequest strong_local{&world().planted, {}, {2.0, 0, 7, 8}};
    CHECK(*remote.generate(Prompt::of_class(2), 77, &strong).clean_latent ==
          *local.generate(Prompt::of_class(2), 77, &strong_local).clean_latent);

    DirectionSet small;
    small.latent_shape = {4, 4, 4};
    for (std::size_t t = 0; t < 8; ++t) small.directions.push_back({t, Tensor({4, 4, 4}, 0.125f), {1.0}, 1.0, "predicted-real"});
    save_direction_set(dir / "small", small);
    const SteeringRequest mismatched{nullptr, (dir / "small").string(), {1.0, 0, 7, 8}};
    try {
      remote.generate(Prompt::of_class(0), 1, &mismatched);
      FAIL("expected RemoteError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::RemoteError);
      CHECK(e.detail().find("dirset_shape_mismatch") != std::string::npos);
    }
    CHECK(remote.generate(Prompt::of_class(0), 1, nullptr).image.shape() == info.image_shape);
  }
}
