#include "realsteer/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "child_process.hpp"
#include "realsteer/rng.hpp"

namespace realsteer {

using nlohmann::json;

namespace {

constexpr std::uint64_t kCampaignStream = 0xA77AC4;
constexpr std::uint64_t kCollectStream = 0xC011EC7;
constexpr std::uint64_t kScheduleStream = 0x5C4ED;
constexpr std::size_t kCollectChunk = 64;

/// Calls fn(i) for i in [0, n) on up to `workers` threads.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> cursor{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = cursor++; i < n; i = cursor++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            cursor = n;
          }
        }
      });
  }
  if (failure) std::rethrow_exception(failure);
}

void check_directions(const GeneratorInfo& info, const DirectionSet& directions) {
  require(directions.steps() == info.steps, ErrorCode::ShapeMismatch,
          "direction set has " + std::to_string(directions.steps()) + " steps, generator " +
              std::to_string(info.steps));
  require(directions.latent_shape == info.latent_shape, ErrorCode::ShapeMismatch,
          "direction set shape " + shape_to_string(directions.latent_shape) + " vs generator " +
              shape_to_string(info.latent_shape));
}

}  // namespace

ToyGenerator::ToyGenerator(GeneratorManifest manifest) : manifest_(std::move(manifest)) {
  info_.id = manifest_.id;
  info_.latent_shape = manifest_.latent_shape;
  info_.image_shape = manifest_.decoder.image_shape;
  info_.steps = manifest_.schedule.steps();
}

Generation ToyGenerator::generate(const Prompt& prompt, std::uint64_t seed, const SteeringRequest* steering) {
  std::optional<SteeringPlan> plan;
  if (steering) {
    require(steering->directions != nullptr, ErrorCode::InvalidArgument, "toy generator needs in-memory directions");
    plan = SteeringPlan::from_schedule(*steering->directions, steering->schedule);
  }
  LatentTrajectory traj = sample_trajectory(manifest_, prompt, seed, plan ? &*plan : nullptr);
  Generation out;
  out.image = decode_latent(manifest_, traj.clean());
  out.clean_latent = std::move(traj.latents.back());
  return out;
}

json generate_request(std::uint64_t id, const Prompt& prompt, std::uint64_t seed, const Shape& image_shape,
                      const SteeringRequest* steering) {
  require(image_shape.size() == 3, ErrorCode::ShapeMismatch, "image shape must be (C, H, W)");
  json req{{"id", id},
           {"op", "generate"},
           {"prompt", prompt.text ? *prompt.text : prompt.describe()},
           {"seed", seed},
           {"resolution", {image_shape[1], image_shape[2]}}};
  if (steering) {
    require(!steering->dirset_path.empty(), ErrorCode::InvalidArgument, "remote steering needs a direction set path");
    req["steering"] = json{{"dirset_path", steering->dirset_path},
                           {"lambda", steering->schedule.lambda},
                           {"a", steering->schedule.start},
                           {"b", steering->schedule.end}};
  }
  return req;
}

RemoteGenerator::RemoteGenerator(const std::string& path, const std::vector<std::string>& args, GeneratorInfo info,
                                 std::chrono::milliseconds handshake_timeout,
                                 std::chrono::milliseconds request_timeout)
    : channel_(std::make_unique<detail::LineChannel>(path, args)), info_(std::move(info)),
      request_timeout_(request_timeout) {
  channel_->write_line(hello_message().dump());
  std::string line;
  if (!channel_->read_line(line, handshake_timeout))
    fail(ErrorCode::HandshakeTimeout, "no hello from generator '" + path + "'");
  info_.id = parse_hello(line);
}

RemoteGenerator::~RemoteGenerator() = default;

Generation RemoteGenerator::generate(const Prompt& prompt, std::uint64_t seed, const SteeringRequest* steering) {
  const std::uint64_t id = next_id_++;
  channel_->write_line(generate_request(id, prompt, seed, info_.image_shape, steering).dump());
  std::string line;
  if (!channel_->read_line(line, request_timeout_)) fail(ErrorCode::TransportError, "generator timed out");
  const json reply = json::parse(line, nullptr, false);
  require(reply.is_object() && reply.contains("id"), ErrorCode::MalformedResponse, "unparsable generator reply");
  require(reply.at("id").get<std::uint64_t>() == id, ErrorCode::IdMismatch, "generator answered another request");
  if (reply.contains("error")) {
    const json& err = reply.at("error");
    fail(ErrorCode::RemoteError, err.value("code", std::string("unknown")) + ": " + err.value("message", std::string()));
  }
  require(reply.contains("image"), ErrorCode::MalformedResponse, "generator reply without image");
  Generation out;
  out.image = payload_to_tensor(reply.at("image"));
  if (reply.contains("latent")) out.clean_latent = payload_to_tensor(reply.at("latent"));
  return out;
}

void AttackConfig::validate() const {
  require(budget >= 1, ErrorCode::BadConfig, "budget must be at least 1");
  require(lambda_min >= 0.0 && lambda_max >= lambda_min, ErrorCode::BadConfig, "need 0 <= lambda_min <= lambda_max");
  require(strict_hard_label, ErrorCode::BadConfig, "attacks run in hard-label mode only");
  require(max_in_flight >= 1 && workers >= 1, ErrorCode::BadConfig, "in-flight and worker counts must be positive");
}

std::uint64_t prompt_seed(std::uint64_t campaign_seed, std::size_t index) {
  return derive_seed(derive_seed(campaign_seed, kCampaignStream), index);
}

SteeringSchedule candidate_schedule(const AttackConfig& cfg, std::size_t steps, std::uint64_t seed, std::size_t k) {
  require(steps >= 1, ErrorCode::ZeroExtent, "generator has no steps");
  SeededRng rng = SeededRng(seed).derive(kScheduleStream, k);
  SteeringSchedule s;
  s.steps = steps;
  const double u = rng.uniform();
  s.lambda = cfg.lambda_min > 0.0
                 ? std::exp(std::log(cfg.lambda_min) + u * (std::log(cfg.lambda_max) - std::log(cfg.lambda_min)))
                 : cfg.lambda_min + u * (cfg.lambda_max - cfg.lambda_min);
  const auto a = static_cast<std::size_t>(rng.below(steps));
  const auto b = static_cast<std::size_t>(rng.below(steps));
  s.start = std::min(a, b);
  s.end = std::max(a, b);
  return s;
}

LabeledDataset collect_labeled_dataset(Generator& generator, DetectorHandle& detector, std::span<const Prompt> prompts,
                                       const CollectionTarget& target, std::uint64_t seed,
                                       std::size_t max_in_flight) {
  LabeledDataset out;
  const Shape& latent = generator.info().latent_shape;
  std::vector<Tensor> kept;
  std::vector<int> labels;
  std::size_t tp = 0, fn = 0;
  const std::uint64_t stream = derive_seed(seed, kCollectStream);
  auto satisfied = [&] { return tp >= target.tp_count && fn >= target.fn_count; };

  if (!satisfied()) require(!prompts.empty(), ErrorCode::EmptyInput, "no prompts to generate from");
  while (!satisfied() && out.generations < target.max_generations) {
    const std::size_t chunk = std::min(kCollectChunk, target.max_generations - out.generations);
    std::vector<Generation> batch(chunk);
    const std::size_t base = out.generations;
    parallel_for(chunk, generator.concurrent() ? std::thread::hardware_concurrency() : 1, [&](std::size_t j) {
      batch[j] = generator.generate(prompts[(base + j) % prompts.size()], derive_seed(stream, base + j), nullptr);
    });
    std::vector<Tensor> images;
    images.reserve(chunk);
    for (Generation& g : batch) {
      require(g.clean_latent.has_value(), ErrorCode::InvalidArgument, "generator does not expose clean latents");
      images.push_back(std::move(g.image));
    }
    const std::vector<Verdict> verdicts = detector.classify_batch(images, max_in_flight);
    out.queries += verdicts.size();
    for (std::size_t j = 0; j < chunk; ++j) {
      ++out.generations;
      const int label = verdicts[j].label;
      if (label == 1 && tp < target.tp_count) {
        ++tp;
      } else if (label == 0 && fn < target.fn_count) {
        ++fn;
      } else {
        continue;
      }
      kept.push_back(std::move(*batch[j].clean_latent));
      labels.push_back(label);
      if (satisfied()) break;
    }
  }
  if (!satisfied())
    fail(ErrorCode::TargetUnreachable, "after " + std::to_string(out.generations) + " generations: tp=" +
                                           std::to_string(tp) + "/" + std::to_string(target.tp_count) +
                                           " fn=" + std::to_string(fn) + "/" + std::to_string(target.fn_count));
  if (kept.empty()) {
    Shape empty{0};
    empty.insert(empty.end(), latent.begin(), latent.end());
    out.clean = Tensor(empty);
  } else {
    out.clean = stack(kept);
  }
  out.labels = LabelMatrix(std::move(labels));
  return out;
}

AttackResult search_schedule(Generator& generator, DetectorHandle& detector, const DirectionSet& directions,
                             const Prompt& prompt, std::size_t prompt_index, const AttackConfig& cfg,
                             const std::string& dirset_path) {
  cfg.validate();
  check_directions(generator.info(), directions);
  AttackResult r;
  r.prompt_index = prompt_index;
  r.prompt = prompt;
  r.seed = prompt_seed(cfg.seed, prompt_index);
  for (std::size_t k = 0; k < cfg.budget; ++k) {
    SteeringRequest req{&directions, dirset_path, candidate_schedule(cfg, generator.info().steps, r.seed, k)};
    const Generation g = generator.generate(prompt, r.seed, &req);
    r.final_verdict = detector.classify(g.image);
    r.attempts.push_back({req.schedule, r.final_verdict.label});
    r.attempts_used = k + 1;
    if (r.final_verdict.label == 0) {
      r.success = true;
      r.winning = req.schedule;
      break;
    }
  }
  return r;
}

CampaignSummary run_campaign(Generator& generator, DetectorHandle& detector, const DirectionSet& directions,
                             std::span<const Prompt> prompts, const AttackConfig& cfg,
                             const std::string& dirset_path) {
  cfg.validate();
  check_directions(generator.info(), directions);
  CampaignSummary summary;
  summary.histogram.assign(cfg.budget + 1, 0);
  const std::size_t n = prompts.size();
  if (n == 0) return summary;
  const std::size_t workers = generator.concurrent() ? cfg.workers : 1;
  const std::size_t steps = generator.info().steps;

  summary.results.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    summary.results[i].prompt_index = i;
    summary.results[i].prompt = prompts[i];
    summary.results[i].seed = prompt_seed(cfg.seed, i);
  }

  std::vector<Tensor> images(n);
  parallel_for(n, workers, [&](std::size_t i) {
    images[i] = generator.generate(prompts[i], summary.results[i].seed, nullptr).image;
  });
  summary.baseline_verdicts = detector.classify_batch(images, cfg.max_in_flight);
  summary.baseline_queries = n;

  std::vector<std::size_t> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = i;
  for (std::size_t k = 0; k < cfg.budget && !active.empty(); ++k) {
    std::vector<SteeringSchedule> schedules(active.size());
    images.assign(active.size(), Tensor{});
    parallel_for(active.size(), workers, [&](std::size_t j) {
      AttackResult& r = summary.results[active[j]];
      schedules[j] = candidate_schedule(cfg, steps, r.seed, k);
      SteeringRequest req{&directions, dirset_path, schedules[j]};
      images[j] = generator.generate(r.prompt, r.seed, &req).image;
    });
    const std::vector<Verdict> verdicts = detector.classify_batch(images, cfg.max_in_flight);
    summary.steered_queries += verdicts.size();
    std::vector<std::size_t> still;
    for (std::size_t j = 0; j < active.size(); ++j) {
      AttackResult& r = summary.results[active[j]];
      r.final_verdict = verdicts[j];
      r.attempts.push_back({schedules[j], verdicts[j].label});
      r.attempts_used = k + 1;
      if (verdicts[j].label == 0) {
        r.success = true;
        r.winning = schedules[j];
        ++summary.histogram[k + 1];
      } else {
        still.push_back(active[j]);
      }
    }
    active = std::move(still);
  }

  summary.success_rate = success_rate(summary.results);
  std::size_t baseline_real = 0;
  for (const Verdict& v : summary.baseline_verdicts) baseline_real += v.label == 0;
  summary.baseline_success_rate = static_cast<double>(baseline_real) / static_cast<double>(n);
  return summary;
}

double success_rate(std::span<const AttackResult> results) {
  require(!results.empty(), ErrorCode::EmptyInput, "no attack results");
  std::size_t wins = 0;
  for (const AttackResult& r : results) wins += r.success;
  return static_cast<double>(wins) / static_cast<double>(results.size());
}

CalibrationMix export_calibration_mix(std::span<const Tensor> reals, std::span<const Tensor> unsteered,
                                      std::span<const Tensor> steered, std::uint64_t seed) {
  const std::size_t n = steered.size();
  require(reals.size() >= 2 * n, ErrorCode::InsufficientPool,
          "need " + std::to_string(2 * n) + " real images, have " + std::to_string(reals.size()));
  require(unsteered.size() >= n, ErrorCode::InsufficientPool,
          "need " + std::to_string(n) + " unsteered images, have " + std::to_string(unsteered.size()));
  struct Item {
    const Tensor* image;
    int label;
    const char* source;
  };
  std::vector<Item> items;
  items.reserve(4 * n);
  for (std::size_t i = 0; i < 2 * n; ++i) items.push_back({&reals[i], 0, "real"});
  for (std::size_t i = 0; i < n; ++i) items.push_back({&unsteered[i], 1, "unsteered"});
  for (std::size_t i = 0; i < n; ++i) items.push_back({&steered[i], 1, "steered"});
  SeededRng rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);

  CalibrationMix mix;
  std::vector<Tensor> images;
  images.reserve(items.size());
  for (const Item& it : items) {
    images.push_back(*it.image);
    mix.labels.push_back(it.label);
    mix.sources.emplace_back(it.source);
  }
  if (!images.empty()) mix.images = stack(images);
  return mix;
}

}  // namespace realsteer
