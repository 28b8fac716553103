#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "realsteer/detector.hpp"
#include "realsteer/generator.hpp"
#include "realsteer/spca.hpp"
#include "realsteer/steering.hpp"

namespace realsteer {

struct GeneratorInfo {
  std::string id;
  Shape latent_shape;  ///< C x H x W
  Shape image_shape;   ///< C x H x W
  std::size_t steps = 0;
};

/// Steering for one generation. Local generators use `directions`; remote
/// ones receive `dirset_path` and steer on their side.
struct SteeringRequest {
  const DirectionSet* directions = nullptr;
  std::string dirset_path;
  SteeringSchedule schedule;
};

struct Generation {
  Tensor image;
  std::optional<Tensor> clean_latent;
};

class Generator {
 public:
  virtual ~Generator() = default;
  virtual const GeneratorInfo& info() const noexcept = 0;
  virtual Generation generate(const Prompt& prompt, std::uint64_t seed, const SteeringRequest* steering) = 0;
  /// Whether `generate` may be called from several threads at once.
  virtual bool concurrent() const noexcept { return false; }
};

class ToyGenerator final : public Generator {
 public:
  explicit ToyGenerator(GeneratorManifest manifest);
  const GeneratorInfo& info() const noexcept override { return info_; }
  const GeneratorManifest& manifest() const noexcept { return manifest_; }
  Generation generate(const Prompt& prompt, std::uint64_t seed, const SteeringRequest* steering) override;
  bool concurrent() const noexcept override { return true; }

 private:
  GeneratorManifest manifest_;
  GeneratorInfo info_;
};

namespace detail {
class LineChannel;
}

/// Client for a generator process speaking the generate op over stdio.
class RemoteGenerator final : public Generator {
 public:
  /// `info` describes the remote pipeline; the handshake name replaces info.id.
  RemoteGenerator(const std::string& path, const std::vector<std::string>& args, GeneratorInfo info,
                  std::chrono::milliseconds handshake_timeout = std::chrono::seconds(10),
                  std::chrono::milliseconds request_timeout = std::chrono::minutes(10));
  ~RemoteGenerator() override;
  const GeneratorInfo& info() const noexcept override { return info_; }
  Generation generate(const Prompt& prompt, std::uint64_t seed, const SteeringRequest* steering) override;

 private:
  std::unique_ptr<detail::LineChannel> channel_;
  GeneratorInfo info_;
  std::chrono::milliseconds request_timeout_;
  std::uint64_t next_id_ = 0;
};

nlohmann::json generate_request(std::uint64_t id, const Prompt& prompt, std::uint64_t seed, const Shape& image_shape,
                                const SteeringRequest* steering);

struct AttackConfig {
  std::size_t budget = 10;
  double lambda_min = 0.05;
  double lambda_max = 5.0;
  std::uint64_t seed = 0;
  bool strict_hard_label = true;
  std::size_t max_in_flight = 8;
  std::size_t workers = 1;

  void validate() const;
};

struct Attempt {
  SteeringSchedule schedule;
  int label = 1;
};

struct AttackResult {
  std::size_t prompt_index = 0;
  Prompt prompt;
  std::uint64_t seed = 0;  ///< initial-noise seed, shared by every attempt and the baseline
  bool success = false;
  std::size_t attempts_used = 0;
  std::optional<SteeringSchedule> winning;
  Verdict final_verdict;
  std::vector<Attempt> attempts;
};

struct CampaignSummary {
  std::vector<AttackResult> results;
  std::optional<double> success_rate;  ///< empty when there were no prompts
  std::optional<double> baseline_success_rate;
  std::vector<Verdict> baseline_verdicts;
  /// histogram[k] = prompts that succeeded on attempt k (1-based; index 0 unused).
  std::vector<std::size_t> histogram;
  std::size_t steered_queries = 0;
  std::size_t baseline_queries = 0;
  std::size_t query_count() const noexcept { return steered_queries + baseline_queries; }
};

struct CollectionTarget {
  std::size_t tp_count = 0;
  std::size_t fn_count = 0;
  std::size_t max_generations = 0;
};

struct LabeledDataset {
  Tensor clean;  ///< N x C x H x W clean latents, generation order
  LabelMatrix labels;  ///< detector label per row: 1 TP, 0 FN
  std::size_t generations = 0;
  std::size_t queries = 0;
};

/// Per-prompt seed for prompt `index` of a campaign.
std::uint64_t prompt_seed(std::uint64_t campaign_seed, std::size_t index);

/// Deterministic candidate schedule `k` (0-based) for a prompt seed:
/// log-uniform lambda, interval from two sorted uniform timestep draws.
SteeringSchedule candidate_schedule(const AttackConfig& cfg, std::size_t steps, std::uint64_t seed, std::size_t k);

/// Generates unsteered fakes, queries hard labels and keeps TPs and FNs until
/// both quotas are met. Sample i uses prompt i mod P and prompt_seed(seed, i).
LabeledDataset collect_labeled_dataset(Generator& generator, DetectorHandle& detector, std::span<const Prompt> prompts,
                                       const CollectionTarget& target, std::uint64_t seed,
                                       std::size_t max_in_flight = 8);

AttackResult search_schedule(Generator& generator, DetectorHandle& detector, const DirectionSet& directions,
                             const Prompt& prompt, std::size_t prompt_index, const AttackConfig& cfg,
                             const std::string& dirset_path = {});

/// Runs search_schedule for every prompt plus an unsteered baseline on the
/// same seeds. Prompts advance in lock-step rounds so each round is one
/// pipelined detector batch; results equal the per-prompt sequential search.
CampaignSummary run_campaign(Generator& generator, DetectorHandle& detector, const DirectionSet& directions,
                             std::span<const Prompt> prompts, const AttackConfig& cfg,
                             const std::string& dirset_path = {});

double success_rate(std::span<const AttackResult> results);

struct CalibrationMix {
  Tensor images;  ///< 4n x C x H x W
  std::vector<int> labels;
  std::vector<std::string> sources;  ///< real | unsteered | steered
};

/// 2n reals (label 0), n unsteered and n steered fakes (label 1), shuffled
/// with `seed`; n is the number of steered images.
CalibrationMix export_calibration_mix(std::span<const Tensor> reals, std::span<const Tensor> unsteered,
                                      std::span<const Tensor> steered, std::uint64_t seed);

}  // namespace realsteer
