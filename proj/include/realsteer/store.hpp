#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "realsteer/detector.hpp"
#include "realsteer/generator.hpp"
#include "realsteer/orchestrator.hpp"
#include "realsteer/spca.hpp"
#include "realsteer/tensor.hpp"

namespace realsteer {

inline constexpr int kStoreVersion = 1;
inline constexpr double kNormTolerance = 1e-5;

/// Writes `bytes` to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& value);

/// Directory with manifest.json and raw little-endian f32 payload files.
/// Records are split across files of at most `records_per_file` (0 = one file).
void save_tensor_store(const std::filesystem::path& dir, const Tensor& data, std::size_t records_per_file = 0);
Tensor load_tensor_store(const std::filesystem::path& dir);

struct LabelFile {
  std::vector<int> labels;
  std::optional<std::vector<double>> scores;
  std::vector<std::string> sources;  ///< optional per-row provenance
};

void save_labels(const std::filesystem::path& path, const LabelFile& labels);
LabelFile load_labels(const std::filesystem::path& path);

/// dirset.json + directions.f32.
void save_direction_set(const std::filesystem::path& dir, const DirectionSet& set);
DirectionSet load_direction_set(const std::filesystem::path& dir);

nlohmann::json provenance_to_json(const DirectionProvenance& p);
DirectionProvenance provenance_from_json(const nlohmann::json& j);

/// Toy manifests are stored by their generating parameters and rebuilt on
/// load.
nlohmann::json manifest_to_json(const GeneratorManifest& m);
GeneratorManifest manifest_from_json(const nlohmann::json& j);

nlohmann::json endpoint_to_json(const DetectorEndpoint& e);
DetectorEndpoint endpoint_from_json(const nlohmann::json& j);

nlohmann::json schedule_to_json(const SteeringSchedule& s);
nlohmann::json attack_config_to_json(const AttackConfig& cfg);
nlohmann::json attack_result_to_json(const AttackResult& r);

/// Campaign record without wall-clock data, so equal inputs give equal bytes.
nlohmann::json run_record(const nlohmann::json& config, const CampaignSummary& summary,
                          const nlohmann::json& extra = nlohmann::json::object());

/// Histogram rows "attempt,successes".
void write_histogram_csv(const std::filesystem::path& path, const CampaignSummary& summary);

}  // namespace realsteer
