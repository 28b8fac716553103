#include "realsteer/store.hpp"

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "realsteer/error.hpp"
#include "realsteer/protocol.hpp"

namespace realsteer {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string as_string(const std::vector<std::uint8_t>& bytes) { return {bytes.begin(), bytes.end()}; }

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

void check_version(const json& j, const fs::path& where) {
  require(j.is_object() && j.contains("version"), ErrorCode::UnsupportedVersion, where.string() + " has no version");
  const int v = j.at("version").get<int>();
  require(v == kStoreVersion, ErrorCode::UnsupportedVersion,
          where.string() + " is version " + std::to_string(v) + ", expected " + std::to_string(kStoreVersion));
}

json shape_json(const Shape& s) { return json(s); }

std::string hex_u64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    require(out.good(), ErrorCode::IoError, "failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorCode::IoError, "cannot move " + tmp.string() + " into place");
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  json j = json::parse(text, nullptr, false);
  require(!j.is_discarded(), ErrorCode::IoError, path.string() + " is not valid JSON");
  return j;
}

void write_json(const fs::path& path, const json& value) { write_file_atomic(path, value.dump(2) + "\n"); }

void save_tensor_store(const fs::path& dir, const Tensor& data, std::size_t records_per_file) {
  require(data.rank() >= 1, ErrorCode::ShapeMismatch, "tensor store needs a leading record axis");
  fs::create_directories(dir);
  const std::size_t n = data.dim(0);
  const std::size_t per = records_per_file == 0 ? std::max<std::size_t>(n, 1) : records_per_file;
  const std::size_t record = data.record_size();
  const std::vector<std::uint8_t> bytes = tensor_to_bytes(data);
  json files = json::array();
  for (std::size_t first = 0, part = 0; first < n || (n == 0 && part == 0); first += per, ++part) {
    const std::size_t count = std::min(per, n - first);
    char name[32];
    std::snprintf(name, sizeof name, "part-%05zu.f32", part);
    const auto* begin = reinterpret_cast<const char*>(bytes.data()) + first * record * 4;
    write_file_atomic(dir / name, std::string_view(begin, count * record * 4));
    files.push_back({{"name", name}, {"count", count}});
    if (n == 0) break;
  }
  write_json(dir / "manifest.json",
             {{"version", kStoreVersion}, {"dtype", "f32le"}, {"shape", shape_json(data.shape())}, {"files", files}});
}

Tensor load_tensor_store(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  require(fs::exists(manifest_path), ErrorCode::ManifestMissing, "no manifest.json in " + dir.string());
  const json manifest = read_json(manifest_path);
  check_version(manifest, manifest_path);
  require(manifest.value("dtype", std::string()) == "f32le", ErrorCode::UnsupportedVersion,
          "dtype must be f32le in " + manifest_path.string());
  const Shape shape = manifest.at("shape").get<Shape>();
  require(!shape.empty(), ErrorCode::ShapeByteMismatch, "store shape is empty");
  Shape record_shape(shape.begin() + 1, shape.end());
  const std::size_t record_bytes = shape_volume(record_shape) * 4;

  std::string payload;
  std::size_t total = 0;
  for (const json& f : manifest.at("files")) {
    const std::string name = f.at("name").get<std::string>();
    const std::size_t count = f.at("count").get<std::size_t>();
    require(name.find('/') == std::string::npos && name != "..", ErrorCode::IoError, "bad payload name " + name);
    require(fs::exists(dir / name), ErrorCode::ShapeByteMismatch, "payload file " + name + " is missing");
    const std::string part = read_file(dir / name);
    require(part.size() == count * record_bytes, ErrorCode::ShapeByteMismatch,
            name + " holds " + std::to_string(part.size()) + " bytes, expected " +
                std::to_string(count * record_bytes));
    payload += part;
    total += count;
  }
  require(total == shape[0], ErrorCode::ShapeByteMismatch,
          "file counts sum to " + std::to_string(total) + ", shape says " + std::to_string(shape[0]));
  return tensor_from_bytes(as_bytes(payload), shape);
}

void save_labels(const fs::path& path, const LabelFile& labels) {
  json j{{"version", kStoreVersion}, {"labels", labels.labels}};
  if (labels.scores) {
    require(labels.scores->size() == labels.labels.size(), ErrorCode::ShapeMismatch, "scores and labels differ");
    j["scores"] = *labels.scores;
  }
  if (!labels.sources.empty()) {
    require(labels.sources.size() == labels.labels.size(), ErrorCode::ShapeMismatch, "sources and labels differ");
    j["sources"] = labels.sources;
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_json(path, j);
}

LabelFile load_labels(const fs::path& path) {
  require(fs::exists(path), ErrorCode::ManifestMissing, "no label file " + path.string());
  const json j = read_json(path);
  check_version(j, path);
  LabelFile out;
  out.labels = j.at("labels").get<std::vector<int>>();
  for (int y : out.labels) require(y == 0 || y == 1, ErrorCode::InvalidArgument, "labels must be 0 or 1");
  if (j.contains("scores")) out.scores = j.at("scores").get<std::vector<double>>();
  if (j.contains("sources")) out.sources = j.at("sources").get<std::vector<std::string>>();
  return out;
}

json provenance_to_json(const DirectionProvenance& p) {
  json transfers = json::array();
  for (const TransferRecord& t : p.transfers)
    transfers.push_back({{"from", shape_json(t.from)},
                         {"to", shape_json(t.to)},
                         {"mode", to_string(t.mode)},
                         {"renormalized", t.renormalized}});
  return {{"generator_id", p.generator_id},
          {"detector_id", p.detector_id},
          {"tp_count", p.tp_count},
          {"fn_count", p.fn_count},
          {"seed", p.seed},
          {"source_shape", shape_json(p.source_shape)},
          {"transfers", transfers}};
}

DirectionProvenance provenance_from_json(const json& j) {
  DirectionProvenance p;
  p.generator_id = j.value("generator_id", std::string());
  p.detector_id = j.value("detector_id", std::string());
  p.tp_count = j.value("tp_count", std::size_t{0});
  p.fn_count = j.value("fn_count", std::size_t{0});
  p.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("source_shape")) p.source_shape = j.at("source_shape").get<Shape>();
  if (j.contains("transfers"))
    for (const json& t : j.at("transfers"))
      p.transfers.push_back({t.at("from").get<Shape>(), t.at("to").get<Shape>(),
                             parse_interp_mode(t.at("mode").get<std::string>()), t.value("renormalized", true)});
  return p;
}

void save_direction_set(const fs::path& dir, const DirectionSet& set) {
  set.validate();
  fs::create_directories(dir);
  json eigenvalues = json::array(), raw_norms = json::array();
  std::string payload;
  for (const SteeringDirection& d : set.directions) {
    eigenvalues.push_back(d.eigenvalues);
    raw_norms.push_back(d.raw_norm);
    payload += as_string(tensor_to_bytes(d.delta));
  }
  write_file_atomic(dir / "directions.f32", payload);
  write_json(dir / "dirset.json", {{"version", kStoreVersion},
                                   {"T", set.steps()},
                                   {"latent_shape", shape_json(set.latent_shape)},
                                   {"normalized", true},
                                   {"oriented_toward", set.directions.empty() ? "predicted-real"
                                                                              : set.directions[0].oriented_toward},
                                   {"eigenvalues", eigenvalues},
                                   {"raw_norms", raw_norms},
                                   {"provenance", provenance_to_json(set.provenance)}});
}

DirectionSet load_direction_set(const fs::path& dir) {
  const fs::path meta_path = dir / "dirset.json";
  require(fs::exists(meta_path), ErrorCode::ManifestMissing, "no dirset.json in " + dir.string());
  const json meta = read_json(meta_path);
  check_version(meta, meta_path);
  const std::size_t steps = meta.at("T").get<std::size_t>();
  DirectionSet set;
  set.latent_shape = meta.at("latent_shape").get<Shape>();
  set.provenance = provenance_from_json(meta.value("provenance", json::object()));
  const auto eigenvalues = meta.at("eigenvalues").get<std::vector<std::vector<double>>>();
  const auto raw_norms = meta.at("raw_norms").get<std::vector<double>>();
  require(eigenvalues.size() == steps && raw_norms.size() == steps, ErrorCode::ShapeByteMismatch,
          "dirset.json arrays disagree with T=" + std::to_string(steps));
  const fs::path payload_path = dir / "directions.f32";
  require(fs::exists(payload_path), ErrorCode::ShapeByteMismatch, "directions.f32 is missing");
  const std::string payload = read_file(payload_path);
  const std::size_t volume = shape_volume(set.latent_shape);
  require(payload.size() == 4 * steps * volume, ErrorCode::ShapeByteMismatch,
          "directions.f32 holds " + std::to_string(payload.size()) + " bytes, expected " +
              std::to_string(4 * steps * volume));
  const std::string oriented = meta.value("oriented_toward", std::string("predicted-real"));
  for (std::size_t t = 0; t < steps; ++t) {
    SteeringDirection d;
    d.t = t;
    d.delta = tensor_from_bytes(as_bytes(payload).subspan(t * volume * 4, volume * 4), set.latent_shape);
    const double norm = l2_norm(d.delta.values());
    require(std::abs(norm - 1.0) <= kNormTolerance, ErrorCode::NormViolation,
            "direction " + std::to_string(t) + " has norm " + std::to_string(norm));
    d.eigenvalues = eigenvalues[t];
    d.raw_norm = raw_norms[t];
    d.oriented_toward = oriented;
    set.directions.push_back(std::move(d));
  }
  return set;
}

json manifest_to_json(const GeneratorManifest& m) {
  const ToyParameters& t = m.toy;
  return {{"version", kStoreVersion},
          {"id", m.id},
          {"seed", m.seed},
          {"steps", m.steps()},
          {"latent_shape", shape_json(m.latent_shape)},
          {"image_shape", shape_json(m.decoder.image_shape)},
          {"class_count", m.class_count},
          {"toy",
           {{"content_scale", t.content_scale},
            {"perturbation", t.perturbation},
            {"artifact_mean", t.artifact_mean},
            {"modes_per_axis", t.modes_per_axis},
            {"image_channels", t.image_channels},
            {"decoder_gain", t.decoder_gain},
            {"class_radius", t.class_radius}}}};
}

GeneratorManifest manifest_from_json(const json& j) {
  check_version(j, "generator manifest");
  const std::string id = j.value("id", std::string());
  require(id == "toy-flow-v1", ErrorCode::BadConfig,
          "unsupported generator '" + id + "'");
  ToyParameters t;
  const json& toy = j.at("toy");
  t.content_scale = toy.at("content_scale").get<double>();
  t.perturbation = toy.at("perturbation").get<double>();
  t.artifact_mean = toy.at("artifact_mean").get<double>();
  t.modes_per_axis = toy.at("modes_per_axis").get<std::size_t>();
  t.image_channels = toy.at("image_channels").get<std::size_t>();
  t.decoder_gain = toy.at("decoder_gain").get<double>();
  t.class_radius = toy.at("class_radius").get<double>();
  return make_toy_manifest(j.at("seed").get<std::uint64_t>(), j.at("steps").get<std::size_t>(),
                           j.at("latent_shape").get<Shape>(), j.at("class_count").get<std::size_t>(), t);
}

json endpoint_to_json(const DetectorEndpoint& e) {
  json j{{"kind", to_string(e.kind)},
         {"locator", e.locator},
         {"args", e.args},
         {"strict_hard_label", e.strict_hard_label},
         {"payload", to_string(e.payload)},
         {"handshake_timeout_ms", e.handshake_timeout.count()},
         {"query_timeout_ms", e.query_timeout.count()},
         {"params", e.params}};
  if (e.threshold) j["threshold"] = *e.threshold;
  return j;
}

DetectorEndpoint endpoint_from_json(const json& j) {
  DetectorEndpoint e;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "builtin") e.kind = EndpointKind::Builtin;
  else if (kind == "subprocess") e.kind = EndpointKind::Subprocess;
  else if (kind == "http") e.kind = EndpointKind::Http;
  else fail(ErrorCode::BadConfig, "unknown detector kind '" + kind + "'");
  e.locator = j.at("locator").get<std::string>();
  e.args = j.value("args", std::vector<std::string>{});
  e.strict_hard_label = j.value("strict_hard_label", true);
  e.payload = parse_payload_kind(j.value("payload", std::string("tensor_f32_b64")));
  e.handshake_timeout = std::chrono::milliseconds(j.value("handshake_timeout_ms", 10000));
  e.query_timeout = std::chrono::milliseconds(j.value("query_timeout_ms", 30000));
  e.params = j.value("params", json::object());
  if (j.contains("threshold")) e.threshold = j.at("threshold").get<double>();
  e.validate();
  return e;
}

json schedule_to_json(const SteeringSchedule& s) {
  return {{"lambda", s.lambda}, {"a", s.start}, {"b", s.end}};
}

json attack_config_to_json(const AttackConfig& cfg) {
  return {{"budget", cfg.budget},
          {"lambda_min", cfg.lambda_min},
          {"lambda_max", cfg.lambda_max},
          {"lambda_sampling", cfg.lambda_min > 0.0 ? "log-uniform" : "uniform"},
          {"interval_sampling", "two sorted uniform timesteps"},
          {"seed", cfg.seed},
          {"strict_hard_label", cfg.strict_hard_label},
          {"max_in_flight", cfg.max_in_flight}};
}

json attack_result_to_json(const AttackResult& r) {
  json attempts = json::array();
  for (const Attempt& a : r.attempts) {
    json item = schedule_to_json(a.schedule);
    item["label"] = a.label;
    attempts.push_back(item);
  }
  return {{"prompt_index", r.prompt_index},
          {"prompt", r.prompt.describe()},
          {"seed", hex_u64(r.seed)},
          {"success", r.success},
          {"attempts_used", r.attempts_used},
          {"winning", r.winning ? schedule_to_json(*r.winning) : json(nullptr)},
          {"final_label", r.final_verdict.label},
          {"attempts", attempts}};
}

json run_record(const json& config, const CampaignSummary& summary, const json& extra) {
  json results = json::array();
  for (const AttackResult& r : summary.results) results.push_back(attack_result_to_json(r));
  json baseline = json::array();
  for (const Verdict& v : summary.baseline_verdicts) baseline.push_back(v.label);
  json record{{"version", kStoreVersion},
              {"tool", "realsteer"},
              {"tool_version", REALSTEER_VERSION},
              {"config", config},
              {"summary",
               {{"prompts", summary.results.size()},
                {"success_rate", summary.success_rate ? json(*summary.success_rate) : json(nullptr)},
                {"baseline_success_rate",
                 summary.baseline_success_rate ? json(*summary.baseline_success_rate) : json(nullptr)},
                {"uplift", summary.success_rate ? json(*summary.success_rate - *summary.baseline_success_rate)
                                                : json(nullptr)},
                {"histogram", summary.histogram},
                {"steered_queries", summary.steered_queries},
                {"baseline_queries", summary.baseline_queries},
                {"query_count", summary.query_count()}}},
              {"baseline_labels", baseline},
              {"results", results}};
  for (auto it = extra.begin(); it != extra.end(); ++it) record[it.key()] = it.value();
  return record;
}

void write_histogram_csv(const fs::path& path, const CampaignSummary& summary) {
  std::string text = "attempt,successes\n";
  for (std::size_t k = 1; k < summary.histogram.size(); ++k)
    text += std::to_string(k) + "," + std::to_string(summary.histogram[k]) + "\n";
  write_file_atomic(path, text);
}

}  // namespace realsteer
