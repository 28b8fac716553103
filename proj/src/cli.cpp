#include "realsteer/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "realsteer/detector.hpp"
#include "realsteer/fingerprint.hpp"
#include "realsteer/orchestrator.hpp"
#include "realsteer/rng.hpp"
#include "realsteer/spca.hpp"
#include "realsteer/steering.hpp"
#include "realsteer/store.hpp"

namespace realsteer {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDetectorStream = 0xDE7EC7;

Shape parse_shape(const std::string& text) {
  Shape out;
  std::stringstream in(text);
  for (std::string part; std::getline(in, part, 'x');) {
    require(!part.empty() && std::all_of(part.begin(), part.end(), ::isdigit), ErrorCode::BadConfig,
            "bad shape '" + text + "' (expected e.g. 4x8x8)");
    out.push_back(std::stoul(part));
  }
  return out;
}

std::vector<Prompt> class_prompts(std::size_t count, std::size_t classes) {
  std::vector<Prompt> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(Prompt::of_class(static_cast<int>(i % classes)));
  return out;
}

DetectorEndpoint load_endpoint(const std::string& spec) {
  if (spec.ends_with(".json") || fs::is_regular_file(spec)) return endpoint_from_json(read_json(spec));
  return parse_endpoint(spec);
}

std::vector<Tensor> unstack(const Tensor& t) {
  std::vector<Tensor> out;
  if (t.rank() == 0) return out;
  Shape record(t.shape().begin() + 1, t.shape().end());
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    const auto r = t.record(i);
    out.emplace_back(record, std::vector<float>(r.begin(), r.end()));
  }
  return out;
}

Tensor stack_or_empty(const std::vector<Tensor>& items, const Shape& record) {
  if (!items.empty()) return stack(items);
  Shape s{0};
  s.insert(s.end(), record.begin(), record.end());
  return Tensor(s);
}

ToyDetectorOptions detector_options(std::uint64_t seed, double target_fnr) {
  ToyDetectorOptions o;
  o.seed = derive_seed(seed, kDetectorStream);
  o.target_fnr = target_fnr;
  return o;
}

double direction_cosine(const DirectionSet& set, const ToyLinearParams& planted) {
  return cosine_similarity(set.directions.back().delta.values(), planted.planted_direction.values());
}

struct Reporter {
  std::ostream& out;
  bool as_json = false;
  json summary = json::object();

  void line(const std::string& text) {
    if (!as_json) out << text << '\n';
  }
  void finish() {
    if (as_json) out << summary.dump() << '\n';
  }
};

}  // namespace

json run_toy_experiment(const ToyExperimentConfig& c) {
  const GeneratorManifest manifest = make_toy_manifest(c.seed, c.steps, c.latent_shape, c.classes);
  const ToyLinearParams planted = plant_toy_linear(manifest, detector_options(c.seed, c.target_fnr));
  ToyGenerator generator(manifest);
  const DetectorEndpoint endpoint = toy_linear_endpoint(planted, true);
  auto detector = open_endpoint(endpoint);

  const std::vector<Prompt> classes = class_prompts(c.classes, c.classes);
  const LabeledDataset data =
      collect_labeled_dataset(generator, *detector, classes, {c.tp, c.fn, c.max_generations}, c.seed);
  DirectionProvenance provenance;
  provenance.generator_id = manifest.id;
  provenance.detector_id = detector->name();
  const DirectionSet directions = build_direction_set(data.clean, data.labels, manifest.schedule, c.seed, provenance);

  AttackConfig cfg;
  cfg.budget = c.budget;
  cfg.seed = c.seed;
  const std::vector<Prompt> prompts = class_prompts(c.prompts, c.classes);
  const CampaignSummary summary = run_campaign(generator, *detector, directions, prompts, cfg);

  json eigen = json::array();
  for (const SteeringDirection& d : directions.directions) eigen.push_back(d.eigenvalues);
  json config{{"experiment", "e2e-toy"},
              {"seed", c.seed},
              {"generator", manifest_to_json(manifest)},
              {"detector", {{"kind", "toy-linear"}, {"target_fnr", c.target_fnr}, {"bias", planted.bias},
                            {"threshold", planted.threshold}}},
              {"collection", {{"tp", c.tp}, {"fn", c.fn}, {"max_generations", c.max_generations}}},
              {"attack", attack_config_to_json(cfg)},
              {"prompts", c.prompts},
              {"rng", SeededRng::kAlgorithm}};
  json extra{{"collection_result", {{"generations", data.generations}, {"queries", data.queries}}},
             {"directions",
              {{"steps", directions.steps()},
               {"eigenvalues", eigen},
               {"cosine_to_planted_last", direction_cosine(directions, planted)}}},
             {"detector_log", {{"queries", detector->log().size()},
                               {"label_real", detector->log().count(0)},
                               {"label_fake", detector->log().count(1)},
                               {"scores_seen", detector->log().any_score()}}}};
  return run_record(config, summary, extra);
}

namespace {

int cmd_gen_dataset(Reporter& rep, const fs::path& out_dir, const std::string& manifest_path, std::uint64_t seed,
                    std::size_t steps, const std::string& latent, std::size_t classes, std::size_t count, bool real,
                    std::optional<std::size_t> tp, std::optional<std::size_t> fn, std::size_t max_generations,
                    const std::string& detector_spec, double target_fnr, std::size_t in_flight) {
  fs::create_directories(out_dir);
  GeneratorManifest manifest;
  std::string detector = detector_spec;
  if (manifest_path.empty()) {
    manifest = make_toy_manifest(seed, steps, parse_shape(latent), classes);
    write_json(out_dir / "generator.json", manifest_to_json(manifest));
    const ToyLinearParams planted = plant_toy_linear(manifest, detector_options(seed, target_fnr));
    write_json(out_dir / "detector.json", endpoint_to_json(toy_linear_endpoint(planted, true)));
    Shape single{1};
    single.insert(single.end(), manifest.latent_shape.begin(), manifest.latent_shape.end());
    save_tensor_store(out_dir / "planted_direction", planted.planted_direction.reshaped(single));
    if (detector.empty()) detector = (out_dir / "detector.json").string();
    rep.line("new toy world " + manifest.id + " latent " + shape_to_string(manifest.latent_shape) + " T=" +
             std::to_string(manifest.steps()));
  } else {
    manifest = manifest_from_json(read_json(manifest_path));
    if (fs::absolute(manifest_path) != fs::absolute(out_dir / "generator.json"))
      write_json(out_dir / "generator.json", manifest_to_json(manifest));
  }
  ToyGenerator generator(manifest);
  const std::vector<Prompt> prompts = class_prompts(manifest.class_count, manifest.class_count);

  if (tp || fn) {
    require(!real, ErrorCode::BadConfig, "--real cannot be combined with --tp/--fn");
    require(!detector.empty(), ErrorCode::BadConfig, "--tp/--fn need --detector");
    auto handle = open_endpoint(load_endpoint(detector));
    const LabeledDataset data = collect_labeled_dataset(generator, *handle, prompts,
                                                        {tp.value_or(0), fn.value_or(0), max_generations}, seed,
                                                        in_flight);
    save_tensor_store(out_dir / "latents", data.clean);
    std::vector<Tensor> images;
    for (const Tensor& z : unstack(data.clean)) images.push_back(decode_latent(manifest, z));
    save_tensor_store(out_dir / "images", stack_or_empty(images, manifest.decoder.image_shape));
    save_labels(out_dir / "labels.json", LabelFile{data.labels.labels(), std::nullopt, {}});
    rep.summary = {{"generations", data.generations}, {"queries", data.queries},
                   {"tp", data.labels.count(HardLabel::Fake)}, {"fn", data.labels.count(HardLabel::Real)}};
    rep.line("collected " + std::to_string(data.labels.rows()) + " samples from " +
             std::to_string(data.generations) + " generations");
    return kExitOk;
  }

  std::vector<Tensor> latents, images;
  for (std::size_t i = 0; i < count; ++i) {
    const Prompt& p = prompts[i % prompts.size()];
    const std::uint64_t s = derive_seed(seed, i);
    Tensor z = real ? sample_real_latent(manifest, p, s) : sample_trajectory(manifest, p, s).clean();
    images.push_back(decode_latent(manifest, z));
    latents.push_back(std::move(z));
  }
  save_tensor_store(out_dir / "latents", stack_or_empty(latents, manifest.latent_shape));
  save_tensor_store(out_dir / "images", stack_or_empty(images, manifest.decoder.image_shape));
  rep.summary = {{"count", count}, {"real", real}};
  rep.line("wrote " + std::to_string(count) + (real ? " real-proxy" : " generated") + " samples to " +
           out_dir.string());
  return kExitOk;
}

int cmd_label(Reporter& rep, const fs::path& images_dir, const std::string& detector, const fs::path& out,
              bool scores, std::size_t in_flight) {
  DetectorEndpoint endpoint = load_endpoint(detector);
  if (scores) endpoint.strict_hard_label = false;
  auto handle = open_endpoint(endpoint);
  const std::vector<Tensor> images = unstack(load_tensor_store(images_dir));
  const std::vector<Verdict> verdicts = handle->classify_batch(images, in_flight);
  LabelFile file;
  std::vector<double> s;
  for (const Verdict& v : verdicts) {
    file.labels.push_back(v.label);
    if (v.score) s.push_back(*v.score);
  }
  if (scores) {
    require(s.size() == verdicts.size(), ErrorCode::MalformedResponse, "detector did not return scores");
    file.scores = std::move(s);
  }
  save_labels(out, file);
  const auto fake = static_cast<std::size_t>(std::count(file.labels.begin(), file.labels.end(), 1));
  rep.summary = {{"count", verdicts.size()}, {"fake", fake}, {"real", verdicts.size() - fake}};
  rep.line("labelled " + std::to_string(verdicts.size()) + " images: " + std::to_string(fake) + " fake");
  return kExitOk;
}

int cmd_find_directions(Reporter& rep, const fs::path& latents, const fs::path& labels, const std::string& manifest,
                        std::size_t steps, const fs::path& out, std::uint64_t seed, std::size_t k) {
  const Tensor z = load_tensor_store(latents);
  const LabelFile y = load_labels(labels);
  DirectionProvenance provenance;
  NoiseSchedule schedule = NoiseSchedule::rectified_flow(steps);
  if (!manifest.empty()) {
    const GeneratorManifest m = manifest_from_json(read_json(manifest));
    schedule = m.schedule;
    provenance.generator_id = m.id;
  }
  const DirectionSet set = build_direction_set(z, LabelMatrix(y.labels), schedule, seed, provenance, k);
  save_direction_set(out, set);
  json eigen = json::array();
  for (const SteeringDirection& d : set.directions) eigen.push_back(d.eigenvalues);
  rep.summary = {{"steps", set.steps()}, {"tp", set.provenance.tp_count}, {"fn", set.provenance.fn_count},
                 {"eigenvalues", eigen}};
  rep.line("wrote " + std::to_string(set.steps()) + " directions to " + out.string());
  return kExitOk;
}

int cmd_transfer(Reporter& rep, const fs::path& in, const fs::path& out, const std::string& size,
                 const std::string& mode, bool no_renormalize) {
  const Shape hw = parse_shape(size);
  require(hw.size() == 2, ErrorCode::BadConfig, "--size expects HxW");
  const DirectionSet set = load_direction_set(in);
  const DirectionSet moved = transfer_direction_set(set, {hw[0], hw[1], parse_interp_mode(mode), !no_renormalize});
  save_direction_set(out, moved);
  rep.summary = {{"from", set.latent_shape}, {"to", moved.latent_shape}, {"transfers", moved.provenance.transfers.size()}};
  rep.line("transferred " + shape_to_string(set.latent_shape) + " -> " + shape_to_string(moved.latent_shape));
  return kExitOk;
}

int cmd_attack(Reporter& rep, const std::string& manifest_path, const std::string& detector, const fs::path& dirs,
               std::size_t prompt_count, AttackConfig cfg, const fs::path& record_path, const fs::path& histogram,
               const std::string& remote_generator, const std::string& image_shape) {
  const DirectionSet set = load_direction_set(dirs);
  auto handle = open_endpoint(load_endpoint(detector));
  std::unique_ptr<Generator> generator;
  std::size_t classes = 1;
  json generator_json;
  if (!remote_generator.empty()) {
    const DetectorEndpoint exec = parse_endpoint(remote_generator);
    require(exec.kind == EndpointKind::Subprocess, ErrorCode::BadConfig, "--remote-generator expects exec:<path>");
    require(!image_shape.empty(), ErrorCode::BadConfig, "--remote-generator needs --image-shape");
    generator = std::make_unique<RemoteGenerator>(exec.locator, exec.args,
                                                  GeneratorInfo{"remote", set.latent_shape, parse_shape(image_shape),
                                                                set.steps()});
    generator_json = {{"remote", remote_generator}};
  } else {
    require(!manifest_path.empty(), ErrorCode::BadConfig, "--manifest or --remote-generator is required");
    const GeneratorManifest m = manifest_from_json(read_json(manifest_path));
    classes = m.class_count;
    generator_json = manifest_to_json(m);
    generator = std::make_unique<ToyGenerator>(m);
  }
  const std::vector<Prompt> prompts = class_prompts(prompt_count, classes);
  const CampaignSummary summary =
      run_campaign(*generator, *handle, set, prompts, cfg, fs::absolute(dirs).string());
  json config{{"generator", generator_json}, {"detector", detector}, {"directions", dirs.string()},
              {"attack", attack_config_to_json(cfg)}, {"prompts", prompt_count}};
  const json record = run_record(config, summary);
  if (!record_path.empty()) write_file_atomic(record_path, record.dump(2) + "\n");
  if (!histogram.empty()) write_histogram_csv(histogram, summary);
  rep.summary = record.at("summary");
  if (summary.success_rate)
    rep.line("steered success " + std::to_string(*summary.success_rate) + ", unsteered " +
             std::to_string(*summary.baseline_success_rate) + ", queries " + std::to_string(summary.query_count()));
  else
    rep.line("no prompts: success rate undefined");
  return kExitOk;
}

int cmd_calibrate(Reporter& rep, const fs::path& labels_path, const std::string& images, const std::string& detector,
                  const fs::path& write_detector, std::size_t in_flight) {
  const LabelFile truth = load_labels(labels_path);
  std::vector<double> scores;
  if (!detector.empty()) {
    require(!images.empty(), ErrorCode::BadConfig, "--detector needs --images");
    DetectorEndpoint endpoint = load_endpoint(detector);
    endpoint.strict_hard_label = false;
    auto handle = open_endpoint(endpoint);
    for (const Verdict& v : handle->classify_batch(unstack(load_tensor_store(images)), in_flight)) {
      require(v.score.has_value(), ErrorCode::MalformedResponse, "detector did not return scores");
      scores.push_back(*v.score);
    }
  } else {
    require(truth.scores.has_value(), ErrorCode::BadConfig, "label file has no scores; pass --detector and --images");
    scores = *truth.scores;
  }
  const double tau = calibrate_threshold(truth.labels, scores);
  if (!write_detector.empty()) {
    require(!detector.empty(), ErrorCode::BadConfig, "--write-detector needs --detector");
    DetectorEndpoint endpoint = load_endpoint(detector);
    require(endpoint.kind == EndpointKind::Builtin, ErrorCode::BadConfig, "only builtin detectors take a threshold");
    endpoint.threshold = tau;
    write_json(write_detector, endpoint_to_json(endpoint));
  }
  rep.summary = {{"threshold", tau}, {"count", scores.size()}};
  std::ostringstream text;
  text.precision(17);
  text << "threshold " << tau;
  rep.line(text.str());
  return kExitOk;
}

int cmd_fingerprint(Reporter& rep, const fs::path& images, const fs::path& stem, DenoiserConfig cfg,
                    const std::string& kind) {
  cfg.kind = parse_denoiser_kind(kind);
  const ResidualSpectrum result = spectral_fingerprint(unstack(load_tensor_store(images)), cfg);
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  write_fingerprint(stem, result);
  rep.summary = {{"sample_count", result.sample_count}, {"shape", result.spectrum.shape()},
                 {"denoiser", cfg.to_json()}};
  rep.line("fingerprint of " + std::to_string(result.sample_count) + " images written to " + stem.string() + ".*");
  return kExitOk;
}

int cmd_project(Reporter& rep, const fs::path& latents, const fs::path& labels, const fs::path& out) {
  const Tensor z = load_tensor_store(latents);
  const LabelFile y = load_labels(labels);
  const Tensor flat = z.reshaped({z.dim(0), z.record_size()});
  const Tensor coords = project_2d(flat, LabelMatrix(y.labels));
  std::ostringstream csv;
  csv.precision(9);
  csv << "u1,u2,label\n";
  for (std::size_t i = 0; i < coords.dim(0); ++i)
    csv << coords[2 * i] << ',' << coords[2 * i + 1] << ',' << y.labels[i] << '\n';
  if (out.empty())
    rep.out << csv.str();
  else
    write_file_atomic(out, csv.str());
  rep.summary = {{"count", coords.dim(0)}};
  return kExitOk;
}

int cmd_e2e(Reporter& rep, const ToyExperimentConfig& cfg, const fs::path& record_path) {
  const json record = run_toy_experiment(cfg);
  if (!record_path.empty()) {
    if (record_path.has_parent_path()) fs::create_directories(record_path.parent_path());
    write_file_atomic(record_path, record.dump(2) + "\n");
  }
  const json& s = record.at("summary");
  rep.summary = {{"baseline_success_rate", s.at("baseline_success_rate")},
                 {"steered_success_rate", s.at("success_rate")},
                 {"uplift", s.at("uplift")},
                 {"query_count", s.at("query_count")},
                 {"cosine_to_planted_last", record.at("directions").at("cosine_to_planted_last")}};
  std::ostringstream text;
  text << "unsteered success " << s.at("baseline_success_rate").dump() << ", steered " << s.at("success_rate").dump()
       << ", uplift " << s.at("uplift").dump();
  rep.line(text.str());
  return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Black-box red-teaming of synthetic image detectors by latent steering", "realsteer"};
  app.require_subcommand(1);
  app.fallthrough();
  Reporter rep{out};
  app.add_flag("--json", rep.as_json, "Print a machine-readable JSON summary");
  std::uint64_t seed = 0;
  std::size_t in_flight = 8;

  std::function<int()> action;

  auto* gen = app.add_subcommand("gen-dataset", "Generate toy samples, or collect TP/FN quotas against a detector");
  std::string gen_out, gen_manifest, gen_latent = "4x8x8", gen_detector;
  std::size_t gen_steps = 8, gen_classes = 4, gen_count = 1000, gen_max = 100000;
  std::optional<std::size_t> gen_tp, gen_fn;
  bool gen_real = false;
  double gen_fnr = 0.15;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--manifest", gen_manifest, "Existing generator.json (default: create a toy world)");
  gen->add_option("--steps", gen_steps, "Sampling steps T for a new toy world");
  gen->add_option("--latent", gen_latent, "Latent shape CxHxW for a new toy world");
  gen->add_option("--classes", gen_classes, "Class count for a new toy world");
  gen->add_option("--target-fnr", gen_fnr, "Unsteered FNR of the planted detector");
  gen->add_option("--count", gen_count, "Samples to generate");
  gen->add_flag("--real", gen_real, "Sample the real-proxy distribution instead");
  gen->add_option("--tp", gen_tp, "True-positive quota (collect mode)");
  gen->add_option("--fn", gen_fn, "False-negative quota (collect mode)");
  gen->add_option("--max-generations", gen_max, "Generation cap in collect mode");
  gen->add_option("--detector", gen_detector, "Detector endpoint JSON or spec");
  gen->add_option("--seed", seed, "Seed");
  gen->add_option("--in-flight", in_flight, "Max outstanding detector queries")->check(CLI::PositiveNumber);
  gen->callback([&] {
    action = [&] {
      return cmd_gen_dataset(rep, gen_out, gen_manifest, seed, gen_steps, gen_latent, gen_classes, gen_count, gen_real,
                             gen_tp, gen_fn, gen_max, gen_detector, gen_fnr, in_flight);
    };
  });

  auto* label = app.add_subcommand("label", "Query a detector for hard labels");
  std::string label_images, label_detector, label_out;
  bool label_scores = false;
  label->add_option("--images", label_images, "Image tensor store")->required();
  label->add_option("--detector", label_detector, "Detector endpoint JSON or spec")->required();
  label->add_option("--out", label_out, "labels.json to write")->required();
  label->add_flag("--scores", label_scores, "Keep scores (disables hard-label mode)");
  label->add_option("--in-flight", in_flight, "Max outstanding queries")->check(CLI::PositiveNumber);
  label->callback([&] {
    action = [&] { return cmd_label(rep, label_images, label_detector, label_out, label_scores, in_flight); };
  });

  auto* find = app.add_subcommand("find-directions", "Per-timestep steering directions from labelled latents");
  std::string find_latents, find_labels, find_manifest, find_out;
  std::size_t find_steps = 8, find_k = 2;
  find->add_option("--latents", find_latents, "Clean latent tensor store")->required();
  find->add_option("--labels", find_labels, "labels.json aligned with the latents")->required();
  find->add_option("--manifest", find_manifest, "generator.json providing the noise schedule");
  find->add_option("--steps", find_steps, "Steps T when no manifest is given");
  find->add_option("--k", find_k, "Eigenpairs combined per timestep");
  find->add_option("--out", find_out, "Direction set directory")->required();
  find->add_option("--seed", seed, "Seed");
  find->callback([&] {
    action = [&] {
      return cmd_find_directions(rep, find_latents, find_labels, find_manifest, find_steps, find_out, seed, find_k);
    };
  });

  auto* transfer = app.add_subcommand("transfer", "Resample a direction set to another latent resolution");
  std::string tr_in, tr_out, tr_size, tr_mode = "bilinear";
  bool tr_raw = false;
  transfer->add_option("--in", tr_in, "Source direction set")->required();
  transfer->add_option("--out", tr_out, "Target direction set")->required();
  transfer->add_option("--size", tr_size, "Target HxW")->required();
  transfer->add_option("--mode", tr_mode, "bilinear or nearest");
  transfer->add_flag("--no-renormalize", tr_raw, "Keep interpolated norms (file will fail unit-norm checks)");
  transfer->callback([&] { action = [&] { return cmd_transfer(rep, tr_in, tr_out, tr_size, tr_mode, tr_raw); }; });

  auto* attack = app.add_subcommand("attack", "Budgeted steering attack campaign");
  std::string at_manifest, at_detector, at_dirs, at_record, at_hist, at_remote, at_image_shape;
  std::size_t at_prompts = 200;
  AttackConfig at_cfg;
  attack->add_option("--manifest", at_manifest, "generator.json");
  attack->add_option("--remote-generator", at_remote, "exec:<path> [args] speaking the generate op");
  attack->add_option("--image-shape", at_image_shape, "CxHxW of remote generator images");
  attack->add_option("--detector", at_detector, "Detector endpoint JSON or spec")->required();
  attack->add_option("--directions", at_dirs, "Direction set directory")->required();
  attack->add_option("--prompts", at_prompts, "Number of prompts (classes cycle)");
  attack->add_option("--budget", at_cfg.budget, "Attempts per prompt")->check(CLI::PositiveNumber);
  attack->add_option("--lambda-min", at_cfg.lambda_min, "Smallest steering magnitude");
  attack->add_option("--lambda-max", at_cfg.lambda_max, "Largest steering magnitude");
  attack->add_option("--workers", at_cfg.workers, "Generation threads")->check(CLI::PositiveNumber);
  attack->add_option("--record", at_record, "RunRecord JSON to write");
  attack->add_option("--histogram", at_hist, "Attempt histogram CSV to write");
  attack->add_option("--seed", seed, "Seed");
  attack->add_option("--in-flight", in_flight, "Max outstanding queries")->check(CLI::PositiveNumber);
  attack->callback([&] {
    action = [&] {
      at_cfg.seed = seed;
      at_cfg.max_in_flight = in_flight;
      return cmd_attack(rep, at_manifest, at_detector, at_dirs, at_prompts, at_cfg, at_record, at_hist, at_remote,
                        at_image_shape);
    };
  });

  auto* calibrate = app.add_subcommand("calibrate", "Best detector threshold on balanced labelled scores");
  std::string cal_labels, cal_images, cal_detector, cal_write;
  calibrate->add_option("--labels", cal_labels, "labels.json with ground truth (and scores)")->required();
  calibrate->add_option("--images", cal_images, "Images to score with --detector");
  calibrate->add_option("--detector", cal_detector, "Detector providing scores");
  calibrate->add_option("--write-detector", cal_write, "Write the detector endpoint with the new threshold");
  calibrate->add_option("--in-flight", in_flight, "Max outstanding queries")->check(CLI::PositiveNumber);
  calibrate->callback([&] {
    action = [&] { return cmd_calibrate(rep, cal_labels, cal_images, cal_detector, cal_write, in_flight); };
  });

  auto* fp = app.add_subcommand("fingerprint", "Averaged residual spectrum of an image set");
  std::string fp_images, fp_out, fp_kind = "nl-means";
  DenoiserConfig fp_cfg;
  fp->add_option("--images", fp_images, "Image tensor store")->required();
  fp->add_option("--out", fp_out, "Output stem for .csv/.pgm/.json")->required();
  fp->add_option("--denoiser", fp_kind, "nl-means or gaussian");
  fp->add_option("--patch-radius", fp_cfg.patch_radius, "nl-means patch radius");
  fp->add_option("--search-radius", fp_cfg.search_radius, "nl-means search radius");
  fp->add_option("--strength", fp_cfg.h, "nl-means filter strength h");
  fp->add_option("--noise-sigma", fp_cfg.noise_sigma, "nl-means noise sigma");
  fp->add_option("--sigma", fp_cfg.gaussian_sigma, "gaussian blur sigma");
  fp->callback([&] { action = [&] { return cmd_fingerprint(rep, fp_images, fp_out, fp_cfg, fp_kind); }; });

  auto* project = app.add_subcommand("project", "2-D supervised projection of labelled latents (CSV)");
  std::string pr_latents, pr_labels, pr_out;
  project->add_option("--latents", pr_latents, "Latent tensor store")->required();
  project->add_option("--labels", pr_labels, "labels.json")->required();
  project->add_option("--out", pr_out, "CSV path (default stdout)");
  project->callback([&] { action = [&] { return cmd_project(rep, pr_latents, pr_labels, pr_out); }; });

  auto* e2e = app.add_subcommand("e2e-toy", "Full toy pipeline: plant, collect, find directions, attack");
  ToyExperimentConfig e2e_cfg;
  std::string e2e_record;
  e2e->add_option("--seed", seed, "Seed");
  e2e->add_option("--tp", e2e_cfg.tp, "True-positive quota");
  e2e->add_option("--fn", e2e_cfg.fn, "False-negative quota");
  e2e->add_option("--prompts", e2e_cfg.prompts, "Attack prompts");
  e2e->add_option("--budget", e2e_cfg.budget, "Attempts per prompt")->check(CLI::PositiveNumber);
  e2e->add_option("--record", e2e_record, "RunRecord JSON to write");
  e2e->callback([&] {
    action = [&] {
      e2e_cfg.seed = seed;
      return cmd_e2e(rep, e2e_cfg, e2e_record);
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const int code = action();
    rep.finish();
    return code;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitOperational;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitOperational;
  }
}

}  // namespace realsteer
