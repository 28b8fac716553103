#include <doctest.h>

#include <filesystem>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "realsteer/cli.hpp"
#include "realsteer/detector.hpp"
#include "realsteer/orchestrator.hpp"
#include "realsteer/store.hpp"
#include "test_helpers.hpp"

using namespace realsteer;
using testing::code_of;
using testing::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

DirectionSet random_set(SeededRng& rng, std::size_t steps, Shape shape) {
  DirectionSet set;
  set.latent_shape = shape;
  set.provenance.generator_id = "toy-flow-v1";
  set.provenance.detector_id = "builtin:toy-linear";
  set.provenance.tp_count = 10;
  set.provenance.fn_count = 12;
  set.provenance.seed = 0xDEADBEEFCAFEull;
  set.provenance.source_shape = shape;
  for (std::size_t t = 0; t < steps; ++t) {
    SteeringDirection d;
    d.t = t;
    d.delta = oracle::random_tensor(rng, shape);
    const double n = l2_norm(d.delta.values());
    for (float& v : d.delta.values()) v = static_cast<float>(v / n);
    d.eigenvalues = {rng.uniform(1, 2), rng.uniform(0, 1)};
    d.raw_norm = rng.uniform(1, 5);
    set.directions.push_back(d);
  }
  return set;
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_command(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_SUITE("store") {
  TEST_CASE("tensor store round trip") {
    TempDir dir("ts");
    SeededRng rng(1);
    const Tensor data = oracle::random_tensor(rng, {10, 4, 8, 8});
    save_tensor_store(dir / "a", data);
    CHECK(load_tensor_store(dir / "a") == data);
    save_tensor_store(dir / "b", data, 3);
    CHECK(load_tensor_store(dir / "b") == data);
    const json manifest = read_json(dir / "b" / "manifest.json");
    CHECK(manifest["files"].size() == 4);
    CHECK(manifest["dtype"] == "f32le");
    const Tensor empty({0, 2, 2});
    save_tensor_store(dir / "e", empty);
    CHECK(load_tensor_store(dir / "e").shape() == Shape{0, 2, 2});
  }

  TEST_CASE("tensor store integrity checks") {
    TempDir dir("ti");
    SeededRng rng(2);
    save_tensor_store(dir / "s", oracle::random_tensor(rng, {4, 3}));
    CHECK(code_of([&] { load_tensor_store(dir / "missing"); }) == ErrorCode::ManifestMissing);

    const fs::path part = dir / "s" / "part-00000.f32";
    const auto size = fs::file_size(part);
    fs::resize_file(part, size - 4);
    CHECK(code_of([&] { load_tensor_store(dir / "s"); }) == ErrorCode::ShapeByteMismatch);

    save_tensor_store(dir / "v", oracle::random_tensor(rng, {2, 2}));
    json manifest = read_json(dir / "v" / "manifest.json");
    manifest["version"] = 2;
    write_json(dir / "v" / "manifest.json", manifest);
    CHECK(code_of([&] { load_tensor_store(dir / "v"); }) == ErrorCode::UnsupportedVersion);
  }

  TEST_CASE("labels file") {
    TempDir dir("lf");
    const LabelFile f{{0, 1, 1}, std::vector<double>{0.1, 0.9, 0.7}, {"real", "steered", "unsteered"}};
    save_labels(dir / "labels.json", f);
    const LabelFile g = load_labels(dir / "labels.json");
    CHECK(g.labels == f.labels);
    CHECK(g.scores == f.scores);
    CHECK(g.sources == f.sources);
  }

  TEST_CASE("direction set round trip") {
    TempDir dir("ds");
    SeededRng rng(3);
    const DirectionSet set = random_set(rng, 5, {4, 6, 6});
    save_direction_set(dir / "d", set);
    const DirectionSet back = load_direction_set(dir / "d");
    REQUIRE(back.steps() == 5);
    CHECK(back.latent_shape == set.latent_shape);
    for (std::size_t t = 0; t < 5; ++t) {
      CHECK(back.at(t).delta == set.at(t).delta);
      CHECK(back.at(t).eigenvalues == set.at(t).eigenvalues);
      CHECK(back.at(t).raw_norm == set.at(t).raw_norm);
    }
    CHECK(back.provenance.seed == set.provenance.seed);
    CHECK(back.provenance.detector_id == set.provenance.detector_id);
    CHECK(back.provenance.fn_count == 12);
    // Payload bytes are reproduced exactly.
    save_direction_set(dir / "again", back);
    CHECK(read_file(dir / "d" / "directions.f32") == read_file(dir / "again" / "directions.f32"));
  }

  TEST_CASE("non-unit directions are rejected on load") {
    TempDir dir("nv");
    SeededRng rng(4);
    save_direction_set(dir / "d", random_set(rng, 2, {1, 2, 2}));
    std::string payload = read_file(dir / "d" / "directions.f32");
    float first;
    std::memcpy(&first, payload.data(), 4);
    first *= 1.5f;
    std::memcpy(payload.data(), &first, 4);
    write_file_atomic(dir / "d" / "directions.f32", payload);
    CHECK(code_of([&] { load_direction_set(dir / "d"); }) == ErrorCode::NormViolation);
  }

  TEST_CASE("transfer provenance survives the file format") {
    TempDir dir("tp");
    SeededRng rng(5);
    save_direction_set(dir / "src", random_set(rng, 3, {4, 8, 8}));
    const DirectionSet moved = transfer_direction_set(load_direction_set(dir / "src"), {16, 16, InterpMode::Bilinear, true});
    save_direction_set(dir / "dst", moved);
    const DirectionSet back = load_direction_set(dir / "dst");
    CHECK(back.latent_shape == Shape{4, 16, 16});
    REQUIRE(back.provenance.transfers.size() == 1);
    CHECK(back.provenance.transfers[0].from == Shape{4, 8, 8});
    CHECK(back.provenance.transfers[0].to == Shape{4, 16, 16});
    CHECK(back.provenance.source_shape == Shape{4, 8, 8});
    const json meta = read_json(dir / "dst" / "dirset.json");
    CHECK(meta["provenance"]["transfers"][0]["mode"] == "bilinear");
  }

  TEST_CASE("manifest and endpoint json") {
    const GeneratorManifest m = make_toy_manifest(7, 6, {3, 4, 4}, 2);
    const GeneratorManifest back = manifest_from_json(manifest_to_json(m));
    CHECK(back.class_means == m.class_means);
    CHECK(back.decoder.weights == m.decoder.weights);
    CHECK(back.schedule.a == m.schedule.a);
    json bad = manifest_to_json(m);
    bad["id"] = "other";
    CHECK_THROWS_AS(manifest_from_json(bad), Error);

    const DetectorEndpoint e = toy_linear_endpoint(plant_toy_linear(m));
    const DetectorEndpoint e2 = endpoint_from_json(endpoint_to_json(e));
    CHECK(e2.kind == e.kind);
    CHECK(e2.locator == e.locator);
    CHECK(e2.params == e.params);
    DetectorEndpoint ex = DetectorEndpoint::subprocess("/bin/x", {"--a"});
    ex.payload = PayloadKind::ImagePng;
    const DetectorEndpoint ex2 = endpoint_from_json(endpoint_to_json(ex));
    CHECK(ex2.args == ex.args);
    CHECK(ex2.payload == PayloadKind::ImagePng);
  }

  TEST_CASE("run record carries no timings") {
    CampaignSummary s;
    s.results.resize(1);
    s.success_rate = 1.0;
    s.baseline_success_rate = 0.0;
    s.histogram = {0, 1};
    const json r = run_record(attack_config_to_json(AttackConfig{}), s);
    CHECK(r.contains("tool_version"));
    const std::string text = r.dump();
    CHECK(text.find("elapsed") == std::string::npos);
    CHECK(text.find("seconds") == std::string::npos);
    CHECK(text.find("_ms\"") == std::string::npos);
    CHECK(text.find("timestamp") == std::string::npos);
  }

  TEST_CASE("command line exit codes") {
    CHECK(cli({"--no-such-flag"}).code == kExitUsage);
    CHECK(cli({"attack", "--bogus"}).code == kExitUsage);
    CHECK(cli({"find-directions"}).code == kExitUsage);
    CHECK(cli({}).code == kExitUsage);

    TempDir dir("cli");
    SeededRng rng(6);
    save_tensor_store(dir / "lat", oracle::random_tensor(rng, {4, 2, 2, 2}));
    save_labels(dir / "labels.json", {{1, 1, 1, 1}, std::nullopt, {}});
    const CliRun single = cli({"find-directions", "--latents", (dir / "lat").string(), "--labels",
                               (dir / "labels.json").string(), "--steps", "2", "--out", (dir / "d").string()});
    CHECK(single.code == kExitOperational);
    CHECK(single.err.find("DegenerateLabels") != std::string::npos);
    const CliRun missing = cli({"project", "--latents", (dir / "nope").string(), "--labels", (dir / "labels.json").string()});
    CHECK(missing.code == kExitOperational);
    CHECK(missing.err.find("ManifestMissing") != std::string::npos);
  }

  TEST_CASE("command line toy workflow") {
    TempDir dir("flow");
    const std::string world = (dir / "world").string();
    REQUIRE(cli({"gen-dataset", "--out", world, "--tp", "60", "--fn", "60", "--seed", "2"}).code == kExitOk);
    CHECK(fs::exists(dir / "world" / "generator.json"));
    CHECK(fs::exists(dir / "world" / "detector.json"));
    const LabelFile labels = load_labels(dir / "world" / "labels.json");
    CHECK(labels.labels.size() == 120);
    REQUIRE(cli({"find-directions", "--latents", world + "/latents", "--labels", world + "/labels.json", "--manifest",
                 world + "/generator.json", "--out", world + "/dirs"})
                .code == kExitOk);
    CHECK(load_direction_set(dir / "world" / "dirs").steps() == 8);
    const CliRun attack = cli({"attack", "--manifest", world + "/generator.json", "--detector", world + "/detector.json",
                               "--directions", world + "/dirs", "--prompts", "20", "--record", world + "/run.json",
                               "--histogram", world + "/hist.csv", "--json"});
    REQUIRE(attack.code == kExitOk);
    const json summary = json::parse(attack.out);
    CHECK(summary.contains("success_rate"));
    CHECK(fs::exists(dir / "world" / "hist.csv"));
    CHECK(read_json(dir / "world" / "run.json")["results"].size() == 20);

    REQUIRE(cli({"transfer", "--in", world + "/dirs", "--out", world + "/dirs16", "--size", "16x16"}).code == kExitOk);
    CHECK(load_direction_set(dir / "world" / "dirs16").provenance.transfers.size() == 1);
    REQUIRE(cli({"fingerprint", "--images", world + "/images", "--out", world + "/fp", "--denoiser", "gaussian"}).code ==
            kExitOk);
    CHECK(fs::exists(dir / "world" / "fp.pgm"));
    const CliRun proj = cli({"project", "--latents", world + "/latents", "--labels", world + "/labels.json"});
    REQUIRE(proj.code == kExitOk);
    CHECK(std::count(proj.out.begin(), proj.out.end(), '\n') == 121);
  }
}
