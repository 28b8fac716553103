// Serves a toy generator over the generate op on stdio, steering on the
// server side from a direction-set path named in each request.

#include <CLI11.hpp>
#include <iostream>
#include <map>
#include <string>

#include "realsteer/generator.hpp"
#include "realsteer/protocol.hpp"
#include "realsteer/steering.hpp"
#include "realsteer/store.hpp"

using nlohmann::json;
using namespace realsteer;

namespace {

json error_frame(const json& id, const char* code, const std::string& message) {
  return {{"id", id}, {"error", {{"code", code}, {"message", message}}}};
}

Prompt parse_prompt(const std::string& text) {
  if (text.starts_with("class:")) return Prompt::of_class(std::stoi(text.substr(6)));
  return Prompt::of_text(text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Toy generator speaking the generate op"};
  std::string manifest_path;
  app.add_option("--manifest", manifest_path, "generator.json")->required();
  CLI11_PARSE(app, argc, argv);

  const GeneratorManifest manifest = manifest_from_json(read_json(manifest_path));
  std::map<std::string, DirectionSet> cache;
  std::string line;
  bool greeted = false;
  while (std::getline(std::cin, line)) {
    if (!greeted) {
      greeted = true;
      std::cout << hello_message("toy-generator:" + manifest.id).dump() << std::endl;
      continue;
    }
    const json req = json::parse(line, nullptr, false);
    const json id = req.is_object() ? req.value("id", json(0)) : json(0);
    json reply;
    try {
      if (!req.is_object() || req.value("op", std::string()) != "generate") {
        reply = error_frame(id, "generation_failed", "expected a generate request");
      } else {
        const Prompt prompt = parse_prompt(req.at("prompt").get<std::string>());
        prompt.validate(manifest.class_count);
        const auto seed = req.at("seed").get<std::uint64_t>();
        const auto res = req.at("resolution").get<std::vector<std::size_t>>();
        const Shape& image = manifest.decoder.image_shape;
        if (res.size() != 2 || res[0] != image[1] || res[1] != image[2]) {
          reply = error_frame(id, "generation_failed", "resolution differs from " + shape_to_string(image));
        } else {
          std::optional<SteeringPlan> plan;
          const json steering = req.value("steering", json(nullptr));
          if (steering.is_object() && steering.contains("lambda")) {
            const std::string path = steering.at("dirset_path").get<std::string>();
            auto it = cache.find(path);
            if (it == cache.end()) it = cache.emplace(path, load_direction_set(path)).first;
            const DirectionSet& set = it->second;
            if (set.latent_shape != manifest.latent_shape || set.steps() != manifest.steps()) {
              reply = error_frame(id, "dirset_shape_mismatch",
                                  shape_to_string(set.latent_shape) + " vs " + shape_to_string(manifest.latent_shape));
            } else {
              plan = SteeringPlan::from_schedule(set, {steering.at("lambda").get<double>(),
                                                       steering.at("a").get<std::size_t>(),
                                                       steering.at("b").get<std::size_t>(), manifest.steps()});
            }
          }
          if (reply.is_null()) {
            const LatentTrajectory traj = sample_trajectory(manifest, prompt, seed, plan ? &*plan : nullptr);
            reply = {{"id", id},
                     {"image", payload_json(decode_latent(manifest, traj.clean()), PayloadKind::ImagePng)},
                     {"latent", payload_json(traj.clean(), PayloadKind::TensorF32)}};
          }
        }
      }
    } catch (const std::exception& e) {
      reply = error_frame(id, "generation_failed", e.what());
    }
    std::cout << reply.dump() << std::endl;
  }
  return 0;
}
