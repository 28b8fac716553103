// Deterministic detector for protocol tests. Scores each payload by its first
// element (clamped to [0, 1]) unless --label pins the answer.

#include <poll.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "realsteer/protocol.hpp"

#include <httplib.h>

using nlohmann::json;
using namespace realsteer;

namespace {

struct Behaviour {
  std::optional<int> label;
  double threshold = 0.5;
  bool hard_label_only = false;
  bool bad_id = false;
  std::size_t error_every = 0;
  std::size_t max_elements = 0;
  int delay_ms = 0;
};

json answer(const Behaviour& b, const std::string& line, std::size_t serial) {
  json request = json::parse(line, nullptr, false);
  if (!request.is_object() || !request.contains("id"))
    return json{{"id", 0}, {"error", {{"code", "bad_payload"}, {"message", "unparsable request"}}}};
  const std::uint64_t id = request["id"].get<std::uint64_t>();
  const std::uint64_t reply_id = b.bad_id ? id + 1000000 : id;
  auto error = [&](const char* code, const std::string& message) {
    return json{{"id", reply_id}, {"error", {{"code", code}, {"message", message}}}};
  };
  if (b.error_every && (serial + 1) % b.error_every == 0) return error("oom", "scripted failure");
  double score = 0.0;
  try {
    const Tensor t = payload_to_tensor(request.at("payload"));
    if (b.max_elements && t.size() > b.max_elements) return error("bad_payload", "payload too large");
    score = t.empty() ? 0.0 : std::clamp(static_cast<double>(t[0]), 0.0, 1.0);
  } catch (const std::exception& e) {
    return error("bad_payload", e.what());
  }
  if (b.delay_ms) std::this_thread::sleep_for(std::chrono::milliseconds(b.delay_ms));
  json reply{{"id", reply_id}, {"label", b.label.value_or(score >= b.threshold ? 1 : 0)}};
  if (!b.hard_label_only) reply["score"] = score;
  return reply;
}

bool input_ready(int timeout_ms) {
  pollfd p{STDIN_FILENO, POLLIN, 0};
  return ::poll(&p, 1, timeout_ms) > 0;
}

void emit(const json& msg) {
  const std::string text = msg.dump() + "\n";
  std::fwrite(text.data(), 1, text.size(), stdout);
}

int serve_stdio(const Behaviour& b, const std::string& name, int version, std::size_t reorder, bool silent) {
  std::string buffer;
  std::vector<json> held;
  std::size_t serial = 0;
  bool greeted = false;
  auto flush = [&] {
    for (auto it = held.rbegin(); it != held.rend(); ++it) emit(*it);
    held.clear();
    std::fflush(stdout);
  };
  for (;;) {
    if (!held.empty() && (held.size() >= reorder || !input_ready(2))) flush();
    char chunk[65536];
    const ssize_t n = ::read(STDIN_FILENO, chunk, sizeof chunk);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    for (std::size_t nl; (nl = buffer.find('\n')) != std::string::npos;) {
      const std::string line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      if (!greeted) {
        greeted = true;
        if (silent) {
          std::this_thread::sleep_for(std::chrono::hours(1));
          return 0;
        }
        json hello{{"op", "hello"}, {"version", version}, {"name", name}};
        emit(hello);
        std::fflush(stdout);
        continue;
      }
      held.push_back(answer(b, line, serial++));
      if (held.size() >= reorder) flush();
    }
  }
  flush();
  return 0;
}

int serve_http(const Behaviour& b, const std::string& name, int version, int port) {
  httplib::Server server;
  std::size_t serial = 0;
  std::mutex serial_mutex;
  server.Get("/v1/health", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"op", "hello"}, {"version", version}, {"name", name}}.dump(), "application/json");
  });
  server.Post("/v1/classify", [&](const httplib::Request& req, httplib::Response& res) {
    std::size_t mine;
    {
      std::lock_guard lock(serial_mutex);
      mine = serial++;
    }
    const json reply = answer(b, req.body, mine);
    if (reply.contains("error")) res.status = 400;
    res.set_content(reply.dump(), "application/json");
  });
  const int bound = port == 0 ? server.bind_to_any_port("127.0.0.1") : (server.bind_to_port("127.0.0.1", port) ? port : -1);
  if (bound < 0) {
    std::cerr << "echo_detector: cannot bind port " << port << "\n";
    return 1;
  }
  std::cout << "listening " << bound << std::endl;
  server.listen_after_bind();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic test detector speaking the classify protocol"};
  Behaviour b;
  std::string name = "echo-detector";
  int version = kProtocolVersion;
  std::size_t reorder = 1;
  bool silent = false;
  std::optional<int> http_port;
  app.add_option("--label", b.label, "Always answer this label")->check(CLI::Range(0, 1));
  app.add_option("--threshold", b.threshold, "Fake when the first payload element reaches this value");
  app.add_flag("--hard-label-only", b.hard_label_only, "Omit scores");
  app.add_flag("--bad-id", b.bad_id, "Echo wrong ids");
  app.add_option("--error-every", b.error_every, "Answer every Nth request with an error frame");
  app.add_option("--max-elements", b.max_elements, "Reject payloads with more elements");
  app.add_option("--delay-ms", b.delay_ms, "Sleep before each answer");
  app.add_option("--name", name, "Name reported in the handshake");
  app.add_option("--version", version, "Protocol version reported in the handshake");
  app.add_option("--reorder", reorder, "Hold up to N replies and release them reversed")->check(CLI::PositiveNumber);
  app.add_flag("--silent", silent, "Never complete the handshake");
  app.add_option("--http", http_port, "Serve HTTP on this port (0 picks one and prints it)");
  CLI11_PARSE(app, argc, argv);
  if (http_port) return serve_http(b, name, version, *http_port);
  return serve_stdio(b, name, version, reorder, silent);
}
