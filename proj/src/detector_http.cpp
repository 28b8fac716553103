#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

#include "detector_remote.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that clashes with Eigen.
#include <httplib.h>

namespace realsteer::detail {

namespace {

using Clock = std::chrono::steady_clock;

std::unique_ptr<httplib::Client> make_client(const std::string& url, std::chrono::milliseconds timeout) {
  auto client = std::make_unique<httplib::Client>(url);
  require(client->is_valid(), ErrorCode::ConnectError, "invalid detector URL '" + url + "'");
  const auto secs = static_cast<time_t>(timeout.count() / 1000);
  const auto usecs = static_cast<time_t>((timeout.count() % 1000) * 1000);
  client->set_connection_timeout(secs, usecs);
  client->set_read_timeout(secs, usecs);
  client->set_write_timeout(secs, usecs);
  client->set_keep_alive(true);
  return client;
}

class HttpHandle final : public DetectorHandle {
 public:
  explicit HttpHandle(const DetectorEndpoint& endpoint)
      : DetectorHandle(endpoint.locator, endpoint.strict_hard_label), endpoint_(endpoint) {
    auto client = make_client(endpoint.locator, endpoint.handshake_timeout);
    const auto res = client->Get("/v1/health");
    if (!res)
      fail(ErrorCode::ConnectError,
           "health probe to '" + endpoint.locator + "' failed: " + httplib::to_string(res.error()));
    require(res->status == 200, ErrorCode::ConnectError, "health probe returned HTTP " + std::to_string(res->status));
    if (!res->body.empty()) {
      const auto body = nlohmann::json::parse(res->body, nullptr, false);
      if (body.is_object() && body.contains("op")) name_ = parse_hello(res->body);
    }
  }

 protected:
  std::vector<Answer> dispatch(std::span<const Tensor> images, std::span<const std::uint64_t> ids,
                               std::size_t max_in_flight) override {
    const std::size_t n = images.size();
    std::vector<std::optional<Verdict>> done(n);
    std::vector<double> latency(n, 0.0);
    std::atomic<std::size_t> cursor{0};
    std::atomic<bool> stop{false};
    std::mutex failure_mutex;
    std::optional<Error> failure;

    auto worker = [&] {
      std::unique_ptr<httplib::Client> client;
      try {
        client = make_client(endpoint_.locator, endpoint_.query_timeout);
        for (std::size_t i = cursor++; i < n && !stop; i = cursor++) {
          const std::string body = classify_request(ids[i], images[i], endpoint_.payload).dump();
          const auto start = Clock::now();
          auto res = client->Post("/v1/classify", body, "application/json");
          if (!res) res = client->Post("/v1/classify", body, "application/json");
          if (!res) fail(ErrorCode::TransportError, "classify request failed: " + httplib::to_string(res.error()));
          const ClassifyReply reply = parse_classify_reply(res->body);
          require(reply.id == ids[i], ErrorCode::IdMismatch,
                  "sent id " + std::to_string(ids[i]) + ", got " + std::to_string(reply.id));
          if (reply.error_code)
            fail(ErrorCode::RemoteError, *reply.error_code + ": " + reply.error_message.value_or(""));
          require(res->status == 200, ErrorCode::TransportError, "HTTP " + std::to_string(res->status));
          done[i] = Verdict{reply.id, *reply.label, reply.score};
          latency[i] = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
        }
      } catch (const Error& e) {
        stop = true;
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = e;
      }
    };

    const std::size_t workers = std::min(max_in_flight, n);
    if (workers <= 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    if (failure) throw BatchError(failure->code(), failure->detail(), done);

    std::vector<Answer> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = Answer{*done[i], latency[i]};
    return out;
  }

 private:
  DetectorEndpoint endpoint_;
};

}  // namespace

std::unique_ptr<DetectorHandle> open_http_detector(const DetectorEndpoint& endpoint) {
  return std::make_unique<HttpHandle>(endpoint);
}

}  // namespace realsteer::detail
