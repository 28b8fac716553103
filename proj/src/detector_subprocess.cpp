#include <chrono>
#include <map>
#include <optional>

#include "child_process.hpp"
#include "detector_remote.hpp"

namespace realsteer::detail {

namespace {

using Clock = std::chrono::steady_clock;

class SubprocessHandle final : public DetectorHandle {
 public:
  explicit SubprocessHandle(const DetectorEndpoint& endpoint)
      : DetectorHandle(endpoint.locator, endpoint.strict_hard_label), endpoint_(endpoint) {
    connect();
  }

 protected:
  std::vector<Answer> dispatch(std::span<const Tensor> images, std::span<const std::uint64_t> ids,
                               std::size_t max_in_flight) override {
    const std::size_t n = images.size();
    std::vector<std::optional<Verdict>> done(n);
    std::vector<double> latency(n, 0.0);
    std::map<std::uint64_t, std::pair<std::size_t, Clock::time_point>> pending;
    std::optional<Error> remote_error;
    std::size_t next = 0;
    std::size_t received = 0;
    bool retried = false;

    auto send = [&](std::size_t i) {
      channel_->write_line(classify_request(ids[i], images[i], endpoint_.payload).dump());
      pending[ids[i]] = {i, Clock::now()};
    };
    auto abort = [&](ErrorCode code, const std::string& detail) -> BatchError {
      channel_.reset();
      return BatchError(code, detail, done);
    };

    while (received < n) {
      try {
        require(channel_ != nullptr, ErrorCode::TransportError, "detector connection is closed");
        while (!remote_error && next < n && pending.size() < max_in_flight) send(next++);
        if (pending.empty()) break;
        std::string line;
        if (!channel_->read_line(line, endpoint_.query_timeout))
          fail(ErrorCode::TransportError, "no reply within " + std::to_string(endpoint_.query_timeout.count()) + " ms");
        ClassifyReply reply;
        try {
          reply = parse_classify_reply(line);
        } catch (const Error& e) {
          throw abort(e.code(), e.detail());
        }
        const auto it = pending.find(reply.id);
        if (it == pending.end()) throw abort(ErrorCode::IdMismatch, "reply for unknown id " + std::to_string(reply.id));
        const auto [index, sent] = it->second;
        pending.erase(it);
        ++received;
        if (reply.error_code) {
          if (!remote_error)
            remote_error = Error(ErrorCode::RemoteError, *reply.error_code + ": " + reply.error_message.value_or(""));
          continue;
        }
        done[index] = Verdict{reply.id, *reply.label, reply.score};
        latency[index] = std::chrono::duration<double, std::milli>(Clock::now() - sent).count();
      } catch (const BatchError&) {
        throw;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::TransportError || retried) throw abort(e.code(), e.detail());
        retried = true;
        channel_.reset();
        try {
          connect();
          auto resend = std::move(pending);
          pending.clear();
          for (const auto& [id, entry] : resend) send(entry.first);
        } catch (const Error& again) {
          throw abort(ErrorCode::TransportError, std::string(e.what()) + "; retry failed: " + again.what());
        }
      }
      if (remote_error && pending.empty()) break;
    }
    if (remote_error) throw BatchError(remote_error->code(), remote_error->detail(), done);

    std::vector<Answer> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = Answer{*done[i], latency[i]};
    return out;
  }

 private:
  void connect() {
    auto channel = std::make_unique<LineChannel>(endpoint_.locator, endpoint_.args);
    channel->write_line(hello_message().dump());
    std::string line;
    if (!channel->read_line(line, endpoint_.handshake_timeout))
      fail(ErrorCode::HandshakeTimeout,
           "no hello from '" + endpoint_.locator + "' within " + std::to_string(endpoint_.handshake_timeout.count()) +
               " ms");
    name_ = parse_hello(line);
    channel_ = std::move(channel);
  }

  DetectorEndpoint endpoint_;
  std::unique_ptr<LineChannel> channel_;
};

}  // namespace

std::unique_ptr<DetectorHandle> open_subprocess_detector(const DetectorEndpoint& endpoint) {
  return std::make_unique<SubprocessHandle>(endpoint);
}

}  // namespace realsteer::detail
