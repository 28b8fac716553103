#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "realsteer/error.hpp"
#include "realsteer/generator.hpp"
#include "realsteer/protocol.hpp"
#include "realsteer/tensor.hpp"

namespace realsteer {

enum class EndpointKind { Builtin, Subprocess, Http };

std::string_view to_string(EndpointKind kind) noexcept;

struct DetectorEndpoint {
  EndpointKind kind = EndpointKind::Builtin;
  /// Builtin name, executable path, or base URL (http://host:port).
  std::string locator;
  std::vector<std::string> args;
  /// Builtin only; remote detectors apply their own.
  std::optional<double> threshold;
  bool strict_hard_label = true;
  PayloadKind payload = PayloadKind::TensorF32;
  std::chrono::milliseconds handshake_timeout{10000};
  std::chrono::milliseconds query_timeout{30000};
  /// Builtin configuration, e.g. toy-linear weights.
  nlohmann::json params = nlohmann::json::object();

  void validate() const;

  static DetectorEndpoint builtin(std::string name, nlohmann::json params = nlohmann::json::object(),
                                  std::optional<double> threshold = std::nullopt);
  static DetectorEndpoint subprocess(std::string path, std::vector<std::string> args = {});
  static DetectorEndpoint http(std::string url);
};

/// Parses "builtin:<name>", "exec:<path> [args...]" or an http:// URL.
DetectorEndpoint parse_endpoint(std::string_view text);

struct Verdict {
  std::uint64_t id = 0;
  int label = 0;  ///< 0 real, 1 fake
  std::optional<double> score;

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

struct QueryRecord {
  std::uint64_t id = 0;
  std::uint64_t payload_digest = 0;
  Verdict verdict;
  double latency_ms = 0.0;
};

class QueryLog {
 public:
  void append(QueryRecord record);
  const std::vector<QueryRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  std::size_t count(int label) const noexcept { return label == 0 ? real_ : (label == 1 ? fake_ : 0); }
  bool any_score() const noexcept;
  void clear() noexcept;

 private:
  std::vector<QueryRecord> records_;
  std::size_t real_ = 0;
  std::size_t fake_ = 0;
};

/// Raised when a batch fails midway. `partial()` holds the verdicts that did
/// arrive, indexed like the input; missing entries are empty.
class BatchError : public Error {
 public:
  BatchError(ErrorCode code, const std::string& detail, std::vector<std::optional<Verdict>> partial);
  const std::vector<std::optional<Verdict>>& partial() const noexcept { return partial_; }

 private:
  std::vector<std::optional<Verdict>> partial_;
};

class DetectorHandle {
 public:
  virtual ~DetectorHandle() = default;
  DetectorHandle(const DetectorHandle&) = delete;
  DetectorHandle& operator=(const DetectorHandle&) = delete;

  const std::string& name() const noexcept { return name_; }
  bool strict() const noexcept { return strict_; }
  const QueryLog& log() const noexcept { return log_; }
  QueryLog& log() noexcept { return log_; }

  /// One verdict per image in input order. Ids are assigned from a per-handle
  /// counter; at most `max_in_flight` requests are outstanding.
  std::vector<Verdict> classify_batch(std::span<const Tensor> images, std::size_t max_in_flight = 8);
  Verdict classify(const Tensor& image);

 protected:
  struct Answer {
    Verdict verdict;
    double latency_ms = 0.0;
  };

  DetectorHandle(std::string name, bool strict) : name_(std::move(name)), strict_(strict) {}

  /// Must return answers aligned with `images`, or throw BatchError with the
  /// partial verdicts gathered so far.
  virtual std::vector<Answer> dispatch(std::span<const Tensor> images, std::span<const std::uint64_t> ids,
                                       std::size_t max_in_flight) = 0;

  std::string name_;

 private:
  bool strict_;
  std::uint64_t next_id_ = 0;
  QueryLog log_;
};

std::unique_ptr<DetectorHandle> open_endpoint(const DetectorEndpoint& endpoint);

/// Builtin toy-linear endpoint for a planted detector.
DetectorEndpoint toy_linear_endpoint(const ToyLinearParams& params, bool strict = true);
ToyLinearParams toy_linear_from_json(const nlohmann::json& params);

double sigmoid(double x) noexcept;

/// Best threshold for balanced labelled scores: the midpoint when the classes
/// separate strictly, otherwise the last score (in label-sorted order) reaching maximal
/// accuracy under `score >= tau`.
double calibrate_threshold(std::span<const int> y_true, std::span<const double> y_pred);

}  // namespace realsteer
