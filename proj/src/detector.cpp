#include "realsteer/detector.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "detector_remote.hpp"
#include "realsteer/rng.hpp"

namespace realsteer {

using nlohmann::json;

std::string_view to_string(EndpointKind kind) noexcept {
  switch (kind) {
    case EndpointKind::Builtin: return "builtin";
    case EndpointKind::Subprocess: return "subprocess";
    case EndpointKind::Http: return "http";
  }
  return "unknown";
}

void DetectorEndpoint::validate() const {
  require(!locator.empty(), ErrorCode::InvalidArgument, "detector locator is empty");
  if (threshold) {
    require(kind == EndpointKind::Builtin, ErrorCode::InvalidArgument, "threshold applies to builtin detectors only");
    require(*threshold > 0.0 && *threshold < 1.0, ErrorCode::InvalidArgument, "threshold must lie in (0, 1)");
  }
  require(handshake_timeout.count() > 0 && query_timeout.count() > 0, ErrorCode::InvalidArgument,
          "timeouts must be positive");
}

DetectorEndpoint DetectorEndpoint::builtin(std::string name, json params, std::optional<double> threshold) {
  DetectorEndpoint e;
  e.kind = EndpointKind::Builtin;
  e.locator = std::move(name);
  e.params = std::move(params);
  e.threshold = threshold;
  return e;
}

DetectorEndpoint DetectorEndpoint::subprocess(std::string path, std::vector<std::string> args) {
  DetectorEndpoint e;
  e.kind = EndpointKind::Subprocess;
  e.locator = std::move(path);
  e.args = std::move(args);
  return e;
}

DetectorEndpoint DetectorEndpoint::http(std::string url) {
  DetectorEndpoint e;
  e.kind = EndpointKind::Http;
  e.locator = std::move(url);
  return e;
}

DetectorEndpoint parse_endpoint(std::string_view text) {
  if (text.starts_with("builtin:")) return DetectorEndpoint::builtin(std::string(text.substr(8)));
  if (text.starts_with("http://") || text.starts_with("https://")) return DetectorEndpoint::http(std::string(text));
  if (text.starts_with("exec:")) {
    std::istringstream words{std::string(text.substr(5))};
    std::vector<std::string> argv;
    for (std::string w; words >> w;) argv.push_back(w);
    require(!argv.empty(), ErrorCode::InvalidArgument, "exec endpoint without a path");
    std::string path = argv.front();
    argv.erase(argv.begin());
    return DetectorEndpoint::subprocess(std::move(path), std::move(argv));
  }
  fail(ErrorCode::InvalidArgument,
       "detector '" + std::string(text) + "' must be builtin:<name>, exec:<path> [args] or an http URL");
}

void QueryLog::append(QueryRecord record) {
  if (record.verdict.label == 0) ++real_;
  if (record.verdict.label == 1) ++fake_;
  records_.push_back(std::move(record));
}

bool QueryLog::any_score() const noexcept {
  return std::any_of(records_.begin(), records_.end(), [](const QueryRecord& r) { return r.verdict.score.has_value(); });
}

void QueryLog::clear() noexcept {
  records_.clear();
  real_ = fake_ = 0;
}

BatchError::BatchError(ErrorCode code, const std::string& detail, std::vector<std::optional<Verdict>> partial)
    : Error(code, detail), partial_(std::move(partial)) {}

std::vector<Verdict> DetectorHandle::classify_batch(std::span<const Tensor> images, std::size_t max_in_flight) {
  require(max_in_flight >= 1, ErrorCode::InvalidArgument, "max_in_flight must be at least 1");
  std::vector<std::uint64_t> ids(images.size());
  std::iota(ids.begin(), ids.end(), next_id_);
  next_id_ += images.size();

  auto ingest = [&](std::size_t i, Verdict v, double latency) {
    if (strict_) v.score.reset();
    log_.append(QueryRecord{ids[i], fnv1a64(images[i].data(), images[i].size() * sizeof(float)), v, latency});
    return v;
  };

  std::vector<Answer> answers;
  try {
    answers = dispatch(images, ids, max_in_flight);
  } catch (const BatchError& e) {
    std::vector<std::optional<Verdict>> partial = e.partial();
    for (std::size_t i = 0; i < partial.size(); ++i)
      if (partial[i]) partial[i] = ingest(i, *partial[i], 0.0);
    throw BatchError(e.code(), e.detail(), std::move(partial));
  }
  require(answers.size() == images.size(), ErrorCode::MalformedResponse, "detector returned a short batch");
  std::vector<Verdict> out;
  out.reserve(answers.size());
  for (std::size_t i = 0; i < answers.size(); ++i) {
    require(answers[i].verdict.id == ids[i], ErrorCode::IdMismatch, "verdict out of order");
    out.push_back(ingest(i, answers[i].verdict, answers[i].latency_ms));
  }
  return out;
}

Verdict DetectorHandle::classify(const Tensor& image) {
  return classify_batch(std::span<const Tensor>(&image, 1), 1).front();
}

double sigmoid(double x) noexcept {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

namespace {

using Clock = std::chrono::steady_clock;

/// Scores every image locally; label is 1{score >= threshold}.
class BuiltinHandle final : public DetectorHandle {
 public:
  using ScoreFn = std::function<double(const Tensor&)>;

  BuiltinHandle(std::string name, bool strict, double threshold, ScoreFn score, bool emits_score = true)
      : DetectorHandle(std::move(name), strict), threshold_(threshold), score_(std::move(score)),
        emits_score_(emits_score) {}

 protected:
  std::vector<Answer> dispatch(std::span<const Tensor> images, std::span<const std::uint64_t> ids,
                               std::size_t) override {
    std::vector<Answer> out;
    out.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto start = Clock::now();
      const double s = score_(images[i]);
      Verdict v{ids[i], s >= threshold_ ? 1 : 0, emits_score_ ? std::optional<double>(s) : std::nullopt};
      out.push_back({v, std::chrono::duration<double, std::milli>(Clock::now() - start).count()});
    }
    return out;
  }

 private:
  double threshold_;
  ScoreFn score_;
  bool emits_score_;
};

}  // namespace

ToyLinearParams toy_linear_from_json(const json& params) {
  require(params.is_object() && params.contains("weights") && params.contains("shape") && params.contains("bias"),
          ErrorCode::BadConfig, "toy-linear needs weights, shape and bias");
  ToyLinearParams p;
  Shape shape = params.at("shape").get<Shape>();
  p.weights = tensor_from_bytes(base64_decode(params.at("weights").get<std::string>()), std::move(shape));
  p.bias = params.at("bias").get<double>();
  p.threshold = params.value("threshold", 0.5);
  return p;
}

DetectorEndpoint toy_linear_endpoint(const ToyLinearParams& params, bool strict) {
  json cfg{{"weights", base64_encode(tensor_to_bytes(params.weights))},
           {"shape", params.weights.shape()},
           {"bias", params.bias},
           {"threshold", params.threshold}};
  DetectorEndpoint e = DetectorEndpoint::builtin("toy-linear", std::move(cfg));
  e.strict_hard_label = strict;
  return e;
}

std::unique_ptr<DetectorHandle> open_endpoint(const DetectorEndpoint& endpoint) {
  endpoint.validate();
  switch (endpoint.kind) {
    case EndpointKind::Subprocess: return detail::open_subprocess_detector(endpoint);
    case EndpointKind::Http: return detail::open_http_detector(endpoint);
    case EndpointKind::Builtin: break;
  }
  const std::string& name = endpoint.locator;
  const bool strict = endpoint.strict_hard_label;
  if (name == "toy-linear") {
    ToyLinearParams p = toy_linear_from_json(endpoint.params);
    const double tau = endpoint.threshold.value_or(p.threshold);
    return std::make_unique<BuiltinHandle>(name, strict, tau, [p = std::move(p)](const Tensor& image) {
      return sigmoid(toy_linear_logit(p, image));
    });
  }
  if (name == "toy-brightness") {
    const double tau = endpoint.threshold.value_or(endpoint.params.value("threshold", 0.5));
    return std::make_unique<BuiltinHandle>(name, strict, tau, [](const Tensor& image) {
      require(!image.empty(), ErrorCode::EmptyInput, "empty image");
      double sum = 0.0;
      for (float v : image.values()) sum += v;
      return sum / static_cast<double>(image.size());
    });
  }
  if (name == "const-fake" || name == "const-real") {
    const double s = name == "const-fake" ? 1.0 : 0.0;
    return std::make_unique<BuiltinHandle>(name, strict, 0.5, [s](const Tensor&) { return s; });
  }
  fail(ErrorCode::InvalidArgument,
       "unknown builtin detector '" + name + "' (toy-linear, toy-brightness, const-fake, const-real)");
}

double calibrate_threshold(std::span<const int> y_true, std::span<const double> y_pred) {
  require(!y_true.empty(), ErrorCode::EmptyInput, "no labelled scores");
  require(y_true.size() == y_pred.size(), ErrorCode::ShapeMismatch, "labels and scores differ in length");
  const std::size_t n = y_true.size();
  std::size_t positives = 0;
  for (int y : y_true) {
    require(y == 0 || y == 1, ErrorCode::InvalidArgument, "labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  require(2 * positives == n, ErrorCode::UnbalancedClasses,
          std::to_string(n - positives) + " real vs " + std::to_string(positives) + " fake");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y_true[a] < y_true[b]; });
  std::vector<int> truth(n);
  std::vector<double> pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = y_true[order[i]];
    pred[i] = y_pred[order[i]];
  }

  const std::size_t half = n / 2;
  const double lo_max = *std::max_element(pred.begin(), pred.begin() + static_cast<std::ptrdiff_t>(half));
  const double hi_min = *std::min_element(pred.begin() + static_cast<std::ptrdiff_t>(half), pred.end());
  // Strict: touching classes (lo_max == hi_min) cannot be split by any
  // threshold and are left to the accuracy search below.
  if (lo_max < hi_min) return 0.5 * (lo_max + hi_min);

  std::size_t best_correct = 0;
  double best = 0.0;
  for (double tau : pred) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += static_cast<std::size_t>((pred[i] >= tau ? 1 : 0) == truth[i]);
    if (correct >= best_correct) {
      best_correct = correct;
      best = tau;
    }
  }
  return best;
}

}  // namespace realsteer
