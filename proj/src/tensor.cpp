#include "realsteer/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "realsteer/error.hpp"

namespace realsteer {

std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), values_(shape_volume(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), values_(std::move(values)) {
  require(shape_volume(shape_) == values_.size(), ErrorCode::ShapeMismatch,
          "shape " + shape_to_string(shape_) + " does not match " + std::to_string(values_.size()) + " values");
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  require(index.size() == shape_.size(), ErrorCode::ShapeMismatch, "index rank does not match tensor rank");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    require(i < shape_[axis], ErrorCode::InvalidArgument, "index out of range");
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

float& Tensor::at(std::initializer_list<std::size_t> index) { return values_[offset(index)]; }
float Tensor::at(std::initializer_list<std::size_t> index) const { return values_[offset(index)]; }

std::size_t Tensor::record_size() const {
  if (shape_.empty()) return 1;
  return shape_[0] == 0 ? 0 : values_.size() / shape_[0];
}

std::span<float> Tensor::record(std::size_t i) {
  const std::size_t n = record_size();
  return std::span<float>(values_).subspan(i * n, n);
}

std::span<const float> Tensor::record(std::size_t i) const {
  const std::size_t n = record_size();
  return std::span<const float>(values_).subspan(i * n, n);
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), values_); }

bool Tensor::all_finite() const noexcept {
  for (float v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor stack(std::span<const Tensor> items) {
  require(!items.empty(), ErrorCode::EmptyInput, "stack of zero tensors");
  const Shape& inner = items.front().shape();
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<float> values;
  values.reserve(shape_volume(shape));
  for (const Tensor& t : items) {
    require(t.shape() == inner, ErrorCode::ShapeMismatch, "stack of differently shaped tensors");
    values.insert(values.end(), t.values().begin(), t.values().end());
  }
  return Tensor(std::move(shape), std::move(values));
}

double dot(std::span<const float> a, std::span<const float> b) {
  require(a.size() == b.size(), ErrorCode::ShapeMismatch, "dot of unequal lengths");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double l2_norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

}  // namespace realsteer
