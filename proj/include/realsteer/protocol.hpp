#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "realsteer/tensor.hpp"

namespace realsteer {

/// JSON-lines classify protocol. Every message is one UTF-8 JSON object per
/// line (subprocess) or per HTTP body.
inline constexpr int kProtocolVersion = 1;

enum class PayloadKind { TensorF32, ImagePng };

std::string_view to_string(PayloadKind kind) noexcept;
PayloadKind parse_payload_kind(std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Little-endian float32 bytes, row-major.
std::vector<std::uint8_t> tensor_to_bytes(const Tensor& t);
Tensor tensor_from_bytes(std::span<const std::uint8_t> bytes, Shape shape);

/// 8-bit PNG of a C x H x W image in [0, 1] (C = 1 gray, 3 RGB, 4 RGBA).
std::vector<std::uint8_t> encode_png(const Tensor& image);
/// Decodes any PNG to C x H x W in [0, 1]: gray stays 1 channel, color
/// becomes RGB (alpha composited away by libpng).
Tensor decode_png(std::span<const std::uint8_t> bytes);

nlohmann::json hello_message(std::optional<std::string> name = std::nullopt);
nlohmann::json payload_json(const Tensor& image, PayloadKind kind);
Tensor payload_to_tensor(const nlohmann::json& payload);
nlohmann::json classify_request(std::uint64_t id, const Tensor& image, PayloadKind kind);

struct ClassifyReply {
  std::uint64_t id = 0;
  std::optional<int> label;
  std::optional<double> score;
  std::optional<std::string> error_code;
  std::optional<std::string> error_message;
};

/// Parses a response or error frame; throws MalformedResponse.
ClassifyReply parse_classify_reply(std::string_view text);

/// Validates a hello line; returns the peer name. Throws MalformedResponse or
/// ProtocolVersionMismatch.
std::string parse_hello(std::string_view text);

}  // namespace realsteer
