#include "realsteer/protocol.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>

#include "realsteer/error.hpp"

namespace realsteer {

using nlohmann::json;

std::string_view to_string(PayloadKind kind) noexcept {
  return kind == PayloadKind::TensorF32 ? "tensor_f32_b64" : "image_png_b64";
}

PayloadKind parse_payload_kind(std::string_view text) {
  if (text == "tensor_f32_b64") return PayloadKind::TensorF32;
  if (text == "image_png_b64") return PayloadKind::ImagePng;
  fail(ErrorCode::InvalidArgument, "unknown payload kind '" + std::string(text) + "'");
}

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int base64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

const json& member(const json& object, const char* key) {
  if (!object.is_object() || !object.contains(key))
    fail(ErrorCode::MalformedResponse, std::string("missing field '") + key + "'");
  return object.at(key);
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t{bytes[i]} << 16) | (std::uint32_t{bytes[i + 1]} << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = std::uint32_t{bytes[i]} << 16;
    if (i + 1 < bytes.size()) v |= std::uint32_t{bytes[i + 1]} << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += (i + 1 < bytes.size()) ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  std::size_t padding = 0;
  for (char c : text) {
    if (c == '=') {
      ++padding;
      continue;
    }
    if (c == '\n' || c == '\r') continue;
    const int v = base64_value(c);
    require(v >= 0 && padding == 0, ErrorCode::MalformedResponse, "invalid base64 payload");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
    }
  }
  require(padding <= 2, ErrorCode::MalformedResponse, "invalid base64 padding");
  return out;
}

std::vector<std::uint8_t> tensor_to_bytes(const Tensor& t) {
  std::vector<std::uint8_t> out(t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(t[i]);
    for (int b = 0; b < 4; ++b) out[i * 4 + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return out;
}

Tensor tensor_from_bytes(std::span<const std::uint8_t> bytes, Shape shape) {
  const std::size_t count = shape_volume(shape);
  require(bytes.size() == count * 4, ErrorCode::ShapeByteMismatch,
          std::to_string(bytes.size()) + " bytes for shape " + shape_to_string(shape));
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[i * 4 + static_cast<std::size_t>(b)]} << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const Tensor& image) {
  require(image.rank() == 3, ErrorCode::ShapeMismatch, "PNG encoding expects C x H x W");
  const std::size_t c = image.dim(0);
  const std::size_t h = image.dim(1);
  const std::size_t w = image.dim(2);
  require(c == 1 || c == 3 || c == 4, ErrorCode::ShapeMismatch, "PNG encoding supports 1, 3 or 4 channels");
  require(h >= 1 && w >= 1, ErrorCode::ZeroExtent, "empty image");

  std::vector<std::uint8_t> pixels(h * w * c);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < h * w; ++i) {
      const double v = std::clamp(static_cast<double>(image[k * h * w + i]), 0.0, 1.0);
      pixels[i * c + k] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }

  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(w);
  desc.height = static_cast<png_uint_32>(h);
  desc.format = c == 1 ? PNG_FORMAT_GRAY : (c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_RGBA);
  png_alloc_size_t size = 0;
  require(png_image_write_to_memory(&desc, nullptr, &size, 0, pixels.data(), 0, nullptr) != 0, ErrorCode::IoError,
          std::string("PNG encoding failed: ") + desc.message);
  std::vector<std::uint8_t> out(size);
  require(png_image_write_to_memory(&desc, out.data(), &size, 0, pixels.data(), 0, nullptr) != 0, ErrorCode::IoError,
          std::string("PNG encoding failed: ") + desc.message);
  out.resize(size);
  return out;
}

Tensor decode_png(std::span<const std::uint8_t> bytes) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  require(png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size()) != 0, ErrorCode::MalformedResponse,
          std::string("not a PNG stream: ") + desc.message);
  const bool color = (desc.format & PNG_FORMAT_FLAG_COLOR) != 0;
  desc.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t c = color ? 3 : 1;
  const std::size_t h = desc.height;
  const std::size_t w = desc.width;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(desc));
  if (png_image_finish_read(&desc, nullptr, pixels.data(), 0, nullptr) == 0) {
    const std::string message = desc.message;
    png_image_free(&desc);
    fail(ErrorCode::MalformedResponse, "corrupt PNG image data: " + message);
  }
  Tensor out({c, h, w});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < h * w; ++i) out[k * h * w + i] = static_cast<float>(pixels[i * c + k] / 255.0);
  return out;
}

json hello_message(std::optional<std::string> name) {
  json msg{{"op", "hello"}, {"version", kProtocolVersion}};
  if (name) msg["name"] = *name;
  return msg;
}

json payload_json(const Tensor& image, PayloadKind kind) {
  json shape = json::array();
  for (std::size_t e : image.shape()) shape.push_back(e);
  const std::vector<std::uint8_t> bytes = kind == PayloadKind::TensorF32 ? tensor_to_bytes(image) : encode_png(image);
  return json{{"kind", to_string(kind)}, {"shape", shape}, {"data", base64_encode(bytes)}};
}

Tensor payload_to_tensor(const json& payload) {
  const std::string kind = member(payload, "kind").get<std::string>();
  const std::vector<std::uint8_t> bytes = base64_decode(member(payload, "data").get<std::string>());
  if (kind == "image_png_b64") return decode_png(bytes);
  require(kind == "tensor_f32_b64", ErrorCode::MalformedResponse, "unknown payload kind '" + kind + "'");
  Shape shape;
  for (const json& e : member(payload, "shape")) shape.push_back(e.get<std::size_t>());
  return tensor_from_bytes(bytes, std::move(shape));
}

json classify_request(std::uint64_t id, const Tensor& image, PayloadKind kind) {
  return json{{"id", id}, {"op", "classify"}, {"payload", payload_json(image, kind)}};
}

ClassifyReply parse_classify_reply(std::string_view text) {
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedResponse, std::string("unparsable reply: ") + e.what());
  }
  const json& id = member(msg, "id");
  require(id.is_number_unsigned() || (id.is_number_integer() && id.get<std::int64_t>() >= 0),
          ErrorCode::MalformedResponse, "reply id must be a non-negative integer");
  ClassifyReply reply;
  reply.id = id.get<std::uint64_t>();
  if (msg.contains("error")) {
    const json& err = msg.at("error");
    reply.error_code = err.value("code", std::string("unknown"));
    reply.error_message = err.value("message", std::string());
    return reply;
  }
  const json& label = member(msg, "label");
  require(label.is_number_integer() && (label.get<int>() == 0 || label.get<int>() == 1), ErrorCode::MalformedResponse,
          "label must be 0 or 1");
  reply.label = label.get<int>();
  if (msg.contains("score") && !msg.at("score").is_null()) {
    require(msg.at("score").is_number(), ErrorCode::MalformedResponse, "score must be a number");
    reply.score = msg.at("score").get<double>();
  }
  return reply;
}

std::string parse_hello(std::string_view text) {
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedResponse, std::string("unparsable hello: ") + e.what());
  }
  require(msg.is_object() && msg.value("op", std::string()) == "hello", ErrorCode::MalformedResponse,
          "expected a hello message");
  const int version = member(msg, "version").get<int>();
  require(version == kProtocolVersion, ErrorCode::ProtocolVersionMismatch,
          "peer speaks version " + std::to_string(version) + ", expected " + std::to_string(kProtocolVersion));
  return msg.value("name", std::string("unnamed"));
}

}  // namespace realsteer
