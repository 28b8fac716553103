#include "realsteer/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "realsteer/error.hpp"

namespace realsteer {

std::string_view to_string(InterpMode mode) noexcept {
  return mode == InterpMode::Nearest ? "nearest" : "bilinear";
}

InterpMode parse_interp_mode(std::string_view text) {
  if (text == "nearest") return InterpMode::Nearest;
  if (text == "bilinear") return InterpMode::Bilinear;
  fail(ErrorCode::InvalidArgument, "unknown interpolation mode '" + std::string(text) + "'");
}

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

std::vector<Tap> taps(std::size_t in, std::size_t out, InterpMode mode) {
  std::vector<Tap> result(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double last = static_cast<double>(in - 1);
  for (std::size_t o = 0; o < out; ++o) {
    const double src = std::clamp((static_cast<double>(o) + 0.5) * scale - 0.5, 0.0, last);
    if (mode == InterpMode::Nearest) {
      const auto idx = static_cast<std::size_t>(std::min(std::floor(src + 0.5), last));
      result[o] = {idx, idx, 0.0};
    } else {
      const auto lo = static_cast<std::size_t>(std::floor(src));
      const std::size_t hi = std::min(lo + 1, in - 1);
      result[o] = {lo, hi, src - static_cast<double>(lo)};
    }
  }
  return result;
}

using Complex = std::complex<double>;

bool is_power_of_two(std::size_t n) { return n && !(n & (n - 1)); }

// In-place iterative radix-2 transform.
void fft_pow2(std::vector<Complex>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t j = 0; j < len / 2; ++j) {
        const Complex w = std::polar(1.0, angle * static_cast<double>(j));
        const Complex u = a[i + j];
        const Complex v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
      }
    }
  }
}

void dft_1d(std::vector<Complex>& a) {
  const std::size_t n = a.size();
  if (is_power_of_two(n)) {
    fft_pow2(a);
    return;
  }
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const auto phase = static_cast<double>((k * j) % n);
      acc += a[j] * std::polar(1.0, -2.0 * std::numbers::pi * phase / static_cast<double>(n));
    }
    out[k] = acc;
  }
  a = std::move(out);
}

}  // namespace

Tensor interpolate_spatial(const Tensor& field, std::size_t out_h, std::size_t out_w, InterpMode mode) {
  require(field.rank() == 2 || field.rank() == 3, ErrorCode::ShapeMismatch,
          "expected H x W or C x H x W, got " + shape_to_string(field.shape()));
  const bool planar = field.rank() == 2;
  const std::size_t channels = planar ? 1 : field.dim(0);
  const std::size_t in_h = field.dim(planar ? 0 : 1);
  const std::size_t in_w = field.dim(planar ? 1 : 2);
  require(in_h >= 1 && in_w >= 1 && out_h >= 1 && out_w >= 1, ErrorCode::ZeroExtent, "zero spatial extent");

  const std::vector<Tap> rows = taps(in_h, out_h, mode);
  const std::vector<Tap> cols = taps(in_w, out_w, mode);
  Tensor out(planar ? Shape{out_h, out_w} : Shape{channels, out_h, out_w});
  for (std::size_t c = 0; c < channels; ++c) {
    const float* src = field.data() + c * in_h * in_w;
    float* dst = out.data() + c * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const Tap& ty = rows[y];
      for (std::size_t x = 0; x < out_w; ++x) {
        const Tap& tx = cols[x];
        if (mode == InterpMode::Nearest) {
          dst[y * out_w + x] = src[ty.lo * in_w + tx.lo];
          continue;
        }
        const double top = (1.0 - tx.frac) * src[ty.lo * in_w + tx.lo] + tx.frac * src[ty.lo * in_w + tx.hi];
        const double bottom = (1.0 - tx.frac) * src[ty.hi * in_w + tx.lo] + tx.frac * src[ty.hi * in_w + tx.hi];
        dst[y * out_w + x] = static_cast<float>((1.0 - ty.frac) * top + ty.frac * bottom);
      }
    }
  }
  return out;
}

Tensor dft2d_centered_logmag(const Tensor& plane) {
  require(plane.rank() == 2, ErrorCode::ShapeMismatch, "expected an H x W plane");
  const std::size_t h = plane.dim(0);
  const std::size_t w = plane.dim(1);
  require(h >= 1 && w >= 1, ErrorCode::ZeroExtent, "zero spatial extent");
  require(plane.all_finite(), ErrorCode::NonFiniteInput, "plane has non-finite values");

  std::vector<Complex> grid(h * w);
  for (std::size_t i = 0; i < h * w; ++i) grid[i] = plane[i];

  std::vector<Complex> line;
  for (std::size_t y = 0; y < h; ++y) {
    line.assign(grid.begin() + static_cast<std::ptrdiff_t>(y * w), grid.begin() + static_cast<std::ptrdiff_t>((y + 1) * w));
    dft_1d(line);
    std::copy(line.begin(), line.end(), grid.begin() + static_cast<std::ptrdiff_t>(y * w));
  }
  line.resize(h);
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) line[y] = grid[y * w + x];
    dft_1d(line);
    for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = line[y];
  }

  Tensor out({h, w});
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t sy = (y + h / 2) % h;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t sx = (x + w / 2) % w;
      out[sy * w + sx] = static_cast<float>(std::log1p(std::abs(grid[y * w + x])));
    }
  }
  return out;
}

}  // namespace realsteer
