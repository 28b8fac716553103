#pragma once

#include <cstddef>
#include <string_view>

#include "realsteer/tensor.hpp"

namespace realsteer {

enum class InterpMode { Nearest, Bilinear };

std::string_view to_string(InterpMode mode) noexcept;
InterpMode parse_interp_mode(std::string_view text);

/// Resamples each channel of a C x H x W field (or a 2-D H x W plane) with
/// half-pixel centers: src = (dst + 0.5) * in / out - 0.5, clamped to the
/// valid range. Nearest rounds that coordinate half-up.
Tensor interpolate_spatial(const Tensor& field, std::size_t out_h, std::size_t out_w, InterpMode mode);

/// log(1 + |DFT|) with the zero frequency moved to (H/2, W/2).
Tensor dft2d_centered_logmag(const Tensor& plane);

}  // namespace realsteer
