#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>

#include <nlohmann/json.hpp>

#include "realsteer/tensor.hpp"

namespace realsteer {

enum class DenoiserKind { NlMeans, Gaussian };

std::string_view to_string(DenoiserKind kind) noexcept;
DenoiserKind parse_denoiser_kind(std::string_view text);

struct DenoiserConfig {
  DenoiserKind kind = DenoiserKind::NlMeans;
  std::size_t patch_radius = 1;   ///< 3x3 patches
  std::size_t search_radius = 3;  ///< 7x7 window
  double h = 0.1;
  double noise_sigma = 0.0;  ///< sigma in exp(-max(d^2 - 2 sigma^2, 0) / h^2)
  double gaussian_sigma = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Boundary handling shared by the denoisers: half-sample symmetric
/// reflection (the edge sample repeats), valid for any extent >= 1.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) noexcept;

/// Rec. 601 luma for 3-channel images; 1-channel images are flattened; H x W
/// planes pass through.
Tensor to_luma(const Tensor& image);

/// Denoises an H x W plane, or each channel of a C x H x W image. Non-local
/// means uses the mean squared patch difference as d^2.
Tensor denoise_image(const Tensor& image, const DenoiserConfig& config);

struct ResidualSpectrum {
  Tensor spectrum;  ///< H x W, mean of per-image log(1 + |DFT(residual)|)
  std::size_t sample_count = 0;
  DenoiserConfig denoiser;
};

/// Per image: luma, residual = luma - denoise(luma), centered log-magnitude
/// spectrum; returns the mean spectrum (pairwise reduction in index order).
ResidualSpectrum spectral_fingerprint(std::span<const Tensor> images, const DenoiserConfig& config);

/// Mean absolute difference between two spectra of equal shape.
double spectrum_l1(const Tensor& a, const Tensor& b);

/// Row-major CSV, full float precision.
void write_spectrum_csv(const std::filesystem::path& path, const Tensor& spectrum);
/// 8-bit binary PGM, min-max scaled (display only).
void write_spectrum_pgm(const std::filesystem::path& path, const Tensor& spectrum);
/// CSV + PGM + JSON sidecar sharing `stem`.
void write_fingerprint(const std::filesystem::path& stem, const ResidualSpectrum& result);

}  // namespace realsteer
