#include "realsteer/fingerprint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "realsteer/error.hpp"
#include "realsteer/spatial.hpp"

namespace realsteer {

std::string_view to_string(DenoiserKind kind) noexcept {
  return kind == DenoiserKind::NlMeans ? "nl-means" : "gaussian";
}

DenoiserKind parse_denoiser_kind(std::string_view text) {
  if (text == "nl-means") return DenoiserKind::NlMeans;
  if (text == "gaussian") return DenoiserKind::Gaussian;
  fail(ErrorCode::BadConfig, "unknown denoiser '" + std::string(text) + "' (nl-means, gaussian)");
}

void DenoiserConfig::validate() const {
  if (kind == DenoiserKind::NlMeans) {
    require(patch_radius >= 1 && search_radius >= 1, ErrorCode::BadConfig, "nl-means radii must be at least 1");
    require(h > 0.0 && std::isfinite(h), ErrorCode::BadConfig, "nl-means strength h must be positive");
    require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), ErrorCode::BadConfig, "noise sigma must be >= 0");
  } else {
    require(gaussian_sigma > 0.0 && std::isfinite(gaussian_sigma), ErrorCode::BadConfig,
            "gaussian sigma must be positive");
  }
}

nlohmann::json DenoiserConfig::to_json() const {
  if (kind == DenoiserKind::Gaussian) return {{"kind", to_string(kind)}, {"sigma", gaussian_sigma}};
  return {{"kind", to_string(kind)},
          {"patch_radius", patch_radius},
          {"search_radius", search_radius},
          {"h", h},
          {"noise_sigma", noise_sigma}};
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) noexcept {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - 1 - m);
}

Tensor to_luma(const Tensor& image) {
  if (image.rank() == 2) return image;
  require(image.rank() == 3, ErrorCode::ShapeMismatch, "expected H x W or C x H x W, got " + shape_to_string(image.shape()));
  const std::size_t c = image.dim(0);
  const std::size_t plane = image.dim(1) * image.dim(2);
  Tensor out({image.dim(1), image.dim(2)});
  if (c == 1) {
    std::copy(image.data(), image.data() + plane, out.data());
    return out;
  }
  require(c == 3, ErrorCode::ShapeMismatch, "luma needs 1 or 3 channels, got " + std::to_string(c));
  for (std::size_t i = 0; i < plane; ++i)
    out[i] = static_cast<float>(0.299 * image[i] + 0.587 * image[plane + i] + 0.114 * image[2 * plane + i]);
  return out;
}

namespace {

/// Plane padded by `pad` on every side with symmetric reflection.
struct Padded {
  std::vector<double> v;
  std::size_t stride;
  std::size_t pad;

  Padded(std::span<const float> plane, std::size_t h, std::size_t w, std::size_t p)
      : v((h + 2 * p) * (w + 2 * p)), stride(w + 2 * p), pad(p) {
    for (std::size_t y = 0; y < h + 2 * p; ++y)
      for (std::size_t x = 0; x < w + 2 * p; ++x)
        v[y * stride + x] = plane[reflect_index(static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(p), h) * w +
                                  reflect_index(static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(p), w)];
  }
  double at(std::ptrdiff_t y, std::ptrdiff_t x) const {
    return v[static_cast<std::size_t>(y + static_cast<std::ptrdiff_t>(pad)) * stride +
             static_cast<std::size_t>(x + static_cast<std::ptrdiff_t>(pad))];
  }
};

void nl_means_plane(std::span<const float> in, std::span<float> out, std::size_t h, std::size_t w,
                    const DenoiserConfig& cfg) {
  const auto r = static_cast<std::ptrdiff_t>(cfg.patch_radius);
  const auto s = static_cast<std::ptrdiff_t>(cfg.search_radius);
  const auto H = static_cast<std::ptrdiff_t>(h);
  const auto W = static_cast<std::ptrdiff_t>(w);
  const Padded img(in, h, w, static_cast<std::size_t>(r + s));
  const double patch_area = static_cast<double>((2 * r + 1) * (2 * r + 1));
  const double bias = 2.0 * cfg.noise_sigma * cfg.noise_sigma;
  const double h2 = cfg.h * cfg.h;

  std::vector<double> num(h * w, 0.0), den(h * w, 0.0);
  // Squared differences for one displacement over the patch-extended domain,
  // then box-summed rows and columns to patch distances.
  const std::size_t ext_w = w + 2 * static_cast<std::size_t>(r);
  const std::size_t ext_h = h + 2 * static_cast<std::size_t>(r);
  std::vector<double> diff(ext_h * ext_w), rows(ext_h * w);
  for (std::ptrdiff_t dy = -s; dy <= s; ++dy)
    for (std::ptrdiff_t dx = -s; dx <= s; ++dx) {
      for (std::ptrdiff_t y = -r; y < H + r; ++y)
        for (std::ptrdiff_t x = -r; x < W + r; ++x) {
          const double d = img.at(y, x) - img.at(y + dy, x + dx);
          diff[static_cast<std::size_t>((y + r) * static_cast<std::ptrdiff_t>(ext_w) + x + r)] = d * d;
        }
      for (std::size_t y = 0; y < ext_h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double acc = 0.0;
          for (std::size_t k = 0; k <= 2 * static_cast<std::size_t>(r); ++k) acc += diff[y * ext_w + x + k];
          rows[y * w + x] = acc;
        }
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double acc = 0.0;
          for (std::size_t k = 0; k <= 2 * static_cast<std::size_t>(r); ++k) acc += rows[(y + k) * w + x];
          const double weight = std::exp(-std::max(acc / patch_area - bias, 0.0) / h2);
          num[y * w + x] += weight * img.at(static_cast<std::ptrdiff_t>(y) + dy, static_cast<std::ptrdiff_t>(x) + dx);
          den[y * w + x] += weight;
        }
    }
  for (std::size_t i = 0; i < h * w; ++i) out[i] = static_cast<float>(num[i] / den[i]);
}

void gaussian_plane(std::span<const float> in, std::span<float> out, std::size_t h, std::size_t w, double sigma) {
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
    const double v = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    kernel[static_cast<std::size_t>(k + radius)] = v;
    total += v;
  }
  for (double& v : kernel) v /= total;

  std::vector<double> tmp(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k)
        acc += kernel[static_cast<std::size_t>(k + radius)] *
               in[y * w + reflect_index(static_cast<std::ptrdiff_t>(x) + k, w)];
      tmp[y * w + x] = acc;
    }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k)
        acc += kernel[static_cast<std::size_t>(k + radius)] *
               tmp[reflect_index(static_cast<std::ptrdiff_t>(y) + k, h) * w + x];
      out[y * w + x] = static_cast<float>(acc);
    }
}

}  // namespace

Tensor denoise_image(const Tensor& image, const DenoiserConfig& config) {
  config.validate();
  require(image.rank() == 2 || image.rank() == 3, ErrorCode::ShapeMismatch,
          "expected H x W or C x H x W, got " + shape_to_string(image.shape()));
  require(image.all_finite(), ErrorCode::NonFiniteInput, "image has non-finite values");
  const std::size_t h = image.dim(image.rank() - 2);
  const std::size_t w = image.dim(image.rank() - 1);
  require(h >= 1 && w >= 1, ErrorCode::ZeroExtent, "empty image");
  const std::size_t planes = image.rank() == 3 ? image.dim(0) : 1;
  Tensor out(image.shape());
  for (std::size_t c = 0; c < planes; ++c) {
    const auto src = image.values().subspan(c * h * w, h * w);
    const auto dst = out.values().subspan(c * h * w, h * w);
    if (config.kind == DenoiserKind::NlMeans)
      nl_means_plane(src, dst, h, w, config);
    else
      gaussian_plane(src, dst, h, w, config.gaussian_sigma);
  }
  return out;
}

ResidualSpectrum spectral_fingerprint(std::span<const Tensor> images, const DenoiserConfig& config) {
  require(!images.empty(), ErrorCode::EmptySet, "no images to fingerprint");
  config.validate();
  std::vector<std::vector<double>> spectra;
  spectra.reserve(images.size());
  Shape plane_shape;
  for (const Tensor& image : images) {
    const Tensor luma = to_luma(image);
    if (plane_shape.empty()) plane_shape = luma.shape();
    require(luma.shape() == plane_shape, ErrorCode::ShapeMismatch,
            "image " + shape_to_string(image.shape()) + " differs from the first image's size");
    const Tensor smooth = denoise_image(luma, config);
    Tensor residual(luma.shape());
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = luma[i] - smooth[i];
    const Tensor s = dft2d_centered_logmag(residual);
    spectra.emplace_back(s.values().begin(), s.values().end());
  }
  for (std::size_t stride = 1; stride < spectra.size(); stride *= 2)
    for (std::size_t i = 0; i + stride < spectra.size(); i += 2 * stride)
      for (std::size_t k = 0; k < spectra[i].size(); ++k) spectra[i][k] += spectra[i + stride][k];

  ResidualSpectrum out;
  out.spectrum = Tensor(plane_shape);
  const auto n = static_cast<double>(images.size());
  for (std::size_t k = 0; k < out.spectrum.size(); ++k) out.spectrum[k] = static_cast<float>(spectra[0][k] / n);
  out.sample_count = images.size();
  out.denoiser = config;
  return out;
}

double spectrum_l1(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch, "spectra differ in shape");
  require(!a.empty(), ErrorCode::EmptyInput, "empty spectra");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(static_cast<double>(a[i]) - b[i]);
  return acc / static_cast<double>(a.size());
}

void write_spectrum_csv(const std::filesystem::path& path, const Tensor& spectrum) {
  require(spectrum.rank() == 2, ErrorCode::ShapeMismatch, "spectrum must be H x W");
  std::ofstream out(path);
  require(out.good(), ErrorCode::IoError, "cannot write " + path.string());
  out.precision(9);
  for (std::size_t y = 0; y < spectrum.dim(0); ++y) {
    for (std::size_t x = 0; x < spectrum.dim(1); ++x) {
      if (x) out << ',';
      out << spectrum[y * spectrum.dim(1) + x];
    }
    out << '\n';
  }
  require(out.good(), ErrorCode::IoError, "failed writing " + path.string());
}

void write_spectrum_pgm(const std::filesystem::path& path, const Tensor& spectrum) {
  require(spectrum.rank() == 2 && !spectrum.empty(), ErrorCode::ShapeMismatch, "spectrum must be a non-empty H x W");
  const auto [lo, hi] = std::minmax_element(spectrum.values().begin(), spectrum.values().end());
  const double span = static_cast<double>(*hi) - *lo;
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot write " + path.string());
  out << "P5\n" << spectrum.dim(1) << ' ' << spectrum.dim(0) << "\n255\n";
  for (float v : spectrum.values()) {
    const double t = span > 0.0 ? (v - *lo) / span : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
  }
  require(out.good(), ErrorCode::IoError, "failed writing " + path.string());
}

void write_fingerprint(const std::filesystem::path& stem, const ResidualSpectrum& result) {
  auto with = [&](const char* ext) {
    std::filesystem::path p = stem;
    p += ext;
    return p;
  };
  write_spectrum_csv(with(".csv"), result.spectrum);
  write_spectrum_pgm(with(".pgm"), result.spectrum);
  const nlohmann::json sidecar{{"shape", result.spectrum.shape()},
                               {"sample_count", result.sample_count},
                               {"denoiser", result.denoiser.to_json()},
                               {"dc_bin", {result.spectrum.dim(0) / 2, result.spectrum.dim(1) / 2}},
                               {"pgm_scaling", "min-max"}};
  std::ofstream out(with(".json"));
  require(out.good(), ErrorCode::IoError, "cannot write sidecar for " + stem.string());
  out << sidecar.dump(2) << '\n';
}

}  // namespace realsteer
