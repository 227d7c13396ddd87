#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sl0sr/image.hpp"

namespace sl0sr {

// Degradation model parameters: Y = S H X with H a truncated separable
// Gaussian blur and S top-left decimation by `scale`.
struct DegradationConfig {
  int scale = 2;
  double blur_sigma = 0.8;
  int blur_radius = -1;  // <0 means ceil(3 * blur_sigma)

  int effective_radius() const {
    if (blur_radius >= 0) return blur_radius;
    return static_cast<int>(std::ceil(3.0 * blur_sigma));
  }
  void validate() const {
    if (scale < 1) throw std::invalid_argument("DegradationConfig: scale must be >= 1");
    if (blur_sigma < 0.0) throw std::invalid_argument("DegradationConfig: blur_sigma must be >= 0");
  }
};

namespace detail {

// Keys cubic convolution kernel with a = -0.5.
inline double keys_cubic(double t) {
  t = std::abs(t);
  if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
  if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
  return 0.0;
}

struct ResampleTap {
  int idx[4];
  double w[4];
};

// Center-aligned source coordinates with index clamping at the borders.
// Weights are renormalized so constants are reproduced exactly.
inline std::vector<ResampleTap> build_bicubic_taps(int in_size, int out_size) {
  std::vector<ResampleTap> taps(out_size);
  const double ratio = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    const double center = (o + 0.5) * ratio - 0.5;
    const double base = std::floor(center);
    const double frac = center - base;
    ResampleTap t;
    double sum = 0.0;
    for (int k = 0; k < 4; ++k) {
      const int src = static_cast<int>(base) + k - 1;
      t.idx[k] = std::clamp(src, 0, in_size - 1);
      t.w[k] = keys_cubic(frac - (k - 1));
      sum += t.w[k];
    }
    for (double& w : t.w) w /= sum;
    taps[o] = t;
  }
  return taps;
}

// Separable 1D convolution with a symmetric kernel, clamp-to-edge borders.
// Operates on raw buffers; no intensity clamping.
inline void convolve_rows(const std::vector<double>& in, int width, int height,
                          const std::vector<double>& kernel, int radius, std::vector<double>& out) {
  out.resize(in.size());
  for (int r = 0; r < height; ++r) {
    const double* row = in.data() + static_cast<std::size_t>(r) * width;
    double* orow = out.data() + static_cast<std::size_t>(r) * width;
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int cc = std::clamp(c + k, 0, width - 1);
        acc += kernel[k + radius] * row[cc];
      }
      orow[c] = acc;
    }
  }
}

inline void convolve_cols(const std::vector<double>& in, int width, int height,
                          const std::vector<double>& kernel, int radius, std::vector<double>& out) {
  out.resize(in.size());
  for (int c = 0; c < width; ++c) {
    for (int r = 0; r < height; ++r) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int rr = std::clamp(r + k, 0, height - 1);
        acc += kernel[k + radius] * in[static_cast<std::size_t>(rr) * width + c];
      }
      out[static_cast<std::size_t>(r) * width + c] = acc;
    }
  }
}

// Truncated Gaussian taps exp(-d^2 / 2 sigma^2), renormalized to sum 1.
inline std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(2 * radius + 1, 1.0);
  if (sigma > 0.0) {
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
      k[i + radius] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
      sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
  }
  return k;
}

// Blur without intensity clamping; identity when sigma == 0 or radius == 0.
inline Image blur_raw(const Image& img, const DegradationConfig& cfg) {
  cfg.validate();
  const int radius = cfg.effective_radius();
  if (cfg.blur_sigma == 0.0 || radius == 0) return img;
  const auto kernel = gaussian_kernel(cfg.blur_sigma, radius);
  Image tmp(img.width, img.height), out(img.width, img.height);
  convolve_rows(img.pixels, img.width, img.height, kernel, radius, tmp.pixels);
  convolve_cols(tmp.pixels, img.width, img.height, kernel, radius, out.pixels);
  return out;
}

}  // namespace detail

/// Bicubic resampling (Keys kernel, a = -0.5), clamp-to-edge, output in [0,1].
inline Image bicubic_resize(const Image& img, int out_width, int out_height) {
  if (out_width < 1 || out_height < 1)
    throw std::invalid_argument("bicubic_resize: output dims must be >= 1");
  const auto htaps = detail::build_bicubic_taps(img.width, out_width);
  const auto vtaps = detail::build_bicubic_taps(img.height, out_height);

  // Horizontal pass.
  std::vector<double> mid(static_cast<std::size_t>(out_width) * img.height);
  for (int r = 0; r < img.height; ++r) {
    const double* row = img.pixels.data() + static_cast<std::size_t>(r) * img.width;
    for (int c = 0; c < out_width; ++c) {
      const auto& t = htaps[c];
      mid[static_cast<std::size_t>(r) * out_width + c] =
          t.w[0] * row[t.idx[0]] + t.w[1] * row[t.idx[1]] + t.w[2] * row[t.idx[2]] + t.w[3] * row[t.idx[3]];
    }
  }
  // Vertical pass.
  Image out(out_width, out_height);
  for (int r = 0; r < out_height; ++r) {
    const auto& t = vtaps[r];
    for (int c = 0; c < out_width; ++c) {
      out.at(r, c) = t.w[0] * mid[static_cast<std::size_t>(t.idx[0]) * out_width + c] +
                     t.w[1] * mid[static_cast<std::size_t>(t.idx[1]) * out_width + c] +
                     t.w[2] * mid[static_cast<std::size_t>(t.idx[2]) * out_width + c] +
                     t.w[3] * mid[static_cast<std::size_t>(t.idx[3]) * out_width + c];
    }
  }
  return clamp01(std::move(out));
}

/// Applies H: separable truncated Gaussian, clamp-to-edge, output in [0,1].
inline Image gaussian_blur(const Image& img, const DegradationConfig& cfg) {
  return clamp01(detail::blur_raw(img, cfg));
}

/// Applies S: keeps samples at (scale*i, scale*j).
inline Image decimate(const Image& img, int scale) {
  if (scale < 1) throw std::invalid_argument("decimate: scale must be >= 1");
  if (img.width % scale != 0 || img.height % scale != 0)
    throw std::invalid_argument("decimate: dimensions not divisible by scale");
  if (scale == 1) return img;
  Image out(img.width / scale, img.height / scale);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c) out.at(r, c) = img.at(r * scale, c * scale);
  return out;
}

/// Applies S^T: places y at (scale*i, scale*j), zeros elsewhere.
inline Image zero_insert(const Image& img, int scale) {
  if (scale < 1) throw std::invalid_argument("zero_insert: scale must be >= 1");
  if (scale == 1) return img;
  Image out(img.width * scale, img.height * scale, 0.0);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) out.at(r * scale, c * scale) = img.at(r, c);
  return out;
}

/// Y = S H X. Center-crops first when dims are not divisible by scale.
inline Image degrade(const Image& x, const DegradationConfig& cfg) {
  cfg.validate();
  const Image cropped = center_crop_to_multiple(x, cfg.scale);
  return decimate(clamp01(detail::blur_raw(cropped, cfg)), cfg.scale);
}

// H^T S^T applied to an LR-sized field. A gradient-term operator: the result
// is not clamped to [0,1] and may be negative.
inline Image degrade_adjoint(const Image& y, int hr_width, int hr_height, const DegradationConfig& cfg) {
  cfg.validate();
  if (hr_width != y.width * cfg.scale || hr_height != y.height * cfg.scale)
    throw std::invalid_argument("degrade_adjoint: hr dims must equal scale * lr dims");
  return detail::blur_raw(zero_insert(y, cfg.scale), cfg);
}

}  // namespace sl0sr
