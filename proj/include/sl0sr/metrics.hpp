#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sl0sr/image.hpp"
#include "sl0sr/imaging.hpp"

namespace sl0sr {

struct SsimConfig {
  int window_size = 11;
  double window_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;  // L; 1.0 for [0,1] images

  void validate() const {
    if (window_size < 1 || window_size % 2 == 0)
      throw std::invalid_argument("SsimConfig: window_size must be odd and >= 1");
    if (!(window_sigma > 0.0)) throw std::invalid_argument("SsimConfig: window_sigma must be > 0");
    if (!(k1 > 0.0) || !(k2 > 0.0)) throw std::invalid_argument("SsimConfig: k1, k2 must be > 0");
    if (!(dynamic_range > 0.0)) throw std::invalid_argument("SsimConfig: dynamic_range must be > 0");
  }
};

inline double psnr(const Image& a, const Image& b, double peak = 1.0) {
  if (!a.same_dims(b)) throw std::invalid_argument("psnr: image dimensions differ");
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be > 0");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

struct SsimResult {
  double mean = 0.0;
  Image map;  // per-pixel SSIM field, values in [-1, 1]
};

// Per-pixel SSIM over Gaussian-windowed local statistics, clamp-to-edge
// windows so the map has image shape. The scalar SSIM is the map mean.
inline SsimResult ssim_map(const Image& a, const Image& b, const SsimConfig& cfg = {}) {
  cfg.validate();
  if (!a.same_dims(b)) throw std::invalid_argument("ssim_map: image dimensions differ");
  if (a.width < cfg.window_size || a.height < cfg.window_size)
    throw std::invalid_argument("ssim_map: image smaller than SSIM window");

  const int radius = (cfg.window_size - 1) / 2;
  const auto kernel = detail::gaussian_kernel(cfg.window_sigma, radius);
  const int w = a.width, h = a.height;

  auto filter = [&](const std::vector<double>& src) {
    std::vector<double> tmp, out;
    detail::convolve_rows(src, w, h, kernel, radius, tmp);
    detail::convolve_cols(tmp, w, h, kernel, radius, out);
    return out;
  };

  const std::size_t n = a.size();
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a.pixels[i] * a.pixels[i];
    bb[i] = b.pixels[i] * b.pixels[i];
    ab[i] = a.pixels[i] * b.pixels[i];
  }
  const auto mu_a = filter(a.pixels);
  const auto mu_b = filter(b.pixels);
  const auto e_aa = filter(aa);
  const auto e_bb = filter(bb);
  const auto e_ab = filter(ab);

  const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
  const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);

  SsimResult result;
  result.map = Image(w, h);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
    const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    const double value = ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
                         ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2));
    result.map.pixels[i] = std::clamp(value, -1.0, 1.0);
    sum += result.map.pixels[i];
  }
  result.mean = sum / static_cast<double>(n);
  return result;
}

inline double ssim(const Image& a, const Image& b, const SsimConfig& cfg = {}) {
  return ssim_map(a, b, cfg).mean;
}

struct CompareRow {
  std::string name;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct ComparisonTable {
  std::vector<CompareRow> rows;
  CompareRow average;  // arithmetic means over rows
};

inline ComparisonTable compare(const Image& reference,
                               const std::vector<std::pair<std::string, Image>>& candidates,
                               double peak = 1.0, const SsimConfig& ssim_cfg = {}) {
  if (candidates.empty()) throw std::invalid_argument("compare: no candidates");
  ComparisonTable table;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const auto& [name, img] : candidates) {
    CompareRow row{name, psnr(reference, img, peak), ssim(reference, img, ssim_cfg)};
    psnr_sum += row.psnr_db;
    ssim_sum += row.ssim;
    table.rows.push_back(std::move(row));
  }
  const double n = static_cast<double>(table.rows.size());
  table.average = {"Average", psnr_sum / n, ssim_sum / n};
  return table;
}

}  // namespace sl0sr
