#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sl0sr {

// Single-channel intensity grid, row-major. Displayable images hold values in
// [0,1]; operators that return gradient-like fields (degrade_adjoint) may
// leave that range and say so.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), pixels(check_dims(w, h), fill) {}

  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(width) + static_cast<std::size_t>(c);
  }
  double at(int r, int c) const { return pixels[index(r, c)]; }
  double& at(int r, int c) { return pixels[index(r, c)]; }
  std::size_t size() const { return pixels.size(); }

  bool same_dims(const Image& other) const {
    return width == other.width && height == other.height;
  }

 private:
  static std::size_t check_dims(int w, int h) {
    if (w < 1 || h < 1) throw std::invalid_argument("Image: dimensions must be >= 1");
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  }
};

inline Image& clamp01_inplace(Image& img) {
  for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  return img;
}

inline Image clamp01(Image img) {
  clamp01_inplace(img);
  return img;
}

/// ITU-R BT.601 luma for 8-bit RGB samples, mapped into [0,1].
inline double bt601_luma(unsigned char r, unsigned char g, unsigned char b) {
  return (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
}

inline Image crop(const Image& img, int row0, int col0, int w, int h) {
  if (row0 < 0 || col0 < 0 || row0 + h > img.height || col0 + w > img.width)
    throw std::invalid_argument("crop: window exceeds image bounds");
  Image out(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out.at(r, c) = img.at(row0 + r, col0 + c);
  return out;
}

/// Largest centered crop whose dimensions are divisible by `multiple`.
inline Image center_crop_to_multiple(const Image& img, int multiple) {
  if (multiple < 1) throw std::invalid_argument("center_crop_to_multiple: multiple must be >= 1");
  const int w = img.width - img.width % multiple;
  const int h = img.height - img.height % multiple;
  if (w < 1 || h < 1)
    throw std::invalid_argument("center_crop_to_multiple: image smaller than multiple");
  if (w == img.width && h == img.height) return img;
  return crop(img, (img.height - h) / 2, (img.width - w) / 2, w, h);
}

}  // namespace sl0sr
