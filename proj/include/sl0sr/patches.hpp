#pragma once

#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sl0sr/image.hpp"

namespace sl0sr {

// Geometry of overlapping patch extraction. Anchors step by stride and a
// final flush anchor (dim - patch) guarantees full coverage.
struct PatchGrid {
  int image_width = 0;
  int image_height = 0;
  int patch_size = 0;
  int stride = 0;
  std::vector<std::pair<int, int>> positions;  // (row, col), row-major order
};

struct PatchVector {
  Eigen::VectorXd values;  // length patch_size^2, row-major within the patch
  double mean = 0.0;       // recorded by remove_mean
  int row = 0;             // anchor
  int col = 0;
};

namespace detail {

inline std::vector<int> axis_anchors(int dim, int patch, int stride) {
  std::vector<int> anchors;
  for (int a = 0; a + patch <= dim; a += stride) anchors.push_back(a);
  if (anchors.empty() || anchors.back() != dim - patch) anchors.push_back(dim - patch);
  return anchors;
}

}  // namespace detail

inline PatchGrid plan_grid(int width, int height, int patch_size, int overlap) {
  if (patch_size < 1) throw std::invalid_argument("plan_grid: patch_size must be >= 1");
  if (patch_size > width || patch_size > height)
    throw std::invalid_argument("plan_grid: patch larger than image");
  if (overlap < 0 || overlap >= patch_size)
    throw std::invalid_argument("plan_grid: overlap must be in [0, patch_size)");
  PatchGrid grid;
  grid.image_width = width;
  grid.image_height = height;
  grid.patch_size = patch_size;
  grid.stride = patch_size - overlap;
  const auto rows = detail::axis_anchors(height, patch_size, grid.stride);
  const auto cols = detail::axis_anchors(width, patch_size, grid.stride);
  grid.positions.reserve(rows.size() * cols.size());
  for (int r : rows)
    for (int c : cols) grid.positions.emplace_back(r, c);
  return grid;
}

inline std::vector<PatchVector> extract(const Image& img, const PatchGrid& grid) {
  if (img.width != grid.image_width || img.height != grid.image_height)
    throw std::invalid_argument("extract: grid planned for different dimensions");
  const int p = grid.patch_size;
  std::vector<PatchVector> patches(grid.positions.size());
  for (std::size_t i = 0; i < grid.positions.size(); ++i) {
    const auto [r0, c0] = grid.positions[i];
    PatchVector& pv = patches[i];
    pv.row = r0;
    pv.col = c0;
    pv.values.resize(p * p);
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c) pv.values[r * p + c] = img.at(r0 + r, c0 + c);
  }
  return patches;
}

inline PatchVector remove_mean(PatchVector patch) {
  const double m = patch.values.size() > 0 ? patch.values.mean() : 0.0;
  patch.values.array() -= m;
  patch.mean = m;
  return patch;
}

inline PatchVector add_mean(PatchVector patch, double mean) {
  patch.values.array() += mean;
  patch.mean = 0.0;
  return patch;
}

// Overlap-averaged merge. Each output pixel is the mean of all covering patch
// values, accumulated as deltas against the first covering value so that
// agreeing patches reproduce their value exactly.
inline Image merge(const std::vector<PatchVector>& patches, const PatchGrid& grid) {
  if (patches.size() != grid.positions.size())
    throw std::invalid_argument("merge: patch count does not match grid");
  const int p = grid.patch_size;
  Image anchor(grid.image_width, grid.image_height, 0.0);
  std::vector<double> delta(anchor.size(), 0.0);
  std::vector<int> count(anchor.size(), 0);

  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto [r0, c0] = grid.positions[i];
    const PatchVector& pv = patches[i];
    if (pv.row != r0 || pv.col != c0)
      throw std::invalid_argument("merge: patch anchor does not match grid position");
    if (pv.values.size() != static_cast<Eigen::Index>(p) * p)
      throw std::invalid_argument("merge: patch length does not match grid patch size");
    for (int r = 0; r < p; ++r) {
      for (int c = 0; c < p; ++c) {
        const std::size_t at = anchor.index(r0 + r, c0 + c);
        const double v = pv.values[r * p + c];
        if (count[at] == 0) anchor.pixels[at] = v;
        delta[at] += v - anchor.pixels[at];
        ++count[at];
      }
    }
  }
  for (std::size_t i = 0; i < anchor.size(); ++i) {
    if (count[i] == 0) throw std::invalid_argument("merge: grid does not cover every pixel");
    anchor.pixels[i] += delta[i] / count[i];
  }
  return clamp01(std::move(anchor));
}

}  // namespace sl0sr
