#pragma once

#include <chrono>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sl0sr/dictionary.hpp"
#include "sl0sr/errors.hpp"
#include "sl0sr/image.hpp"
#include "sl0sr/imaging.hpp"
#include "sl0sr/parallel.hpp"
#include "sl0sr/patches.hpp"
#include "sl0sr/sl0.hpp"

namespace sl0sr {

enum class CodingSolver { kSl0, kIsta };

struct SrConfig {
  int scale = 2;
  int lr_patch_size = 5;
  int overlap = 1;
  double lambda = 0.1;   // weight of the data term ||S H X - Y||^2
  double nu = 0.5;       // gradient step size
  int max_global_iters = 100;
  double global_tol = 1e-5;  // relative objective change
  Sl0Config coding;
  DegradationConfig degradation;  // the S, H enforced by the global constraint
  CodingSolver solver = CodingSolver::kSl0;
  double ista_l1_weight = 1e-4;
  int ista_max_iters = 400;
  int threads = 1;

  void validate() const {
    if (scale < 1) throw std::invalid_argument("SrConfig: scale must be >= 1");
    if (lr_patch_size < 1) throw std::invalid_argument("SrConfig: lr_patch_size must be >= 1");
    if (overlap < 0 || overlap >= lr_patch_size)
      throw std::invalid_argument("SrConfig: overlap must be in [0, lr_patch_size)");
    if (!(lambda > 0.0)) throw std::invalid_argument("SrConfig: lambda must be > 0");
    if (!(nu > 0.0)) throw std::invalid_argument("SrConfig: nu must be > 0");
    if (max_global_iters < 0) throw std::invalid_argument("SrConfig: max_global_iters must be >= 0");
    if (!(global_tol >= 0.0)) throw std::invalid_argument("SrConfig: global_tol must be >= 0");
    if (!(ista_l1_weight > 0.0)) throw std::invalid_argument("SrConfig: ista_l1_weight must be > 0");
    if (ista_max_iters < 1) throw std::invalid_argument("SrConfig: ista_max_iters must be >= 1");
    coding.validate();
    degradation.validate();
  }
};

struct SrStageTimes {
  double extract_s = 0.0;
  double coding_s = 0.0;  // per-patch sparse coding + HR synthesis
  double merge_s = 0.0;
  double global_s = 0.0;
  double total_s = 0.0;
};

struct SrReport {
  std::size_t patch_count = 0;
  double mean_patch_sparsity = 0.0;  // thresholded nonzeros per coefficient vector
  std::size_t global_iterations_used = 0;
  std::vector<double> objective_trace;  // Eq-objective per accepted global step
  SrStageTimes wall_times;
};

// The LR block scaled back to raw-pixel units (training divides LR patches by
// sqrt(m_l)), factored once per dictionary and shared across all patches.
inline std::shared_ptr<const FactoredDictionary> make_lr_coding_operator(
    const CoupledDictionary& dict) {
  const double block_scale = std::sqrt(static_cast<double>(dict.d_low.rows()));
  return std::make_shared<const FactoredDictionary>(block_scale * dict.d_low);
}

/// Sparse-codes a zero-mean LR patch against the shared coding operator.
inline Eigen::VectorXd code_patch(const std::shared_ptr<const FactoredDictionary>& lr_op,
                                  const Eigen::VectorXd& y_zero_mean, const Sl0Config& coding) {
  return sl0_solve(SparseProblem(lr_op, y_zero_mean), coding);
}

/// HR patch synthesis: sqrt(m_h) * D_high * alpha plus the stored LR mean.
inline Eigen::VectorXd reconstruct_patch(const CoupledDictionary& dict,
                                         const Eigen::VectorXd& alpha, double lr_mean) {
  if (alpha.size() != dict.atom_count())
    throw std::invalid_argument("reconstruct_patch: alpha length must match atom count");
  const double block_scale = std::sqrt(static_cast<double>(dict.d_high.rows()));
  Eigen::VectorXd x = block_scale * (dict.d_high * alpha);
  x.array() += lr_mean;
  return x;
}

/// X0: overlap-averaged merge of the reconstructed HR patches.
inline Image assemble_x0(const std::vector<PatchVector>& hr_patches, const PatchGrid& hr_grid) {
  return merge(hr_patches, hr_grid);
}

struct GlobalReconstructResult {
  Image image;
  std::size_t iterations = 0;
  std::vector<double> objective_trace;
};

// Gradient descent on J(X) = ||X - X0||^2 + lambda ||S H X - Y||^2 starting
// at X0. Steps that would raise J halve nu (at most 20 times total); the
// recorded trace is therefore non-increasing. Iterates are unclamped; only
// the final image is clamped to [0,1].
inline GlobalReconstructResult global_reconstruct(const Image& x0, const Image& y,
                                                  const SrConfig& cfg) {
  cfg.validate();
  if (x0.width != cfg.scale * y.width || x0.height != cfg.scale * y.height)
    throw std::invalid_argument("global_reconstruct: x0 dims must equal scale * y dims");

  const auto forward = [&](const Image& x) {
    return decimate(detail::blur_raw(x, cfg.degradation), cfg.degradation.scale);
  };
  const auto adjoint = [&](const Image& r) {
    return detail::blur_raw(zero_insert(r, cfg.degradation.scale), cfg.degradation);
  };
  const auto map = [](const Image& img) {
    return Eigen::Map<const Eigen::ArrayXd>(img.pixels.data(), static_cast<Eigen::Index>(img.size()));
  };

  const auto objective = [&](const Image& x, const Image& sh_x) {
    return (map(x) - map(x0)).square().sum() + cfg.lambda * (map(sh_x) - map(y)).square().sum();
  };

  GlobalReconstructResult result;
  Image x = x0;
  Image sh_x = forward(x);
  double obj = objective(x, sh_x);
  result.objective_trace.push_back(obj);

  double nu = cfg.nu;
  int halvings = 0;
  for (int t = 0; t < cfg.max_global_iters; ++t) {
    // grad J / 2 = (X - X0) + lambda * H^T S^T (S H X - Y)
    Image residual = sh_x;
    Eigen::Map<Eigen::ArrayXd>(residual.pixels.data(), residual.size()) -= map(y);
    Image grad = adjoint(residual);
    {
      auto g = Eigen::Map<Eigen::ArrayXd>(grad.pixels.data(), grad.size());
      g = (map(x) - map(x0)) + cfg.lambda * g;
    }
    if (map(grad).square().sum() == 0.0) break;

    Image trial(x.width, x.height);
    Image sh_trial;
    double trial_obj = 0.0;
    bool accepted = false;
    for (;;) {
      Eigen::Map<Eigen::ArrayXd>(trial.pixels.data(), trial.size()) = map(x) - nu * map(grad);
      sh_trial = forward(trial);
      trial_obj = objective(trial, sh_trial);
      if (trial_obj <= obj) {
        accepted = true;
        break;
      }
      if (halvings >= 20) break;
      nu *= 0.5;
      ++halvings;
    }
    if (!accepted) break;

    const double drop = obj - trial_obj;
    x = std::move(trial);
    sh_x = std::move(sh_trial);
    obj = trial_obj;
    result.objective_trace.push_back(obj);
    ++result.iterations;
    if (drop <= cfg.global_tol * std::max(obj + drop, 1e-300)) break;
  }

  result.image = clamp01(std::move(x));
  return result;
}

struct SrResult {
  Image image;
  SrReport report;
};

// End-to-end reconstruction: plan the LR grid, extract and mean-center the
// patches, sparse-code each one, synthesize the HR patches, merge into X0,
// then refine under the global reconstruction constraint.
inline SrResult super_resolve(const Image& y, const CoupledDictionary& dict, const SrConfig& cfg) {
  cfg.validate();
  const auto violations = validate_dictionary(dict);
  if (!violations.empty()) throw config_error("super_resolve: invalid dictionary: " + violations.front());
  if (dict.scale != cfg.scale)
    throw config_error("super_resolve: dictionary scale " + std::to_string(dict.scale) +
                       " != config scale " + std::to_string(cfg.scale));
  if (dict.lr_patch_size != cfg.lr_patch_size)
    throw config_error("super_resolve: dictionary lr_patch_size " +
                       std::to_string(dict.lr_patch_size) + " != config lr_patch_size " +
                       std::to_string(cfg.lr_patch_size));
  if (cfg.degradation.scale != cfg.scale)
    throw config_error("super_resolve: degradation scale != pipeline scale");
  if (y.width < cfg.lr_patch_size || y.height < cfg.lr_patch_size)
    throw config_error("super_resolve: input smaller than one patch");

  using clock = std::chrono::steady_clock;
  const auto seconds = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };
  SrResult result;
  const auto t_start = clock::now();

  const PatchGrid lr_grid = plan_grid(y.width, y.height, cfg.lr_patch_size, cfg.overlap);
  std::vector<PatchVector> lr_patches = extract(y, lr_grid);
  const auto t_extracted = clock::now();

  const auto lr_op = make_lr_coding_operator(dict);
  const int hr_patch_size = cfg.scale * cfg.lr_patch_size;
  std::vector<PatchVector> hr_patches(lr_patches.size());
  std::vector<double> sparsity(lr_patches.size(), 0.0);
  parallel_for(lr_patches.size(), cfg.threads, [&](std::size_t i) {
    const PatchVector centered = remove_mean(lr_patches[i]);
    Eigen::VectorXd alpha;
    if (cfg.solver == CodingSolver::kIsta) {
      alpha = ista_l1_solve(SparseProblem(lr_op, centered.values), cfg.ista_l1_weight,
                            cfg.ista_max_iters);
    } else {
      alpha = code_patch(lr_op, centered.values, cfg.coding);
    }
    sparsity[i] = thresholded_l0(alpha);
    hr_patches[i].values = reconstruct_patch(dict, alpha, centered.mean);
    hr_patches[i].row = cfg.scale * centered.row;
    hr_patches[i].col = cfg.scale * centered.col;
  });
  const auto t_coded = clock::now();

  PatchGrid hr_grid;
  hr_grid.image_width = cfg.scale * y.width;
  hr_grid.image_height = cfg.scale * y.height;
  hr_grid.patch_size = hr_patch_size;
  hr_grid.stride = cfg.scale * lr_grid.stride;
  hr_grid.positions.reserve(lr_grid.positions.size());
  for (const auto& [r, c] : lr_grid.positions)
    hr_grid.positions.emplace_back(cfg.scale * r, cfg.scale * c);

  const Image x0 = assemble_x0(hr_patches, hr_grid);
  const auto t_merged = clock::now();

  GlobalReconstructResult global = global_reconstruct(x0, y, cfg);
  const auto t_done = clock::now();

  result.image = std::move(global.image);
  result.report.patch_count = lr_patches.size();
  result.report.mean_patch_sparsity =
      lr_patches.empty() ? 0.0
                         : Eigen::Map<const Eigen::ArrayXd>(sparsity.data(), sparsity.size()).mean();
  result.report.global_iterations_used = global.iterations;
  result.report.objective_trace = std::move(global.objective_trace);
  result.report.wall_times.extract_s = seconds(t_start, t_extracted);
  result.report.wall_times.coding_s = seconds(t_extracted, t_coded);
  result.report.wall_times.merge_s = seconds(t_coded, t_merged);
  result.report.wall_times.global_s = seconds(t_merged, t_done);
  result.report.wall_times.total_s = seconds(t_start, t_done);
  return result;
}

}  // namespace sl0sr
