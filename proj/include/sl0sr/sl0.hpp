#pragma once

#include <cassert>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Core>

#include "sl0sr/errors.hpp"

namespace sl0sr {

// Annealing schedule and step sizing for the smoothed-l0 solver. The sigma
// sequence is geometric: sigma_1 = sigma_initial_scale * max|alpha_0|, ratio
// sigma_decrease_factor, stopping once sigma < sigma_min.
struct Sl0Config {
  double sigma_decrease_factor = 0.5;
  double sigma_min = 1e-3;
  int inner_iterations = 3;          // ascent/projection steps per sigma level
  double step_scale = 2.0;           // ascent step is step_scale * sigma^2 * grad / 2
  double sigma_initial_scale = 2.0;

  void validate() const {
    if (!(sigma_decrease_factor > 0.0 && sigma_decrease_factor < 1.0))
      throw std::invalid_argument("Sl0Config: sigma_decrease_factor must be in (0,1)");
    if (!(sigma_min > 0.0)) throw std::invalid_argument("Sl0Config: sigma_min must be > 0");
    if (inner_iterations < 1) throw std::invalid_argument("Sl0Config: inner_iterations must be >= 1");
    if (!(step_scale > 0.0)) throw std::invalid_argument("Sl0Config: step_scale must be > 0");
    if (!(sigma_initial_scale > 0.0))
      throw std::invalid_argument("Sl0Config: sigma_initial_scale must be > 0");
  }
};

// A dictionary with the eigendecomposition of D*D^T and its spectral norm
// precomputed, shared across every solve against that dictionary.
//
// By default the rows must be linearly independent (D*D^T invertible). Patch
// dictionaries built from mean-removed data are rank-deficient by exactly the
// DC directions, so pipeline callers opt into pseudo-inverse solves, which
// are exact whenever the target lies in the dictionary's column space (mean-
// removed targets do).
class FactoredDictionary {
 public:
  explicit FactoredDictionary(Eigen::MatrixXd d, bool allow_rank_deficient = false)
      : d_(std::move(d)) {
    if (d_.rows() < 1 || d_.cols() < 1)
      throw std::invalid_argument("FactoredDictionary: empty matrix");
    if (d_.cols() < d_.rows())
      throw std::invalid_argument("FactoredDictionary: need at least as many atoms as signal dims");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(d_ * d_.transpose());
    if (eig.info() != Eigen::Success)
      throw singular_system_error("dictionary gram matrix eigendecomposition failed");
    basis_ = eig.eigenvectors();
    const Eigen::VectorXd values = eig.eigenvalues();
    op_norm_sq_ = values.maxCoeff();
    if (!(op_norm_sq_ > 0.0)) throw singular_system_error("dictionary is zero");
    const double cutoff = 1e-12 * op_norm_sq_;
    inv_values_.resize(values.size());
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      const bool live = values[i] > cutoff;
      inv_values_[i] = live ? 1.0 / values[i] : 0.0;
      if (live) ++rank;
    }
    if (!allow_rank_deficient && rank < d_.rows())
      throw singular_system_error("dictionary rows are linearly dependent (D*D^T is singular)");
  }

  const Eigen::MatrixXd& matrix() const { return d_; }
  Eigen::Index rows() const { return d_.rows(); }
  Eigen::Index cols() const { return d_.cols(); }

  // (D D^T)^+ rhs; a true inverse when the rows are independent.
  Eigen::VectorXd gram_solve(const Eigen::VectorXd& rhs) const {
    return basis_ * (inv_values_.array() * (basis_.transpose() * rhs).array()).matrix();
  }

  // ||D||_2^2, the Lipschitz constant of alpha -> D^T D alpha.
  double operator_norm_sq() const { return op_norm_sq_; }

 private:
  Eigen::MatrixXd d_;
  Eigen::MatrixXd basis_;       // gram eigenvectors
  Eigen::VectorXd inv_values_;  // pseudo-inverted gram eigenvalues
  double op_norm_sq_ = 0.0;
};

// An underdetermined linear system x = D alpha whose sparsest solution is
// sought. The dictionary may be shared between many problems.
struct SparseProblem {
  SparseProblem(Eigen::MatrixXd dictionary, Eigen::VectorXd target)
      : SparseProblem(std::make_shared<const FactoredDictionary>(std::move(dictionary)),
                      std::move(target)) {}
  SparseProblem(std::shared_ptr<const FactoredDictionary> dictionary, Eigen::VectorXd target)
      : dict_(std::move(dictionary)), target_(std::move(target)) {
    if (!dict_) throw std::invalid_argument("SparseProblem: null dictionary");
    if (target_.size() != dict_->rows())
      throw std::invalid_argument("SparseProblem: target length must match dictionary rows");
  }

  const FactoredDictionary& dict() const { return *dict_; }
  const Eigen::VectorXd& target() const { return target_; }

 private:
  std::shared_ptr<const FactoredDictionary> dict_;
  Eigen::VectorXd target_;
};

namespace detail {
inline void check_sigma(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
}
}  // namespace detail

/// Gaussian surrogate for ||v||_0: n - sum_i exp(-v_i^2 / sigma^2).
inline double smoothed_l0_norm(const Eigen::VectorXd& v, double sigma) {
  detail::check_sigma(sigma);
  return static_cast<double>(v.size()) -
         (-(v.array().square()) / (sigma * sigma)).exp().sum();
}

/// Gradient of F_sigma(v) = sum_i exp(-v_i^2 / sigma^2); component i equals
/// -(2 v_i / sigma^2) exp(-v_i^2 / sigma^2).
inline Eigen::VectorXd sl0_objective_gradient(const Eigen::VectorXd& v, double sigma) {
  detail::check_sigma(sigma);
  const double s2 = sigma * sigma;
  return (-(2.0 / s2) * v.array() * (-(v.array().square()) / s2).exp()).matrix();
}

/// alpha = D^T (D D^T)^{-1} x, the minimum-l2-norm solution of D alpha = x.
inline Eigen::VectorXd min_l2_solution(const SparseProblem& p) {
  return p.dict().matrix().transpose() * p.dict().gram_solve(p.target());
}

/// Orthogonal projection onto the affine set {alpha : D alpha = x}.
inline Eigen::VectorXd project_feasible(const SparseProblem& p, const Eigen::VectorXd& alpha) {
  const Eigen::MatrixXd& d = p.dict().matrix();
  if (alpha.size() != d.cols())
    throw std::invalid_argument("project_feasible: alpha length must match dictionary atoms");
  return alpha - d.transpose() * p.dict().gram_solve(d * alpha - p.target());
}

// Smoothed-l0 sparse recovery: start from the minimum-l2 solution, then for
// each sigma level run `inner_iterations` steepest-ascent steps on F_sigma,
// projecting back to the feasible set after every step. Each level seeds the
// next one.
inline Eigen::VectorXd sl0_solve(const SparseProblem& p, const Sl0Config& cfg = {}) {
  cfg.validate();
  const Eigen::MatrixXd& d = p.dict().matrix();
  const Eigen::VectorXd& x = p.target();
  if (x.isZero(0.0)) return Eigen::VectorXd::Zero(d.cols());

  Eigen::VectorXd alpha = min_l2_solution(p);
  double sigma = cfg.sigma_initial_scale * alpha.cwiseAbs().maxCoeff();
  while (sigma >= cfg.sigma_min) {
    const double s2 = sigma * sigma;
    for (int it = 0; it < cfg.inner_iterations; ++it) {
      // step_scale * sigma^2 / 2 times the gradient, elementwise:
      alpha.array() -= cfg.step_scale * alpha.array() * (-(alpha.array().square()) / s2).exp();
      alpha = project_feasible(p, alpha);
      assert((d * alpha - x).norm() <= 1e-8 * (1.0 + x.norm()));
    }
    sigma *= cfg.sigma_decrease_factor;
  }
  return alpha;
}

// Proximal-gradient baseline for 0.5 ||D alpha - x||^2 + l1_weight ||alpha||_1
// with fixed step 1/||D||_2^2. Stops early once the objective can no longer
// decrease, so the recorded trace is strictly decreasing.
inline Eigen::VectorXd ista_l1_solve(const SparseProblem& p, double l1_weight, int max_iters,
                                     std::vector<double>* objective_trace = nullptr) {
  if (!(l1_weight > 0.0)) throw std::invalid_argument("ista_l1_solve: l1_weight must be > 0");
  if (max_iters < 0) throw std::invalid_argument("ista_l1_solve: max_iters must be >= 0");
  const Eigen::MatrixXd& d = p.dict().matrix();
  const Eigen::VectorXd& x = p.target();
  // Descent requires step <= 1/L; pad the power-iteration estimate of L.
  const double step = 1.0 / (p.dict().operator_norm_sq() * 1.01);
  const double thresh = l1_weight * step;

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(d.cols());
  Eigen::VectorXd resid = -x;
  double obj = 0.5 * resid.squaredNorm();
  if (objective_trace) {
    objective_trace->clear();
    objective_trace->push_back(obj);
  }
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd next = alpha - step * (d.transpose() * resid);
    next = next.unaryExpr([thresh](double v) {
      return v > thresh ? v - thresh : (v < -thresh ? v + thresh : 0.0);
    });
    Eigen::VectorXd next_resid = d * next - x;
    const double next_obj = 0.5 * next_resid.squaredNorm() + l1_weight * next.lpNorm<1>();
    if (next_obj >= obj) break;  // fixed point: descent is strict away from it
    alpha.swap(next);
    resid.swap(next_resid);
    obj = next_obj;
    if (objective_trace) objective_trace->push_back(obj);
  }
  return alpha;
}

/// Number of entries above the reporting threshold |v_i| > rel_tol * max|v|.
inline int thresholded_l0(const Eigen::VectorXd& v, double rel_tol = 1e-3) {
  if (v.size() == 0) return 0;
  const double peak = v.cwiseAbs().maxCoeff();
  if (peak == 0.0) return 0;
  const double cut = rel_tol * peak;
  int n = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) > cut) ++n;
  return n;
}

inline std::vector<Eigen::Index> thresholded_support(const Eigen::VectorXd& v, double rel_tol = 1e-3) {
  std::vector<Eigen::Index> support;
  if (v.size() == 0) return support;
  const double peak = v.cwiseAbs().maxCoeff();
  if (peak == 0.0) return support;
  const double cut = rel_tol * peak;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) > cut) support.push_back(i);
  return support;
}

/// Copy of v with sub-threshold entries set to exact zero.
inline Eigen::VectorXd threshold_small_entries(const Eigen::VectorXd& v, double rel_tol = 1e-3) {
  Eigen::VectorXd out = v;
  if (v.size() == 0) return out;
  const double cut = rel_tol * v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (std::abs(out[i]) <= cut) out[i] = 0.0;
  return out;
}

}  // namespace sl0sr
