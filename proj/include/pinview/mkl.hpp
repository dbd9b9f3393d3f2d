#pragma once

// Elastic-net multiple kernel learning for ridge regression.
//
// Objective over per-space weight vectors f_i and simplex weights eta:
//
//   mu * sum_i (lambda / eta_i + 1 - lambda) |f_i|^2 + |sum_i X_i f_i - r|^2
//
// With mu = 1 this is the plain elastic-net MKL regression; mu is the
// session's shared regularisation constant. For fixed eta the minimiser is
// f_i = X_i' c / d_i with d_i = lambda / eta_i + 1 - lambda and
// (sum_i K_i / d_i + mu I) c = r, giving the objective value mu r'c. For
// fixed f the minimiser over the simplex is eta_i proportional to |f_i|.
// solve_mkl alternates the two exact steps.

#include <optional>
#include <vector>

#include "pinview/common.hpp"
#include "pinview/kernels.hpp"

namespace pinview {

struct MklOptions {
  double lambda = 0.5;
  double mu = 1.0;  // shared regularisation; 0 is replaced by `jitter`
  int max_iter = 100;
  double tol = 1e-6;  // stop when the objective decreases by less than this
  double eta_floor = 1e-8;
  double jitter = 1e-8;
  std::optional<Vector> initial_eta;  // warm start; uniform when absent
};

struct MklModel {
  Vector eta;
  Vector duals;
  double lambda = 0.5;
  double mu = 1.0;  // effective value used in the dual system
  std::vector<double> objective;
  int iterations = 0;
  bool converged = false;

  /// d_i = lambda / max(eta_i, floor) + 1 - lambda.
  Vector scales(double eta_floor = 1e-8) const {
    Vector d(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i)
      d(i) = lambda / std::max(eta(i), eta_floor) + 1.0 - lambda;
    return d;
  }

  /// Regression predictions sum_i k_i(x, seen) c / d_i for cross blocks
  /// (rows = query images, cols = seen images).
  Vector predict(const std::vector<Matrix>& cross) const {
    if (cross.empty()) return {};
    const Vector d = scales();
    Vector out = Vector::Zero(cross.front().rows());
    for (std::size_t i = 0; i < cross.size(); ++i) out += cross[i] * duals / d(static_cast<Eigen::Index>(i));
    return out;
  }

  /// Squared norms |f_i|^2 = c' K_i c / d_i^2.
  Vector weight_norms_sq(const std::vector<Matrix>& grams) const {
    const Vector d = scales();
    Vector out(static_cast<Eigen::Index>(grams.size()));
    for (std::size_t i = 0; i < grams.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      out(k) = duals.dot(grams[i] * duals) / (d(k) * d(k));
    }
    return out;
  }
};

inline MklModel solve_mkl(const std::vector<Matrix>& grams, const Vector& r, const MklOptions& opt = {}) {
  if (grams.empty()) throw InvalidArgument("solve_mkl: no kernels");
  if (opt.lambda < 0.0 || opt.lambda > 1.0) throw InvalidArgument("solve_mkl: lambda outside [0, 1]");
  if (opt.mu < 0.0) throw InvalidArgument("solve_mkl: negative regularisation");
  const Eigen::Index n = r.size();
  if (n < 1) throw InvalidArgument("solve_mkl: empty relevance vector");
  for (const auto& k : grams)
    if (k.rows() != n || k.cols() != n) throw DimensionMismatch("solve_mkl: Gram size differs from relevance length");

  const auto spaces = static_cast<Eigen::Index>(grams.size());
  MklModel m;
  m.lambda = opt.lambda;
  m.mu = opt.mu > 0.0 ? opt.mu : opt.jitter;
  m.eta = Vector::Constant(spaces, 1.0 / static_cast<double>(spaces));
  if (opt.initial_eta) {
    if (opt.initial_eta->size() != spaces) throw DimensionMismatch("solve_mkl: warm-start eta has wrong length");
    Vector e = opt.initial_eta->cwiseMax(0.0);
    if (e.sum() > 0.0) m.eta = e / e.sum();
  }
  if (r.isZero(0.0)) {
    m.eta = Vector::Constant(spaces, 1.0 / static_cast<double>(spaces));
    m.duals = Vector::Zero(n);
    m.objective = {0.0};
    m.converged = true;
    return m;
  }

  for (int it = 0; it < opt.max_iter; ++it) {
    const Vector d = m.scales(opt.eta_floor);
    Matrix a = m.mu * Matrix::Identity(n, n);
    for (Eigen::Index i = 0; i < spaces; ++i) a += grams[static_cast<std::size_t>(i)] / d(i);
    m.duals = a.ldlt().solve(r);
    const double obj = m.mu * r.dot(m.duals);
    m.objective.push_back(obj);
    m.iterations = it + 1;
    if (it > 0 && m.objective[m.objective.size() - 2] - obj < opt.tol) {
      m.converged = true;
      break;
    }
    if (it + 1 == opt.max_iter) break;

    Vector norms(spaces);
    for (Eigen::Index i = 0; i < spaces; ++i) {
      const double q = m.duals.dot(grams[static_cast<std::size_t>(i)] * m.duals);
      norms(i) = std::sqrt(std::max(q, 0.0)) / d(i);
    }
    if (norms.sum() <= 0.0) {
      m.converged = true;
      break;
    }
    m.eta = norms / norms.sum();
  }
  return m;
}

inline MklModel solve_mkl(const KernelBundle& bundle, const Vector& r, const MklOptions& opt = {}) {
  return solve_mkl(bundle.seen, r, opt);
}

/// k_eta(I, J) = sum_i eta_i k_i(I, J) for per-space kernel values.
inline double combined_kernel(const MklModel& model, std::span<const double> per_space) {
  if (static_cast<Eigen::Index>(per_space.size()) != model.eta.size())
    throw DimensionMismatch("combined_kernel: wrong number of kernel values");
  double out = 0.0;
  for (std::size_t i = 0; i < per_space.size(); ++i) out += model.eta(static_cast<Eigen::Index>(i)) * per_space[i];
  return out;
}

inline double combined_kernel(const MklModel& model, const std::vector<std::string>& features,
                              const ImageRecord& a, const ImageRecord& b) {
  std::vector<double> k;
  k.reserve(features.size());
  for (const auto& f : features) k.push_back(base_kernel(f, a, b));
  return combined_kernel(model, k);
}

}  // namespace pinview
