#pragma once

// Reference implementations used only by tests. They work on explicit
// feature vectors and share no code path with the kernelised library.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Euclidean projection onto the probability simplex (sort-based).
inline Vector project_simplex(const Vector& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    css += u[k];
    const double t = (css - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

struct MklSolution {
  Vector eta;
  std::vector<Vector> f;  // primal weights per space
  double objective = 0.0;
};

/// Primal ridge for fixed eta over stacked explicit features:
/// min_f mu sum_i d_i |f_i|^2 + |sum_i X_i f_i - r|^2.
inline MklSolution mkl_primal(const std::vector<Matrix>& x, const Vector& r, const Vector& eta,
                              double lambda, double mu) {
  Eigen::Index total = 0;
  for (const auto& m : x) total += m.cols();
  Matrix stacked(r.size(), total);
  Vector diag(total);
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = lambda / eta(static_cast<Eigen::Index>(i)) + 1.0 - lambda;
    stacked.middleCols(off, x[i].cols()) = x[i];
    diag.segment(off, x[i].cols()).setConstant(d);
    off += x[i].cols();
  }
  Matrix a = stacked.transpose() * stacked;
  a.diagonal() += mu * diag;
  const Vector f = a.colPivHouseholderQr().solve(stacked.transpose() * r);
  MklSolution s;
  s.eta = eta;
  off = 0;
  for (const auto& m : x) {
    s.f.push_back(f.segment(off, m.cols()));
    off += m.cols();
  }
  s.objective = mu * f.dot(diag.asDiagonal() * f) + (stacked * f - r).squaredNorm();
  return s;
}

/// Projected gradient with Armijo backtracking on g(eta) = min_f objective.
/// dg/deta_i = -mu lambda |f_i|^2 / eta_i^2 (envelope theorem).
inline MklSolution mkl_projected_gradient(const std::vector<Matrix>& x, const Vector& r, double lambda,
                                          double mu, int iters = 20000) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Vector eta = Vector::Constant(n, 1.0 / static_cast<double>(n));
  auto clamp = [](const Vector& e) -> Vector { return project_simplex(e).cwiseMax(1e-12); };
  MklSolution cur = mkl_primal(x, r, eta, lambda, mu);
  double step = 1.0;
  for (int it = 0; it < iters; ++it) {
    Vector grad(n);
    for (Eigen::Index i = 0; i < n; ++i)
      grad(i) = -mu * lambda * cur.f[static_cast<std::size_t>(i)].squaredNorm() / (eta(i) * eta(i));
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      const Vector cand = clamp(eta - step * grad);
      const MklSolution next = mkl_primal(x, r, cand, lambda, mu);
      if (next.objective <= cur.objective - 1e-4 * grad.dot(eta - cand)) {
        moved = (cand - eta).lpNorm<Eigen::Infinity>() > 1e-15;
        eta = cand;
        cur = next;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return cur;
}

/// Regularised LinRel weights in primal form:
/// a(I) = Phi (Phi' Phi + mu I_d)^-1 phi(I), Phi rows = seen features.
inline Vector linrel_primal_a(const Matrix& phi_seen, const Vector& phi_query, double mu) {
  Matrix g = phi_seen.transpose() * phi_seen;
  g.diagonal().array() += mu;
  return phi_seen * g.inverse() * phi_query;
}

struct ExplicitTensor {
  Vector singular_values;
  Matrix projection_dirs;  // column d: image-space direction Phi' D_g Phi p_d / s_d
};

/// SVD of W = Phi' D_gamma Psi from explicit features of both views.
inline ExplicitTensor tensor_explicit(const Matrix& phi, const Matrix& psi, const Vector& gamma, int rank) {
  const Matrix w = phi.transpose() * gamma.asDiagonal() * psi;
  Eigen::JacobiSVD<Matrix> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
  ExplicitTensor out;
  out.singular_values = svd.singularValues().head(rank);
  out.projection_dirs.resize(phi.cols(), rank);
  for (int d = 0; d < rank; ++d) {
    const Vector beta = gamma.asDiagonal() * (phi * svd.matrixU().col(d)) / svd.singularValues()(d);
    out.projection_dirs.col(d) = phi.transpose() * beta;
  }
  return out;
}

}  // namespace oracle
