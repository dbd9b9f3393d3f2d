#pragma once

// Two-view tensor kernel: Schur product of the image and gaze Gram matrices,
// a soft-margin kernel SVM on it, and the kernel-only SVD-like decomposition
// of the implicit weight matrix W = sum_u gamma_u phi(I_u) psi(I_u)'.

#include <string>
#include <vector>

#include "pinview/common.hpp"

namespace pinview {

inline Matrix tensor_kernel(const Matrix& k_image, const Matrix& k_gaze) {
  if (k_image.rows() != k_image.cols() || k_image.rows() != k_gaze.rows() ||
      k_image.cols() != k_gaze.cols())
    throw DimensionMismatch("tensor_kernel: Gram matrices must be square and equally sized");
  return k_image.cwiseProduct(k_gaze);
}

struct TensorSvmOptions {
  double C = 1.0;
  double label_threshold = 0.5;  // r >= threshold is the positive class
  int max_sweeps = 100000;
  double tol = 1e-12;
};

struct TensorSvm {
  Vector gamma;    // y_u * a_u
  Vector dual;     // a_u in [0, C]
  Vector labels;   // +-1
  double dual_objective = 0.0;
  int sweeps = 0;
};

/// Dual coordinate ascent for the bias-free soft-margin SVM
///   max_a sum a - 1/2 a' Q a,  Q_uv = y_u y_v K_uv,  0 <= a <= C.
/// Each coordinate step is the exact clipped maximiser.
inline TensorSvm train_tensor_svm(const Matrix& k, const Vector& r, const TensorSvmOptions& opt = {}) {
  if (k.rows() != k.cols() || k.rows() != r.size())
    throw DimensionMismatch("train_tensor_svm: Gram / relevance size mismatch");
  if (!(opt.C > 0.0)) throw InvalidArgument("train_tensor_svm: C must be positive");
  const Eigen::Index n = r.size();
  TensorSvm out;
  out.labels.resize(n);
  bool has_pos = false, has_neg = false;
  for (Eigen::Index u = 0; u < n; ++u) {
    out.labels(u) = r(u) >= opt.label_threshold ? 1.0 : -1.0;
    (out.labels(u) > 0 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg)
    throw InvalidArgument("train_tensor_svm: single-class labels, tensor stage skipped");

  const Matrix q = out.labels.asDiagonal() * k * out.labels.asDiagonal();
  Vector a = Vector::Zero(n);
  Vector qa = Vector::Zero(n);
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index u = 0; u < n; ++u) {
      const double g = 1.0 - qa(u);
      double next;
      if (q(u, u) > 0.0)
        next = std::clamp(a(u) + g / q(u, u), 0.0, opt.C);
      else
        next = g > 0.0 ? opt.C : (g < 0.0 ? 0.0 : a(u));
      const double delta = next - a(u);
      if (delta != 0.0) {
        qa += delta * q.col(u);
        a(u) = next;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    out.sweeps = sweep + 1;
    if (max_change < opt.tol) break;
  }
  out.dual = a;
  out.gamma = out.labels.cwiseProduct(a);
  out.dual_objective = a.sum() - 0.5 * a.dot(qa);
  return out;
}

/// Decision values sum_u gamma_u k(x, I_u) for cross rows (queries x seen).
inline Vector svm_decision(const Matrix& cross, const Vector& gamma) { return cross * gamma; }

struct TensorModel {
  Vector gamma;
  std::size_t rank = 0;     // D actually used (<= requested)
  Matrix alpha_coeffs;      // (t-1) x D, image view, a_d' K_image a_d = 1
  Matrix beta_coeffs;       // (t-1) x D, gaze view, b_d' K_gaze b_d = 1
  Vector singular_values;   // non-increasing
  std::vector<std::string> seen_ids;
};

struct DecomposeOptions {
  double psd_tol = 1e-8;   // relative negative-eigenvalue tolerance on K_image
  double rank_tol = 1e-12; // relative squared-singular-value cutoff
};

/// Singular directions of W without explicit features. alpha columns are the
/// top eigenvectors of D_g K_gaze D_g K_image and beta columns the paired
/// eigenvectors of D_g K_image D_g K_gaze (beta_d = D_g K_image alpha_d / s_d),
/// each normalised in its own kernel metric. Directions with numerically zero
/// singular value are dropped, so the returned rank can be below `rank`.
/// Sign convention: first nonzero coordinate of each alpha column positive.
inline TensorModel decompose(const Vector& gamma, const Matrix& k_image, const Matrix& k_gaze,
                             std::size_t rank, const DecomposeOptions& opt = {}) {
  const Eigen::Index n = gamma.size();
  if (k_image.rows() != n || k_image.cols() != n || k_gaze.rows() != n || k_gaze.cols() != n)
    throw DimensionMismatch("decompose: Gram sizes must match gamma");
  if (rank > static_cast<std::size_t>(n)) throw InvalidArgument("decompose: rank exceeds number of seen images");
  TensorModel m;
  m.gamma = gamma;
  if (rank == 0) {
    m.alpha_coeffs = Matrix(n, 0);
    m.beta_coeffs = Matrix(n, 0);
    m.singular_values = Vector(0);
    return m;
  }
  if (gamma.isZero(0.0)) throw InvalidArgument("decompose: gamma is all zero");

  // K_image = V L V'; in the coordinates Phi = V L^{1/2} the matrix W W' is
  // S = L^{1/2} V' D_g K_gaze D_g V L^{1/2}.
  const Matrix sym_image = 0.5 * (k_image + k_image.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> ek(sym_image);
  const Vector lam = ek.eigenvalues();
  const double lam_max = std::max(lam.cwiseAbs().maxCoeff(), 1e-300);
  if (lam.minCoeff() < -opt.psd_tol * std::max(1.0, lam_max))
    throw DegenerateInput("decompose: image Gram matrix is not positive semidefinite");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i)
    if (lam(i) > opt.psd_tol * lam_max) keep.push_back(i);
  const auto r = static_cast<Eigen::Index>(keep.size());
  Matrix half(n, r);  // V L^{1/2}
  for (Eigen::Index j = 0; j < r; ++j) half.col(j) = ek.eigenvectors().col(keep[j]) * std::sqrt(lam(keep[j]));

  const Matrix dg_kg_dg = gamma.asDiagonal() * k_gaze * gamma.asDiagonal();
  Matrix s = half.transpose() * dg_kg_dg * half;
  s = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  const Vector sv2 = es.eigenvalues();  // ascending

  std::vector<Eigen::Index> order;
  const double top = r > 0 ? std::max(sv2.maxCoeff(), 0.0) : 0.0;
  for (Eigen::Index i = r - 1; i >= 0 && order.size() < rank; --i)
    if (sv2(i) > 0.0 && sv2(i) > opt.rank_tol * top) order.push_back(i);

  const auto d = static_cast<Eigen::Index>(order.size());
  m.rank = order.size();
  m.alpha_coeffs.resize(n, d);
  m.beta_coeffs.resize(n, d);
  m.singular_values.resize(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    const double s2 = sv2(order[static_cast<std::size_t>(c)]);
    const double sv = std::sqrt(s2);
    const Vector u = es.eigenvectors().col(order[static_cast<std::size_t>(c)]);
    // Exact eigenvector of D_g K_gaze D_g K_image with K_image a = V L^{1/2} u.
    Vector a = dg_kg_dg * (half * u) / s2;
    Vector b = gamma.asDiagonal() * (k_image * a) / sv;
    Eigen::Index first = 0;
    const double scale = a.cwiseAbs().maxCoeff();
    while (first < n && std::abs(a(first)) <= 1e-12 * scale) ++first;
    if (first < n && a(first) < 0.0) {
      a = -a;
      b = -b;
    }
    m.alpha_coeffs.col(c) = a;
    m.beta_coeffs.col(c) = b;
    m.singular_values(c) = sv;
  }
  return m;
}

/// Rows of the projected features: phi~(I)_d = sum_u k(I_u, I) beta[u, d],
/// for cross rows k(I, seen) (queries x seen).
inline Matrix project(const Matrix& cross, const TensorModel& model) {
  if (cross.cols() != model.beta_coeffs.rows())
    throw DimensionMismatch("project: kernel rows do not match the seen set");
  return cross * model.beta_coeffs;
}

inline Vector project(const Vector& kernel_row, const TensorModel& model) {
  return project(Matrix(kernel_row.transpose()), model).row(0).transpose();
}

inline double projected_kernel(const Vector& phi_i, const Vector& phi_j) {
  if (phi_i.size() != phi_j.size()) throw DimensionMismatch("projected_kernel: rank mismatch");
  return phi_i.size() == 0 ? 0.0 : phi_i.dot(phi_j);
}

}  // namespace pinview
