#pragma once

// Cosine-normalised linear base kernels, one per feature space, and the
// per-round Gram blocks handed to MKL and LinRel.

#include <memory>
#include <string>
#include <vector>

#include "pinview/common.hpp"
#include "pinview/corpus.hpp"

namespace pinview {

/// Cosine-normalised linear kernel between two raw feature vectors.
/// A zero vector on either side gives 0.
inline double cosine_kernel(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch("cosine_kernel: dimension mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

inline double base_kernel(const std::string& feature, const ImageRecord& a, const ImageRecord& b) {
  auto fa = a.features.find(feature);
  if (fa == a.features.end())
    throw NotFound("image '" + a.id + "' has no feature '" + feature + "'");
  auto fb = b.features.find(feature);
  if (fb == b.features.end())
    throw NotFound("image '" + b.id + "' has no feature '" + feature + "'");
  return cosine_kernel(fa->second, fb->second);
}

/// Corpus-wide kernel data: each feature space as a matrix of unit-norm rows
/// (zero rows stay zero), so k_i(u, v) = <row_u, row_v>. Immutable once
/// built and shared read-only between sessions. Small corpora also cache the
/// full Gram matrices.
class KernelSpace {
public:
  KernelSpace(const Corpus& corpus, std::vector<std::string> features = {},
              std::size_t gram_cache_limit = 3000)
      : features_(std::move(features)) {
    if (features_.empty())
      for (const auto& s : corpus.specs()) features_.push_back(s.name);
    const auto n = static_cast<Eigen::Index>(corpus.size());
    for (const auto& name : features_) {
      const FeatureSpec* spec = corpus.find_spec(name);
      if (!spec) throw NotFound("corpus has no feature '" + name + "'");
      Matrix m(n, static_cast<Eigen::Index>(spec->dim));
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& v = corpus.image(static_cast<std::size_t>(i)).features.at(name);
        m.row(i) = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())).transpose();
        const double norm = m.row(i).norm();
        if (norm > 0.0) m.row(i) /= norm;
      }
      normalized_.push_back(std::move(m));
    }
    if (corpus.size() <= gram_cache_limit)
      for (const auto& m : normalized_) gram_.push_back(m * m.transpose());
  }

  std::size_t spaces() const { return features_.size(); }
  const std::vector<std::string>& features() const { return features_; }
  std::size_t images() const { return normalized_.empty() ? 0 : static_cast<std::size_t>(normalized_[0].rows()); }

  /// Block of k_space over rows x cols (corpus indices).
  Matrix block(std::size_t space, std::span<const std::size_t> rows,
               std::span<const std::size_t> cols) const {
    Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    if (!gram_.empty()) {
      const Matrix& g = gram_[space];
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
          out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
              g(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(cols[j]));
      return out;
    }
    const Matrix& f = normalized_[space];
    Matrix a(static_cast<Eigen::Index>(rows.size()), f.cols());
    Matrix b(static_cast<Eigen::Index>(cols.size()), f.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = f.row(static_cast<Eigen::Index>(rows[i]));
    for (std::size_t j = 0; j < cols.size(); ++j) b.row(static_cast<Eigen::Index>(j)) = f.row(static_cast<Eigen::Index>(cols[j]));
    out.noalias() = a * b.transpose();
    return out;
  }

private:
  std::vector<std::string> features_;
  std::vector<Matrix> normalized_;
  std::vector<Matrix> gram_;
};

/// Per-space Gram matrices over the seen images plus cross blocks between
/// candidate (unseen) images and the seen ones.
struct KernelBundle {
  std::vector<std::string> features;
  std::vector<Matrix> seen;   // K_i, (t-1) x (t-1)
  std::vector<Matrix> cross;  // k_i(candidate, seen), m x (t-1)
  bool normalized = true;

  std::size_t spaces() const { return seen.size(); }
  Eigen::Index seen_count() const { return seen.empty() ? 0 : seen.front().rows(); }

  static KernelBundle build(const KernelSpace& ks, std::span<const std::size_t> seen_idx,
                            std::span<const std::size_t> candidate_idx) {
    KernelBundle b;
    b.features = ks.features();
    for (std::size_t s = 0; s < ks.spaces(); ++s) {
      b.seen.push_back(ks.block(s, seen_idx, seen_idx));
      b.cross.push_back(ks.block(s, candidate_idx, seen_idx));
    }
    return b;
  }

  /// Gram bundle from explicit per-space feature rows (one matrix per
  /// space, rows = seen images), linear kernel, no normalisation.
  static KernelBundle from_features(const std::vector<Matrix>& seen_rows,
                                    const std::vector<Matrix>& candidate_rows = {}) {
    KernelBundle b;
    b.normalized = false;
    for (std::size_t s = 0; s < seen_rows.size(); ++s) {
      b.features.push_back("space" + std::to_string(s));
      b.seen.push_back(seen_rows[s] * seen_rows[s].transpose());
      if (s < candidate_rows.size()) b.cross.push_back(candidate_rows[s] * seen_rows[s].transpose());
    }
    return b;
  }
};

/// Convex combination sum_i w_i M_i.
inline Matrix weighted_sum(const std::vector<Matrix>& mats, const Vector& w) {
  if (mats.empty()) return {};
  if (static_cast<std::size_t>(w.size()) != mats.size())
    throw DimensionMismatch("weighted_sum: weight count differs from matrix count");
  Matrix out = Matrix::Zero(mats.front().rows(), mats.front().cols());
  for (std::size_t i = 0; i < mats.size(); ++i) out += w(static_cast<Eigen::Index>(i)) * mats[i];
  return out;
}

}  // namespace pinview
