#pragma once

// Regularised, kernelised LinRel: a_t(I) = k(I, seen) (K_seen + mu I)^-1,
// estimated relevance a_t . r_t, width sigma_t = |a_t|, and UCB-based collage
// selection.

#include <numeric>
#include <string>
#include <vector>

#include "pinview/common.hpp"

namespace pinview {

class LinRelState {
public:
  LinRelState(const Matrix& k_seen, Vector r, double mu, double c, std::vector<std::string> seen_ids = {},
              double jitter = 1e-8)
      : r_(std::move(r)), mu_(mu > 0.0 ? mu : jitter), c_(c), seen_(std::move(seen_ids)) {
    if (k_seen.rows() != k_seen.cols() || k_seen.rows() != r_.size())
      throw DimensionMismatch("LinRelState: Gram / relevance size mismatch");
    if (c < 0.0) throw InvalidArgument("LinRelState: exploration constant must be >= 0");
    if (!seen_.empty() && static_cast<Eigen::Index>(seen_.size()) != r_.size())
      throw DimensionMismatch("LinRelState: seen ids / relevance size mismatch");
    Matrix a = 0.5 * (k_seen + k_seen.transpose());
    a.diagonal().array() += mu_;
    factor_.compute(a);
  }

  Eigen::Index seen_count() const { return r_.size(); }
  double mu() const { return mu_; }
  double c() const { return c_; }
  const Vector& relevance() const { return r_; }
  const std::vector<std::string>& seen_ids() const { return seen_; }

  /// a_t for one kernel row k(I, seen).
  Vector compute_a(const Vector& kernel_row) const {
    if (kernel_row.size() != r_.size()) throw DimensionMismatch("compute_a: kernel row length");
    return factor_.solve(kernel_row);
  }

  /// a_t for many candidates at once: rows of the result match rows of `cross`.
  Matrix compute_a(const Matrix& cross) const {
    if (cross.cols() != r_.size()) throw DimensionMismatch("compute_a: kernel row length");
    return factor_.solve(cross.transpose()).transpose();
  }

  double estimate(const Vector& a) const { return a.dot(r_); }
  double sigma(const Vector& a) const { return a.norm(); }
  double ucb(const Vector& a) const { return estimate(a) + c_ * sigma(a); }

private:
  Vector r_;
  double mu_;
  double c_;
  std::vector<std::string> seen_;
  Eigen::LDLT<Matrix> factor_;
};

inline double ucb_score(const Vector& kernel_row, const LinRelState& state) {
  return state.ucb(state.compute_a(kernel_row));
}

struct CollageRequest {
  std::vector<std::string> pool;  // unseen candidates
  std::size_t size = 15;
  std::size_t explore_count = 15;  // m: images chosen by UCB, the rest by estimate
};

struct CollageSelection {
  std::vector<std::string> ids;
  std::vector<double> scores;  // score that ranked each chosen image
  bool short_pool = false;
};

/// Seeded uniform sample (the cold-start and random-browsing rule).
inline CollageSelection select_random(const std::vector<std::string>& pool, std::size_t size, Rng& rng) {
  if (pool.empty()) throw InvalidArgument("select_random: empty pool");
  CollageSelection out;
  out.short_pool = pool.size() < size;
  out.ids = sample_without_replacement(pool, size, rng);
  out.scores.assign(out.ids.size(), 0.0);
  return out;
}

/// Greedy selection without replacement: the top `explore_count` candidates
/// by UCB, then the rest by estimated relevance a_t . r_t. Ties go to the
/// lexicographically smaller id. `cross` holds k(candidate, seen) rows aligned
/// with request.pool.
inline CollageSelection select_collage(const CollageRequest& req, const LinRelState& state,
                                       const Matrix& cross) {
  if (req.pool.empty()) throw InvalidArgument("select_collage: empty pool");
  if (static_cast<std::size_t>(cross.rows()) != req.pool.size())
    throw DimensionMismatch("select_collage: kernel rows do not match the pool");
  if (req.explore_count < 1 || req.explore_count > req.size)
    throw InvalidArgument("select_collage: explore count must be in [1, size]");

  const Matrix a = state.compute_a(cross);
  const Eigen::Index m = a.rows();
  Vector estimate = a * state.relevance();
  Vector ucb = estimate + state.c() * a.rowwise().norm();

  CollageSelection out;
  const std::size_t n = std::min(req.size, req.pool.size());
  out.short_pool = req.pool.size() < req.size;
  std::vector<char> taken(static_cast<std::size_t>(m), 0);
  auto pick = [&](const Vector& score, std::size_t count) {
    std::vector<std::size_t> idx;
    for (Eigen::Index i = 0; i < m; ++i)
      if (!taken[static_cast<std::size_t>(i)]) idx.push_back(static_cast<std::size_t>(i));
    count = std::min(count, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(),
                      [&](std::size_t x, std::size_t y) {
                        const double sx = score(static_cast<Eigen::Index>(x));
                        const double sy = score(static_cast<Eigen::Index>(y));
                        if (sx != sy) return sx > sy;
                        return req.pool[x] < req.pool[y];
                      });
    for (std::size_t k = 0; k < count; ++k) {
      taken[idx[k]] = 1;
      out.ids.push_back(req.pool[idx[k]]);
      out.scores.push_back(score(static_cast<Eigen::Index>(idx[k])));
    }
  };
  pick(ucb, std::min(req.explore_count, n));
  if (out.ids.size() < n) pick(estimate, n - out.ids.size());
  return out;
}

}  // namespace pinview
