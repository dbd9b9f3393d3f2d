#pragma once

// Retrieval and classification metrics plus the paired t-test used to compare
// feedback modalities.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ranges>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "pinview/common.hpp"

namespace pinview {

/// Average precision of a ranked sequence: mean of precision@k over the ranks
/// k holding a relevant item. Zero when nothing relevant was retrieved.
template <std::ranges::input_range R>
double average_precision(const R& ranked_relevance) {
  double hits = 0.0, sum = 0.0, k = 0.0;
  for (bool relevant : ranked_relevance) {
    k += 1.0;
    if (!relevant) continue;
    hits += 1.0;
    sum += hits / k;
  }
  return hits > 0.0 ? sum / hits : 0.0;
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator).
inline double sample_stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Area under the ROC curve via the Mann-Whitney statistic (ties count 1/2).
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionMismatch("roc_auc: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0, pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) {
        rank_sum += avg_rank;
        pos += 1.0;
      }
    i = j + 1;
  }
  const double neg = static_cast<double>(scores.size()) - pos;
  if (pos == 0.0 || neg == 0.0) throw InvalidArgument("roc_auc: need both classes");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  double mean_difference = 0.0;
  bool degenerate = false;  // nonzero constant differences: t is infinite
};

/// Two-sided paired t-test of a against b.
inline TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch("paired_ttest: unequal lengths");
  if (a.size() < 2) throw InvalidArgument("paired_ttest: need at least 2 pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  TTestResult r;
  r.df = static_cast<double>(d.size() - 1);
  r.mean_difference = mean(d);
  const double sd = sample_stddev(d);
  if (sd == 0.0) {
    if (r.mean_difference == 0.0) {
      r.p = 1.0;
    } else {
      r.degenerate = true;
      r.t = std::copysign(INFINITY, r.mean_difference);
      r.p = 0.0;
    }
    return r;
  }
  r.t = r.mean_difference / (sd / std::sqrt(static_cast<double>(d.size())));
  const boost::math::students_t dist(r.df);
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

}  // namespace pinview
