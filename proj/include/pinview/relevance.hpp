#pragma once

// Logistic relevance predictor over the 19 eye-movement features, trained with
// L2 regularisation and cross-validated regularisation strength, and the
// additive click fusion rule.

#include <fstream>
#include <istream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pinview/common.hpp"
#include "pinview/gaze.hpp"

namespace pinview {

inline double logistic(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

/// Per-feature affine standardisation. Zero-variance features get std 1.
struct Standardizer {
  Vector mean = Vector::Zero(kEyeFeatureCount);
  Vector stddev = Vector::Ones(kEyeFeatureCount);

  static Standardizer fit(const Matrix& rows) {
    Standardizer s;
    const auto n = static_cast<double>(rows.rows());
    s.mean = rows.colwise().mean().transpose();
    s.stddev.resize(rows.cols());
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      const double var = (rows.col(j).array() - s.mean(j)).square().sum() / n;
      s.stddev(j) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
  }

  Vector apply(const Vector& x) const { return (x - mean).cwiseQuotient(stddev); }
  Matrix apply_rows(const Matrix& rows) const {
    return (rows.rowwise() - mean.transpose()).array().rowwise() / stddev.transpose().array();
  }
};

struct RelevancePredictor {
  Vector weights = Vector::Zero(kEyeFeatureCount);  // v
  double bias = 0.0;                                // b
  Standardizer standardizer;
  double alpha = 1.0;               // click weight
  double default_unviewed = 0.05;   // score of images not looked at
  double regularization = 0.0;      // chosen L2 strength (diagnostic)

  /// Logistic part: 1 / (1 + exp(-v'z + b)) on the standardised features.
  double gaze_score(const EyeFeatureVector& psi) const {
    const Vector z = standardizer.apply(psi.as_vector());
    return logistic(weights.dot(z) - bias);
  }

  /// Fused relevance: gaze score (or the unviewed default) plus alpha when
  /// clicked. May exceed 1.
  double predict(const EyeFeatureVector& psi, bool clicked) const {
    const double base = psi.viewed ? gaze_score(psi) : default_unviewed;
    return base + (clicked ? alpha : 0.0);
  }
};

struct CollageFeedbackItem {
  EyeFeatureVector psi;
  bool clicked = false;
};

/// Which channels enter the score. Without gaze every image is scored as
/// unviewed; without clicks alpha is ignored.
struct FusionMode {
  bool use_gaze = true;
  bool use_click = true;
};

inline std::vector<double> score_collage(const std::vector<CollageFeedbackItem>& items,
                                         const RelevancePredictor& model, FusionMode mode = {}) {
  std::vector<double> out;
  out.reserve(items.size());
  for (const auto& it : items) {
    const double base =
        (mode.use_gaze && it.psi.viewed) ? model.gaze_score(it.psi) : model.default_unviewed;
    out.push_back(base + ((mode.use_click && it.clicked) ? model.alpha : 0.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct RelevanceExample {
  EyeFeatureVector psi;
  int label = 0;  // 1 relevant, 0 not
  std::string task;
};

using RelevanceTrainingSet = std::vector<RelevanceExample>;

/// Parameters are packed as theta = (v, b); the linear score is v'z - b.
/// Objective: sum of log-losses + rho/2 |v|^2 (bias unregularised).
inline double logistic_objective(const Vector& theta, const Matrix& z, const Vector& y, double rho) {
  const Eigen::Index d = z.cols();
  const Vector s = z * theta.head(d) - Vector::Constant(z.rows(), theta(d));
  double loss = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    // log(1 + exp(-s)) for y = 1, log(1 + exp(s)) for y = 0, computed stably.
    const double m = y(i) > 0.5 ? -s(i) : s(i);
    loss += m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
  }
  return loss + 0.5 * rho * theta.head(d).squaredNorm();
}

inline Vector logistic_gradient(const Vector& theta, const Matrix& z, const Vector& y, double rho) {
  const Eigen::Index d = z.cols();
  const Vector s = z * theta.head(d) - Vector::Constant(z.rows(), theta(d));
  Vector resid(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) resid(i) = logistic(s(i)) - y(i);
  Vector g(d + 1);
  g.head(d) = z.transpose() * resid + rho * theta.head(d);
  g(d) = -resid.sum();
  return g;
}

/// Newton's method with backtracking; the objective is strictly convex in v
/// for rho > 0.
inline Vector fit_logistic(const Matrix& z, const Vector& y, double rho, int max_iter = 100) {
  const Eigen::Index d = z.cols();
  Vector theta = Vector::Zero(d + 1);
  Matrix x(z.rows(), d + 1);
  x << z, -Vector::Ones(z.rows());
  double f = logistic_objective(theta, z, y, rho);
  for (int it = 0; it < max_iter; ++it) {
    const Vector g = logistic_gradient(theta, z, y, rho);
    if (g.norm() < 1e-10 * std::max(1.0, static_cast<double>(z.rows()))) break;
    const Vector s = x * theta;
    Vector w(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double p = logistic(s(i));
      w(i) = std::max(p * (1.0 - p), 1e-12);
    }
    Matrix h = x.transpose() * w.asDiagonal() * x;
    h.diagonal().head(d).array() += rho;
    h.diagonal().array() += 1e-10;
    const Vector step = h.ldlt().solve(g);
    double t = 1.0;
    Vector next = theta - step;
    double fn = logistic_objective(next, z, y, rho);
    while (fn > f && t > 1e-8) {
      t *= 0.5;
      next = theta - t * step;
      fn = logistic_objective(next, z, y, rho);
    }
    if (fn > f) break;
    const double decrease = f - fn;
    theta = next;
    f = fn;
    if (decrease < 1e-14 * std::max(1.0, std::abs(f))) break;
  }
  return theta;
}

struct TrainOptions {
  std::vector<double> reg_grid{0.001, 0.01, 0.1, 1.0, 10.0, 100.0};
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  double alpha = 1.0;
  double default_unviewed = 0.05;
};

namespace detail {

inline void training_matrix(const RelevanceTrainingSet& data, Matrix& x, Vector& y) {
  x.resize(static_cast<Eigen::Index>(data.size()), kEyeFeatureCount);
  y.resize(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& ex = data[i];
    if (!ex.psi.finite()) throw InvalidArgument("training row " + std::to_string(i) + ": non-finite feature");
    if (ex.label != 0 && ex.label != 1)
      throw InvalidArgument("training row " + std::to_string(i) + ": label must be 0 or 1");
    x.row(static_cast<Eigen::Index>(i)) = ex.psi.as_vector().transpose();
    y(static_cast<Eigen::Index>(i)) = ex.label;
  }
}

inline Matrix select_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

inline Vector select_rows(const Vector& v, const std::vector<std::size_t>& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(static_cast<Eigen::Index>(idx[i]));
  return out;
}

}  // namespace detail

/// Fold assignment stratified by class, seeded.
inline std::vector<std::size_t> stratified_folds(const Vector& y, std::size_t folds, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (Eigen::Index i = 0; i < y.size(); ++i) (y(i) > 0.5 ? pos : neg).push_back(static_cast<std::size_t>(i));
  Rng rng(seed);
  pos = sample_without_replacement(pos, pos.size(), rng);
  neg = sample_without_replacement(neg, neg.size(), rng);
  std::vector<std::size_t> fold(static_cast<std::size_t>(y.size()));
  for (std::size_t k = 0; k < pos.size(); ++k) fold[pos[k]] = k % folds;
  for (std::size_t k = 0; k < neg.size(); ++k) fold[neg[k]] = k % folds;
  return fold;
}

/// Standardises features, picks the L2 strength by stratified k-fold
/// cross-validated log-loss, then refits on all rows.
inline RelevancePredictor train_predictor(const RelevanceTrainingSet& data, const TrainOptions& opt = {}) {
  if (opt.reg_grid.empty()) throw InvalidArgument("train_predictor: empty regularisation grid");
  if (opt.folds < 2) throw InvalidArgument("train_predictor: need at least 2 folds");
  Matrix x;
  Vector y;
  detail::training_matrix(data, x, y);
  const auto positives = static_cast<std::size_t>(y.sum());
  const std::size_t negatives = data.size() - positives;
  if (positives == 0 || negatives == 0) throw InvalidArgument("train_predictor: single-class training data");
  if (positives < opt.folds || negatives < opt.folds)
    throw InvalidArgument("train_predictor: fewer rows per class than folds");

  const auto fold = stratified_folds(y, opt.folds, opt.seed);
  double best_loss = std::numeric_limits<double>::infinity();
  double best_rho = opt.reg_grid.front();
  for (double rho : opt.reg_grid) {
    if (!(rho > 0.0)) throw InvalidArgument("train_predictor: regularisation values must be positive");
    double held_out = 0.0;
    for (std::size_t f = 0; f < opt.folds; ++f) {
      std::vector<std::size_t> tr, te;
      for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? te : tr).push_back(i);
      const Matrix xtr = detail::select_rows(x, tr);
      const Standardizer st = Standardizer::fit(xtr);
      const Vector theta = fit_logistic(st.apply_rows(xtr), detail::select_rows(y, tr), rho);
      held_out += logistic_objective(theta, st.apply_rows(detail::select_rows(x, te)),
                                     detail::select_rows(y, te), 0.0);
    }
    if (held_out < best_loss) {
      best_loss = held_out;
      best_rho = rho;
    }
  }

  RelevancePredictor model;
  model.standardizer = Standardizer::fit(x);
  const Vector theta = fit_logistic(model.standardizer.apply_rows(x), y, best_rho);
  model.weights = theta.head(kEyeFeatureCount);
  model.bias = theta(kEyeFeatureCount);
  model.alpha = opt.alpha;
  model.default_unviewed = opt.default_unviewed;
  model.regularization = best_rho;
  return model;
}

// ---------------------------------------------------------------------------
// Persistence

inline nlohmann::json to_json(const RelevancePredictor& m) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"weights", vec(m.weights)},
          {"bias", m.bias},
          {"mean", vec(m.standardizer.mean)},
          {"std", vec(m.standardizer.stddev)},
          {"alpha", m.alpha},
          {"default_unviewed", m.default_unviewed},
          {"regularization", m.regularization},
          {"feature_names", kEyeFeatureNames}};
}

inline RelevancePredictor predictor_from_json(const nlohmann::json& j) {
  auto vec = [](const nlohmann::json& a, const char* what) {
    const auto v = a.get<std::vector<double>>();
    if (v.size() != kEyeFeatureCount)
      throw DimensionMismatch(std::string("predictor '") + what + "' must have 19 entries");
    return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  RelevancePredictor m;
  m.weights = vec(j.at("weights"), "weights");
  m.bias = j.at("bias").get<double>();
  m.standardizer.mean = vec(j.at("mean"), "mean");
  m.standardizer.stddev = vec(j.at("std"), "std");
  if ((m.standardizer.stddev.array() <= 0.0).any()) throw InvalidArgument("predictor std must be positive");
  m.alpha = j.value("alpha", 1.0);
  m.default_unviewed = j.value("default_unviewed", 0.05);
  m.regularization = j.value("regularization", 0.0);
  return m;
}

/// Training CSV: 19 feature columns then the 0/1 label; an optional header
/// row (first cell not numeric) is skipped.
inline RelevanceTrainingSet read_training_csv(std::istream& in) {
  RelevanceTrainingSet out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (lineno == 1 && !cells.empty()) {
      try {
        (void)std::stod(cells[0]);
      } catch (const std::exception&) {
        continue;
      }
    }
    if (cells.size() != kEyeFeatureCount + 1)
      throw InvalidArgument("training CSV line " + std::to_string(lineno) + ": expected 20 columns");
    RelevanceExample ex;
    ex.psi.viewed = true;
    try {
      for (std::size_t k = 0; k < kEyeFeatureCount; ++k) ex.psi[k] = std::stod(cells[k]);
      ex.label = std::stoi(cells[kEyeFeatureCount]);
    } catch (const std::exception&) {
      throw InvalidArgument("training CSV line " + std::to_string(lineno) + ": bad number");
    }
    if (!ex.psi.finite())
      throw InvalidArgument("training CSV line " + std::to_string(lineno) + ": non-finite feature");
    out.push_back(ex);
  }
  return out;
}

inline void write_training_csv(std::ostream& out, const RelevanceTrainingSet& data) {
  for (std::size_t k = 0; k < kEyeFeatureCount; ++k) out << kEyeFeatureNames[k] << ',';
  out << "label\n";
  out.precision(17);
  for (const auto& ex : data) {
    for (std::size_t k = 0; k < kEyeFeatureCount; ++k) out << ex.psi[k] << ',';
    out << ex.label << '\n';
  }
}

}  // namespace pinview
