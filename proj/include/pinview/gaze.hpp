#pragma once

// Gaze streams: I-DT fixation detection, assignment of samples to collage
// cells, and the 19 per-image eye-movement features.

#include <array>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pinview/common.hpp"

namespace pinview {

inline constexpr double kNominalSamplePeriodMs = 20.0;  // 50 Hz tracker

struct GazeSample {
  double t = 0.0;  // ms since collage onset
  double x = 0.0;
  double y = 0.0;
  double pupil = 0.0;  // mm, 0 when the device reports none
  bool valid = true;

  bool operator==(const GazeSample&) const = default;
};

struct Fixation {
  double start = 0.0;
  double duration = 0.0;
  double x = 0.0;  // centroid
  double y = 0.0;
  std::size_t samples = 0;

  double end() const { return start + duration; }
};

struct Rect {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;

  bool contains(double px, double py) const {
    return px >= x && px < x + w && py >= y && py < y + h;
  }
  bool overlaps(const Rect& o) const {
    return x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h;
  }
};

struct CollageCell {
  std::string image_id;
  Rect rect;
};

struct CollageLayout {
  double screen_width = 1280.0;
  double screen_height = 1024.0;
  std::vector<CollageCell> cells;

  std::optional<std::size_t> cell_at(double px, double py) const {
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (cells[i].rect.contains(px, py)) return i;
    return std::nullopt;
  }
};

/// Tiles the screen with a cols x rows grid of equal cells, filled row by row
/// in the order of `ids`. The default is the 5 x 3 collage on a 1280x1024
/// screen.
inline CollageLayout grid_layout(const std::vector<std::string>& ids, std::size_t cols = 5,
                                 std::size_t rows = 3, double screen_width = 1280.0,
                                 double screen_height = 1024.0) {
  if (ids.size() > cols * rows)
    throw InvalidArgument("grid_layout: " + std::to_string(ids.size()) + " images exceed " +
                          std::to_string(cols * rows) + " cells");
  CollageLayout layout{screen_width, screen_height, {}};
  const double cw = screen_width / static_cast<double>(cols);
  const double ch = screen_height / static_cast<double>(rows);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double cx = static_cast<double>(i % cols) * cw;
    const double cy = static_cast<double>(i / cols) * ch;
    layout.cells.push_back({ids[i], {cx, cy, cw, ch}});
  }
  return layout;
}

// ---------------------------------------------------------------------------
// Fixations

namespace detail {
inline std::vector<GazeSample> valid_only(std::span<const GazeSample> stream) {
  std::vector<GazeSample> out;
  out.reserve(stream.size());
  for (const auto& s : stream)
    if (s.valid) out.push_back(s);
  return out;
}
}  // namespace detail

/// Dispersion-threshold (I-DT) fixation detection. A window is a fixation iff
/// (max x - min x) + (max y - min y) <= dispersion_px and it spans at least
/// min_duration_ms; windows are grown maximally. Invalid samples are dropped.
inline std::vector<Fixation> detect_fixations(std::span<const GazeSample> stream,
                                              double dispersion_px = 30.0,
                                              double min_duration_ms = 100.0) {
  const auto s = detail::valid_only(stream);
  const std::size_t n = s.size();
  std::vector<Fixation> out;

  struct Box {
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    void add(const GazeSample& g) {
      x0 = std::min(x0, g.x);
      x1 = std::max(x1, g.x);
      y0 = std::min(y0, g.y);
      y1 = std::max(y1, g.y);
    }
    double dispersion() const { return (x1 - x0) + (y1 - y0); }
  };

  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && s[j].t - s[i].t < min_duration_ms) ++j;
    if (j == n) break;
    Box box;
    for (std::size_t k = i; k <= j; ++k) box.add(s[k]);
    if (box.dispersion() > dispersion_px) {
      ++i;
      continue;
    }
    while (j + 1 < n) {
      Box grown = box;
      grown.add(s[j + 1]);
      if (grown.dispersion() > dispersion_px) break;
      box = grown;
      ++j;
    }
    Fixation f;
    f.start = s[i].t;
    f.duration = s[j].t - s[i].t;
    f.samples = j - i + 1;
    for (std::size_t k = i; k <= j; ++k) {
      f.x += s[k].x;
      f.y += s[k].y;
    }
    f.x /= static_cast<double>(f.samples);
    f.y /= static_cast<double>(f.samples);
    out.push_back(f);
    i = j + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sample-to-image assignment

struct Visit {
  double entry = 0.0;  // time of first sample in the visit
  double exit = 0.0;   // time of last sample in the visit
  std::size_t samples = 0;
};

struct ImageGaze {
  std::vector<GazeSample> samples;
  std::vector<Visit> visits;
  // Index of the visit each sample belongs to.
  std::vector<std::size_t> visit_of;

  bool viewed() const { return !samples.empty(); }
};

struct CollageGaze {
  std::vector<ImageGaze> per_cell;            // parallel to layout.cells
  std::vector<GazeSample> outside;            // samples in no cell
};

/// Splits a collage-level stream into per-image sub-streams. A visit is a
/// maximal run of consecutive valid samples inside the same cell.
inline CollageGaze assign_to_images(std::span<const GazeSample> stream,
                                    const CollageLayout& layout) {
  CollageGaze out;
  out.per_cell.resize(layout.cells.size());
  std::optional<std::size_t> prev;
  for (const auto& g : stream) {
    if (!g.valid) continue;
    const auto cell = layout.cell_at(g.x, g.y);
    if (!cell) {
      out.outside.push_back(g);
      prev.reset();
      continue;
    }
    auto& img = out.per_cell[*cell];
    if (prev != cell) img.visits.push_back({g.t, g.t, 0});
    auto& v = img.visits.back();
    v.exit = g.t;
    ++v.samples;
    img.samples.push_back(g);
    img.visit_of.push_back(img.visits.size() - 1);
    prev = cell;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Eye-movement features

inline constexpr std::size_t kEyeFeatureCount = 19;

inline constexpr std::array<const char*, kEyeFeatureCount> kEyeFeatureNames{
    "numMeasurements", "numOutsideFix", "ratioInsideOutside", "speed",     "coverage",
    "normCoverage",    "pupil",         "nJumps1",            "nJumps2",   "numFix",
    "meanFixLen",      "totalFixLen",   "fixPrct",            "nJumpsFix", "maxAngle",
    "firstFixLen",     "firstFixNum",   "distPrev",           "durPrev"};

enum EyeFeature : std::size_t {
  kNumMeasurements, kNumOutsideFix, kRatioInsideOutside, kSpeed, kCoverage,
  kNormCoverage, kPupil, kNJumps1, kNJumps2, kNumFix, kMeanFixLen, kTotalFixLen,
  kFixPrct, kNJumpsFix, kMaxAngle, kFirstFixLen, kFirstFixNum, kDistPrev, kDurPrev
};

struct EyeFeatureVector {
  std::array<double, kEyeFeatureCount> values{};
  bool viewed = false;

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  bool operator==(const EyeFeatureVector&) const = default;

  Vector as_vector() const { return Eigen::Map<const Vector>(values.data(), kEyeFeatureCount); }
  bool finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

/// Features of one image from its sub-stream and the collage's global
/// fixation sequence. Fixations belong to the image whose cell contains their
/// centroid. Viewing time is the sum of visit spans, each extended by one
/// nominal sample period.
inline EyeFeatureVector compute_eye_features(const ImageGaze& gaze, const Rect& cell,
                                             std::span<const Fixation> fixations,
                                             double sample_period_ms = kNominalSamplePeriodMs) {
  EyeFeatureVector f;
  if (!gaze.viewed()) return f;
  f.viewed = true;

  const auto n = static_cast<double>(gaze.samples.size());
  double view_time = 0.0;
  for (const auto& v : gaze.visits) view_time += v.exit - v.entry + sample_period_ms;

  auto in_fixation = [&](const GazeSample& g) {
    for (const auto& fx : fixations)
      if (g.t >= fx.start && g.t <= fx.end()) return true;
    return false;
  };

  std::size_t inside = 0;
  double dist = 0.0;
  std::size_t steps = 0;
  std::array<bool, 16> covered{};
  double pupil = 0.0;
  for (std::size_t k = 0; k < gaze.samples.size(); ++k) {
    const auto& g = gaze.samples[k];
    if (in_fixation(g)) ++inside;
    if (k > 0 && gaze.visit_of[k] == gaze.visit_of[k - 1]) {
      dist += std::hypot(g.x - gaze.samples[k - 1].x, g.y - gaze.samples[k - 1].y);
      ++steps;
    }
    const auto gx = std::clamp<long>(static_cast<long>((g.x - cell.x) / cell.w * 4.0), 0, 3);
    const auto gy = std::clamp<long>(static_cast<long>((g.y - cell.y) / cell.h * 4.0), 0, 3);
    covered[static_cast<std::size_t>(gy * 4 + gx)] = true;
    pupil = std::max(pupil, g.pupil);
  }
  const double coverage = static_cast<double>(std::count(covered.begin(), covered.end(), true));

  f[kNumMeasurements] = std::log1p(view_time);
  f[kNumOutsideFix] = (n - static_cast<double>(inside)) * sample_period_ms;
  f[kRatioInsideOutside] = static_cast<double>(inside) / n;
  f[kSpeed] = steps ? dist / static_cast<double>(steps) : 0.0;
  f[kCoverage] = coverage;
  f[kNormCoverage] = coverage / n;
  f[kPupil] = pupil;
  for (std::size_t v = 1; v < gaze.visits.size(); ++v) {
    const double gap = gaze.visits[v].entry - gaze.visits[v - 1].exit;
    if (gap > 60.0) f[kNJumps1] += 1.0;
    if (gap > 600.0) f[kNJumps2] += 1.0;
  }

  // Fixations on this image, as indices into the global sequence.
  std::vector<std::size_t> mine;
  for (std::size_t k = 0; k < fixations.size(); ++k)
    if (cell.contains(fixations[k].x, fixations[k].y)) mine.push_back(k);
  if (mine.empty()) return f;

  double total = 0.0;
  for (auto k : mine) total += fixations[k].duration;
  f[kNumFix] = static_cast<double>(mine.size());
  f[kTotalFixLen] = total;
  f[kMeanFixLen] = total / static_cast<double>(mine.size());
  f[kFixPrct] = view_time > 0.0 ? std::min(1.0, total / view_time) : 0.0;

  // Runs of consecutive global fixations on this image; re-visits = runs - 1.
  std::size_t runs = 1, first_run = 1;
  for (std::size_t m = 1; m < mine.size(); ++m) {
    if (mine[m] != mine[m - 1] + 1) {
      ++runs;
    } else if (runs == 1) {
      ++first_run;
    }
  }
  f[kNJumpsFix] = static_cast<double>(runs - 1);
  f[kFirstFixNum] = static_cast<double>(first_run);
  f[kFirstFixLen] = fixations[mine.front()].duration;

  double max_angle = 0.0;
  for (std::size_t m = 2; m < mine.size(); ++m) {
    const auto& a = fixations[mine[m - 2]];
    const auto& b = fixations[mine[m - 1]];
    const auto& c = fixations[mine[m]];
    const double ux = b.x - a.x, uy = b.y - a.y, vx = c.x - b.x, vy = c.y - b.y;
    const double nu = std::hypot(ux, uy), nv = std::hypot(vx, vy);
    if (nu == 0.0 || nv == 0.0) continue;
    const double cosang = std::clamp((ux * vx + uy * vy) / (nu * nv), -1.0, 1.0);
    max_angle = std::max(max_angle, std::acos(cosang));
  }
  f[kMaxAngle] = max_angle;

  if (mine.front() > 0) {
    const auto& prev = fixations[mine.front() - 1];
    const auto& first = fixations[mine.front()];
    f[kDistPrev] = std::hypot(first.x - prev.x, first.y - prev.y);
    f[kDurPrev] = prev.duration;
  }
  return f;
}

struct GazeOptions {
  double dispersion_px = 30.0;
  double min_fixation_ms = 100.0;
  double sample_period_ms = kNominalSamplePeriodMs;
};

/// Full pipeline for one collage: fixations, assignment, per-image features.
inline std::map<std::string, EyeFeatureVector> eye_features_for_collage(
    std::span<const GazeSample> stream, const CollageLayout& layout, const GazeOptions& opt = {}) {
  const auto fixations = detect_fixations(stream, opt.dispersion_px, opt.min_fixation_ms);
  const auto assigned = assign_to_images(stream, layout);
  std::map<std::string, EyeFeatureVector> out;
  for (std::size_t c = 0; c < layout.cells.size(); ++c)
    out[layout.cells[c].image_id] = compute_eye_features(assigned.per_cell[c], layout.cells[c].rect,
                                                         fixations, opt.sample_period_ms);
  return out;
}

// ---------------------------------------------------------------------------
// Gaze log: `t_ms<TAB>x<TAB>y<TAB>pupil<TAB>valid(0|1)` per line.

inline std::vector<GazeSample> read_gaze_log(std::istream& in) {
  std::vector<GazeSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    GazeSample g;
    int valid = 1;
    std::string tok;
    std::array<std::string, 5> cols;
    std::size_t c = 0;
    while (c < 5 && std::getline(ss, tok, '\t')) cols[c++] = tok;
    if (c != 5) throw InvalidArgument("gaze log line " + std::to_string(lineno) + ": expected 5 columns");
    try {
      g.t = std::stod(cols[0]);
      g.x = std::stod(cols[1]);
      g.y = std::stod(cols[2]);
      g.pupil = std::stod(cols[3]);
      valid = std::stoi(cols[4]);
    } catch (const std::exception&) {
      throw InvalidArgument("gaze log line " + std::to_string(lineno) + ": bad number");
    }
    if (valid != 0 && valid != 1)
      throw InvalidArgument("gaze log line " + std::to_string(lineno) + ": valid must be 0 or 1");
    g.valid = valid == 1;
    if (!out.empty() && g.t < out.back().t)
      throw InvalidArgument("gaze log line " + std::to_string(lineno) + ": time goes backwards");
    out.push_back(g);
  }
  return out;
}

inline void write_gaze_log(std::ostream& out, std::span<const GazeSample> stream) {
  for (const auto& g : stream)
    out << g.t << '\t' << g.x << '\t' << g.y << '\t' << g.pupil << '\t' << (g.valid ? 1 : 0) << '\n';
}

}  // namespace pinview
