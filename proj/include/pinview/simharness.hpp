#pragma once

// Offline experiment harness: simulated feedback modalities, synthetic eye
// movement pools and corpora, MAP evaluation over categories x sessions,
// sequential grid search and paired comparisons.

#include <array>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pinview/common.hpp"
#include "pinview/corpus.hpp"
#include "pinview/gaze.hpp"
#include "pinview/metrics.hpp"
#include "pinview/relevance.hpp"
#include "pinview/session.hpp"

namespace pinview {

// ---------------------------------------------------------------------------
// Eye-movement pools

inline constexpr std::size_t kPoolBins = 6;
inline constexpr std::array<const char*, kPoolBins> kPoolBinNames{"0", "1", "2-3", "4-6", "7-10", "10-15"};

/// Bin of a collage by its number of relevant images. 10 belongs to "7-10";
/// counts above 15 (larger collages) fall in the last bin.
inline std::size_t pool_bin(std::size_t relevant_on_collage) {
  if (relevant_on_collage == 0) return 0;
  if (relevant_on_collage == 1) return 1;
  if (relevant_on_collage <= 3) return 2;
  if (relevant_on_collage <= 6) return 3;
  if (relevant_on_collage <= 10) return 4;
  return 5;
}

enum class PoolProvenance { recorded, synthetic };

struct SimPool {
  std::array<std::vector<EyeFeatureVector>, kPoolBins> positive;
  std::array<std::vector<EyeFeatureVector>, kPoolBins> negative;
  PoolProvenance provenance = PoolProvenance::synthetic;

  const std::vector<EyeFeatureVector>& cell(bool relevant, std::size_t bin) const {
    const auto& c = relevant ? positive.at(bin) : negative.at(bin);
    if (c.empty())
      throw DegenerateInput(std::string("eye pool bin ") + (relevant ? "positive/" : "negative/") +
                            kPoolBinNames[bin] + " is empty");
    return c;
  }

  /// Every vector with its polarity as a training set.
  RelevanceTrainingSet as_training_set() const {
    RelevanceTrainingSet out;
    for (std::size_t b = 0; b < kPoolBins; ++b) {
      for (const auto& v : positive[b]) out.push_back({v, 1, kPoolBinNames[b]});
      for (const auto& v : negative[b]) out.push_back({v, 0, kPoolBinNames[b]});
    }
    return out;
  }
};

struct SyntheticPoolOptions {
  std::size_t per_cell = 200;  // vectors per (polarity, bin)
  // Features whose means differ between the groups.
  std::vector<std::size_t> informative{kNumMeasurements, kNumFix, kTotalFixLen, kFixPrct};
};

/// Unit-variance Gaussian vectors over the 19 features. The positive mean is
/// offset from the negative one by `separation` along an even direction in
/// the informative subset, so the Mahalanobis distance between the groups is
/// `separation` and the Bayes AUC is Phi(separation / sqrt 2).
inline SimPool generate_synthetic_pool(double separation, std::uint64_t seed,
                                       const SyntheticPoolOptions& opt = {}) {
  if (separation < 0.0) throw InvalidArgument("generate_synthetic_pool: separation must be >= 0");
  if (opt.informative.empty()) throw InvalidArgument("generate_synthetic_pool: empty informative subset");
  for (auto f : opt.informative)
    if (f >= kEyeFeatureCount) throw InvalidArgument("generate_synthetic_pool: feature index out of range");
  const double shift = separation / std::sqrt(static_cast<double>(opt.informative.size()));
  SimPool pool;
  pool.provenance = PoolProvenance::synthetic;
  Rng rng(seed);
  auto draw = [&](bool positive) {
    EyeFeatureVector v;
    v.viewed = true;
    for (std::size_t k = 0; k < kEyeFeatureCount; ++k) v[k] = standard_normal(rng);
    if (positive)
      for (auto f : opt.informative) v[f] += shift;
    return v;
  };
  for (std::size_t b = 0; b < kPoolBins; ++b) {
    for (std::size_t i = 0; i < opt.per_cell; ++i) pool.positive[b].push_back(draw(true));
    for (std::size_t i = 0; i < opt.per_cell; ++i) pool.negative[b].push_back(draw(false));
  }
  return pool;
}

/// Recorded pool table: `polarity<TAB>bin<TAB>v1,...,v19` per line, polarity
/// `pos` or `neg`, bin one of the six bin names. `#` starts a comment.
inline SimPool read_pool_table(std::istream& in) {
  SimPool pool;
  pool.provenance = PoolProvenance::recorded;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string pol, bin, values;
    if (!std::getline(ls, pol, '\t') || !std::getline(ls, bin, '\t') || !std::getline(ls, values))
      throw InvalidArgument("pool table line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
    std::size_t b = kPoolBins;
    for (std::size_t k = 0; k < kPoolBins; ++k)
      if (bin == kPoolBinNames[k]) b = k;
    if (b == kPoolBins) throw InvalidArgument("pool table line " + std::to_string(lineno) + ": unknown bin '" + bin + "'");
    if (pol != "pos" && pol != "neg")
      throw InvalidArgument("pool table line " + std::to_string(lineno) + ": polarity must be pos or neg");
    EyeFeatureVector v;
    v.viewed = true;
    std::istringstream vs(values);
    std::string cell;
    std::size_t k = 0;
    while (std::getline(vs, cell, ',')) {
      if (k >= kEyeFeatureCount) break;
      v[k++] = std::stod(cell);
    }
    if (k != kEyeFeatureCount || vs.rdbuf()->in_avail() > 0)
      throw DimensionMismatch("pool table line " + std::to_string(lineno) + ": expected 19 values");
    (pol == "pos" ? pool.positive : pool.negative)[b].push_back(v);
  }
  return pool;
}

inline void write_pool_table(std::ostream& out, const SimPool& pool) {
  out << std::setprecision(17);
  for (int pos = 1; pos >= 0; --pos)
    for (std::size_t b = 0; b < kPoolBins; ++b)
      for (const auto& v : (pos ? pool.positive : pool.negative)[b]) {
        out << (pos ? "pos" : "neg") << '\t' << kPoolBinNames[b] << '\t';
        for (std::size_t k = 0; k < kEyeFeatureCount; ++k) out << (k ? "," : "") << v[k];
        out << '\n';
      }
}

// ---------------------------------------------------------------------------
// Simulated feedback

/// One round of simulated user feedback for a shown collage.
inline FeedbackEvent simulate_feedback(int round, const std::vector<std::string>& collage,
                                       const std::set<std::string>& relevant, Modality modality,
                                       const SimPool* pool, Rng& rng) {
  FeedbackEvent e;
  e.round = round;
  if (collage.empty()) return e;
  std::vector<std::string> hits;
  for (const auto& id : collage)
    if (relevant.count(id)) hits.push_back(id);

  if (modality == Modality::full) {
    for (const auto& id : collage) e.labels[id] = relevant.count(id) ? 1.0 : 0.0;
    return e;
  }
  if (uses_gaze(modality)) {
    if (!pool) throw InvalidArgument("simulate_feedback: eye modalities need a pool");
    const std::size_t bin = pool_bin(hits.size());
    for (const auto& id : collage) {
      const auto& cell = pool->cell(relevant.count(id) > 0, bin);
      e.eye[id] = cell[uniform_index(rng, cell.size())];
    }
  }
  if (uses_clicks(modality)) {
    const auto& from = hits.empty() ? collage : hits;
    e.clicks.push_back(from[uniform_index(rng, from.size())]);
  }
  return e;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SyntheticCorpusOptions {
  std::size_t images = 1000;
  // Relevant fraction per category; categories are disjoint.
  std::vector<double> fractions{0.06, 0.066, 0.073, 0.08, 0.086, 0.093, 0.1, 0.106, 0.113, 0.12};
  std::size_t dim = 16;
  // Prototype strength per feature space relative to unit noise; zero marks
  // a pure-noise space.
  std::vector<double> signal{1.2, 0.6, 0.0, 0.0};
  std::uint64_t seed = 0;
};

/// Corpus of Gaussian feature vectors: each image in category c carries
/// noise plus the category prototype of every space, scaled by the space's
/// signal. Background images (no category) carry noise only.
inline Corpus generate_synthetic_corpus(const SyntheticCorpusOptions& opt, std::string id = "synthetic") {
  if (opt.signal.empty() || opt.dim == 0) throw InvalidArgument("synthetic corpus needs at least one space");
  double total = 0.0;
  for (double f : opt.fractions) total += f;
  if (total > 1.0) throw InvalidArgument("category fractions exceed 1");
  std::vector<FeatureSpec> specs;
  for (std::size_t s = 0; s < opt.signal.size(); ++s)
    specs.push_back({"synthetic_space_" + std::to_string(s), opt.dim, Provenance::imported});
  Corpus corpus(std::move(id), specs);

  Rng rng(opt.seed);
  const auto n_cat = opt.fractions.size();
  // prototypes[c][s]: unit vector scaled by sqrt(dim) to match the noise norm
  std::vector<std::vector<Vector>> proto(n_cat, std::vector<Vector>(opt.signal.size()));
  for (auto& per_space : proto)
    for (auto& p : per_space) {
      p.resize(static_cast<Eigen::Index>(opt.dim));
      for (auto& x : p) x = standard_normal(rng);
      p *= std::sqrt(static_cast<double>(opt.dim)) / p.norm();
    }
  std::vector<int> category(opt.images, -1);
  std::size_t next = 0;
  for (std::size_t c = 0; c < n_cat; ++c) {
    const auto count = static_cast<std::size_t>(std::llround(opt.fractions[c] * static_cast<double>(opt.images)));
    for (std::size_t k = 0; k < count && next < opt.images; ++k) category[next++] = static_cast<int>(c);
  }
  category = sample_without_replacement(category, category.size(), rng);

  const int width = static_cast<int>(std::to_string(opt.images).size());
  for (std::size_t i = 0; i < opt.images; ++i) {
    ImageRecord rec;
    std::ostringstream name;
    name << "img" << std::setw(width) << std::setfill('0') << i;
    rec.id = name.str();
    if (category[i] >= 0) rec.labels.insert("category_" + std::to_string(category[i]));
    for (std::size_t s = 0; s < opt.signal.size(); ++s) {
      std::vector<double> v(opt.dim);
      for (auto& x : v) x = standard_normal(rng);
      if (category[i] >= 0)
        for (std::size_t k = 0; k < opt.dim; ++k)
          v[k] += opt.signal[s] * proto[static_cast<std::size_t>(category[i])][s](static_cast<Eigen::Index>(k));
      rec.features[specs[s].name] = std::move(v);
    }
    corpus.add(std::move(rec));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentConfig {
  Modality modality = Modality::random;
  std::size_t sessions = 40;
  int rounds = 10;
  std::size_t collage_size = 15;
  double mu = 1.0;
  double alpha = 1.0;
  double c = 1.0;
  double lambda = 0.5;
  std::size_t explore_count = 0;
  bool tensor = false;
  std::uint64_t seed = 0;
  std::vector<std::string> categories;  // empty: every corpus category
  std::vector<double> mu_grid{0.0, 0.01, 0.1, 5.0, 10.0, 100.0, 1000.0};
  std::vector<double> alpha_grid{0.01, 0.1, 1.0, 5.0, 10.0, 100.0};
};

struct SessionOutcome {
  std::string category;
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double average_precision = 0.0;
  int relevant_found = 0;
  std::vector<int> relevant_per_round;
  std::string transcript_id;  // "<category>/<index>/<seed>"
};

struct ExperimentResult {
  Modality modality = Modality::random;
  std::map<std::string, double> category_map;
  double macro_map = 0.0;
  std::vector<SessionOutcome> sessions;  // ordered by (category, index)
  std::vector<std::string> warnings;
  double mu = 0.0;
  double alpha = 0.0;

  /// Per-session AP in (category, index) order, the pairing unit for t-tests.
  std::vector<double> unit_scores() const {
    std::vector<double> out;
    for (const auto& s : sessions) out.push_back(s.average_precision);
    return out;
  }
};

inline SessionConfig session_config_for(const ExperimentConfig& cfg, const std::string& corpus,
                                        const std::string& category, std::uint64_t seed) {
  SessionConfig sc;
  sc.corpus = corpus;
  sc.modality = cfg.modality;
  sc.rounds = cfg.rounds;
  sc.collage_size = cfg.collage_size;
  sc.lambda = cfg.lambda;
  sc.mu = cfg.mu;
  sc.c = cfg.c;
  sc.explore_count = cfg.explore_count;
  sc.alpha = cfg.alpha;
  sc.tensor_enabled = cfg.tensor;
  sc.seed = seed;
  sc.target_category = category;
  return sc;
}

using TranscriptSink = std::function<Session::Sink(const SessionOutcome&)>;

/// Runs one simulated session to completion.
inline SessionOutcome run_simulated_session(const CorpusContext& ctx, const SessionConfig& sc,
                                            const SimPool* pool,
                                            std::shared_ptr<const RelevancePredictor> predictor,
                                            std::uint64_t feedback_seed, Session::Sink sink = {}) {
  const auto relevant = ctx.corpus->members(*sc.target_category);
  Session session("sim", sc, ctx, std::move(predictor), std::move(sink));
  Rng fb(feedback_seed);
  const Collage* shown = &session.start();
  nlohmann::json summary;
  for (;;) {
    auto event = simulate_feedback(shown->round, shown->ids, relevant, sc.modality, pool, fb);
    auto next = session.submit(event);
    if (auto* s = std::get_if<nlohmann::json>(&next)) {
      summary = std::move(*s);
      break;
    }
    shown = &session.current();
  }
  SessionOutcome out;
  out.average_precision = summary.at("average_precision").get<double>();
  out.relevant_found = summary.at("relevant_total").get<int>();
  out.relevant_per_round = summary.at("relevant_per_round").get<std::vector<int>>();
  out.seed = sc.seed;
  out.category = *sc.target_category;
  return out;
}

/// Sessions x categories with seeds derived from (base seed, category,
/// session index), so results do not depend on processing order and sessions
/// with equal (category, index) share their cold start across modalities.
inline ExperimentResult run_experiment(const CorpusContext& ctx, const ExperimentConfig& cfg,
                                       const SimPool* pool,
                                       std::shared_ptr<const RelevancePredictor> predictor,
                                       const TranscriptSink& transcripts = {}) {
  if (cfg.sessions < 1) throw InvalidArgument("run_experiment: sessions must be >= 1");
  if (uses_gaze(cfg.modality) && (!pool || !predictor))
    throw InvalidArgument("run_experiment: eye modalities need a pool and a predictor");
  ExperimentResult res;
  res.modality = cfg.modality;
  res.mu = cfg.mu;
  res.alpha = cfg.alpha;
  std::vector<std::string> cats = cfg.categories;
  if (cats.empty())
    for (const auto& [name, _] : ctx.corpus->categories()) cats.push_back(name);
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());

  double macro = 0.0;
  std::size_t counted = 0;
  for (const auto& cat : cats) {
    if (ctx.corpus->members(cat).empty()) {
      res.warnings.push_back("category '" + cat + "' has no relevant images, skipped");
      continue;
    }
    std::vector<double> aps;
    for (std::size_t s = 0; s < cfg.sessions; ++s) {
      const std::uint64_t seed = derive_seed(cfg.seed, cat, s);
      const auto sc = session_config_for(cfg, ctx.corpus->id(), cat, seed);
      SessionOutcome probe;
      probe.category = cat;
      probe.index = s;
      probe.seed = seed;
      probe.transcript_id = cat + "/" + std::to_string(s) + "/" + std::to_string(seed);
      auto out = run_simulated_session(ctx, sc, pool, predictor, derive_seed(seed, "feedback"),
                                       transcripts ? transcripts(probe) : Session::Sink{});
      out.index = s;
      out.transcript_id = probe.transcript_id;
      aps.push_back(out.average_precision);
      res.sessions.push_back(std::move(out));
    }
    res.category_map[cat] = mean(aps);
    macro += res.category_map[cat];
    ++counted;
  }
  res.macro_map = counted ? macro / static_cast<double>(counted) : 0.0;
  return res;
}

inline nlohmann::json to_json(const ExperimentResult& r) {
  nlohmann::json sessions = nlohmann::json::array();
  for (const auto& s : r.sessions)
    sessions.push_back({{"category", s.category},
                        {"index", s.index},
                        {"seed", s.seed},
                        {"average_precision", s.average_precision},
                        {"relevant_found", s.relevant_found},
                        {"relevant_per_round", s.relevant_per_round},
                        {"transcript_id", s.transcript_id}});
  return {{"modality", to_string(r.modality)},
          {"mu", r.mu},
          {"alpha", r.alpha},
          {"category_map", r.category_map},
          {"macro_map", r.macro_map},
          {"sessions", sessions},
          {"warnings", r.warnings}};
}

struct GridPoint {
  std::string parameter;  // "alpha" or "mu"
  double value = 0.0;
  double macro_map = 0.0;
};

struct GridSearchResult {
  double best_mu = 0.0;
  double best_alpha = 0.0;
  std::vector<GridPoint> table;
  ExperimentResult best;
};

/// Sequential search: for eye+click the click weight first (mu at its
/// configured value), then mu with the chosen alpha. Other modalities search
/// mu only. Ties keep the earlier grid value.
inline GridSearchResult grid_search(const CorpusContext& ctx, const ExperimentConfig& cfg,
                                    const SimPool* pool,
                                    std::shared_ptr<const RelevancePredictor> predictor) {
  if (cfg.mu_grid.empty() || cfg.alpha_grid.empty()) throw InvalidArgument("grid_search: empty grid");
  GridSearchResult out;
  ExperimentConfig run = cfg;
  if (cfg.modality == Modality::gaze_click) {
    double best = -1.0;
    for (double a : cfg.alpha_grid) {
      run.alpha = a;
      const auto r = run_experiment(ctx, run, pool, predictor);
      out.table.push_back({"alpha", a, r.macro_map});
      if (r.macro_map > best) {
        best = r.macro_map;
        out.best_alpha = a;
      }
    }
  } else {
    out.best_alpha = cfg.alpha;
  }
  run.alpha = out.best_alpha;
  double best = -1.0;
  for (double m : cfg.mu_grid) {
    run.mu = m;
    auto r = run_experiment(ctx, run, pool, predictor);
    out.table.push_back({"mu", m, r.macro_map});
    if (r.macro_map > best) {
      best = r.macro_map;
      out.best_mu = m;
      out.best = std::move(r);
    }
  }
  return out;
}

inline nlohmann::json to_json(const GridSearchResult& g) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& p : g.table) table.push_back({{"parameter", p.parameter}, {"value", p.value}, {"macro_map", p.macro_map}});
  return {{"best_mu", g.best_mu}, {"best_alpha", g.best_alpha}, {"table", table}, {"best", to_json(g.best)}};
}

/// Paired comparison of two experiments over matching (category, session)
/// units.
inline TTestResult compare(const ExperimentResult& a, const ExperimentResult& b) {
  if (a.sessions.size() != b.sessions.size()) throw DimensionMismatch("compare: experiments differ in size");
  for (std::size_t i = 0; i < a.sessions.size(); ++i)
    if (a.sessions[i].category != b.sessions[i].category || a.sessions[i].index != b.sessions[i].index)
      throw InvalidArgument("compare: experiments are not paired");
  const auto sa = a.unit_scores(), sb = b.unit_scores();
  return paired_ttest(sa, sb);
}

}  // namespace pinview
