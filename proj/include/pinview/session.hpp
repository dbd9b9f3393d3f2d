#pragma once

// One search session: show collage -> collect feedback -> score relevance ->
// MKL -> optional tensor projection -> LinRel selection of the next collage.

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pinview/common.hpp"
#include "pinview/corpus.hpp"
#include "pinview/gaze.hpp"
#include "pinview/kernels.hpp"
#include "pinview/linrel.hpp"
#include "pinview/metrics.hpp"
#include "pinview/mkl.hpp"
#include "pinview/relevance.hpp"
#include "pinview/tensor.hpp"

namespace pinview {

enum class Modality { random, gaze, click, gaze_click, full };

inline std::string to_string(Modality m) {
  switch (m) {
    case Modality::random: return "random";
    case Modality::gaze: return "gaze";
    case Modality::click: return "click";
    case Modality::gaze_click: return "gaze+click";
    case Modality::full: return "full";
  }
  return "?";
}

inline Modality modality_from_string(const std::string& s) {
  if (s == "random") return Modality::random;
  if (s == "gaze" || s == "eye") return Modality::gaze;
  if (s == "click") return Modality::click;
  if (s == "gaze+click" || s == "eye+click" || s == "gaze_click") return Modality::gaze_click;
  if (s == "full") return Modality::full;
  throw InvalidArgument("unknown modality '" + s + "'");
}

inline bool uses_gaze(Modality m) { return m == Modality::gaze || m == Modality::gaze_click; }
inline bool uses_clicks(Modality m) { return m == Modality::click || m == Modality::gaze_click; }

struct SessionConfig {
  std::string corpus;
  Modality modality = Modality::gaze_click;
  int rounds = 10;
  std::size_t collage_size = 15;
  double lambda = 0.5;
  double mu = 1.0;  // shared MKL / LinRel regularisation
  double c = 1.0;
  std::size_t explore_count = 0;  // 0 means the whole collage
  double alpha = 1.0;
  double default_unviewed = 0.05;
  bool tensor_enabled = false;
  std::size_t tensor_rank = 5;
  double tensor_C = 1.0;
  std::uint64_t seed = 0;
  std::optional<std::string> target_category;  // simulation ground truth

  std::size_t effective_explore_count() const {
    return explore_count == 0 ? collage_size : std::min(explore_count, collage_size);
  }

  void validate() const {
    if (rounds < 1) throw InvalidArgument("rounds must be >= 1");
    if (collage_size < 1) throw InvalidArgument("collage size must be >= 1");
    if (lambda < 0.0 || lambda > 1.0) throw InvalidArgument("mkl.lambda must be in [0, 1]");
    if (mu < 0.0) throw InvalidArgument("linrel.mu must be >= 0");
    if (c < 0.0) throw InvalidArgument("linrel.c must be >= 0");
    if (explore_count > collage_size) throw InvalidArgument("linrel.explore_count exceeds collage size");
    if (tensor_C <= 0.0) throw InvalidArgument("tensor.C must be > 0");
  }
};

inline nlohmann::json to_json(const SessionConfig& c) {
  nlohmann::json j = {
      {"corpus", c.corpus},
      {"modality", to_string(c.modality)},
      {"rounds", c.rounds},
      {"collage_size", c.collage_size},
      {"mkl", {{"lambda", c.lambda}}},
      {"linrel", {{"c", c.c}, {"mu", c.mu}, {"explore_count", c.effective_explore_count()}}},
      {"relevance", {{"alpha", c.alpha}, {"default_unviewed", c.default_unviewed}}},
      {"tensor", {{"enabled", c.tensor_enabled}, {"rank", c.tensor_rank}, {"C", c.tensor_C}}},
      {"seed", c.seed}};
  if (c.target_category) j["target_category"] = *c.target_category;
  return j;
}

inline SessionConfig session_config_from_json(const nlohmann::json& j) {
  SessionConfig c;
  try {
    c.corpus = j.value("corpus", std::string());
    if (j.contains("modality")) c.modality = modality_from_string(j.at("modality").get<std::string>());
    if (j.contains("rounds")) c.rounds = j.at("rounds").get<int>();
    if (j.contains("collage_size")) c.collage_size = j.at("collage_size").get<std::size_t>();
    if (j.contains("mkl")) c.lambda = j.at("mkl").value("lambda", c.lambda);
    if (j.contains("linrel")) {
      const auto& l = j.at("linrel");
      c.c = l.value("c", c.c);
      c.mu = l.value("mu", c.mu);
      c.explore_count = l.value("explore_count", c.explore_count);
    }
    if (j.contains("relevance")) {
      c.alpha = j.at("relevance").value("alpha", c.alpha);
      c.default_unviewed = j.at("relevance").value("default_unviewed", c.default_unviewed);
    }
    if (j.contains("tensor")) {
      const auto& t = j.at("tensor");
      c.tensor_enabled = t.value("enabled", c.tensor_enabled);
      c.tensor_rank = t.value("rank", c.tensor_rank);
      c.tensor_C = t.value("C", c.tensor_C);
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("target_category") && !j.at("target_category").is_null())
      c.target_category = j.at("target_category").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad session config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Feedback

struct FeedbackEvent {
  int round = 0;
  std::vector<std::string> clicks;
  std::vector<GazeSample> gaze;                         // collage-level stream
  std::map<std::string, EyeFeatureVector> eye;          // precomputed per image
  std::map<std::string, double> labels;                 // explicit relevance (full feedback)
};

inline nlohmann::json to_json(const EyeFeatureVector& v) {
  return {{"viewed", v.viewed}, {"values", v.values}};
}

inline EyeFeatureVector eye_features_from_json(const nlohmann::json& j) {
  EyeFeatureVector v;
  v.viewed = j.value("viewed", true);
  const auto vals = j.at("values").get<std::vector<double>>();
  if (vals.size() != kEyeFeatureCount) throw DimensionMismatch("eye feature vector must have 19 values");
  std::copy(vals.begin(), vals.end(), v.values.begin());
  return v;
}

inline nlohmann::json to_json(const FeedbackEvent& e) {
  nlohmann::json gaze = nlohmann::json::array();
  for (const auto& g : e.gaze) gaze.push_back({g.t, g.x, g.y, g.pupil, g.valid ? 1 : 0});
  nlohmann::json eye = nlohmann::json::object();
  for (const auto& [id, v] : e.eye) eye[id] = to_json(v);
  return {{"round", e.round}, {"clicks", e.clicks}, {"gaze", gaze}, {"eye", eye}, {"labels", e.labels}};
}

/// Gaze samples are accepted either as [t, x, y, pupil, valid] arrays or as
/// objects with those keys.
inline GazeSample gaze_sample_from_json(const nlohmann::json& s) {
  GazeSample g;
  if (s.is_array()) {
    if (s.size() != 5) throw InvalidArgument("gaze sample must have 5 fields");
    g = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>(), s[3].get<double>(), s[4].get<int>() != 0};
  } else {
    g.t = s.at("t").get<double>();
    g.x = s.at("x").get<double>();
    g.y = s.at("y").get<double>();
    g.pupil = s.value("pupil", 0.0);
    const auto& v = s.contains("valid") ? s.at("valid") : nlohmann::json(1);
    g.valid = v.is_boolean() ? v.get<bool>() : v.get<int>() != 0;
  }
  return g;
}

inline FeedbackEvent feedback_from_json(const nlohmann::json& j) {
  FeedbackEvent e;
  try {
    e.round = j.at("round").get<int>();
    if (j.contains("clicks")) e.clicks = j.at("clicks").get<std::vector<std::string>>();
    if (j.contains("gaze"))
      for (const auto& s : j.at("gaze")) e.gaze.push_back(gaze_sample_from_json(s));
    if (j.contains("eye"))
      for (const auto& [id, v] : j.at("eye").items()) e.eye[id] = eye_features_from_json(v);
    if (j.contains("labels")) e.labels = j.at("labels").get<std::map<std::string, double>>();
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidArgument(std::string("bad feedback event: ") + ex.what());
  }
  for (std::size_t k = 1; k < e.gaze.size(); ++k)
    if (e.gaze[k].t < e.gaze[k - 1].t) throw InvalidArgument("gaze samples must be time-ordered");
  return e;
}

// ---------------------------------------------------------------------------
// Session

struct Collage {
  int round = 0;
  std::vector<std::string> ids;
  CollageLayout layout;
  bool short_pool = false;
};

inline CollageLayout collage_layout(const std::vector<std::string>& ids) {
  const std::size_t cols = 5;
  const std::size_t rows = std::max<std::size_t>(3, (ids.size() + cols - 1) / cols);
  return grid_layout(ids, cols, rows);
}

struct RoundRecord {
  int round = 0;
  std::vector<double> scores;          // relevance per collage image, collage order
  Vector eta;                          // MKL weights after this round
  std::vector<double> mkl_objective;
  bool tensor_applied = false;
  std::size_t tensor_rank = 0;
  std::string tensor_note;
};

/// Shared, read-only corpus data for many sessions.
struct CorpusContext {
  std::shared_ptr<const Corpus> corpus;
  std::shared_ptr<const KernelSpace> kernels;

  static CorpusContext make(Corpus c, std::vector<std::string> features = {}) {
    auto corpus = std::make_shared<const Corpus>(std::move(c));
    auto ks = std::make_shared<const KernelSpace>(*corpus, std::move(features));
    return {corpus, ks};
  }
};

class Session {
public:
  using Sink = std::function<void(const nlohmann::json&)>;
  using SubmitResult = std::variant<Collage, nlohmann::json>;  // next collage or summary

  Session(std::string id, SessionConfig config, CorpusContext ctx,
          std::shared_ptr<const RelevancePredictor> predictor, Sink sink = {})
      : id_(std::move(id)), cfg_(std::move(config)), ctx_(std::move(ctx)),
        predictor_(std::move(predictor)), sink_(std::move(sink)), rng_(cfg_.seed) {
    cfg_.validate();
    if (!ctx_.corpus || !ctx_.kernels) throw InvalidArgument("session needs a corpus");
    if (ctx_.corpus->size() < cfg_.collage_size)
      throw InvalidArgument("corpus has fewer images than one collage");
    if (uses_gaze(cfg_.modality) && !predictor_)
      throw InvalidArgument("gaze modalities need a trained relevance predictor");
    if (cfg_.target_category && !ctx_.corpus->categories().count(*cfg_.target_category))
      throw NotFound("unknown target category '" + *cfg_.target_category + "'");
    eta_ = Vector::Constant(static_cast<Eigen::Index>(ctx_.kernels->spaces()),
                            1.0 / static_cast<double>(std::max<std::size_t>(1, ctx_.kernels->spaces())));
  }

  const std::string& id() const { return id_; }
  const SessionConfig& config() const { return cfg_; }
  int round() const { return static_cast<int>(history_.size()) - 1; }
  bool finished() const { return finished_; }
  bool started() const { return !history_.empty(); }
  const std::vector<Collage>& history() const { return history_; }
  const std::vector<RoundRecord>& records() const { return records_; }
  const Collage& current() const { return history_.back(); }
  void set_sink(Sink sink) { sink_ = std::move(sink); }

  /// Cold start: a seeded uniform sample of the corpus.
  const Collage& start() {
    if (started()) throw Conflict("session already started");
    log({{"type", "config"}, {"session_id", id_}, {"config", to_json(cfg_)}});
    auto sel = select_random(ctx_.corpus->ids(), cfg_.collage_size, rng_);
    push_collage(std::move(sel));
    return history_.back();
  }

  SubmitResult submit(const FeedbackEvent& event) {
    if (!started()) throw Conflict("session not started");
    if (finished_) throw Conflict("session finished after round " + std::to_string(round()));
    if (event.round != round())
      throw Conflict("feedback for round " + std::to_string(event.round) + ", current round is " +
                     std::to_string(round()));
    const Collage& shown = history_.back();
    const std::set<std::string> on_screen(shown.ids.begin(), shown.ids.end());
    auto check = [&](const std::string& id) {
      if (!on_screen.count(id)) throw NotFound("image '" + id + "' was not shown in round " + std::to_string(round()));
    };
    for (const auto& id : event.clicks) check(id);
    for (const auto& [id, _] : event.eye) check(id);
    for (const auto& [id, _] : event.labels) check(id);

    log({{"type", "feedback"}, {"round", event.round}, {"event", to_json(event)}});

    RoundRecord rec;
    rec.round = round();
    rec.scores = score_round(shown, event);
    log({{"type", "scores"}, {"round", rec.round}, {"scores", rec.scores}});
    for (std::size_t k = 0; k < shown.ids.size(); ++k) {
      seen_.push_back(*ctx_.corpus->index_of(shown.ids[k]));
      r_.push_back(rec.scores[k]);
      if (uses_gaze(cfg_.modality)) seen_eye_.push_back(eye_cache_[k]);
    }

    const bool last = static_cast<int>(history_.size()) >= cfg_.rounds;
    std::optional<CollageSelection> next;
    if (cfg_.modality == Modality::random) {
      rec.eta = eta_;
      if (!last) {
        const auto pool = unseen_pool();
        if (!pool.empty()) next = select_random(pool, cfg_.collage_size, rng_);
      }
    } else {
      next = learn_and_select(rec, last);
    }
    records_.push_back(std::move(rec));

    if (last || !next) {
      finished_ = true;
      auto s = summary();
      log({{"type", "summary"}, {"summary", s}});
      return s;
    }
    push_collage(std::move(*next));
    return history_.back();
  }

  /// Deterministic summary record of everything shown and learned so far.
  nlohmann::json summary() const {
    using nlohmann::json;
    json shown = json::array(), scores = json::array(), etas = json::array(), diag = json::array();
    for (const auto& c : history_) shown.push_back(c.ids);
    for (const auto& r : records_) {
      scores.push_back(r.scores);
      etas.push_back(std::vector<double>(r.eta.data(), r.eta.data() + r.eta.size()));
      diag.push_back({{"round", r.round},
                      {"mkl_iterations", r.mkl_objective.size()},
                      {"mkl_final_objective", r.mkl_objective.empty() ? 0.0 : r.mkl_objective.back()},
                      {"tensor_applied", r.tensor_applied},
                      {"tensor_rank", r.tensor_rank},
                      {"tensor_note", r.tensor_note}});
    }
    json s = {{"session_id", id_},
              {"config", to_json(cfg_)},
              {"rounds_completed", records_.size()},
              {"finished", finished_},
              {"features", ctx_.kernels->features()},
              {"shown", shown},
              {"relevance_scores", scores},
              {"eta_trajectory", etas},
              {"final_eta", std::vector<double>(eta_.data(), eta_.data() + eta_.size())},
              {"diagnostics", diag}};

    // Precision per completed round: against ground truth in simulation
    // mode, otherwise against the feedback itself (score >= 0.5).
    std::vector<double> precision;
    std::vector<int> relevant_counts;
    double found = 0.0, total = 0.0;
    std::vector<bool> ranked;
    for (std::size_t r = 0; r < records_.size(); ++r) {
      int count = 0;
      for (std::size_t k = 0; k < history_[r].ids.size(); ++k) {
        const bool rel = cfg_.target_category
                             ? ctx_.corpus->image(history_[r].ids[k]).labels.count(*cfg_.target_category) > 0
                             : records_[r].scores[k] >= 0.5;
        count += rel ? 1 : 0;
        ranked.push_back(rel);
      }
      found += count;
      total += static_cast<double>(history_[r].ids.size());
      relevant_counts.push_back(count);
      precision.push_back(total > 0 ? found / total : 0.0);
    }
    s["precision_curve"] = precision;
    s["precision_basis"] = cfg_.target_category ? "ground_truth" : "feedback";
    if (cfg_.target_category) {
      s["relevant_per_round"] = relevant_counts;
      s["relevant_total"] = static_cast<int>(found);
      s["average_precision"] = average_precision(ranked);
    }
    return s;
  }

  /// Reconstructs a session from its event log, checking that every logged
  /// collage is reproduced.
  static std::unique_ptr<Session> replay(const std::vector<nlohmann::json>& events, CorpusContext ctx,
                                         std::shared_ptr<const RelevancePredictor> predictor,
                                         Sink sink = {}) {
    if (events.empty() || events.front().value("type", "") != "config")
      throw InvalidArgument("event log must start with a config record");
    auto s = std::make_unique<Session>(events.front().at("session_id").get<std::string>(),
                                       session_config_from_json(events.front().at("config")),
                                       std::move(ctx), std::move(predictor));
    s->start();
    for (std::size_t i = 1; i < events.size(); ++i) {
      const auto& e = events[i];
      const std::string type = e.value("type", "");
      if (type == "collage") {
        const int r = e.at("round").get<int>();
        if (r >= static_cast<int>(s->history_.size()) ||
            s->history_[static_cast<std::size_t>(r)].ids != e.at("ids").get<std::vector<std::string>>())
          throw Conflict("replay diverged at round " + std::to_string(r));
      } else if (type == "feedback") {
        s->submit(feedback_from_json(e.at("event")));
      }
    }
    s->set_sink(std::move(sink));
    return s;
  }

private:
  void log(const nlohmann::json& j) const {
    if (sink_) sink_(j);
  }

  void push_collage(CollageSelection sel) {
    Collage c;
    c.round = static_cast<int>(history_.size());
    c.ids = std::move(sel.ids);
    c.layout = collage_layout(c.ids);
    c.short_pool = sel.short_pool;
    for (const auto& id : c.ids) shown_set_.insert(id);
    log({{"type", "collage"}, {"round", c.round}, {"ids", c.ids}, {"short", c.short_pool}});
    history_.push_back(std::move(c));
  }

  std::vector<std::string> unseen_pool() const {
    std::vector<std::string> pool;
    for (const auto& im : ctx_.corpus->images())
      if (!shown_set_.count(im.id)) pool.push_back(im.id);
    return pool;
  }

  std::vector<double> score_round(const Collage& shown, const FeedbackEvent& e) {
    const std::size_t n = shown.ids.size();
    std::vector<double> scores(n, 0.0);
    eye_cache_.assign(n, EyeFeatureVector{});
    const std::set<std::string> clicked(e.clicks.begin(), e.clicks.end());
    switch (cfg_.modality) {
      case Modality::random:
        return scores;
      case Modality::full:
        for (std::size_t k = 0; k < n; ++k) {
          auto it = e.labels.find(shown.ids[k]);
          scores[k] = it != e.labels.end() ? it->second : (clicked.count(shown.ids[k]) ? 1.0 : 0.0);
        }
        return scores;
      default:
        break;
    }
    RelevancePredictor model = predictor_ ? *predictor_ : RelevancePredictor{};
    model.alpha = cfg_.alpha;
    model.default_unviewed = cfg_.default_unviewed;
    if (uses_gaze(cfg_.modality)) {
      if (!e.eye.empty()) {
        for (std::size_t k = 0; k < n; ++k)
          if (auto it = e.eye.find(shown.ids[k]); it != e.eye.end()) eye_cache_[k] = it->second;
      } else if (!e.gaze.empty()) {
        const auto feats = eye_features_for_collage(e.gaze, shown.layout);
        for (std::size_t k = 0; k < n; ++k) eye_cache_[k] = feats.at(shown.ids[k]);
      }
    }
    std::vector<CollageFeedbackItem> items(n);
    for (std::size_t k = 0; k < n; ++k) items[k] = {eye_cache_[k], clicked.count(shown.ids[k]) > 0};
    return score_collage(items, model, {uses_gaze(cfg_.modality), uses_clicks(cfg_.modality)});
  }

  std::optional<CollageSelection> learn_and_select(RoundRecord& rec, bool last) {
    const KernelSpace& ks = *ctx_.kernels;
    const Vector r = Eigen::Map<const Vector>(r_.data(), static_cast<Eigen::Index>(r_.size()));
    std::vector<Matrix> grams;
    for (std::size_t s = 0; s < ks.spaces(); ++s) grams.push_back(ks.block(s, seen_, seen_));

    MklOptions mo;
    mo.lambda = cfg_.lambda;
    mo.mu = cfg_.mu;
    mo.initial_eta = eta_;
    const MklModel mkl = solve_mkl(grams, r, mo);
    eta_ = mkl.eta;
    rec.eta = mkl.eta;
    rec.mkl_objective = mkl.objective;
    if (last) {
      if (cfg_.tensor_enabled && uses_gaze(cfg_.modality)) rec.tensor_note = "final round, no collage to select";
      return std::nullopt;
    }

    const auto pool = unseen_pool();
    if (pool.empty()) return std::nullopt;
    std::vector<std::size_t> pool_idx;
    pool_idx.reserve(pool.size());
    for (const auto& id : pool) pool_idx.push_back(*ctx_.corpus->index_of(id));

    Matrix k_seen = weighted_sum(grams, mkl.eta);
    Matrix cross = Matrix::Zero(static_cast<Eigen::Index>(pool.size()), static_cast<Eigen::Index>(seen_.size()));
    for (std::size_t s = 0; s < ks.spaces(); ++s) cross += mkl.eta(static_cast<Eigen::Index>(s)) * ks.block(s, pool_idx, seen_);

    if (cfg_.tensor_enabled && uses_gaze(cfg_.modality)) apply_tensor(rec, r, k_seen, cross);

    LinRelState state(k_seen, r, cfg_.mu, cfg_.c);
    CollageRequest req{pool, cfg_.collage_size, cfg_.effective_explore_count()};
    return select_collage(req, state, cross);
  }

  // Replaces k_seen / cross by the projected kernel when the tensor stage
  // succeeds; otherwise leaves them untouched and records why.
  void apply_tensor(RoundRecord& rec, const Vector& r, Matrix& k_seen, Matrix& cross) const {
    const auto n = static_cast<Eigen::Index>(seen_eye_.size());
    Matrix psi(n, kEyeFeatureCount);
    for (Eigen::Index u = 0; u < n; ++u) {
      const auto& v = seen_eye_[static_cast<std::size_t>(u)];
      psi.row(u).setZero();
      if (v.viewed) psi.row(u) = predictor_->standardizer.apply(v.as_vector()).transpose();
      const double norm = psi.row(u).norm();
      if (norm > 0.0) psi.row(u) /= norm;
    }
    const Matrix k_gaze = psi * psi.transpose();
    try {
      TensorSvmOptions so;
      so.C = cfg_.tensor_C;
      const auto svm = train_tensor_svm(tensor_kernel(k_seen, k_gaze), r, so);
      const std::size_t rank = std::min<std::size_t>(cfg_.tensor_rank, static_cast<std::size_t>(n));
      const TensorModel tm = decompose(svm.gamma, k_seen, k_gaze, rank);
      if (tm.rank == 0) {
        rec.tensor_note = "zero rank";
        return;
      }
      const Matrix seen_proj = project(k_seen, tm);
      const Matrix cand_proj = project(cross, tm);
      k_seen = seen_proj * seen_proj.transpose();
      cross = cand_proj * seen_proj.transpose();
      rec.tensor_applied = true;
      rec.tensor_rank = tm.rank;
    } catch (const Error& e) {
      rec.tensor_note = e.what();
    }
  }

  std::string id_;
  SessionConfig cfg_;
  CorpusContext ctx_;
  std::shared_ptr<const RelevancePredictor> predictor_;
  Sink sink_;
  Rng rng_;

  std::vector<Collage> history_;
  std::vector<RoundRecord> records_;
  std::set<std::string> shown_set_;
  std::vector<std::size_t> seen_;  // corpus indices, display order
  std::vector<double> r_;
  std::vector<EyeFeatureVector> seen_eye_;
  std::vector<EyeFeatureVector> eye_cache_;  // current round, collage order
  Vector eta_;
  bool finished_ = false;
};

}  // namespace pinview
