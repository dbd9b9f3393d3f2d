#include <gtest/gtest.h>

#include <set>

#include "pinview/session.hpp"
#include "pinview/simharness.hpp"

using namespace pinview;

namespace {

CorpusContext small_context(std::size_t images = 200) {
  SyntheticCorpusOptions opt;
  opt.images = images;
  opt.fractions = {0.1, 0.1};
  opt.seed = 3;
  return CorpusContext::make(generate_synthetic_corpus(opt, "small"));
}

SessionConfig config(Modality m, std::uint64_t seed = 11) {
  SessionConfig c;
  c.corpus = "small";
  c.modality = m;
  c.seed = seed;
  return c;
}

// Clicks the first shown image of category_0, if any.
FeedbackEvent click_first_relevant(const Collage& c, const Corpus& corpus) {
  FeedbackEvent e;
  e.round = c.round;
  for (const auto& id : c.ids)
    if (corpus.image(id).labels.count("category_0")) {
      e.clicks.push_back(id);
      break;
    }
  return e;
}

std::vector<std::vector<std::string>> run_clicks(const CorpusContext& ctx, const SessionConfig& cfg,
                                                 std::vector<nlohmann::json>* log = nullptr) {
  Session s("s", cfg, ctx, nullptr, log ? Session::Sink([log](const nlohmann::json& j) { log->push_back(j); })
                                        : Session::Sink{});
  s.start();
  while (!s.finished()) s.submit(click_first_relevant(s.current(), *ctx.corpus));
  std::vector<std::vector<std::string>> shown;
  for (const auto& c : s.history()) shown.push_back(c.ids);
  return shown;
}

}  // namespace

TEST(Modality, NamesAndAliases) {
  EXPECT_EQ(modality_from_string("eye+click"), Modality::gaze_click);
  EXPECT_EQ(modality_from_string("eye"), Modality::gaze);
  EXPECT_EQ(to_string(Modality::click), "click");
  EXPECT_THROW(modality_from_string("telepathy"), InvalidArgument);
}

TEST(SessionConfigJson, RoundTripAndValidation) {
  auto c = config(Modality::click);
  c.mu = 5.0;
  c.target_category = "category_1";
  const auto back = session_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(session_config_from_json({{"mkl", {{"lambda", 2.0}}}}), InvalidArgument);
  EXPECT_THROW(session_config_from_json({{"rounds", "ten"}}), InvalidArgument);
}

TEST(Session, ClickSessionIsDeterministic) {
  const auto ctx = small_context();
  const auto cfg = config(Modality::click);
  EXPECT_EQ(run_clicks(ctx, cfg), run_clicks(ctx, cfg));
}

TEST(Session, NeverRepeatsAnImage) {
  const auto ctx = small_context();
  const auto shown = run_clicks(ctx, config(Modality::click));
  ASSERT_EQ(shown.size(), 10u);
  std::set<std::string> all;
  for (const auto& c : shown) {
    EXPECT_EQ(c.size(), 15u);
    all.insert(c.begin(), c.end());
  }
  EXPECT_EQ(all.size(), 150u);
}

TEST(Session, CorpusOfExactlyOneCollageRunsOneRound) {
  const auto ctx = small_context(15);
  auto cfg = config(Modality::click);
  Session s("s", cfg, ctx, nullptr);
  EXPECT_EQ(s.start().ids.size(), 15u);
  const auto out = s.submit(FeedbackEvent{0, {}, {}, {}, {}});
  ASSERT_TRUE(std::holds_alternative<nlohmann::json>(out));
  EXPECT_TRUE(s.finished());
}

TEST(Session, StaleRoundAndFinishedSessionConflict) {
  const auto ctx = small_context();
  auto cfg = config(Modality::click);
  cfg.rounds = 2;
  Session s("s", cfg, ctx, nullptr);
  s.start();
  EXPECT_THROW(s.submit(FeedbackEvent{1, {}, {}, {}, {}}), Conflict);
  s.submit(FeedbackEvent{0, {}, {}, {}, {}});
  EXPECT_THROW(s.submit(FeedbackEvent{0, {}, {}, {}, {}}), Conflict);
  s.submit(FeedbackEvent{1, {}, {}, {}, {}});
  EXPECT_TRUE(s.finished());
  EXPECT_THROW(s.submit(FeedbackEvent{2, {}, {}, {}, {}}), Conflict);
}

TEST(Session, UnshownImageIsRejected) {
  const auto ctx = small_context();
  Session s("s", config(Modality::click), ctx, nullptr);
  const auto& c = s.start();
  std::string other;
  for (const auto& id : ctx.corpus->ids())
    if (std::find(c.ids.begin(), c.ids.end(), id) == c.ids.end()) {
      other = id;
      break;
    }
  EXPECT_THROW(s.submit(FeedbackEvent{0, {other}, {}, {}, {}}), NotFound);
  EXPECT_EQ(s.round(), 0);
}

TEST(Session, EmptyFeedbackScoresDefault) {
  const auto ctx = small_context();
  Session s("s", config(Modality::click), ctx, nullptr);
  s.start();
  s.submit(FeedbackEvent{0, {}, {}, {}, {}});
  for (double r : s.records().front().scores) EXPECT_DOUBLE_EQ(r, 0.05);
}

TEST(Session, GazeModalitiesNeedPredictor) {
  const auto ctx = small_context();
  EXPECT_THROW(Session("s", config(Modality::gaze), ctx, nullptr), InvalidArgument);
}

TEST(Session, RandomModalityIgnoresFeedback) {
  const auto ctx = small_context();
  auto cfg = config(Modality::random);
  cfg.rounds = 4;
  Session a("a", cfg, ctx, nullptr), b("b", cfg, ctx, nullptr);
  a.start();
  b.start();
  while (!a.finished()) {
    a.submit(click_first_relevant(a.current(), *ctx.corpus));
    b.submit(FeedbackEvent{b.round(), {}, {}, {}, {}});
  }
  ASSERT_EQ(a.history().size(), b.history().size());
  for (std::size_t r = 0; r < a.history().size(); ++r) EXPECT_EQ(a.history()[r].ids, b.history()[r].ids);
}

TEST(Session, SummaryCarriesGroundTruthPrecision) {
  const auto ctx = small_context();
  auto cfg = config(Modality::click);
  cfg.target_category = "category_0";
  Session s("s", cfg, ctx, nullptr);
  s.start();
  while (!s.finished()) s.submit(click_first_relevant(s.current(), *ctx.corpus));
  const auto sum = s.summary();
  EXPECT_EQ(sum.at("precision_basis"), "ground_truth");
  EXPECT_EQ(sum.at("precision_curve").size(), 10u);
  EXPECT_EQ(sum.at("eta_trajectory").size(), 10u);
  int total = 0;
  for (int k : sum.at("relevant_per_round").get<std::vector<int>>()) total += k;
  EXPECT_EQ(total, sum.at("relevant_total").get<int>());
  EXPECT_NEAR(sum.at("precision_curve").back().get<double>(), total / 150.0, 1e-12);
}

TEST(Session, ReplayReproducesSummary) {
  const auto ctx = small_context();
  std::vector<nlohmann::json> log;
  auto cfg = config(Modality::click);
  cfg.tensor_enabled = true;
  run_clicks(ctx, cfg, &log);
  nlohmann::json logged_summary;
  for (const auto& j : log)
    if (j.at("type") == "summary") logged_summary = j.at("summary");
  const auto replayed = Session::replay(log, ctx, nullptr);
  EXPECT_EQ(replayed->summary().dump(), logged_summary.dump());
}

TEST(Session, ReplayDetectsDivergence) {
  const auto ctx = small_context();
  std::vector<nlohmann::json> log;
  auto cfg = config(Modality::click);
  cfg.rounds = 3;
  run_clicks(ctx, cfg, &log);
  for (auto& j : log)
    if (j.at("type") == "collage" && j.at("round") == 1) j["ids"][0] = "img999";
  EXPECT_THROW(Session::replay(log, ctx, nullptr), Conflict);
}

TEST(Session, TensorStageRunsWithGaze) {
  const auto ctx = small_context();
  const auto pool = generate_synthetic_pool(3.0, 5);
  auto predictor = std::make_shared<const RelevancePredictor>(train_predictor(pool.as_training_set()));
  auto cfg = config(Modality::gaze_click);
  cfg.tensor_enabled = true;
  cfg.tensor_rank = 3;
  cfg.rounds = 4;
  cfg.target_category = "category_0";
  const auto out = run_simulated_session(ctx, cfg, &pool, predictor, 99);
  EXPECT_EQ(out.relevant_per_round.size(), 4u);
  Session s("s", cfg, ctx, predictor);
  s.start();
  Rng fb(99);
  const auto relevant = ctx.corpus->members("category_0");
  while (!s.finished())
    s.submit(simulate_feedback(s.round(), s.current().ids, relevant, Modality::gaze_click, &pool, fb));
  bool any_applied = false;
  for (const auto& r : s.records()) {
    any_applied = any_applied || r.tensor_applied;
    if (r.tensor_applied) EXPECT_LE(r.tensor_rank, 3u);
    else EXPECT_FALSE(r.tensor_note.empty());
  }
  EXPECT_TRUE(any_applied);
}

TEST(CollageLayoutTest, FiveByThreeTiles) {
  std::vector<std::string> ids;
  for (int i = 0; i < 15; ++i) ids.push_back("i" + std::to_string(i));
  const auto layout = collage_layout(ids);
  ASSERT_EQ(layout.cells.size(), 15u);
  double area = 0.0;
  for (const auto& c : layout.cells) area += c.rect.w * c.rect.h;
  EXPECT_NEAR(area, 1280.0 * 1024.0, 1e-6);
}
