#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include <unistd.h>

#include "pinview/simharness.hpp"
#include "pinview/service.hpp"

using namespace pinview;
namespace fs = std::filesystem;

namespace {

class ServiceTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("pinview_service_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    SyntheticCorpusOptions opt;
    opt.images = 120;
    opt.fractions = {0.1};
    const Corpus synth = generate_synthetic_corpus(opt, "small");
    Corpus c("small", synth.specs());
    for (auto rec : synth.images()) {
      rec.source = rec.id + ".png";
      c.add(rec);
    }
    save_corpus(c, dir_ / "corpora" / "small");
    fs::create_directories(dir_ / "corpora" / "small" / "assets");
    std::ofstream(dir_ / "corpora" / "small" / "assets" / "img000.png", std::ios::binary) << "\x89PNG fake";
    ids_ = c.ids();
  }
  void TearDown() override { fs::remove_all(dir_); }

  ServiceConfig cfg() const {
    ServiceConfig c;
    c.data_dir = dir_;
    return c;
  }

  static nlohmann::json feedback(const nlohmann::json& collage, bool click = true) {
    nlohmann::json j = {{"round", collage.at("round")}};
    if (click) j["clicks"] = {collage.at("images")[0].at("id")};
    return j;
  }

  fs::path dir_;
  std::vector<std::string> ids_;
};

const std::string kClickSession = R"({"corpus":"small","modality":"click","rounds":3,"seed":5})";

}  // namespace

TEST_F(ServiceTest, CreateSessionReturnsTiledCollage) {
  Service svc(cfg());
  const auto r = svc.create_session(kClickSession);
  ASSERT_EQ(r.status, 201) << r.body;
  const auto j = r.json();
  EXPECT_EQ(j.at("session_id").get<std::string>().size(), 32u);
  EXPECT_EQ(j.at("round"), 0);
  ASSERT_EQ(j.at("images").size(), 15u);
  std::set<std::pair<double, double>> corners;
  for (const auto& im : j.at("images")) {
    EXPECT_EQ(im.at("url"), "/assets/" + im.at("id").get<std::string>());
    corners.insert({im.at("cell").at("x").get<double>(), im.at("cell").at("y").get<double>()});
  }
  EXPECT_EQ(corners.size(), 15u);
}

TEST_F(ServiceTest, CreateSessionErrors) {
  Service svc(cfg());
  EXPECT_EQ(svc.create_session("{not json").status, 400);
  EXPECT_EQ(svc.create_session(R"({"corpus":"small","mkl":{"lambda":3}})").status, 400);
  EXPECT_EQ(svc.create_session(R"({"corpus":"nope"})").status, 404);
  // No predictor installed: gaze modalities are a client error.
  EXPECT_EQ(svc.create_session(R"({"corpus":"small","modality":"gaze"})").status, 400);
}

TEST_F(ServiceTest, FeedbackConflictsAndUnknownImages) {
  Service svc(cfg());
  const auto c0 = svc.create_session(kClickSession).json();
  const std::string sid = c0.at("session_id");
  EXPECT_EQ(svc.submit_feedback("00ff", feedback(c0).dump()).status, 404);
  EXPECT_EQ(svc.submit_feedback(sid, R"({"round":0,"clicks":["not-an-image"]})").status, 422);
  EXPECT_EQ(svc.submit_feedback(sid, R"({"clicks":[]})").status, 400);
  const auto next = svc.submit_feedback(sid, feedback(c0).dump());
  ASSERT_EQ(next.status, 200);
  EXPECT_EQ(next.json().at("round"), 1);
  const auto stale = svc.submit_feedback(sid, feedback(c0).dump());
  EXPECT_EQ(stale.status, 409);
  EXPECT_EQ(stale.json().at("current_round"), 1);
}

TEST_F(ServiceTest, IdempotentRetryReturnsSameCollage) {
  Service svc(cfg());
  const auto c0 = svc.create_session(kClickSession).json();
  const std::string sid = c0.at("session_id");
  const auto a = svc.submit_feedback(sid, feedback(c0).dump(), "k1");
  const auto b = svc.submit_feedback(sid, feedback(c0).dump(), "k1");
  EXPECT_EQ(a.status, 200);
  EXPECT_EQ(a.body, b.body);
  auto body = feedback(c0);
  body["idempotency_key"] = "k1";
  EXPECT_EQ(svc.submit_feedback(sid, body.dump()).body, a.body);
}

TEST_F(ServiceTest, FinalRoundReturnsSummary) {
  Service svc(cfg());
  auto c = svc.create_session(kClickSession).json();
  const std::string sid = c.at("session_id");
  nlohmann::json last;
  for (int r = 0; r < 3; ++r) {
    const auto resp = svc.submit_feedback(sid, feedback(c).dump());
    ASSERT_EQ(resp.status, 200);
    last = resp.json();
    if (!last.contains("finished")) c = last;
  }
  EXPECT_TRUE(last.at("finished").get<bool>());
  const auto& s = last.at("summary");
  EXPECT_EQ(s.at("precision_curve").size(), 3u);
  EXPECT_EQ(s.at("precision_basis"), "feedback");
  EXPECT_EQ(svc.summary(sid).json(), s);
  EXPECT_EQ(svc.submit_feedback(sid, R"({"round":3})").status, 409);
}

TEST_F(ServiceTest, RestartReplaysLogs) {
  std::string sid;
  std::string before, retry;
  {
    Service svc(cfg());
    auto c = svc.create_session(kClickSession).json();
    sid = c.at("session_id");
    retry = svc.submit_feedback(sid, feedback(c).dump(), "key-0").body;
    c = nlohmann::json::parse(retry);
    svc.submit_feedback(sid, feedback(c).dump());
    before = svc.summary(sid).body;
  }
  Service again(cfg());
  EXPECT_TRUE(again.warnings().empty());
  EXPECT_EQ(again.session_count(), 1u);
  EXPECT_EQ(again.summary(sid).body, before);
  EXPECT_EQ(again.submit_feedback(sid, "{}", "key-0").body, retry);
  // The session continues where it stopped.
  const auto cur = nlohmann::json::parse(before).at("shown").back();
  const auto done = again.submit_feedback(sid, nlohmann::json{{"round", 2}, {"clicks", {cur[0]}}}.dump());
  ASSERT_EQ(done.status, 200) << done.body;
  EXPECT_TRUE(done.json().at("finished").get<bool>());
}

TEST_F(ServiceTest, CorporaAndAssets) {
  Service svc(cfg());
  const auto list = svc.list_corpora().json();
  ASSERT_TRUE(list.dump().find("small") != std::string::npos);
  const auto a = svc.asset("img000");
  EXPECT_EQ(a.status, 200);
  EXPECT_EQ(a.body, "\x89PNG fake");
  EXPECT_EQ(a.content_type, "image/png");
  EXPECT_EQ(svc.asset("img001").status, 404);
  EXPECT_EQ(svc.asset("missing").status, 404);
}

TEST_F(ServiceTest, HttpRoundTrip) {
  Service svc(cfg());
  httplib::Server srv;
  svc.mount(srv);
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread t([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);
  auto created = cli.Post("/api/sessions", kClickSession, "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  const auto c0 = nlohmann::json::parse(created->body);
  const std::string sid = c0.at("session_id");
  httplib::Headers h{{"Idempotency-Key", "abc"}};
  auto fb = cli.Post("/api/sessions/" + sid + "/feedback", h, feedback(c0).dump(), "application/json");
  ASSERT_TRUE(fb);
  EXPECT_EQ(fb->status, 200);
  auto again = cli.Post("/api/sessions/" + sid + "/feedback", h, feedback(c0).dump(), "application/json");
  EXPECT_EQ(again->body, fb->body);
  auto asset = cli.Get("/assets/img000");
  ASSERT_TRUE(asset);
  EXPECT_EQ(asset->get_header_value("Content-Type"), "image/png");
  EXPECT_FALSE(asset->get_header_value("Cache-Control").empty());
  srv.stop();
  t.join();
}
