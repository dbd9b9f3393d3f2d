#pragma once

// HTTP/JSON session service with event-sourced persistence.
//
// Data directory layout:
//   corpora/<id>/manifest.json, features.bin, assets/<source file>
//   sessions/<session id>.jsonl      append-only event log
//   predictors/default.json          relevance predictor for gaze sessions
//
// Handlers return ApiResponse so they can be exercised without sockets;
// mount() binds them to an httplib server.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "pinview/common.hpp"
#include "pinview/corpus.hpp"
#include "pinview/relevance.hpp"
#include "pinview/session.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose `_res` macro breaks Eigen.
#include <httplib.h>

namespace pinview {

struct ServiceConfig {
  std::filesystem::path data_dir = "pinview-data";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::uint64_t seed = 0;  // default seed for sessions whose config has none

  /// Optional JSON file, then PINVIEW_DATA_DIR / PINVIEW_PORT / PINVIEW_SEED.
  static ServiceConfig load(const std::optional<std::filesystem::path>& file = {}) {
    ServiceConfig c;
    if (file) {
      std::ifstream in(*file);
      if (!in) throw NotFound("cannot open service config " + file->string());
      const auto j = nlohmann::json::parse(in);
      c.data_dir = j.value("data_dir", c.data_dir.string());
      c.host = j.value("host", c.host);
      c.port = j.value("port", c.port);
      c.seed = j.value("seed", c.seed);
    }
    if (const char* v = std::getenv("PINVIEW_DATA_DIR")) c.data_dir = v;
    if (const char* v = std::getenv("PINVIEW_PORT")) c.port = std::stoi(v);
    if (const char* v = std::getenv("PINVIEW_SEED")) c.seed = std::stoull(v);
    return c;
  }
};

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
  std::vector<std::pair<std::string, std::string>> headers;

  nlohmann::json json() const { return nlohmann::json::parse(body); }
};

inline ApiResponse json_response(int status, const nlohmann::json& j) { return {status, j.dump(), "application/json", {}}; }

inline ApiResponse error_response(int status, const std::string& message, nlohmann::json extra = {}) {
  nlohmann::json j = extra.is_object() ? extra : nlohmann::json::object();
  j["error"] = message;
  return json_response(status, j);
}

/// 128 random bits as 32 hex digits.
inline std::string new_session_id() {
  static thread_local std::random_device rd;
  std::ostringstream out;
  out << std::hex << std::setfill('0');
  for (int k = 0; k < 4; ++k) out << std::setw(8) << static_cast<std::uint32_t>(rd());
  return out.str();
}

inline std::string content_type_for(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".png") return "image/png";
  if (ext == ".bmp") return "image/bmp";
  if (ext == ".tif" || ext == ".tiff") return "image/tiff";
  if (ext == ".ppm" || ext == ".pgm") return "image/x-portable-anymap";
  return "application/octet-stream";
}

class Service {
public:
  explicit Service(ServiceConfig cfg) : cfg_(std::move(cfg)) {
    std::filesystem::create_directories(cfg_.data_dir / "corpora");
    std::filesystem::create_directories(cfg_.data_dir / "sessions");
    load_corpora();
    load_predictor();
    recover();
  }

  const ServiceConfig& config() const { return cfg_; }
  std::size_t session_count() const {
    std::shared_lock lock(sessions_mu_);
    return sessions_.size();
  }
  const std::vector<std::string>& warnings() const { return warnings_; }

  // --- handlers -----------------------------------------------------------

  ApiResponse create_session(const std::string& body) {
    SessionConfig sc;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
      if (!j.is_object()) return error_response(400, "session config must be a JSON object");
      if (!j.contains("seed")) j["seed"] = cfg_.seed;
      sc = session_config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      return error_response(400, std::string("malformed JSON: ") + e.what());
    } catch (const InvalidArgument& e) {
      return error_response(400, e.what());
    }
    auto corpus = corpora_.find(sc.corpus);
    if (corpus == corpora_.end()) return error_response(404, "unknown corpus '" + sc.corpus + "'");

    auto entry = std::make_shared<Entry>();
    const std::string id = new_session_id();
    entry->log_path = cfg_.data_dir / "sessions" / (id + ".jsonl");
    try {
      entry->session = std::make_unique<Session>(id, sc, corpus->second, predictor_, sink_for(entry));
      const Collage& first = entry->session->start();
      auto resp = json_response(201, collage_json(*entry->session, first));
      std::unique_lock lock(sessions_mu_);
      sessions_[id] = entry;
      return resp;
    } catch (const NotFound& e) {
      std::filesystem::remove(entry->log_path);
      return error_response(404, e.what());
    } catch (const Error& e) {
      std::filesystem::remove(entry->log_path);
      return error_response(400, e.what());
    }
  }

  ApiResponse submit_feedback(const std::string& session_id, const std::string& body,
                              std::optional<std::string> idempotency_key = {}) {
    auto entry = find(session_id);
    if (!entry) return error_response(404, "unknown session '" + session_id + "'");
    std::lock_guard lock(entry->mu);
    FeedbackEvent event;
    try {
      const auto j = nlohmann::json::parse(body);
      if (!idempotency_key && j.contains("idempotency_key")) idempotency_key = j.at("idempotency_key").get<std::string>();
      if (idempotency_key) {
        if (auto it = entry->responses.find(*idempotency_key); it != entry->responses.end()) return it->second;
      }
      event = feedback_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      return error_response(400, std::string("malformed JSON: ") + e.what());
    } catch (const Error& e) {
      return error_response(400, e.what());
    }
    ApiResponse resp = apply(*entry, event, idempotency_key);
    return resp;
  }

  ApiResponse summary(const std::string& session_id) const {
    auto entry = find(session_id);
    if (!entry) return error_response(404, "unknown session '" + session_id + "'");
    std::lock_guard lock(entry->mu);
    return json_response(200, entry->session->summary());
  }

  ApiResponse list_corpora() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [id, ctx] : corpora_) {
      nlohmann::json feats = nlohmann::json::array();
      for (const auto& s : ctx.corpus->specs()) feats.push_back({{"name", s.name}, {"dim", s.dim}});
      out.push_back({{"id", id}, {"images", ctx.corpus->size()}, {"features", feats},
                     {"categories", ctx.corpus->categories().size()}});
    }
    return json_response(200, {{"corpora", out}});
  }

  /// Image bytes for an id, searched across corpora in id order.
  ApiResponse asset(const std::string& image_id) const {
    for (const auto& [cid, ctx] : corpora_) {
      auto idx = ctx.corpus->index_of(image_id);
      if (!idx) continue;
      const auto& rec = ctx.corpus->image(*idx);
      const auto file = cfg_.data_dir / "corpora" / cid / "assets" / rec.source;
      std::ifstream in(file, std::ios::binary);
      if (rec.source.empty() || !in) return error_response(404, "no asset stored for '" + image_id + "'");
      ApiResponse r;
      r.body.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
      r.content_type = content_type_for(file);
      r.headers.push_back({"Cache-Control", "public, max-age=86400, immutable"});
      return r;
    }
    return error_response(404, "unknown image '" + image_id + "'");
  }

  // --- HTTP binding ---------------------------------------------------------

  void mount(httplib::Server& srv) {
    auto send = [](httplib::Response& res, const ApiResponse& r) {
      res.status = r.status;
      for (const auto& [k, v] : r.headers) res.set_header(k, v);
      res.set_content(r.body, r.content_type);
    };
    srv.Post("/api/sessions", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, create_session(req.body));
    });
    srv.Post(R"(/api/sessions/([0-9a-f]+)/feedback)", [this, send](const httplib::Request& req, httplib::Response& res) {
      std::optional<std::string> key;
      if (req.has_header("Idempotency-Key")) key = req.get_header_value("Idempotency-Key");
      send(res, submit_feedback(req.matches[1], req.body, key));
    });
    srv.Get(R"(/api/sessions/([0-9a-f]+)/summary)", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, summary(req.matches[1]));
    });
    srv.Get("/api/corpora", [this, send](const httplib::Request&, httplib::Response& res) { send(res, list_corpora()); });
    srv.Get(R"(/assets/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, asset(req.matches[1]));
    });
  }

  /// Blocks serving until stop() is called on `srv` from elsewhere.
  bool listen(httplib::Server& srv) {
    mount(srv);
    return srv.listen(cfg_.host, cfg_.port);
  }

private:
  struct Entry {
    mutable std::mutex mu;
    std::unique_ptr<Session> session;
    std::map<std::string, ApiResponse> responses;  // by idempotency key
    std::filesystem::path log_path;
  };

  Session::Sink sink_for(const std::shared_ptr<Entry>& entry) const {
    const auto path = entry->log_path;
    return [path](const nlohmann::json& record) {
      std::ofstream out(path, std::ios::app);
      out << record.dump() << '\n';
      out.flush();
      if (!out) throw Error("cannot append to " + path.string());
    };
  }

  std::shared_ptr<Entry> find(const std::string& id) const {
    std::shared_lock lock(sessions_mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  static nlohmann::json collage_json(const Session& s, const Collage& c) {
    nlohmann::json images = nlohmann::json::array();
    for (const auto& cell : c.layout.cells)
      images.push_back({{"id", cell.image_id},
                        {"url", "/assets/" + cell.image_id},
                        {"cell", {{"x", cell.rect.x}, {"y", cell.rect.y}, {"w", cell.rect.w}, {"h", cell.rect.h}}}});
    return {{"session_id", s.id()},
            {"round", c.round},
            {"rounds", s.config().rounds},
            {"screen", {{"width", c.layout.screen_width}, {"height", c.layout.screen_height}}},
            {"short", c.short_pool},
            {"images", images}};
  }

  // Caller holds entry.mu.
  ApiResponse apply(Entry& entry, const FeedbackEvent& event, const std::optional<std::string>& key) {
    Session& s = *entry.session;
    ApiResponse resp;
    try {
      auto next = s.submit(event);
      if (auto* c = std::get_if<Collage>(&next))
        resp = json_response(200, collage_json(s, *c));
      else
        resp = json_response(200, {{"session_id", s.id()}, {"finished", true}, {"summary", std::get<nlohmann::json>(next)}});
    } catch (const Conflict& e) {
      return error_response(409, e.what(), {{"current_round", s.finished() ? -1 : s.round()}, {"finished", s.finished()}});
    } catch (const NotFound& e) {
      return error_response(422, e.what());
    } catch (const Error& e) {
      return error_response(400, e.what());
    }
    if (key) {
      // Logged after the feedback so replay can pair the key with its answer.
      std::ofstream(entry.log_path, std::ios::app)
          << nlohmann::json{{"type", "idempotency"}, {"round", event.round}, {"key", *key}}.dump() << '\n';
      entry.responses[*key] = resp;
    }
    return resp;
  }

  void load_corpora() {
    for (const auto& d : std::filesystem::directory_iterator(cfg_.data_dir / "corpora")) {
      if (!d.is_directory() || !std::filesystem::exists(d.path() / "manifest.json")) continue;
      try {
        Corpus c = load_corpus(d.path());
        const std::string id = c.id();
        corpora_.emplace(id, CorpusContext::make(std::move(c)));
      } catch (const std::exception& e) {
        warnings_.push_back("corpus " + d.path().filename().string() + " not loaded: " + e.what());
      }
    }
  }

  void load_predictor() {
    const auto file = cfg_.data_dir / "predictors" / "default.json";
    std::ifstream in(file);
    if (!in) return;
    try {
      predictor_ = std::make_shared<const RelevancePredictor>(predictor_from_json(nlohmann::json::parse(in)));
    } catch (const std::exception& e) {
      warnings_.push_back(std::string("predictor not loaded: ") + e.what());
    }
  }

  // Rebuilds every logged session by re-running its feedback.
  void recover() {
    std::vector<std::filesystem::path> logs;
    for (const auto& f : std::filesystem::directory_iterator(cfg_.data_dir / "sessions"))
      if (f.path().extension() == ".jsonl") logs.push_back(f.path());
    std::sort(logs.begin(), logs.end());
    for (const auto& path : logs) {
      try {
        replay_log(path);
      } catch (const std::exception& e) {
        warnings_.push_back("session log " + path.filename().string() + " not replayed: " + e.what());
      }
    }
  }

  void replay_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::vector<nlohmann::json> records;
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) records.push_back(nlohmann::json::parse(line));
    if (records.empty() || records.front().value("type", "") != "config") throw InvalidArgument("no config record");
    const auto id = records.front().at("session_id").get<std::string>();
    const auto sc = session_config_from_json(records.front().at("config"));
    auto corpus = corpora_.find(sc.corpus);
    if (corpus == corpora_.end()) throw NotFound("corpus '" + sc.corpus + "' is gone");

    auto entry = std::make_shared<Entry>();
    entry->log_path = path;
    entry->session = std::make_unique<Session>(id, sc, corpus->second, predictor_);
    entry->session->start();
    std::optional<ApiResponse> last;
    for (std::size_t i = 1; i < records.size(); ++i) {
      const auto& r = records[i];
      const std::string type = r.value("type", "");
      if (type == "idempotency") {
        if (last) entry->responses[r.at("key").get<std::string>()] = *last;
      } else if (type == "collage") {
        const int round = r.at("round").get<int>();
        const auto& hist = entry->session->history();
        if (round >= static_cast<int>(hist.size()) ||
            hist[static_cast<std::size_t>(round)].ids != r.at("ids").get<std::vector<std::string>>())
          throw Conflict("replay diverged at round " + std::to_string(round));
      } else if (type == "feedback") {
        Session& s = *entry->session;
        auto next = s.submit(feedback_from_json(r.at("event")));
        if (auto* c = std::get_if<Collage>(&next))
          last = json_response(200, collage_json(s, *c));
        else
          last = json_response(200, {{"session_id", s.id()}, {"finished", true}, {"summary", std::get<nlohmann::json>(next)}});
      }
    }
    // Attach the log only after replay so nothing is written twice.
    entry->session->set_sink(sink_for(entry));
    std::unique_lock lock(sessions_mu_);
    sessions_[id] = entry;
  }

  ServiceConfig cfg_;
  std::map<std::string, CorpusContext> corpora_;
  std::shared_ptr<const RelevancePredictor> predictor_;
  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::vector<std::string> warnings_;
};

}  // namespace pinview
