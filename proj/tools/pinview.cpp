// pinview command-line tool: ingest, train-relevance, simulate, serve.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "pinview/image_io.hpp"
#include "pinview/relevance.hpp"
#include "pinview/simharness.hpp"
#include "pinview/service.hpp"

using namespace pinview;
namespace fs = std::filesystem;

namespace {

// "name:dim" for an imported feature space.
FeatureSpec parse_import_spec(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw InvalidArgument("--import expects name:dim, got '" + s + "'");
  return {s.substr(0, colon), static_cast<std::size_t>(std::stoul(s.substr(colon + 1))), Provenance::imported};
}

void write_json(const std::string& path, const nlohmann::json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error("cannot write " + path);
}

int run_ingest(const fs::path& images, const fs::path& data_dir, std::string id,
               const std::vector<std::string>& imports, const std::string& table) {
  if (id.empty()) id = fs::absolute(images).lexically_normal().filename().string();
  auto specs = computed_feature_specs();
  for (const auto& s : imports) specs.push_back(parse_import_spec(s));
  std::optional<fs::path> table_path;
  if (!table.empty()) table_path = table;
  auto result = ingest_directory(images, specs, id, table_path);
  const fs::path dir = data_dir / "corpora" / id;
  save_corpus(result.corpus, dir);
  fs::create_directories(dir / "assets");
  for (const auto& im : result.corpus.images())
    fs::copy_file(images / im.source, dir / "assets" / im.source, fs::copy_options::overwrite_existing);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "ingested " << result.corpus.size() << " images into " << dir.string() << " ("
            << result.corpus.categories().size() << " categories)\n";
  return 0;
}

SimPool load_or_make_pool(const std::string& table, double separation, std::uint64_t seed) {
  if (!table.empty()) {
    std::ifstream in(table);
    if (!in) throw NotFound("cannot open pool table " + table);
    return read_pool_table(in);
  }
  return generate_synthetic_pool(separation, seed);
}

int run_train(const std::string& csv, const std::string& pool_table, double separation, std::uint64_t seed,
              double alpha, const std::string& out) {
  RelevanceTrainingSet data;
  if (!csv.empty()) {
    std::ifstream in(csv);
    if (!in) throw NotFound("cannot open " + csv);
    data = read_training_csv(in);
  } else {
    data = load_or_make_pool(pool_table, separation, seed).as_training_set();
  }
  TrainOptions opt;
  opt.seed = seed;
  opt.alpha = alpha;
  const auto model = train_predictor(data, opt);
  write_json(out, to_json(model));
  std::cerr << "trained on " << data.size() << " rows, L2 strength " << model.regularization << '\n';
  return 0;
}

struct SimulateArgs {
  std::string corpus = "synthetic";
  std::string modality = "gaze+click";
  std::size_t sessions = 40;
  int rounds = 10;
  std::uint64_t seed = 0;
  std::string out;
  std::string pool_table;
  double separation = 3.0;
  std::string predictor;
  std::string transcripts;
  std::vector<std::string> categories;
  double mu = 1.0, alpha = 1.0, c = 1.0, lambda = 0.5;
  bool tensor = false;
  bool grid = false;
};

int run_simulate(const SimulateArgs& a) {
  CorpusContext ctx;
  if (a.corpus == "synthetic") {
    SyntheticCorpusOptions opt;
    opt.seed = a.seed;
    ctx = CorpusContext::make(generate_synthetic_corpus(opt));
  } else {
    ctx = CorpusContext::make(load_corpus(a.corpus));
  }
  ExperimentConfig cfg;
  cfg.modality = modality_from_string(a.modality);
  cfg.sessions = a.sessions;
  cfg.rounds = a.rounds;
  cfg.seed = a.seed;
  cfg.categories = a.categories;
  cfg.mu = a.mu;
  cfg.alpha = a.alpha;
  cfg.c = a.c;
  cfg.lambda = a.lambda;
  cfg.tensor = a.tensor;

  std::unique_ptr<SimPool> pool;
  std::shared_ptr<const RelevancePredictor> predictor;
  if (uses_gaze(cfg.modality)) {
    pool = std::make_unique<SimPool>(load_or_make_pool(a.pool_table, a.separation, derive_seed(a.seed, "pool")));
    if (!a.predictor.empty()) {
      std::ifstream in(a.predictor);
      if (!in) throw NotFound("cannot open predictor " + a.predictor);
      predictor = std::make_shared<const RelevancePredictor>(predictor_from_json(nlohmann::json::parse(in)));
    } else {
      predictor = std::make_shared<const RelevancePredictor>(train_predictor(pool->as_training_set()));
    }
  }

  TranscriptSink sink;
  if (!a.transcripts.empty()) {
    fs::create_directories(a.transcripts);
    sink = [dir = fs::path(a.transcripts)](const SessionOutcome& o) {
      std::string name = o.transcript_id;
      std::replace(name.begin(), name.end(), '/', '_');
      auto path = dir / (name + ".jsonl");
      fs::remove(path);
      return Session::Sink([path](const nlohmann::json& j) { std::ofstream(path, std::ios::app) << j.dump() << '\n'; });
    };
  }

  nlohmann::json out;
  if (a.grid) {
    if (!a.transcripts.empty()) std::cerr << "warning: transcripts are not written during grid search\n";
    const auto g = grid_search(ctx, cfg, pool.get(), predictor);
    out = to_json(g.best);
    out["grid_search"] = to_json(g);
  } else {
    out = to_json(run_experiment(ctx, cfg, pool.get(), predictor, sink));
  }
  out["corpus"] = ctx.corpus->id();
  out["seed"] = a.seed;
  out["rounds"] = a.rounds;
  write_json(a.out, out);
  std::cerr << to_string(cfg.modality) << " macro-MAP " << out.at("macro_map").get<double>() << '\n';
  return 0;
}

httplib::Server* g_server = nullptr;

int run_serve(const std::string& config, const std::string& data_dir, int port, const std::string& host) {
  std::optional<fs::path> file;
  if (!config.empty()) file = config;
  auto cfg = ServiceConfig::load(file);
  if (!data_dir.empty()) cfg.data_dir = data_dir;
  if (port > 0) cfg.port = port;
  if (!host.empty()) cfg.host = host;
  Service svc(cfg);
  for (const auto& w : svc.warnings()) std::cerr << "warning: " << w << '\n';
  httplib::Server srv;
  g_server = &srv;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  std::cerr << "serving " << cfg.data_dir.string() << " on http://" << cfg.host << ":" << cfg.port << " ("
            << svc.session_count() << " sessions recovered)\n";
  return svc.listen(srv) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pinview: interactive image retrieval with gaze and click feedback"};
  app.require_subcommand(1);

  auto* ingest = app.add_subcommand("ingest", "Build a corpus from a directory of images");
  std::string images, ingest_data = "pinview-data", corpus_id, table;
  std::vector<std::string> imports;
  ingest->add_option("images", images, "Image directory (labels.tsv optional)")->required()->check(CLI::ExistingDirectory);
  ingest->add_option("--data-dir", ingest_data, "Service data directory");
  ingest->add_option("--id", corpus_id, "Corpus id (default: directory name)");
  ingest->add_option("--import", imports, "Imported feature space name:dim");
  ingest->add_option("--features", table, "Feature table for imported spaces")->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train-relevance", "Train the gaze relevance predictor");
  std::string csv, pool_table, train_out = "-";
  double separation = 3.0, alpha = 1.0;
  std::uint64_t train_seed = 0;
  auto* csv_opt = train->add_option("--csv", csv, "Labelled eye-feature CSV")->check(CLI::ExistingFile);
  train->add_option("--pool", pool_table, "Pool table (pos|neg, bin, 19 values)")->excludes(csv_opt)->check(CLI::ExistingFile);
  train->add_option("--pool-separation", separation, "Separation of the synthetic pool used otherwise");
  train->add_option("--seed", train_seed);
  train->add_option("--alpha", alpha, "Click weight stored with the model");
  train->add_option("-o,--out", train_out, "Output JSON (default stdout)");

  auto* sim = app.add_subcommand("simulate", "Run the offline simulation protocol");
  SimulateArgs sa;
  sim->add_option("--corpus", sa.corpus, "Corpus directory or 'synthetic'");
  sim->add_option("--modality", sa.modality, "random | gaze | click | gaze+click | full");
  sim->add_option("--sessions", sa.sessions, "Sessions per category");
  sim->add_option("--rounds", sa.rounds);
  sim->add_option("--seed", sa.seed);
  sim->add_option("--out", sa.out, "Result JSON (default stdout)");
  sim->add_option("--pool", sa.pool_table, "Recorded pool table")->check(CLI::ExistingFile);
  sim->add_option("--pool-separation", sa.separation, "Synthetic pool separation");
  sim->add_option("--predictor", sa.predictor, "Predictor JSON (default: trained on the pool)")->check(CLI::ExistingFile);
  sim->add_option("--transcripts", sa.transcripts, "Directory for per-session event logs");
  sim->add_option("--category", sa.categories, "Restrict to categories");
  sim->add_option("--mu", sa.mu);
  sim->add_option("--alpha", sa.alpha);
  sim->add_option("--c", sa.c);
  sim->add_option("--lambda", sa.lambda);
  sim->add_flag("--tensor", sa.tensor, "Enable the tensor stage");
  sim->add_flag("--grid-search", sa.grid, "Tune alpha (eye+click) and mu by macro-MAP");

  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  std::string config, serve_data, host;
  int port = 0;
  serve->add_option("--config", config, "Service config JSON")->check(CLI::ExistingFile);
  serve->add_option("--data-dir", serve_data);
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*ingest) return run_ingest(images, ingest_data, corpus_id, imports, table);
    if (*train) return run_train(csv, pool_table, separation, train_seed, alpha, train_out);
    if (*sim) return run_simulate(sa);
    if (*serve) return run_serve(config, serve_data, port, host);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
