#pragma once

// Directory ingestion. This is the only header that needs OpenCV (for image
// decoding); link opencv_imgcodecs when including it.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>

#include "pinview/corpus.hpp"

namespace pinview {

inline bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".ppm" || ext == ".pgm" ||
         ext == ".bmp" || ext == ".tif" || ext == ".tiff";
}

inline std::optional<Raster> load_raster(const std::filesystem::path& file) {
  cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) return std::nullopt;
  Raster r{static_cast<std::size_t>(bgr.cols), static_cast<std::size_t>(bgr.rows), 3, {}};
  r.pixels.resize(r.width * r.height * 3);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * r.width + x) * 3;
      r.pixels[i] = row[x][2];
      r.pixels[i + 1] = row[x][1];
      r.pixels[i + 2] = row[x][0];
    }
  }
  return r;
}

/// Label manifest: `labels.tsv` in the directory, lines `id<TAB>cat1,cat2`.
inline std::map<std::string, std::set<std::string>> read_label_manifest(
    const std::filesystem::path& file) {
  std::map<std::string, std::set<std::string>> out;
  std::ifstream in(file);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    const std::string id = line.substr(0, tab);
    auto& labels = out[id];
    if (tab == std::string::npos) continue;
    std::stringstream ss(line.substr(tab + 1));
    std::string cat;
    while (std::getline(ss, cat, ','))
      if (!cat.empty()) labels.insert(cat);
  }
  return out;
}

struct IngestResult {
  Corpus corpus;
  std::vector<std::string> warnings;
};

/// Builds a corpus from every image file in `dir` (non-recursive). Image ids
/// are file stems. Computed specs are extracted from pixels; imported specs
/// are read from `feature_table` when given and default to zero vectors
/// (with a warning) for images the table does not cover.
inline IngestResult ingest_directory(const std::filesystem::path& dir,
                                     const std::vector<FeatureSpec>& specs,
                                     const std::string& corpus_id,
                                     const std::optional<std::filesystem::path>& feature_table = {}) {
  if (!std::filesystem::is_directory(dir)) throw NotFound("not a directory: " + dir.string());
  IngestResult result{Corpus(corpus_id, specs), {}};

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end(), [](const auto& a, const auto& b) {
    return a.stem().string() != b.stem().string() ? a.stem().string() < b.stem().string()
                                                  : a.filename().string() < b.filename().string();
  });

  const auto manifest = dir / "labels.tsv";
  std::map<std::string, std::set<std::string>> labels;
  if (std::filesystem::exists(manifest))
    labels = read_label_manifest(manifest);
  else
    result.warnings.push_back("no labels.tsv manifest; label sets are empty");

  for (const auto& file : files) {
    const std::string id = file.stem().string();
    if (result.corpus.index_of(id)) {
      result.warnings.push_back("duplicate image id '" + id + "' from " + file.filename().string() +
                                ", skipped");
      continue;
    }
    auto raster = load_raster(file);
    if (!raster) {
      result.warnings.push_back("unreadable image " + file.filename().string() + ", skipped");
      continue;
    }
    ImageRecord rec;
    rec.id = id;
    rec.source = file.filename().string();
    if (auto it = labels.find(id); it != labels.end()) rec.labels = it->second;
    std::map<std::string, std::vector<double>> computed;
    try {
      computed = extract_features(*raster);
    } catch (const DegenerateInput& e) {
      result.warnings.push_back(file.filename().string() + ": " + e.what() + ", skipped");
      continue;
    }
    for (const auto& s : specs) {
      if (s.provenance == Provenance::computed) {
        auto it = computed.find(s.name);
        if (it == computed.end())
          throw InvalidArgument("spec '" + s.name + "' is marked computed but is not a built-in feature");
        rec.features[s.name] = it->second;
      } else {
        rec.features[s.name] = std::vector<double>(s.dim, 0.0);
      }
    }
    result.corpus.add(std::move(rec));
  }
  result.corpus.sort_by_id();

  bool any_imported = false;
  for (const auto& s : specs) any_imported |= s.provenance == Provenance::imported;
  if (any_imported) {
    if (!feature_table) {
      result.warnings.push_back("imported features requested but no feature table given; zero vectors used");
    } else {
      std::ifstream in(*feature_table);
      if (!in) throw NotFound("cannot open feature table " + feature_table->string());
      const auto rows = parse_feature_table(in);
      const auto report = import_features(result.corpus, rows);
      for (const auto& w : report.warnings) result.warnings.push_back(w);
      for (const auto& r : report.rejected) result.warnings.push_back("rejected " + r);
      std::set<std::pair<std::string, std::string>> covered;
      for (const auto& r : rows) covered.insert({r.image_id, r.feature});
      for (const auto& s : specs)
        if (s.provenance == Provenance::imported)
          for (const auto& id : result.corpus.ids())
            if (!covered.count({id, s.name}))
              result.warnings.push_back("no imported '" + s.name + "' for '" + id + "'; zero vector");
    }
  }
  return result;
}

}  // namespace pinview
