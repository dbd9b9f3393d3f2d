#pragma once

// Image collections: records, computed visual features, imported feature
// tables and the manifest + binary blob persistence format.

#include <array>
#include <bit>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pinview/common.hpp"

namespace pinview {

enum class Provenance { computed, imported };

inline std::string to_string(Provenance p) {
  return p == Provenance::computed ? "computed" : "imported";
}

inline Provenance provenance_from_string(const std::string& s) {
  if (s == "computed") return Provenance::computed;
  if (s == "imported") return Provenance::imported;
  throw InvalidArgument("unknown feature provenance '" + s + "'");
}

struct FeatureSpec {
  std::string name;
  std::size_t dim = 0;
  Provenance provenance = Provenance::computed;

  bool operator==(const FeatureSpec&) const = default;
};

struct ImageRecord {
  std::string id;
  std::string source;
  std::set<std::string> labels;
  std::map<std::string, std::vector<double>> features;
};

// Names of the computed visual features, in output order.
namespace feature_names {
inline constexpr const char* average_lab = "average_lab";
inline constexpr const char* lab_moments = "lab_central_moments";
inline constexpr const char* sobel_histogram = "sobel_direction_histogram";
inline constexpr const char* sobel_cooccurrence = "sobel_direction_cooccurrence";
inline constexpr const char* sobel_fft = "sobel_fft_magnitude";
inline constexpr const char* relative_brightness = "relative_brightness_histogram";
}  // namespace feature_names

/// The computed subset of the visual features with their fixed dimensions.
inline std::vector<FeatureSpec> computed_feature_specs() {
  return {
      {feature_names::average_lab, 15, Provenance::computed},
      {feature_names::lab_moments, 45, Provenance::computed},
      {feature_names::sobel_histogram, 20, Provenance::computed},
      {feature_names::sobel_cooccurrence, 80, Provenance::computed},
      {feature_names::sobel_fft, 128, Provenance::computed},
      {feature_names::relative_brightness, 40, Provenance::computed},
  };
}

class Corpus {
public:
  Corpus() = default;
  Corpus(std::string id, std::vector<FeatureSpec> specs)
      : id_(std::move(id)), specs_(std::move(specs)) {
    std::set<std::string> names;
    for (const auto& s : specs_) {
      if (s.dim == 0) throw InvalidArgument("feature '" + s.name + "' has dim 0");
      if (!names.insert(s.name).second)
        throw InvalidArgument("duplicate feature spec '" + s.name + "'");
    }
  }

  const std::string& id() const { return id_; }
  const std::vector<FeatureSpec>& specs() const { return specs_; }
  const std::vector<ImageRecord>& images() const { return images_; }
  const std::map<std::string, std::set<std::string>>& categories() const {
    return categories_;
  }
  std::size_t size() const { return images_.size(); }

  const FeatureSpec* find_spec(const std::string& name) const {
    for (const auto& s : specs_)
      if (s.name == name) return &s;
    return nullptr;
  }

  std::optional<std::size_t> index_of(const std::string& image_id) const {
    auto it = index_.find(image_id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const ImageRecord& image(std::size_t i) const { return images_.at(i); }
  const ImageRecord& image(const std::string& image_id) const {
    auto i = index_of(image_id);
    if (!i) throw NotFound("unknown image id '" + image_id + "'");
    return images_[*i];
  }

  /// Adds an image; every spec'd feature must be present with its dimension.
  void add(ImageRecord rec) {
    if (index_.count(rec.id)) throw InvalidArgument("duplicate image id '" + rec.id + "'");
    for (const auto& s : specs_) {
      auto it = rec.features.find(s.name);
      if (it == rec.features.end())
        throw InvalidArgument("image '" + rec.id + "' lacks feature '" + s.name + "'");
      if (it->second.size() != s.dim)
        throw DimensionMismatch("image '" + rec.id + "' feature '" + s.name + "' has dim " +
                                std::to_string(it->second.size()) + ", expected " +
                                std::to_string(s.dim));
    }
    for (const auto& [name, _] : rec.features)
      if (!find_spec(name))
        throw InvalidArgument("image '" + rec.id + "' carries unspecified feature '" + name + "'");
    for (const auto& l : rec.labels) categories_[l].insert(rec.id);
    index_.emplace(rec.id, images_.size());
    images_.push_back(std::move(rec));
  }

  /// Replaces a feature vector on an existing image (dimension checked).
  void set_feature(const std::string& image_id, const std::string& feature,
                   std::vector<double> values) {
    const FeatureSpec* spec = find_spec(feature);
    if (!spec) throw NotFound("unknown feature '" + feature + "'");
    if (values.size() != spec->dim)
      throw DimensionMismatch("feature '" + feature + "' for '" + image_id + "' has dim " +
                              std::to_string(values.size()) + ", expected " +
                              std::to_string(spec->dim));
    auto i = index_of(image_id);
    if (!i) throw NotFound("unknown image id '" + image_id + "'");
    images_[*i].features[feature] = std::move(values);
  }

  /// Sorts images by id; ingestion calls this for deterministic ordering.
  void sort_by_id() {
    std::sort(images_.begin(), images_.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; });
    index_.clear();
    for (std::size_t i = 0; i < images_.size(); ++i) index_.emplace(images_[i].id, i);
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(images_.size());
    for (const auto& im : images_) out.push_back(im.id);
    return out;
  }

  std::set<std::string> members(const std::string& category) const {
    auto it = categories_.find(category);
    return it == categories_.end() ? std::set<std::string>{} : it->second;
  }

private:
  std::string id_;
  std::vector<FeatureSpec> specs_;
  std::vector<ImageRecord> images_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::set<std::string>> categories_;
};

// ---------------------------------------------------------------------------
// Feature extraction

/// 8-bit RGB raster, row-major, interleaved.
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }

  static Raster filled(std::size_t w, std::size_t h, std::uint8_t r, std::uint8_t g,
                       std::uint8_t b) {
    Raster out{w, h, 3, std::vector<std::uint8_t>(w * h * 3)};
    for (std::size_t i = 0; i < w * h; ++i) {
      out.pixels[3 * i] = r;
      out.pixels[3 * i + 1] = g;
      out.pixels[3 * i + 2] = b;
    }
    return out;
  }
};

struct Lab {
  double L, a, b;
};

/// sRGB (D65) to CIE L*a*b*.
inline Lab srgb_to_lab(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  auto lin = [](std::uint8_t v) {
    const double c = v / 255.0;
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
  };
  const double r = lin(r8), g = lin(g8), b = lin(b8);
  const double x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
  auto f = [](double t) {
    constexpr double eps = 216.0 / 24389.0;
    constexpr double kappa = 24389.0 / 27.0;
    return t > eps ? std::cbrt(t) : (kappa * t + 16.0) / 116.0;
  };
  const double fx = f(x), fy = f(y), fz = f(z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

namespace detail {

inline constexpr std::size_t kZones = 5;

// Zone 0 is a centered ellipse with semi-axes w/4, h/4 (about a fifth of the
// area); zones 1..4 are the remaining top-left, top-right, bottom-left and
// bottom-right quadrants.
inline std::size_t zone_of(std::size_t x, std::size_t y, std::size_t w, std::size_t h) {
  const double cx = 0.5 * w, cy = 0.5 * h;
  const double dx = (x + 0.5 - cx) / (0.25 * w);
  const double dy = (y + 0.5 - cy) / (0.25 * h);
  if (dx * dx + dy * dy <= 1.0) return 0;
  const bool right = x + 0.5 >= cx;
  const bool bottom = y + 0.5 >= cy;
  return 1 + (bottom ? 2 : 0) + (right ? 1 : 0);
}

inline void l1_normalize(std::span<double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  if (s > 0.0)
    for (double& x : v) x /= s;
}

struct EdgeField {
  std::vector<double> magnitude;
  std::vector<int> direction;  // 0..3, or -1 for non-edge pixels
};

// Sobel on the L* channel; an edge pixel has gradient magnitude above
// `threshold` and its orientation (mod 180 degrees) is quantised to 0, 45,
// 90 or 135 degrees.
inline EdgeField sobel_edges(const std::vector<double>& lum, std::size_t w, std::size_t h,
                             double threshold) {
  EdgeField e{std::vector<double>(w * h, 0.0), std::vector<int>(w * h, -1)};
  auto L = [&](std::ptrdiff_t x, std::ptrdiff_t y) {
    x = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(w) - 1);
    y = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(h) - 1);
    return lum[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto X = static_cast<std::ptrdiff_t>(x), Y = static_cast<std::ptrdiff_t>(y);
      const double gx = (L(X + 1, Y - 1) + 2 * L(X + 1, Y) + L(X + 1, Y + 1)) -
                        (L(X - 1, Y - 1) + 2 * L(X - 1, Y) + L(X - 1, Y + 1));
      const double gy = (L(X - 1, Y + 1) + 2 * L(X, Y + 1) + L(X + 1, Y + 1)) -
                        (L(X - 1, Y - 1) + 2 * L(X, Y - 1) + L(X + 1, Y - 1));
      const double mag = std::hypot(gx, gy);
      e.magnitude[y * w + x] = mag;
      if (mag > threshold) {
        double angle = std::atan2(gy, gx);
        if (angle < 0) angle += M_PI;
        e.direction[y * w + x] = static_cast<int>(std::lround(angle / (M_PI / 4))) % 4;
      }
    }
  }
  return e;
}

inline std::size_t brightness_bin(double diff) {
  static constexpr std::array<double, 7> edges{-20.0, -8.0, -2.0, 0.0, 2.0, 8.0, 20.0};
  std::size_t b = 0;
  while (b < edges.size() && diff >= edges[b]) ++b;
  return b;
}

}  // namespace detail

/// Computes the six built-in visual features of an RGB raster. Zonal features
/// use five zones; histograms are L1-normalised per zone (all-zero when a
/// zone has no contributing pixels).
inline std::map<std::string, std::vector<double>> extract_features(const Raster& img) {
  if (img.channels != 3) throw InvalidArgument("extract_features: raster must have 3 channels");
  if (img.pixels.size() != img.width * img.height * 3)
    throw InvalidArgument("extract_features: pixel buffer size does not match geometry");
  if (img.width < 16 || img.height < 16)
    throw DegenerateInput("extract_features: raster smaller than 16x16");

  const std::size_t w = img.width, h = img.height, n = w * h;
  using detail::kZones;

  std::vector<Lab> lab(n);
  std::vector<double> lum(n);
  std::vector<std::size_t> zone(n);
  std::array<double, kZones> zone_count{};
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      lab[i] = srgb_to_lab(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
      lum[i] = lab[i].L;
      zone[i] = detail::zone_of(x, y, w, h);
      zone_count[zone[i]] += 1.0;
    }

  // Average colour per zone.
  std::vector<double> avg(kZones * 3, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = zone[i];
    avg[3 * z] += lab[i].L;
    avg[3 * z + 1] += lab[i].a;
    avg[3 * z + 2] += lab[i].b;
  }
  for (std::size_t z = 0; z < kZones; ++z)
    for (int c = 0; c < 3; ++c)
      if (zone_count[z] > 0) avg[3 * z + c] /= zone_count[z];

  // Central moments 2..4 per zone and channel, as root-scaled values
  // (std, cbrt(m3), m4^(1/4)) so all three share the channel's unit.
  std::vector<double> moments(kZones * 9, 0.0);
  {
    std::vector<double> m2(kZones * 3, 0.0), m3(kZones * 3, 0.0), m4(kZones * 3, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto z = zone[i];
      const double v[3] = {lab[i].L, lab[i].a, lab[i].b};
      for (int c = 0; c < 3; ++c) {
        const double d = v[c] - avg[3 * z + c];
        m2[3 * z + c] += d * d;
        m3[3 * z + c] += d * d * d;
        m4[3 * z + c] += d * d * d * d;
      }
    }
    for (std::size_t z = 0; z < kZones; ++z)
      for (int c = 0; c < 3; ++c) {
        const double cnt = std::max(zone_count[z], 1.0);
        moments[9 * z + 3 * c] = std::sqrt(m2[3 * z + c] / cnt);
        moments[9 * z + 3 * c + 1] = std::cbrt(m3[3 * z + c] / cnt);
        moments[9 * z + 3 * c + 2] = std::pow(m4[3 * z + c] / cnt, 0.25);
      }
  }

  const detail::EdgeField edges = detail::sobel_edges(lum, w, h, 8.0);

  std::vector<double> hist(kZones * 4, 0.0);
  std::vector<double> cooc(kZones * 16, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      const int d = edges.direction[i];
      if (d < 0) continue;
      hist[4 * zone[i] + d] += 1.0;
      // Right and lower neighbours.
      if (x + 1 < w && edges.direction[i + 1] >= 0)
        cooc[16 * zone[i] + 4 * d + edges.direction[i + 1]] += 1.0;
      if (y + 1 < h && edges.direction[i + w] >= 0)
        cooc[16 * zone[i] + 4 * d + edges.direction[i + w]] += 1.0;
    }
  for (std::size_t z = 0; z < kZones; ++z) {
    detail::l1_normalize(std::span<double>(hist).subspan(4 * z, 4));
    detail::l1_normalize(std::span<double>(cooc).subspan(16 * z, 16));
  }

  // Edge magnitude image area-resampled to 16x16, then |DFT| on the half plane
  // v = 0..7 (the other half is conjugate-symmetric for real input).
  std::vector<double> fft_mag(128, 0.0);
  {
    std::array<double, 256> grid{};
    std::array<double, 256> counts{};
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t gy = y * 16 / h, gx = x * 16 / w;
        grid[gy * 16 + gx] += edges.magnitude[y * w + x];
        counts[gy * 16 + gx] += 1.0;
      }
    for (std::size_t k = 0; k < 256; ++k)
      if (counts[k] > 0) grid[k] /= counts[k];
    for (std::size_t u = 0; u < 16; ++u)
      for (std::size_t v = 0; v < 8; ++v) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t y = 0; y < 16; ++y)
          for (std::size_t x = 0; x < 16; ++x) {
            const double phase = -2.0 * M_PI * (double(u * y) + double(v * x)) / 16.0;
            acc += grid[y * 16 + x] * std::polar(1.0, phase);
          }
        fft_mag[u * 8 + v] = std::abs(acc) / 256.0;
      }
  }

  // Relative brightness: L* difference to the right and lower neighbour,
  // eight bins per zone.
  std::vector<double> bright(kZones * 8, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      if (x + 1 < w) bright[8 * zone[i] + detail::brightness_bin(lum[i + 1] - lum[i])] += 1.0;
      if (y + 1 < h) bright[8 * zone[i] + detail::brightness_bin(lum[i + w] - lum[i])] += 1.0;
    }
  for (std::size_t z = 0; z < kZones; ++z)
    detail::l1_normalize(std::span<double>(bright).subspan(8 * z, 8));

  return {
      {feature_names::average_lab, std::move(avg)},
      {feature_names::lab_moments, std::move(moments)},
      {feature_names::sobel_histogram, std::move(hist)},
      {feature_names::sobel_cooccurrence, std::move(cooc)},
      {feature_names::sobel_fft, std::move(fft_mag)},
      {feature_names::relative_brightness, std::move(bright)},
  };
}

// ---------------------------------------------------------------------------
// Imported feature tables: `id<TAB>feature<TAB>v1,v2,...`

struct FeatureRow {
  std::size_t line = 0;
  std::string image_id;
  std::string feature;
  std::vector<double> values;
};

inline std::vector<FeatureRow> parse_feature_table(std::istream& in) {
  std::vector<FeatureRow> rows;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty() || text[0] == '#') continue;
    const auto t1 = text.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : text.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw InvalidArgument("feature table line " + std::to_string(line) +
                            ": expected id<TAB>feature<TAB>values");
    FeatureRow row{line, text.substr(0, t1), text.substr(t1 + 1, t2 - t1 - 1), {}};
    std::stringstream vs(text.substr(t2 + 1));
    std::string tok;
    while (std::getline(vs, tok, ',')) {
      try {
        std::size_t used = 0;
        row.values.push_back(std::stod(tok, &used));
        if (tok.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw InvalidArgument("feature table line " + std::to_string(line) +
                              ": bad number '" + tok + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

struct ImportReport {
  std::size_t attached = 0;
  std::vector<std::string> warnings;
  std::vector<std::string> rejected;  // rows naming unknown image ids
};

/// Attaches imported feature vectors. Unknown ids are rejected (reported),
/// dimension mismatches throw naming the row, duplicates are last-write-wins.
inline ImportReport import_features(Corpus& corpus, const std::vector<FeatureRow>& rows) {
  ImportReport report;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& row : rows) {
    const FeatureSpec* spec = corpus.find_spec(row.feature);
    if (!spec)
      throw NotFound("feature table line " + std::to_string(row.line) + ": unknown feature '" +
                     row.feature + "'");
    if (row.values.size() != spec->dim)
      throw DimensionMismatch("feature table line " + std::to_string(row.line) + " (" +
                              row.image_id + ", " + row.feature + "): dim " +
                              std::to_string(row.values.size()) + " != spec dim " +
                              std::to_string(spec->dim));
    if (!corpus.index_of(row.image_id)) {
      report.rejected.push_back("line " + std::to_string(row.line) + ": unknown id '" +
                                row.image_id + "'");
      continue;
    }
    if (!seen.insert({row.image_id, row.feature}).second)
      report.warnings.push_back("line " + std::to_string(row.line) + ": duplicate row for (" +
                                row.image_id + ", " + row.feature + "), last write wins");
    corpus.set_feature(row.image_id, row.feature, row.values);
    ++report.attached;
  }
  return report;
}

inline ImportReport import_features(Corpus& corpus, std::istream& table) {
  return import_features(corpus, parse_feature_table(table));
}

// ---------------------------------------------------------------------------
// Persistence: manifest.json + features.bin (little-endian float64, one row
// per image in manifest order, specs concatenated in spec order).

inline nlohmann::json manifest_json(const Corpus& corpus) {
  using nlohmann::json;
  json specs = json::array();
  std::size_t offset = 0;
  for (const auto& s : corpus.specs()) {
    specs.push_back({{"name", s.name},
                     {"dim", s.dim},
                     {"provenance", to_string(s.provenance)},
                     {"offset", offset}});
    offset += s.dim;
  }
  json images = json::array();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& im = corpus.image(i);
    images.push_back({{"id", im.id},
                      {"source", im.source},
                      {"labels", std::vector<std::string>(im.labels.begin(), im.labels.end())},
                      {"row", i}});
  }
  json cats = json::object();
  for (const auto& [name, members] : corpus.categories())
    cats[name] = std::vector<std::string>(members.begin(), members.end());
  return {{"id", corpus.id()},
          {"format", "pinview-corpus-1"},
          {"blob", "features.bin"},
          {"row_stride", offset},
          {"feature_specs", specs},
          {"images", images},
          {"categories", cats}};
}

inline void write_le_double(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  unsigned char bytes[8];
  for (int k = 0; k < 8; ++k) bytes[k] = static_cast<unsigned char>(bits >> (8 * k));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline double read_le_double(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

inline std::string feature_blob(const Corpus& corpus) {
  std::ostringstream out(std::ios::binary);
  for (const auto& im : corpus.images())
    for (const auto& s : corpus.specs())
      for (double v : im.features.at(s.name)) write_le_double(out, v);
  return out.str();
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream m(dir / "manifest.json");
    m << manifest_json(corpus).dump(2) << '\n';
    if (!m) throw Error("cannot write " + (dir / "manifest.json").string());
  }
  std::ofstream b(dir / "features.bin", std::ios::binary);
  const std::string blob = feature_blob(corpus);
  b.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!b) throw Error("cannot write " + (dir / "features.bin").string());
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  std::ifstream m(dir / "manifest.json");
  if (!m) throw NotFound("no corpus manifest in " + dir.string());
  const auto j = nlohmann::json::parse(m);
  std::vector<FeatureSpec> specs;
  for (const auto& s : j.at("feature_specs"))
    specs.push_back({s.at("name").get<std::string>(), s.at("dim").get<std::size_t>(),
                     provenance_from_string(s.at("provenance").get<std::string>())});
  Corpus corpus(j.at("id").get<std::string>(), specs);
  const std::size_t stride = j.at("row_stride").get<std::size_t>();

  std::ifstream b(dir / j.value("blob", std::string("features.bin")), std::ios::binary);
  if (!b) throw NotFound("missing feature blob in " + dir.string());
  const std::string blob((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  const auto& images = j.at("images");
  if (blob.size() != images.size() * stride * 8)
    throw DimensionMismatch("feature blob size " + std::to_string(blob.size()) +
                            " does not match manifest");
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  for (const auto& im : images) {
    ImageRecord rec;
    rec.id = im.at("id").get<std::string>();
    rec.source = im.value("source", std::string());
    for (const auto& l : im.at("labels")) rec.labels.insert(l.get<std::string>());
    const std::size_t row = im.at("row").get<std::size_t>();
    std::size_t off = 0;
    for (const auto& s : specs) {
      std::vector<double> v(s.dim);
      for (std::size_t k = 0; k < s.dim; ++k)
        v[k] = read_le_double(bytes + 8 * (row * stride + off + k));
      rec.features.emplace(s.name, std::move(v));
      off += s.dim;
    }
    corpus.add(std::move(rec));
  }
  return corpus;
}

}  // namespace pinview
