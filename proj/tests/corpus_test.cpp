#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "pinview/corpus.hpp"

using namespace pinview;

namespace {

Raster checker(std::size_t w, std::size_t h) {
  Raster r = Raster::filled(w, h, 0, 0, 0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::uint8_t v = ((x / 4 + y / 4) % 2) ? 220 : 30;
      for (std::size_t c = 0; c < 3; ++c) r.pixels[(y * w + x) * 3 + c] = v;
    }
  return r;
}

Corpus tiny_corpus() {
  Corpus c("tiny", {{"sift", 4, Provenance::imported}, {"color", 2, Provenance::computed}});
  for (const char* id : {"a", "b", "c"}) {
    ImageRecord r;
    r.id = id;
    r.features["sift"] = {0, 0, 0, 0};
    r.features["color"] = {1, 2};
    if (std::string(id) != "c") r.labels.insert("cat");
    r.labels.insert(std::string(id) == "a" ? "dog" : "bird");
    c.add(std::move(r));
  }
  return c;
}

}  // namespace

TEST(Lab, PublishedReferenceColours) {
  const auto white = srgb_to_lab(255, 255, 255);
  EXPECT_NEAR(white.L, 100.0, 1e-3);
  EXPECT_NEAR(white.a, 0.0, 1e-2);
  EXPECT_NEAR(white.b, 0.0, 1e-2);
  const auto red = srgb_to_lab(255, 0, 0);
  EXPECT_NEAR(red.L, 53.24, 0.01);
  EXPECT_NEAR(red.a, 80.09, 0.02);
  EXPECT_NEAR(red.b, 67.20, 0.02);
}

TEST(ExtractFeatures, Dimensions) {
  const auto f = extract_features(checker(40, 32));
  for (const auto& spec : computed_feature_specs()) {
    ASSERT_TRUE(f.count(spec.name)) << spec.name;
    EXPECT_EQ(f.at(spec.name).size(), spec.dim) << spec.name;
  }
  EXPECT_EQ(f.at(feature_names::average_lab).size(), 15u);
  EXPECT_EQ(f.at(feature_names::lab_moments).size(), 45u);
  EXPECT_EQ(f.at(feature_names::sobel_histogram).size(), 20u);
  EXPECT_EQ(f.at(feature_names::sobel_cooccurrence).size(), 80u);
  EXPECT_EQ(f.at(feature_names::sobel_fft).size(), 128u);
  EXPECT_EQ(f.at(feature_names::relative_brightness).size(), 40u);
}

TEST(ExtractFeatures, ConstantGrayHasNoEdges) {
  const auto f = extract_features(Raster::filled(32, 32, 128, 128, 128));
  for (double v : f.at(feature_names::sobel_histogram)) EXPECT_EQ(v, 0.0);
  for (double v : f.at(feature_names::sobel_cooccurrence)) EXPECT_EQ(v, 0.0);
}

TEST(ExtractFeatures, ConstantColourAveragesToThatColour) {
  const auto f = extract_features(Raster::filled(33, 21, 255, 0, 0));
  const auto& avg = f.at(feature_names::average_lab);
  for (std::size_t z = 0; z < 5; ++z) {
    EXPECT_NEAR(avg[3 * z], 53.24, 0.01);
    EXPECT_NEAR(avg[3 * z + 1], 80.09, 0.02);
    EXPECT_NEAR(avg[3 * z + 2], 67.20, 0.02);
  }
  for (double m : f.at(feature_names::lab_moments)) EXPECT_NEAR(m, 0.0, 1e-9);
}

TEST(ExtractFeatures, TooSmallIsDegenerate) {
  EXPECT_THROW(extract_features(Raster::filled(15, 40, 1, 2, 3)), DegenerateInput);
}

TEST(ExtractFeatures, HistogramsAreNormalisedPerZone) {
  const auto f = extract_features(checker(48, 48));
  const auto& h = f.at(feature_names::sobel_histogram);
  for (std::size_t z = 0; z < 5; ++z) {
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k) s += h[4 * z + k];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(CorpusTest, CategoriesAndLookup) {
  const auto c = tiny_corpus();
  EXPECT_EQ(c.size(), 3u);
  EXPECT_EQ(c.categories().size(), 3u);
  EXPECT_EQ(c.members("cat"), (std::set<std::string>{"a", "b"}));
  EXPECT_TRUE(c.members("none").empty());
  EXPECT_THROW(c.image("zzz"), NotFound);
}

TEST(CorpusTest, RejectsWrongDimensionOnAdd) {
  Corpus c("x", {{"f", 3, Provenance::computed}});
  ImageRecord r;
  r.id = "i";
  r.features["f"] = {1, 2};
  EXPECT_THROW(c.add(r), DimensionMismatch);
}

TEST(ImportFeatures, AttachesRejectsAndWarns) {
  auto c = tiny_corpus();
  std::istringstream table(
      "a\tsift\t1,2,3,4\n"
      "nobody\tsift\t1,1,1,1\n"
      "a\tsift\t5,6,7,8\n");
  const auto rep = import_features(c, table);
  EXPECT_EQ(rep.attached, 2u);
  EXPECT_EQ(rep.rejected.size(), 1u);
  ASSERT_EQ(rep.warnings.size(), 1u);
  EXPECT_EQ(c.image("a").features.at("sift"), (std::vector<double>{5, 6, 7, 8}));
}

TEST(ImportFeatures, DimensionMismatchNamesTheRow) {
  auto c = tiny_corpus();
  std::istringstream table("# header\nb\tsift\t1,2,3\n");
  try {
    import_features(c, table);
    FAIL() << "expected a dimension mismatch";
  } catch (const DimensionMismatch& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Persistence, RoundTripIsExact) {
  auto c = tiny_corpus();
  c.set_feature("b", "sift", {0.1, -2.5e-300, 1e300, 3.0});
  const auto dir = std::filesystem::temp_directory_path() / "pinview_corpus_roundtrip";
  std::filesystem::remove_all(dir);
  save_corpus(c, dir);
  const auto back = load_corpus(dir);
  EXPECT_EQ(manifest_json(back), manifest_json(c));
  EXPECT_EQ(feature_blob(back), feature_blob(c));
  std::filesystem::remove_all(dir);
}

TEST(Persistence, BlobIsLittleEndianDoubles) {
  Corpus c("le", {{"f", 1, Provenance::imported}});
  ImageRecord r;
  r.id = "x";
  r.features["f"] = {1.0};
  c.add(r);
  const auto blob = feature_blob(c);
  ASSERT_EQ(blob.size(), 8u);
  // 1.0 = 0x3FF0000000000000
  EXPECT_EQ(static_cast<unsigned char>(blob[7]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(blob[6]), 0xF0);
  EXPECT_EQ(static_cast<unsigned char>(blob[0]), 0x00);
}
