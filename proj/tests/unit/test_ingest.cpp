#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "unmask/datagen.hpp"
#include "unmask/ingest.hpp"

using namespace unmask;

namespace {

const ClassFeatureMatrix& matrix() {
  static const ClassFeatureMatrix m =
      expand_subfeatures(load_matrix(std::string(UNMASK_DATA_DIR) + "/unmask_matrix.json"));
  return m;
}

Dataset sample_data(std::size_t per_class, std::uint64_t seed) {
  const ClassSet cs = named_class_set(matrix(), "CS3b");
  const auto layout = feature_layout(matrix(), cs, 1);
  return generate_dataset(matrix(), cs, layout, per_class, 0.2, seed, {1, 0, 0}).train;
}

Dataset random_images(std::size_t n, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.id = "r" + std::to_string(seed) + "-" + std::to_string(i);
    s.label = "Car";
    s.image.resize(d.dims.pixels());
    for (auto& v : s.image) v = u(rng);
    d.samples.push_back(std::move(s));
  }
  return d;
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = std::filesystem::temp_directory_path() /
          ("unmask_ingest_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::remove_all(dir);
  }
  void TearDown() override { std::filesystem::remove_all(dir); }

  nlohmann::json manifest() const { return nlohmann::json::parse(std::ifstream(dir / kManifestFile)); }
  void write_manifest(const nlohmann::json& m) const { std::ofstream(dir / kManifestFile) << m.dump(); }

  std::filesystem::path dir;
};

}  // namespace

TEST_F(TempDir, RoundTripIsBitExact) {
  Dataset d = sample_data(10, 1);
  d.samples[0].image[3] = 1e-38f;  // subnormal-adjacent values survive
  d.samples[1].image[5] = 0.1f;
  save_dataset(d, matrix().vocabulary(), dir);
  EXPECT_TRUE(std::filesystem::exists(dir / kBlobFile));
  const Dataset back = load_dataset(dir, matrix().vocabulary());
  EXPECT_EQ(back, d);
  EXPECT_EQ(manifest()["version"], "v1");
  EXPECT_EQ(std::filesystem::file_size(dir / kBlobFile), d.size() * d.dims.pixels() * 4);
}

TEST_F(TempDir, CorruptedBlobFailsChecksum) {
  save_dataset(sample_data(3, 2), matrix().vocabulary(), dir);
  {
    std::fstream f(dir / kBlobFile, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(17);
    f.put('\x5a');
  }
  EXPECT_THROW(load_dataset(dir, matrix().vocabulary()), LoadError);
}

TEST_F(TempDir, MissingOrTruncatedBlob) {
  save_dataset(sample_data(3, 2), matrix().vocabulary(), dir);
  std::filesystem::resize_file(dir / kBlobFile, 100);
  EXPECT_THROW(load_dataset(dir, matrix().vocabulary()), LoadError);
  std::filesystem::remove(dir / kBlobFile);
  EXPECT_THROW(load_dataset(dir, matrix().vocabulary()), LoadError);
}

TEST_F(TempDir, VersionAndVocabularyMismatch) {
  save_dataset(sample_data(3, 2), matrix().vocabulary(), dir);
  auto m = manifest();
  m["version"] = "v0";
  write_manifest(m);
  EXPECT_THROW(load_dataset(dir, matrix().vocabulary()), LoadError);
  m["version"] = "v1";
  m["vocabulary_hash"] = "0000";
  write_manifest(m);
  EXPECT_THROW(load_dataset(dir, matrix().vocabulary()), LoadError);
}

TEST_F(TempDir, OverlappingRecordsAndDuplicateIds) {
  save_dataset(sample_data(3, 2), matrix().vocabulary(), dir);
  auto m = manifest();
  m["records"][1]["offset"] = m["records"][0]["offset"];
  write_manifest(m);
  EXPECT_THROW(load_dataset(dir, matrix().vocabulary()), LoadError);
  m = manifest();
  save_dataset(sample_data(3, 2), matrix().vocabulary(), dir);
  m = manifest();
  m["records"][1]["id"] = m["records"][0]["id"];
  write_manifest(m);
  EXPECT_THROW(load_dataset(dir, matrix().vocabulary()), LoadError);
}

TEST(Dhash, IdentityAndLevelInvariance) {
  const Dataset d = random_images(20, 3, 0.0f, 0.5f);
  for (const auto& s : d.samples) {
    const auto h = dhash(s.image, d.dims);
    EXPECT_EQ(hamming(h, dhash(s.image, d.dims)), 0);
    Image shifted = s.image;
    for (auto& v : shifted) v += 0.25f;
    EXPECT_EQ(dhash(shifted, d.dims), h);
  }
  const Image flat_a(1024, 0.2f), flat_b(1024, 0.7f);
  EXPECT_EQ(hamming(dhash(flat_a, {}), dhash(flat_b, {})), 0);
  EXPECT_THROW(dhash(Image(10, 0.f), {}), ShapeError);
}

TEST(Dhash, RandomPairsDifferInAboutHalfTheBits) {
  const Dataset a = random_images(100, 4), b = random_images(100, 5);
  double total = 0;
  for (std::size_t i = 0; i < 100; ++i) total += hamming(dhash(a.samples[i].image, a.dims), dhash(b.samples[i].image, b.dims));
  EXPECT_NEAR(total / 100.0, 32.0, 6.0);
}

TEST(Dhash, HorizontalGradientBits) {
  // Brightness falls left to right, so every cell beats its right neighbour.
  Image img(1024);
  for (std::size_t y = 0; y < 32; ++y) {
    for (std::size_t x = 0; x < 32; ++x) img[y * 32 + x] = 1.0f - static_cast<float>(x) / 31.0f;
  }
  EXPECT_EQ(dhash(img, {}), ~std::uint64_t{0});
  for (auto& v : img) v = 1.0f - v;
  EXPECT_EQ(dhash(img, {}), 0u);
}

TEST(Dedup, Rules) {
  const Dataset a = random_images(30, 6), b = random_images(30, 7);
  EXPECT_TRUE(dedup(a, a, 0).empty());
  EXPECT_EQ(dedup(a, b, 0), a);
  EXPECT_TRUE(dedup(a, b, 64).empty());
  EXPECT_EQ(dedup(a, Dataset{}, 5), a);
  Dataset mixed = b;
  mixed.samples.push_back(a.samples[4]);
  const Dataset out = dedup(a, mixed, 0);
  EXPECT_EQ(out.size(), 29u);
  for (const auto& s : out.samples) EXPECT_NE(s.id, a.samples[4].id);
}
