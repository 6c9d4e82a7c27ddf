#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "unmask/datagen.hpp"
#include "unmask/extractor.hpp"
#include "unmask/robust_stats.hpp"

using namespace unmask;

namespace {

const ClassFeatureMatrix& matrix() {
  static const ClassFeatureMatrix m =
      expand_subfeatures(load_matrix(std::string(UNMASK_DATA_DIR) + "/unmask_matrix.json"));
  return m;
}

struct Fixture {
  ClassSet cs;
  LayoutSpec layout;
  DatasetSplits splits;
  std::vector<FeatureId> features;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    x.cs = named_class_set(matrix(), "CS3a");
    x.layout = feature_layout(matrix(), x.cs, 1);
    x.splits = generate_dataset(matrix(), x.cs, x.layout, 200, 0.2, 2, {0.7, 0.0, 0.3});
    x.features = class_set_features(matrix(), x.cs).ids();
    return x;
  }();
  return f;
}

// Per-feature counts kept in maps keyed by name, independent of the library loop.
double oracle_f1(const Extractor& k, const Dataset& data, const std::vector<FeatureId>& features, double cutoff) {
  std::map<FeatureId, double> tp, fp, fn;
  for (const auto& s : data.samples) {
    std::set<FeatureId> pred;
    for (const auto& d : k.extract(s).detections) {
      if (d.confidence >= cutoff) pred.insert(d.feature);
    }
    for (FeatureId f : features) {
      const bool t = s.truth_features.contains(f), p = pred.count(f) > 0;
      tp[f] += t && p;
      fp[f] += !t && p;
      fn[f] += t && !p;
    }
  }
  double sum = 0;
  int n = 0;
  for (FeatureId f : features) {
    if (tp[f] + fp[f] + fn[f] == 0) continue;
    const double precision = tp[f] + fp[f] > 0 ? tp[f] / (tp[f] + fp[f]) : 0.0;
    const double recall = tp[f] + fn[f] > 0 ? tp[f] / (tp[f] + fn[f]) : 0.0;
    sum += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    ++n;
  }
  return n ? sum / n : 0.0;
}

const TrainedExtractor& trained() {
  static const TrainedExtractor k = [] {
    const auto& f = fixture();
    const auto annotated = generate_dataset(matrix(), f.cs, f.layout, 500, 0.2, 7, {1, 0, 0}).train;
    const Dataset clean = build_robust_dataset(annotated, class_set_features(matrix(), f.cs), f.layout, 4);
    ExtractorTraining opt;
    opt.train.seed = 3;
    return train_extractor(clean, f.features, matrix().vocabulary(), opt);
  }();
  return k;
}

}  // namespace

TEST(ExtractionResult, InvariantsEnforced) {
  ExtractionResult r;
  r.add(3, 0.5);
  r.add(1, 1.0);
  EXPECT_EQ(r.detections.front().feature, 1);
  EXPECT_THROW(r.add(3, 0.7), Error);
  EXPECT_THROW(r.add(4, 1.5), Error);
  EXPECT_THROW(r.add(4, -0.1), Error);
  ExtractorNoise bad;
  bad.p_miss = 1.2;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ToFeatureSet, CutoffRule) {
  const auto& v = matrix().vocabulary();
  ExtractionResult r;
  r.add(v.id("wheel"), 0.9);
  r.add(v.id("beak"), 0.3);
  r.add(v.id("head"), 1.0);
  EXPECT_EQ(to_feature_set(r, 0.5), (FeatureSet{v.id("wheel"), v.id("head")}));
  EXPECT_EQ(to_feature_set(r, 0.0).size(), 3u);
  EXPECT_EQ(to_feature_set(r, 1.0), (FeatureSet{v.id("head")}));
  std::size_t last = 4;
  for (double c = 0.0; c <= 1.0; c += 0.05) {
    const std::size_t n = to_feature_set(r, c).size();
    EXPECT_LE(n, last);
    last = n;
  }
}

TEST(Oracle, NoiselessIsExact) {
  const auto& f = fixture();
  OracleExtractor k(class_set_features(matrix(), f.cs), {0.0, 0.0}, 1);
  for (const auto& s : f.splits.test.samples) {
    const auto r = k.extract(s);
    for (const auto& d : r.detections) EXPECT_EQ(d.confidence, 1.0);
    EXPECT_EQ(to_feature_set(r, 0.5), s.truth_features);
  }
  EXPECT_EQ(mean_feature_f1(k, f.splits.test, f.features), 1.0);
}

TEST(Oracle, AllMissedIsEmpty) {
  const auto& f = fixture();
  OracleExtractor k(class_set_features(matrix(), f.cs), {1.0, 0.0}, 1);
  for (const auto& s : f.splits.test.samples) EXPECT_TRUE(k.extract(s).detections.empty());
  EXPECT_EQ(mean_feature_f1(k, f.splits.test, f.features), 0.0);
}

TEST(Oracle, NoiseIsSeededPerSampleAndHasTheRightRates) {
  const auto& f = fixture();
  const FeatureSet candidates = class_set_features(matrix(), f.cs);
  OracleExtractor a(candidates, {0.3, 0.2}, 5), b(candidates, {0.3, 0.2}, 5), c(candidates, {0.3, 0.2}, 6);
  double kept = 0, truth = 0, spurious = 0;
  bool differs = false;
  for (const auto& s : f.splits.train.samples) {
    const auto r = a.extract(s);
    EXPECT_EQ(r, b.extract(s));
    differs = differs || !(r == c.extract(s));
    std::size_t foreign = 0;
    for (const auto& d : r.detections) {
      EXPECT_TRUE(candidates.contains(d.feature));
      if (s.truth_features.contains(d.feature)) {
        ++kept;
      } else {
        ++foreign;
      }
    }
    EXPECT_LE(foreign, 1u);
    spurious += static_cast<double>(foreign);
    truth += static_cast<double>(s.truth_features.size());
  }
  EXPECT_TRUE(differs);
  const double n = static_cast<double>(f.splits.train.size());
  EXPECT_NEAR(kept / truth, 0.7, 0.03);
  EXPECT_NEAR(spurious / n, 0.2, 0.04);
}

TEST(Oracle, F1MatchesIndependentCount) {
  const auto& f = fixture();
  OracleExtractor k(class_set_features(matrix(), f.cs), {0.25, 0.3}, 9);
  EXPECT_NEAR(mean_feature_f1(k, f.splits.test, f.features), oracle_f1(k, f.splits.test, f.features, 0.5), 1e-12);
}

TEST(FileExtractor, RoundTripAndUnknownId) {
  const auto& f = fixture();
  OracleExtractor k(class_set_features(matrix(), f.cs), {0.2, 0.05}, 2);
  const auto path = std::filesystem::temp_directory_path() / "unmask_test_detections.jsonl";
  export_detections(k, f.splits.test, matrix().vocabulary(), path);
  const FileExtractor loaded = FileExtractor::load(path, matrix().vocabulary());
  EXPECT_EQ(loaded.size(), f.splits.test.size());
  for (const auto& s : f.splits.test.samples) EXPECT_EQ(loaded.extract(s), k.extract(s));
  Sample unknown;
  unknown.id = "nobody-000000";
  EXPECT_THROW(loaded.extract(unknown), LookupError);

  std::ofstream(path) << "{\"id\": \"x\", \"detections\": [{\"feature\": \"no such part\", \"confidence\": 1}]}\n";
  EXPECT_THROW(FileExtractor::load(path, matrix().vocabulary()), LoadError);
  std::filesystem::remove(path);
}

TEST(Trained, UntrainedIsNearChance) {
  const auto& f = fixture();
  ExtractorTraining opt;
  opt.train.epochs = 0;
  const auto k = train_extractor(f.splits.train, f.features, matrix().vocabulary(), opt);
  const Eigen::MatrixXd c = k.confidences(image_matrix(f.splits.test));
  EXPECT_NEAR(c.mean(), 0.5, 0.05);
  EXPECT_LT((c.array() - 0.5).abs().maxCoeff(), 0.2);
}

TEST(Trained, LearnsFeaturesOnHeldOutData) {
  const auto& f = fixture();
  const double f1 = mean_feature_f1(trained(), f.splits.test, f.features);
  EXPECT_NEAR(f1, oracle_f1(trained(), f.splits.test, f.features, 0.5), 1e-12);
  EXPECT_GE(f1, 0.8);
  RecordProperty("f1", std::to_string(f1));
}

TEST(Trained, DeterministicPerSeed) {
  const auto& f = fixture();
  ExtractorTraining opt;
  opt.hidden = {16};
  opt.train.epochs = 2;
  opt.train.seed = 11;
  const auto a = train_extractor(f.splits.train, f.features, matrix().vocabulary(), opt);
  const auto b = train_extractor(f.splits.train, f.features, matrix().vocabulary(), opt);
  EXPECT_EQ(a.net(), b.net());
  opt.train.seed = 12;
  EXPECT_FALSE(a.net() == train_extractor(f.splits.train, f.features, matrix().vocabulary(), opt).net());
}

TEST(Trained, DependsOnlyOnPixels) {
  const auto& f = fixture();
  Sample s = f.splits.test.samples.front();
  const auto before = trained().extract(s);
  s.id = "renamed-000001";
  s.label = "Train";
  s.truth_features = {};
  EXPECT_EQ(trained().extract(s), before);
  s.image[0] = s.image[0] > 0.5f ? 0.0f : 1.0f;
  for (auto& v : s.image) v = 1.0f - v;
  EXPECT_FALSE(trained().extract(s) == before);
}

TEST(Trained, Errors) {
  const auto& f = fixture();
  EXPECT_THROW(train_extractor(Dataset{}, f.features, matrix().vocabulary(), {}), Error);
  EXPECT_THROW(train_extractor(f.splits.train, {}, matrix().vocabulary(), {}), ConfigError);
  Sample wrong;
  wrong.image.assign(10, 0.5f);
  EXPECT_THROW(trained().extract(wrong), ShapeError);
}
