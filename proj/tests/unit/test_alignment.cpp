#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "unmask/alignment.hpp"

using namespace unmask;

namespace {

const ClassFeatureMatrix& matrix() {
  static const ClassFeatureMatrix m =
      expand_subfeatures(load_matrix(std::string(UNMASK_DATA_DIR) + "/unmask_matrix.json"));
  return m;
}

FeatureSet fs(std::initializer_list<const char*> names) {
  FeatureSet s;
  for (const char* n : names) s.insert(matrix().vocabulary().id(n));
  return s;
}

FeatureSet random_set(std::mt19937_64& rng, std::size_t vocab) {
  FeatureSet s;
  std::uniform_int_distribution<int> size(0, 8);
  std::uniform_int_distribution<std::size_t> pick(0, vocab - 1);
  for (int i = size(rng); i > 0; --i) s.insert(static_cast<FeatureId>(pick(rng)));
  return s;
}

// Set-based oracle, independent of FeatureSet's merge helpers.
double oracle_jaccard(const FeatureSet& a, const FeatureSet& b) {
  std::set<FeatureId> sa(a.begin(), a.end()), sb(b.begin(), b.end()), u = sa;
  u.insert(sb.begin(), sb.end());
  if (u.empty()) return 0.0;
  std::size_t inter = 0;
  for (auto f : sa) inter += sb.count(f);
  return static_cast<double>(inter) / static_cast<double>(u.size());
}

// Feature sets by sample id; ignores pixels.
class TableExtractor final : public Extractor {
 public:
  explicit TableExtractor(std::map<std::string, FeatureSet> t) : table_(std::move(t)) {}
  ExtractionResult extract(const Sample& s) const override {
    ExtractionResult r;
    for (auto f : table_.at(s.id)) r.add(f, 1.0);
    return r;
  }
  std::string kind() const override { return "table"; }

 private:
  std::map<std::string, FeatureSet> table_;
};

TinyNet constant_net(const std::vector<std::string>& labels) {
  Architecture arch;
  arch.widths = {4, labels.size()};
  arch.labels = labels;
  return TinyNet::zeros(arch);  // all logits equal: predicts the first label
}

}  // namespace

TEST(Jaccard, Examples) {
  EXPECT_EQ(jaccard(fs({"wheel", "saddle"}), fs({"beak", "wing", "tail"})), 0.0);
  const auto a = fs({"head", "leg"});
  EXPECT_EQ(jaccard(a, a), 1.0);
  EXPECT_DOUBLE_EQ(jaccard(fs({"head", "headlight"}), fs({"head", "leg", "neck"})), 0.25);
  EXPECT_EQ(jaccard(FeatureSet{}, FeatureSet{}), 0.0);
  EXPECT_EQ(jaccard(FeatureSet{}, a), 0.0);
}

TEST(Jaccard, RandomizedProperties) {
  std::mt19937_64 rng(11);
  const std::size_t vocab = matrix().vocabulary().size();
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_set(rng, vocab), b = random_set(rng, vocab);
    const double s = jaccard(a, b);
    EXPECT_EQ(s, jaccard(b, a));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    EXPECT_DOUBLE_EQ(s, oracle_jaccard(a, b));
    EXPECT_EQ(s == 1.0, a == b && !a.empty());
  }
}

TEST(Detect, BoundaryAndExamples) {
  const auto d1 = detect(fs({"wheel"}), fs({"beak"}), 0.5);
  EXPECT_EQ(d1.similarity, 0.0);
  EXPECT_EQ(d1.distance, 1.0);
  EXPECT_EQ(d1.verdict, Verdict::adversarial);
  const auto same = fs({"beak", "wing"});
  const auto d2 = detect(same, same, 0.5);
  EXPECT_EQ(d2.distance, 0.0);
  EXPECT_EQ(d2.verdict, Verdict::benign);
  const auto d3 = detect(fs({"beak", "wing"}), fs({"beak"}), 0.5);
  EXPECT_EQ(d3.distance, 0.5);
  EXPECT_TRUE(d3.adversarial());
  EXPECT_THROW(detect(same, same, 1.5), ConfigError);
  EXPECT_THROW(detect(same, same, -0.1), ConfigError);
}

TEST(Detect, RandomizedMonotoneInThreshold) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t vocab = matrix().vocabulary().size();
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_set(rng, vocab), b = random_set(rng, vocab);
    const double t = unit(rng);
    const auto d = detect(a, b, t);
    EXPECT_EQ(d.distance, 1.0 - d.similarity);
    EXPECT_EQ(d.adversarial(), d.distance >= t);
    EXPECT_TRUE(detect(a, b, 0.0).adversarial());
    if (!d.adversarial()) EXPECT_FALSE(detect(a, b, std::min(1.0, t + unit(rng) * (1.0 - t))).adversarial());
  }
}

TEST(Rectify, Examples) {
  const auto& m = matrix();
  const ClassSet bird_bike = class_set_stats(m, std::vector<std::string>{"Bird", "Bicycle"});
  EXPECT_EQ(rectify(fs({"wheel", "saddle"}), m, bird_bike), "Bicycle");
  const ClassSet cs3b = named_class_set(m, "CS3b");
  EXPECT_EQ(rectify(m.row("Bird"), m, cs3b), "Bird");
  // Empty extraction: all zero, first class in matrix order wins.
  EXPECT_EQ(rectify(FeatureSet{}, m, cs3b), "Bird");
  const ClassSet reversed = class_set_stats(m, std::vector<std::string>{"Person", "Dog", "Bird"});
  EXPECT_EQ(rectify(FeatureSet{}, m, reversed), "Bird");
}

TEST(Rectify, RandomizedArgmaxWithTieBreak) {
  const auto& m = matrix();
  std::mt19937_64 rng(13);
  const std::size_t vocab = m.vocabulary().size();
  for (const char* name : {"CS3a", "CS3b", "CS5a", "CS5b"}) {
    const ClassSet cs = named_class_set(m, name);
    for (const auto& c : cs.classes) EXPECT_EQ(rectify(m.row(c), m, cs), c);
    for (int i = 0; i < 2500; ++i) {
      const auto x = random_set(rng, vocab);
      // Oracle: scan classes in matrix order, keep the first maximum.
      std::string best;
      double best_s = -1;
      for (const auto& c : m.classes()) {
        if (std::find(cs.classes.begin(), cs.classes.end(), c) == cs.classes.end()) continue;
        const double s = oracle_jaccard(x, m.row(c));
        if (s > best_s) best_s = s, best = c;
      }
      EXPECT_EQ(rectify(x, m, cs), best);
    }
  }
}

TEST(Pipeline, BenignAndAttackedWalkthrough) {
  const auto& m = matrix();
  const ClassSet cs = class_set_stats(m, std::vector<std::string>{"Bird", "Bicycle"});
  const TinyNet net = constant_net({"Bird", "Bicycle"});
  TableExtractor ex({{"bike", m.row("Bicycle")}, {"bird", m.row("Bird")}});
  PipelineParts parts{&net, &ex, &m, &cs, 0.5, 0.5, PipelineMode::detect_then_rectify};
  Sample bike{"bike", Image(4, 0.5f), "Bicycle", m.row("Bicycle")};
  Sample bird{"bird", Image(4, 0.5f), "Bird", m.row("Bird")};

  const auto benign = unmask_pipeline(bird, parts);
  EXPECT_EQ(benign.model_prediction, "Bird");
  EXPECT_EQ(benign.detection.verdict, Verdict::benign);
  EXPECT_EQ(benign.predicted_class, "Bird");
  EXPECT_FALSE(benign.rectified);

  const auto attacked = unmask_pipeline(bike, parts);  // the net says Bird
  EXPECT_EQ(attacked.detection.verdict, Verdict::adversarial);
  EXPECT_EQ(attacked.predicted_class, "Bicycle");
  EXPECT_TRUE(attacked.rectified);

  parts.threshold = 0.0;
  EXPECT_TRUE(unmask_pipeline(bird, parts).detection.adversarial());
}

TEST(Pipeline, ModesAndInvariant) {
  const auto& m = matrix();
  const ClassSet cs = named_class_set(m, "CS3b");
  const TinyNet net = constant_net(cs.classes);
  // Mixed Bird/Dog extraction; d = 0.3 against the predicted Bird, benign at t = 0.9.
  const FeatureSet dogish = fs({"ear", "eye", "head", "leg", "neck", "tail", "torso", "beak"});
  TableExtractor ex({{"x", dogish}});
  Sample x{"x", Image(4, 0.5f), "Dog", dogish};
  PipelineParts parts{&net, &ex, &m, &cs, 0.9, 0.5, PipelineMode::detect_then_rectify};
  const auto gated = unmask_pipeline(x, parts);
  EXPECT_FALSE(gated.detection.adversarial());
  EXPECT_EQ(gated.predicted_class, gated.model_prediction);
  parts.mode = PipelineMode::always_rectify;
  const auto always = unmask_pipeline(x, parts);
  EXPECT_EQ(always.predicted_class, rectify(dogish, m, cs));
  EXPECT_TRUE(always.rectified);
  EXPECT_EQ(pipeline_mode_from_string("always_rectify"), PipelineMode::always_rectify);
  EXPECT_EQ(pipeline_mode_from_string(to_string(PipelineMode::detect_then_rectify)),
            PipelineMode::detect_then_rectify);
  EXPECT_THROW(pipeline_mode_from_string("sometimes"), ConfigError);
}

TEST(Pipeline, MissingComponentIsAConfigError) {
  PipelineParts parts;
  Sample s{"s", Image(4, 0.5f), "Bird", {}};
  EXPECT_THROW(unmask_pipeline(s, parts), ConfigError);
}
