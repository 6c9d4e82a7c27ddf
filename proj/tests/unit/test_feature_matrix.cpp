#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "unmask/feature_matrix.hpp"

using namespace unmask;

namespace {

const std::string kMatrix = std::string(UNMASK_DATA_DIR) + "/unmask_matrix.json";

ClassFeatureMatrix bundled() { return load_matrix(kMatrix); }

std::set<std::string> names(const FeatureSet& s, const ClassFeatureMatrix& m) {
  auto v = s.names(m.vocabulary());
  return {v.begin(), v.end()};
}

// Independent oracle: union / shared counts straight from the JSON file.
std::pair<std::size_t, std::size_t> brute_force_stats(const std::vector<std::string>& classes) {
  std::ifstream in(kMatrix);
  const auto doc = nlohmann::json::parse(in);
  std::map<std::string, int> count;
  for (const auto& c : classes) {
    std::set<std::string> row;
    for (const auto& f : doc["classes"][c]) {
      const std::string name = f.get<std::string>();
      if (doc["subfeatures"].contains(name)) {
        for (const auto& s : doc["subfeatures"][name]) row.insert(s.get<std::string>());
      } else {
        row.insert(name);
      }
    }
    for (const auto& f : row) ++count[f];
  }
  std::size_t shared = 0;
  for (const auto& [f, n] : count) shared += n >= 2;
  return {count.size(), shared};
}

}  // namespace

TEST(FeatureMatrix, BundledRows) {
  const auto m = bundled();
  EXPECT_EQ(names(m.row("Bicycle"), m), (std::set<std::string>{"saddle", "wheel"}));
  EXPECT_EQ(names(m.row("Television"), m), (std::set<std::string>{"screen"}));
  EXPECT_EQ(names(expected_features(m, "Bird"), m),
            (std::set<std::string>{"beak", "eye", "foot", "head", "leg", "neck", "tail", "torso", "wing"}));
  EXPECT_THROW(expected_features(m, "Unicorn"), LookupError);
  for (std::size_t i = 0; i < m.num_classes(); ++i) EXPECT_FALSE(m.row(i).empty());
}

TEST(FeatureMatrix, NamesAreCaseAndSpaceInsensitive) {
  const auto m = bundled();
  EXPECT_EQ(m.class_index("  bicycle "), m.class_index("Bicycle"));
  EXPECT_EQ(m.vocabulary().id(" WHEEL"), m.vocabulary().id("wheel"));
}

TEST(FeatureMatrix, UnknownFeatureIsALoadError) {
  const std::string text = R"({"features": ["wing"], "subfeatures": {},
    "classes": {"Bird": ["wing",
    "wings2"]}, "class_sets": {}})";
  try {
    parse_matrix(text, "bad.json");
    FAIL() << "expected a load error";
  } catch (const LoadError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("unknown feature"), std::string::npos) << msg;
    EXPECT_NE(msg.find("bad.json"), std::string::npos) << msg;
  }
}

TEST(FeatureMatrix, DuplicateClassIsALoadError) {
  const std::string text = R"({"features": ["wing"], "subfeatures": {},
    "classes": {"Bird": ["wing"], "bird": ["wing"]}, "class_sets": {}})";
  EXPECT_THROW(parse_matrix(text), LoadError);
}

TEST(FeatureMatrix, ParseErrorIsALoadError) {
  EXPECT_THROW(parse_matrix("{\"features\": [", "broken.json"), LoadError);
  EXPECT_THROW(load_matrix("/nonexistent/matrix.json"), Error);
}

TEST(FeatureMatrix, ExpandSubfeatures) {
  const auto m = bundled();
  const auto e = expand_subfeatures(m);
  const auto car = names(e.row("Car"), e);
  for (const char* s : {"vehicle left", "vehicle right", "vehicle top", "vehicle back"}) EXPECT_TRUE(car.count(s));
  EXPECT_FALSE(car.count("vehicle"));
  const auto train = names(e.row("Train"), e);
  std::size_t coach = 0;
  for (const auto& f : train) coach += f.rfind("coach ", 0) == 0;
  EXPECT_EQ(coach, 5u);
  EXPECT_FALSE(train.count("coach"));
  EXPECT_EQ(e.row("Bird"), m.row("Bird"));
  EXPECT_EQ(expand_subfeatures(e), e);
}

TEST(FeatureMatrix, ClassSetStatsMatchTableAndOracle) {
  const auto e = expand_subfeatures(bundled());
  const std::map<std::string, std::pair<std::size_t, std::size_t>> expected = {
      {"CS3a", {29, 2}}, {"CS3b", {18, 9}}, {"CS5a", {34, 8}}, {"CS5b", {34, 10}}};
  for (const auto& [name, ps] : expected) {
    const ClassSet cs = named_class_set(e, name);
    EXPECT_EQ(cs.parts, ps.first) << name;
    EXPECT_EQ(cs.shared, ps.second) << name;
    EXPECT_DOUBLE_EQ(cs.overlap, static_cast<double>(ps.second) / static_cast<double>(ps.first));
    EXPECT_EQ(brute_force_stats(cs.classes), ps) << name;
    EXPECT_EQ(class_set_features(e, cs).size(), cs.parts);
  }
  const ClassSet a = named_class_set(e, "CS3a");
  auto shared = std::set<std::string>{};
  for (auto f : class_set_features(e, a)) {
    int n = 0;
    for (const auto& c : a.classes) n += e.row(c).contains(f);
    if (n >= 2) shared.insert(e.vocabulary().name(f));
  }
  EXPECT_EQ(shared, (std::set<std::string>{"head", "headlight"}));
}

TEST(FeatureMatrix, SingletonOverlapIsZeroAndPartsMonotone) {
  const auto e = expand_subfeatures(bundled());
  std::vector<std::string> growing;
  std::size_t last = 0;
  for (const auto& c : e.classes()) {
    const std::vector<std::string> single = {c};
    EXPECT_EQ(class_set_stats(e, single).overlap, 0.0) << c;
    growing.push_back(c);
    const ClassSet cs = class_set_stats(e, growing);
    EXPECT_GE(cs.parts, last);
    EXPECT_GE(cs.overlap, 0.0);
    EXPECT_LE(cs.overlap, 1.0);
    last = cs.parts;
  }
  EXPECT_THROW(class_set_stats(e, std::vector<std::string>{}), Error);
}

TEST(FeatureMatrix, FeatureSetOperations) {
  FeatureSet a{3, 1, 2, 2};
  EXPECT_EQ(a.ids(), (std::vector<FeatureId>{1, 2, 3}));
  FeatureSet b{2, 5};
  EXPECT_EQ(intersection_size(a, b), 1u);
  EXPECT_EQ(union_size(a, b), 4u);
  EXPECT_EQ(set_union(a, b), (FeatureSet{1, 2, 3, 5}));
  a.erase(2);
  a.insert(9);
  EXPECT_EQ(a, (FeatureSet{1, 3, 9}));
}

TEST(FeatureMatrix, CorrectedHandlebarMatrixLoads) {
  const auto m = load_matrix(std::string(UNMASK_DATA_DIR) + "/unmask_matrix_handlebar.json");
  EXPECT_TRUE(m.vocabulary().find("handlebar").has_value());
}
