#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "unmask/advtrain.hpp"
#include "unmask/datagen.hpp"

using namespace unmask;

namespace {

struct Fixture {
  ClassSet cs;
  DatasetSplits splits;
  Architecture arch;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    const auto m = expand_subfeatures(load_matrix(std::string(UNMASK_DATA_DIR) + "/unmask_matrix.json"));
    x.cs = named_class_set(m, "CS3a");
    const auto layout = feature_layout(m, x.cs, 1);
    x.splits = generate_dataset(m, x.cs, layout, 200, 0.2, 2, {0.6, 0.1, 0.3});
    x.arch.widths = {layout.dims().pixels(), 64, 32, x.cs.classes.size()};
    x.arch.labels = x.cs.classes;
    return x;
  }();
  return f;
}

Batch train_batch() { return classifier_batch(fixture().splits.train, fixture().arch.labels); }

TrainOptions opts(int epochs) {
  TrainOptions o;
  o.epochs = epochs;
  o.seed = 4;
  return o;
}

}  // namespace

TEST(AdvTrain, ZeroBudgetReproducesPlainTraining) {
  const TinyNet init = TinyNet::init(fixture().arch, 1);
  const auto plain = train(init, train_batch(), opts(2));
  for (int warmup : {0, 1}) {
    const auto adv = adv_train(init, train_batch(), inner_pgd(0.0), opts(2), warmup);
    EXPECT_EQ(adv.net, plain.net);
    EXPECT_EQ(adv.loss_curve, plain.loss_curve);
  }
}

TEST(AdvTrain, ZeroEpochsLeavesNetUnchanged) {
  const TinyNet init = TinyNet::init(fixture().arch, 1);
  EXPECT_EQ(adv_train(init, train_batch(), inner_pgd(4.0), opts(0)).net, init);
}

TEST(AdvTrain, Errors) {
  const TinyNet init = TinyNet::init(fixture().arch, 1);
  EXPECT_THROW(adv_train(init, Batch{}, inner_pgd(4.0), opts(1)), Error);
  AttackConfig mia = inner_pgd(4.0);
  mia.method = AttackMethod::mia;
  EXPECT_THROW(adv_train(init, train_batch(), mia, opts(1)), ConfigError);
  TrainOptions zero_lr = opts(1);
  zero_lr.lr = 0.0;
  EXPECT_THROW(adv_train(init, train_batch(), inner_pgd(4.0), zero_lr), ConfigError);
  EXPECT_THROW(adv_train(init, train_batch(), inner_pgd(4.0), opts(1), -1), ConfigError);
}

TEST(AdvTrain, InnerStepRule) {
  const AttackConfig c = inner_pgd(4.0, Norm::linf, 5);
  EXPECT_EQ(c.method, AttackMethod::pgd);
  EXPECT_EQ(c.steps, 5);
  EXPECT_DOUBLE_EQ(c.step_255, 2.0);
  EXPECT_DOUBLE_EQ(c.epsilon_255, 4.0);
}

TEST(AdvTrain, DeterministicPerSeed) {
  const TinyNet init = TinyNet::init(fixture().arch, 1);
  const auto a = adv_train(init, train_batch(), inner_pgd(4.0), opts(1));
  const auto b = adv_train(init, train_batch(), inner_pgd(4.0), opts(1));
  EXPECT_EQ(a.net, b.net);
}

TEST(AdvTrain, RobustAccuracyBeatsUndefended) {
  const auto& f = fixture();
  const TinyNet init = TinyNet::init(f.arch, 1);
  const TinyNet plain = train(init, train_batch(), opts(10)).net;
  const TinyNet robust = adv_train(init, train_batch(), inner_pgd(4.0, Norm::linf, 5), opts(15), 5).net;
  AttackConfig pgd4;
  pgd4.epsilon_255 = 4;
  pgd4.step_255 = 0.5;
  const double plain_acc = robust_accuracy(plain, f.splits.test, pgd4);
  const double robust_acc = robust_accuracy(robust, f.splits.test, pgd4);
  RecordProperty("plain", std::to_string(plain_acc));
  RecordProperty("robust", std::to_string(robust_acc));
  EXPECT_GT(robust_acc, plain_acc);
}

TEST(Accuracy, CountsMatchPredictions) {
  const auto& f = fixture();
  const TinyNet net = TinyNet::init(f.arch, 3);
  const auto preds = predict(net, image_matrix(f.splits.test));
  const auto labels = label_indices(f.splits.test, f.arch.labels);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
  EXPECT_EQ(correct_count(net, f.splits.test), hits);
  EXPECT_DOUBLE_EQ(accuracy(net, f.splits.test), static_cast<double>(hits) / static_cast<double>(preds.size()));
  AttackConfig none;
  none.epsilon_255 = 0;
  EXPECT_EQ(robust_correct_count(net, f.splits.test, none), hits);
  EXPECT_THROW(accuracy(net, Dataset{}), Error);
}

TEST(SelectEpsilon, MeanRuleWithSmallerTieBreak) {
  const std::vector<double> grid = {1, 2, 4};
  EXPECT_EQ(select_epsilon(grid, {{5, 5}, {9, 3}, {6, 6}}), 1u);  // means 5, 6, 6: tie goes to eps 2
  EXPECT_EQ(select_epsilon(grid, {{1, 1}, {0, 0}, {9, 9}}), 2u);
  EXPECT_EQ(select_epsilon({4.0}, {{0, 0}}), 0u);
  EXPECT_THROW(select_epsilon({}, {}), ConfigError);
  EXPECT_THROW(select_epsilon(grid, {{1}}), ShapeError);
}

TEST(SelectEpsilon, OrderOfAttacksDoesNotMatter) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> grid = {1, 2, 4, 6, 8, 16};
    std::vector<std::vector<std::size_t>> table(grid.size(), std::vector<std::size_t>(8));
    for (auto& row : table) {
      for (auto& v : row) v = rng() % 20;
    }
    auto shuffled = table;
    std::vector<std::size_t> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      for (std::size_t j = 0; j < 8; ++j) shuffled[i][j] = table[i][perm[j]];
    }
    EXPECT_EQ(select_epsilon(grid, table), select_epsilon(grid, shuffled));
  }
}

TEST(LineSearch, OneRowPerGridValue) {
  const auto& f = fixture();
  LineSearchOptions opt;
  opt.arch = f.arch;
  opt.train = opts(1);
  opt.inner_steps = 2;
  opt.warmup_epochs = 0;
  std::vector<AttackConfig> attacks(2);
  attacks[0].epsilon_255 = 2;
  attacks[0].steps = 2;
  attacks[1] = attacks[0];
  attacks[1].method = AttackMethod::mia;
  const std::vector<double> grid = {1, 2, 4, 6, 8, 16};
  const auto r = epsilon_line_search(f.splits.train, f.splits.val, grid, attacks, opt);
  EXPECT_EQ(r.grid, grid);
  ASSERT_EQ(r.correct.size(), 6u);
  for (const auto& row : r.correct) EXPECT_EQ(row.size(), 2u);
  EXPECT_EQ(r.attacks.size(), 2u);
  EXPECT_EQ(r.validation_size, f.splits.val.size());
  EXPECT_NE(std::find(grid.begin(), grid.end(), r.chosen), grid.end());
  EXPECT_EQ(r.chosen, grid[select_epsilon(grid, r.correct)]);

  const auto dir = std::filesystem::temp_directory_path() / "unmask_test_linesearch";
  std::filesystem::create_directories(dir);
  write_line_search_csv(r, dir / "ls.csv");
  write_line_search_svg(r, dir / "ls.svg");
  std::ifstream in(dir / "ls.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epsilon,clean," + r.attacks[0] + "," + r.attacks[1] + ",mean,chosen");
  int rows = 0, chosen = 0;
  while (std::getline(in, line)) {
    ++rows;
    chosen += line.back() == '1';
  }
  EXPECT_EQ(rows, 6);
  EXPECT_EQ(chosen, 1);
  std::stringstream svg;
  svg << std::ifstream(dir / "ls.svg").rdbuf();
  EXPECT_NE(svg.str().find("<svg"), std::string::npos);
  std::filesystem::remove_all(dir);

  const auto single = epsilon_line_search(f.splits.train, f.splits.val, {4.0}, attacks, opt);
  EXPECT_EQ(single.chosen, 4.0);
  EXPECT_THROW(epsilon_line_search(f.splits.train, f.splits.val, {}, attacks, opt), ConfigError);
}
