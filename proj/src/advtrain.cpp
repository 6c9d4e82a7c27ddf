#include "unmask/advtrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "unmask/svg.hpp"

namespace unmask {

namespace {

std::vector<int> column_labels(const Eigen::MatrixXd& targets) {
  std::vector<int> labels(static_cast<std::size_t>(targets.cols()));
  for (Eigen::Index j = 0; j < targets.cols(); ++j) {
    Eigen::Index k = 0;
    targets.col(j).maxCoeff(&k);
    labels[static_cast<std::size_t>(j)] = static_cast<int>(k);
  }
  return labels;
}

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[32];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

Batch classifier_batch(const Dataset& data, const std::vector<std::string>& labels) {
  const auto idx = label_indices(data, labels);
  return Batch{image_matrix(data), one_hot(idx, labels.size())};
}

std::size_t correct_count(const TinyNet& net, const Dataset& data) {
  if (data.empty()) return 0;
  const auto truth = label_indices(data, net.labels());
  const auto pred = predict(net, image_matrix(data));
  std::size_t k = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) k += pred[i] == truth[i] ? 1 : 0;
  return k;
}

double accuracy(const TinyNet& net, const Dataset& data) {
  if (data.empty()) throw Error("cannot score an empty dataset");
  return static_cast<double>(correct_count(net, data)) / static_cast<double>(data.size());
}

std::size_t robust_correct_count(const TinyNet& net, const Dataset& data, const AttackConfig& attack) {
  const auto result = attack_batch(net, data, attack);
  return static_cast<std::size_t>(std::count(result.success.begin(), result.success.end(), false));
}

double robust_accuracy(const TinyNet& net, const Dataset& data, const AttackConfig& attack) {
  if (data.empty()) throw Error("cannot score an empty dataset");
  return static_cast<double>(robust_correct_count(net, data, attack)) / static_cast<double>(data.size());
}

TrainResult adv_train(TinyNet net, const Batch& data, const AttackConfig& inner, const TrainOptions& options,
                      int warmup_epochs) {
  if (inner.method != AttackMethod::pgd) throw ConfigError("adversarial training uses a PGD inner attack");
  if (warmup_epochs < 0) throw ConfigError("warmup epochs must be >= 0");
  inner.validate();
  if (inner.epsilon() == 0.0) return train(std::move(net), data, options);
  const BatchTransform transform = [&inner, warmup_epochs](const TinyNet& current, Eigen::MatrixXd& inputs,
                                                           const Eigen::MatrixXd& targets, int epoch,
                                                           std::uint64_t batch_seed) {
    AttackConfig cfg = inner;
    if (epoch < warmup_epochs) {
      const double ramp = static_cast<double>(epoch + 1) / static_cast<double>(warmup_epochs + 1);
      cfg.epsilon_255 *= ramp;
      cfg.step_255 *= ramp;
    }
    const std::vector<int> labels = column_labels(targets);
    std::vector<std::uint64_t> seeds(labels.size());
    for (std::size_t j = 0; j < seeds.size(); ++j) seeds[j] = mix_seed(batch_seed, j);
    inputs = attack_columns(current, inputs, labels, cfg, seeds);
  };
  return train_with_transform(std::move(net), data, options, transform);
}

AttackConfig inner_pgd(double epsilon_255, Norm norm, int steps) {
  AttackConfig cfg;
  cfg.method = AttackMethod::pgd;
  cfg.norm = norm;
  cfg.epsilon_255 = epsilon_255;
  cfg.steps = steps;
  cfg.step_255 = epsilon_255 > 0 ? 2.5 * epsilon_255 / steps : 1.0;
  return cfg;
}

double LineSearchReport::accuracy(std::size_t row, std::size_t col) const {
  return validation_size == 0 ? 0.0
                              : static_cast<double>(correct.at(row).at(col)) / static_cast<double>(validation_size);
}

double LineSearchReport::clean_accuracy(std::size_t row) const {
  return validation_size == 0 ? 0.0 : static_cast<double>(clean_correct.at(row)) / static_cast<double>(validation_size);
}

double LineSearchReport::mean_accuracy(std::size_t row) const {
  if (attacks.empty() || validation_size == 0) return 0.0;
  const auto total = std::accumulate(correct.at(row).begin(), correct.at(row).end(), std::size_t{0});
  return static_cast<double>(total) / static_cast<double>(validation_size * attacks.size());
}

std::size_t select_epsilon(const std::vector<double>& grid, const std::vector<std::vector<std::size_t>>& correct) {
  if (grid.empty()) throw ConfigError("epsilon grid is empty");
  if (correct.size() != grid.size()) throw ShapeError("one accuracy row per grid value required");
  // Integer totals make the comparison independent of the order of attacks.
  std::size_t best = 0;
  std::size_t best_total = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto total = std::accumulate(correct[i].begin(), correct[i].end(), std::size_t{0});
    const bool better = i == 0 || total > best_total || (total == best_total && grid[i] < grid[best]);
    if (better) {
      best = i;
      best_total = total;
    }
  }
  return best;
}

LineSearchReport epsilon_line_search(const Dataset& train_set, const Dataset& val, const std::vector<double>& grid,
                                     const std::vector<AttackConfig>& eval_attacks,
                                     const LineSearchOptions& options) {
  if (grid.empty()) throw ConfigError("epsilon grid is empty");
  if (val.empty()) throw Error("validation set is empty");
  for (double e : grid) {
    if (!(e >= 0)) throw ConfigError("epsilon grid values must be >= 0");
  }
  LineSearchReport report;
  report.grid = grid;
  report.validation_size = val.size();
  for (const auto& a : eval_attacks) report.attacks.push_back(a.describe());
  const Batch batch = classifier_batch(train_set, options.arch.labels);
  for (double eps : grid) {
    TinyNet net = TinyNet::init(options.arch, options.train.seed);
    net = adv_train(std::move(net), batch, inner_pgd(eps, Norm::linf, options.inner_steps), options.train,
                   options.warmup_epochs)
              .net;
    report.clean_correct.push_back(correct_count(net, val));
    std::vector<std::size_t> row;
    for (const auto& attack : eval_attacks) row.push_back(robust_correct_count(net, val, attack));
    report.correct.push_back(std::move(row));
  }
  report.chosen = grid[select_epsilon(grid, report.correct)];
  return report;
}

void write_line_search_csv(const LineSearchReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << "epsilon,clean";
  for (const auto& a : report.attacks) out << ',' << a;
  out << ",mean,chosen\n";
  for (std::size_t i = 0; i < report.grid.size(); ++i) {
    out << fmt(report.grid[i], "%g") << ',' << fmt(report.clean_accuracy(i));
    for (std::size_t j = 0; j < report.attacks.size(); ++j) out << ',' << fmt(report.accuracy(i, j));
    out << ',' << fmt(report.mean_accuracy(i)) << ',' << (report.grid[i] == report.chosen ? 1 : 0) << '\n';
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

void write_line_search_svg(const LineSearchReport& report, const std::filesystem::path& path) {
  BarChart chart;
  chart.title = "Validation accuracy per attack vector";
  chart.y_label = "accuracy";
  for (double e : report.grid) chart.series.push_back("eps=" + fmt(e, "%g"));
  for (std::size_t j = 0; j < report.attacks.size(); ++j) {
    BarGroup g;
    g.label = report.attacks[j];
    for (std::size_t i = 0; i < report.grid.size(); ++i) g.values.push_back(report.accuracy(i, j));
    chart.groups.push_back(std::move(g));
  }
  write_text_file(path, render_bar_chart(chart));
}

}  // namespace unmask
