#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "unmask/attacks.hpp"
#include "unmask/dataset.hpp"
#include "unmask/tinynet.hpp"

namespace unmask {

/// Softmax training batch for `net` built from a labelled dataset.
Batch classifier_batch(const Dataset& data, const std::vector<std::string>& labels);

/// Fraction of samples the net classifies correctly.
double accuracy(const TinyNet& net, const Dataset& data);
std::size_t correct_count(const TinyNet& net, const Dataset& data);

/// Accuracy of `net` on `data` after attacking every sample against `net`.
std::size_t robust_correct_count(const TinyNet& net, const Dataset& data, const AttackConfig& attack);
double robust_accuracy(const TinyNet& net, const Dataset& data, const AttackConfig& attack);

/// Min-max training: every mini-batch is replaced by its PGD counterpart
/// (against the current weights) before the gradient step. No clean mixing.
/// The budget (and step) ramps linearly from 0 to the target over the first
/// `warmup_epochs` epochs. With a zero budget the batches are left untouched,
/// reproducing train().
TrainResult adv_train(TinyNet net, const Batch& data, const AttackConfig& inner, const TrainOptions& options,
                      int warmup_epochs = 0);

/// Inner PGD used for training at budget `epsilon_255`: `steps` iterations of
/// size 2.5 * eps / steps.
AttackConfig inner_pgd(double epsilon_255, Norm norm = Norm::linf, int steps = 7);

struct LineSearchReport {
  std::vector<double> grid;
  std::vector<std::string> attacks;                 // AttackConfig::describe() per column
  std::vector<std::vector<std::size_t>> correct;    // grid x attacks
  std::vector<std::size_t> clean_correct;           // per grid value
  std::size_t validation_size = 0;
  double chosen = 0.0;

  double accuracy(std::size_t row, std::size_t col) const;
  double clean_accuracy(std::size_t row) const;
  double mean_accuracy(std::size_t row) const;
};

struct LineSearchOptions {
  Architecture arch;
  TrainOptions train;
  int inner_steps = 5;
  int warmup_epochs = 5;
};

/// One adversarially trained net per grid value, each evaluated on `val`
/// against every attack. Picks the value with the best mean accuracy across
/// attacks; ties go to the smaller value.
LineSearchReport epsilon_line_search(const Dataset& train, const Dataset& val, const std::vector<double>& grid,
                                     const std::vector<AttackConfig>& eval_attacks,
                                     const LineSearchOptions& options);

/// Row index of the chosen value given per-row correct totals.
std::size_t select_epsilon(const std::vector<double>& grid, const std::vector<std::vector<std::size_t>>& correct);

/// Rows are grid values, columns clean + attack vectors.
void write_line_search_csv(const LineSearchReport& report, const std::filesystem::path& path);
/// Grouped bar chart, one group per attack vector, one bar per grid value.
void write_line_search_svg(const LineSearchReport& report, const std::filesystem::path& path);

}  // namespace unmask
