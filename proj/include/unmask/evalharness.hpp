#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unmask/alignment.hpp"
#include "unmask/attacks.hpp"
#include "unmask/dataset.hpp"

namespace unmask {

struct ScoredSample {
  double distance = 0.0;
  bool adversarial = false;
};

struct RocPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
};

/// Empirical ROC under the "distance >= t means adversarial" rule. Points are
/// sorted by threshold: t = 0, every distinct observed distance, then one
/// threshold above every distance (and above 1).
struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Throws Error unless both classes are present.
RocCurve roc(std::span<const ScoredSample> scores);

/// P(d_adv > d_benign) + 0.5 P(d_adv == d_benign), via ranks.
double wilcoxon_auc(std::span<const ScoredSample> scores);

/// Empty when the curve satisfies its ordering and endpoint invariants,
/// otherwise a description of the first violation.
std::optional<std::string> roc_violation(const RocCurve& curve);

struct DetectionResult {
  RocCurve curve;
  std::vector<ScoredSample> pool;
};

/// Equal-sized benign and adversarial pools (the larger one is downsampled
/// with `seed`), scored by the alignment distance.
DetectionResult detection_eval(const PipelineParts& parts, const Dataset& benign, const Dataset& attacked,
                               std::uint64_t seed);

/// Alignment distances for each sample, in order.
std::vector<double> distances(const PipelineParts& parts, const Dataset& data);

/// Fraction of samples whose pipeline output matches the true label.
double defense_eval(const PipelineParts& parts, const Dataset& attacked);

struct AttackVector {
  std::string name;        // e.g. "PGD-Linf-8"
  AttackConfig config;     // desk-scale budget
  double nominal_epsilon = 0.0;
};

/// {PGD, MIA} x {Linf 8/16, L2 300/600}, L2 budgets rescaled to `desk_pixels`.
std::vector<AttackVector> reference_attack_vectors(std::size_t desk_pixels, int steps = 20, double linf_step_255 = 2.0);

struct AccuracyCell {
  std::string defense;    // None, AT, UnMask
  std::string attack;     // none, PGD, MIA
  std::string norm;       // none, Linf, L2
  double epsilon = 0.0;   // nominal budget, 0 for the clean column
  std::string class_set;
  double accuracy = 0.0;
};

struct DetectionCell {
  std::string vector;
  std::string class_set;
  RocCurve curve;
};

struct EvalReport {
  std::vector<AccuracyCell> accuracy;
  std::vector<DetectionCell> detection;
  nlohmann::json metadata = nlohmann::json::object();

  bool empty() const { return accuracy.empty() && detection.empty(); }
};

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& doc);

/// Everything the grid needs for one class set.
struct GridClassSet {
  ClassSet classes;
  const ClassFeatureMatrix* matrix = nullptr;  // expanded
  const TinyNet* undefended = nullptr;
  const TinyNet* adv_trained = nullptr;  // optional; AT rows are skipped without it
  const Extractor* extractor = nullptr;
  Dataset test;
};

struct GridOptions {
  std::vector<AttackVector> vectors;
  double threshold = 0.5;
  double cutoff = 0.5;
  PipelineMode defense_mode = PipelineMode::always_rectify;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

/// None / AT / UnMask accuracy on the clean column plus every vector, and a
/// detection ROC per vector. None and UnMask face attacks crafted against the
/// undefended net (UnMask is invisible to the attacker); AT faces attacks
/// crafted against itself.
EvalReport attack_grid(const std::vector<GridClassSet>& sets, const GridOptions& options);

/// Writes accuracy.csv, detection.csv, roc_<class set>.svg per class set,
/// summary.svg and report.json into `dir`. Returns the written paths.
std::vector<std::filesystem::path> emit_report(const EvalReport& report, const std::filesystem::path& dir);

std::string file_slug(std::string_view name);

}  // namespace unmask
