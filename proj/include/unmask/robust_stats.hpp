#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unmask/attacks.hpp"
#include "unmask/datagen.hpp"
#include "unmask/dataset.hpp"

namespace unmask {

/// Real-valued feature of an image (a column vector of pixels).
struct FeatureFunction {
  std::string name;
  std::function<double(const Eigen::VectorXd&)> value;
  /// Optional; without it robustness falls back to random probes only.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
};

/// Images as columns with +1/-1 labels.
struct BinaryData {
  Eigen::MatrixXd inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

/// +1 for samples of `positive_class`, -1 for everything else.
BinaryData one_vs_rest(const Dataset& data, std::string_view positive_class);

/// f(x) = w.x + b
FeatureFunction linear_feature(Eigen::VectorXd weight, double bias, std::string name = "linear");

/// Normalised match of a feature's stamp inside its patch: ~1 when the patch
/// is drawn, ~0 on mid-grey noise. Linear in the pixels, or its absolute
/// value when the layout draws stamps with random polarity.
FeatureFunction patch_indicator(const LayoutSpec& layout, FeatureId feature, std::string name);

/// Sample mean of y * f(x).
double usefulness(const FeatureFunction& f, const BinaryData& data);

struct RobustnessEstimate {
  double gamma = 0.0;
  bool probe_only = false;  // no gradient was available
};

inline constexpr int kCornerProbes = 32;

/// Sample mean of the smallest y * f(x + delta) found over the perturber's
/// eps-ball (delta = 0 included) by sign/normalised-gradient descent on
/// y * f plus random corner probes. The ball is not clipped to [0,1]. Upper
/// bound on the true infimum.
RobustnessEstimate robustness(const FeatureFunction& f, const BinaryData& data, const AttackConfig& perturber,
                              std::uint64_t seed = 0);

enum class FeatureCategory { p_useful, gamma_robust, useful_non_robust, neither };

std::string to_string(FeatureCategory category);

inline constexpr double kMinUsefulness = 0.05;

/// p <= p_min: neither. Otherwise gamma-robust when gamma > 0, else useful but
/// non-robust; without a gamma estimate the feature is only known p-useful.
FeatureCategory categorize(double p, std::optional<double> gamma, double p_min = kMinUsefulness);

struct UsefulnessReport {
  std::string feature;
  double p = 0.0;
  std::optional<double> gamma;
  bool probe_only = false;
  FeatureCategory category = FeatureCategory::neither;
};

UsefulnessReport assess(const FeatureFunction& f, const BinaryData& data, const std::optional<AttackConfig>& perturber,
                        std::uint64_t seed = 0);

/// Header "feature,p,gamma,category".
void write_usefulness_csv(const std::vector<UsefulnessReport>& rows, const std::filesystem::path& path);

/// Keeps only the patches of `robust_features` (their pixels copied verbatim)
/// and replaces every other pixel, class texture included, with label-free
/// mid-grey noise. Truth features shrink to the kept ones.
Dataset build_robust_dataset(const Dataset& data, const FeatureSet& robust_features, const LayoutSpec& layout,
                             std::uint64_t seed);

}  // namespace unmask
