#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unmask/dataset.hpp"
#include "unmask/tinynet.hpp"

namespace unmask {

enum class AttackMethod { pgd, mia };
enum class Norm { linf, l2 };

std::string to_string(AttackMethod method);
std::string to_string(Norm norm);
AttackMethod attack_method_from_string(std::string_view text);
Norm norm_from_string(std::string_view text);

/// Untargeted gradient attack settings. Budgets and steps are in 0-255
/// intensity units; for L2 the budget bounds the whole-image norm.
struct AttackConfig {
  AttackMethod method = AttackMethod::pgd;
  Norm norm = Norm::linf;
  double epsilon_255 = 8.0;
  int steps = 20;
  double step_255 = 2.0;  // PGD only; MIA uses epsilon / steps
  double decay = 1.0;     // MIA only
  bool random_start = false;
  std::uint64_t seed = 0;

  double epsilon() const { return epsilon_255 / 255.0; }
  double step() const { return step_255 / 255.0; }
  void validate() const;
  /// e.g. "PGD-Linf(eps=8)"
  std::string describe() const;
};

/// Projects a perturbation onto the eps-ball of the given norm.
Eigen::VectorXd project(const Eigen::VectorXd& delta, Norm norm, double eps);

/// Nominal L2 budgets are quoted for ~224x224 images; rescale by
/// sqrt(desk_pixels / reference_pixels) to keep per-pixel energy comparable.
double rescale_l2_epsilon(double nominal_epsilon_255, std::size_t desk_pixels,
                          std::size_t reference_pixels = 224 * 224);

struct AttackResult {
  Image perturbed;
  bool success = false;
  int iterations_run = 0;
};

/// Invoked after every iteration with the current iterates (one column per sample).
using IterateObserver = std::function<void(int iteration, const Eigen::MatrixXd& iterates)>;

/// Batched attack on columns of `inputs` with true class `labels`. Each
/// iterate is float32-representable, inside the eps-ball around its clean
/// column and inside [0,1]. `sample_seeds` seeds the random start per column.
Eigen::MatrixXd attack_columns(const TinyNet& net, const Eigen::MatrixXd& inputs, std::span<const int> labels,
                               const AttackConfig& cfg, std::span<const std::uint64_t> sample_seeds = {},
                               const IterateObserver& observer = nullptr);

AttackResult pgd(const TinyNet& net, const Image& image, int label, const AttackConfig& cfg,
                 const IterateObserver& observer = nullptr);
AttackResult mia(const TinyNet& net, const Image& image, int label, const AttackConfig& cfg,
                 const IterateObserver& observer = nullptr);
/// Dispatches on cfg.method.
AttackResult run_attack(const TinyNet& net, const Image& image, int label, const AttackConfig& cfg,
                        const IterateObserver& observer = nullptr);

struct BatchAttackResult {
  Dataset attacked;
  std::vector<bool> success;  // prediction differs from the true label

  /// Only the successfully attacked samples.
  Dataset successful() const;
  double success_rate() const;
};

/// Attacks every sample of `data` against its own label.
BatchAttackResult attack_batch(const TinyNet& net, const Dataset& data, const AttackConfig& cfg,
                               std::size_t chunk = 128);

}  // namespace unmask
