#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unmask/common.hpp"

namespace unmask {

enum class Head { softmax_classifier, sigmoid_multilabel };

std::string to_string(Head head);
Head head_from_string(std::string_view text);

/// Layer widths (input first, output last) plus the output head.
struct Architecture {
  std::vector<std::size_t> widths;
  Head head = Head::softmax_classifier;
  std::vector<std::string> labels;  // one per output unit

  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }
  void validate() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Fully connected ReLU network over flattened images.
///
/// Parameters are always float32-representable, so a checkpoint written as
/// 32-bit floats restores the exact same network.
class TinyNet {
 public:
  TinyNet() = default;

  /// Hidden layers use He-uniform weights; the output layer is scaled down so an
  /// untrained net starts near uniform / 0.5 confidences. The first-layer bias
  /// centres the inputs on mid-grey; other biases start at zero.
  static TinyNet init(Architecture arch, std::uint64_t seed);
  static TinyNet zeros(Architecture arch);

  const Architecture& architecture() const { return arch_; }
  const std::vector<std::string>& labels() const { return arch_.labels; }
  std::size_t input_dim() const { return arch_.input_dim(); }
  std::size_t output_dim() const { return arch_.output_dim(); }
  Head head() const { return arch_.head; }

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t num_parameters() const;

  /// Rounds every parameter to the nearest float32.
  void round_to_float();
  bool all_finite() const;

  friend bool operator==(const TinyNet& a, const TinyNet& b);

 private:
  TinyNet(Architecture arch, std::vector<DenseLayer> layers);

  Architecture arch_;
  std::vector<DenseLayer> layers_;
};

/// Samples are columns: inputs are (input_dim x n), targets (output_dim x n).
/// Softmax targets are one-hot columns; sigmoid targets are 0/1 bitvectors.
struct Batch {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;

  std::size_t size() const { return static_cast<std::size_t>(inputs.cols()); }
};

Eigen::MatrixXd one_hot(std::span<const int> labels, std::size_t classes);

/// Output probabilities, one column per sample.
Eigen::MatrixXd forward(const TinyNet& net, const Eigen::MatrixXd& inputs);

/// Mean loss over the batch: cross-entropy for the softmax head, per-sample
/// summed binary cross-entropy for the sigmoid head.
struct LossGrad {
  double loss = 0.0;
  Eigen::MatrixXd input_grad;  // same shape as inputs
};

LossGrad loss_and_input_grad(const TinyNet& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets);

struct Gradients {
  double loss = 0.0;
  std::vector<DenseLayer> layers;
  Eigen::MatrixXd input_grad;
};

Gradients backward(const TinyNet& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets);

double loss(const TinyNet& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets);

/// Argmax class per column, ties to the lowest index. Softmax head only.
std::vector<int> predict(const TinyNet& net, const Eigen::MatrixXd& inputs);
int predict_one(const TinyNet& net, std::span<const float> image);

enum class Optimizer { sgd, adam };

std::string to_string(Optimizer optimizer);
Optimizer optimizer_from_string(std::string_view text);

struct TrainOptions {
  int epochs = 20;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  Optimizer optimizer = Optimizer::adam;
  double momentum = 0.9;  // SGD heavy-ball term, or Adam's beta1
  double beta2 = 0.999;   // Adam only
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

struct TrainResult {
  TinyNet net;
  std::vector<double> loss_curve;  // mean training loss per epoch
};

/// Mini-batch gradient descent with per-epoch shuffling; deterministic per seed.
TrainResult train(TinyNet net, const Batch& data, const TrainOptions& options);

/// Called on each mini-batch before the gradient step; may replace its inputs.
using BatchTransform = std::function<void(const TinyNet& net, Eigen::MatrixXd& inputs,
                                          const Eigen::MatrixXd& targets, int epoch, std::uint64_t batch_seed)>;

TrainResult train_with_transform(TinyNet net, const Batch& data, const TrainOptions& options,
                                 const BatchTransform& transform);

void save_checkpoint(const TinyNet& net, const std::filesystem::path& path);
TinyNet load_checkpoint(const std::filesystem::path& path);

}  // namespace unmask
