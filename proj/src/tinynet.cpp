#include "unmask/tinynet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace unmask {

namespace {

constexpr std::string_view kCheckpointMagic = "UNMASK-CKPT v1";

struct Activations {
  std::vector<Eigen::MatrixXd> pre;   // pre-activation per layer
  std::vector<Eigen::MatrixXd> post;  // post[0] = inputs, post[i+1] = relu(pre[i]) for hidden layers
};

Activations run_forward(const TinyNet& net, const Eigen::MatrixXd& inputs) {
  if (static_cast<std::size_t>(inputs.rows()) != net.input_dim()) {
    throw ShapeError("input has " + std::to_string(inputs.rows()) + " rows, net expects " +
                     std::to_string(net.input_dim()));
  }
  const auto& layers = net.layers();
  Activations act;
  act.post.push_back(inputs);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Eigen::MatrixXd z = layers[i].weight * act.post.back();
    z.colwise() += layers[i].bias;
    if (i + 1 < layers.size()) act.post.push_back(z.cwiseMax(0.0));
    act.pre.push_back(std::move(z));
  }
  return act;
}

Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double m = logits.col(j).maxCoeff();
    Eigen::VectorXd e = (logits.col(j).array() - m).exp();
    out.col(j) = e / e.sum();
  }
  return out;
}

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

Eigen::MatrixXd head_output(Head head, const Eigen::MatrixXd& logits) {
  if (head == Head::softmax_classifier) return softmax_columns(logits);
  return logits.unaryExpr([](double z) { return sigmoid(z); });
}

// Mean loss and d(loss)/d(logits).
double head_loss(Head head, const Eigen::MatrixXd& logits, const Eigen::MatrixXd& targets,
                 Eigen::MatrixXd* dlogits) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw ShapeError("targets shape does not match network output");
  }
  const double n = static_cast<double>(logits.cols());
  double total = 0.0;
  if (head == Head::softmax_classifier) {
    Eigen::MatrixXd probs(logits.rows(), logits.cols());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const double m = logits.col(j).maxCoeff();
      const double lse = m + std::log((logits.col(j).array() - m).exp().sum());
      total += lse * targets.col(j).sum() - targets.col(j).dot(logits.col(j));
      probs.col(j) = (logits.col(j).array() - lse).exp();
    }
    if (dlogits) *dlogits = (probs - targets) / n;
  } else {
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        total += softplus(logits(i, j)) - targets(i, j) * logits(i, j);
      }
    }
    if (dlogits) *dlogits = (logits.unaryExpr([](double z) { return sigmoid(z); }) - targets) / n;
  }
  return total / n;
}

double round_float(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

std::string to_string(Head head) {
  return head == Head::softmax_classifier ? "softmax_classifier" : "sigmoid_multilabel";
}

std::string to_string(Optimizer optimizer) { return optimizer == Optimizer::sgd ? "sgd" : "adam"; }

Optimizer optimizer_from_string(std::string_view text) {
  const std::string t = normalize_name(text);
  if (t == "sgd") return Optimizer::sgd;
  if (t == "adam") return Optimizer::adam;
  throw ConfigError("unknown optimizer '" + std::string(text) + "'");
}

Head head_from_string(std::string_view text) {
  if (text == "softmax_classifier" || text == "softmax") return Head::softmax_classifier;
  if (text == "sigmoid_multilabel" || text == "sigmoid") return Head::sigmoid_multilabel;
  throw ConfigError("unknown head '" + std::string(text) + "'");
}

void Architecture::validate() const {
  if (widths.size() < 2) throw ShapeError("architecture needs at least an input and an output width");
  for (std::size_t w : widths) {
    if (w == 0) throw ShapeError("layer widths must be positive");
  }
  if (!labels.empty() && labels.size() != widths.back()) {
    throw ShapeError("output width " + std::to_string(widths.back()) + " does not match " +
                     std::to_string(labels.size()) + " labels");
  }
  if (head == Head::softmax_classifier && widths.back() < 2) {
    throw ShapeError("softmax head needs at least two classes");
  }
}

TinyNet::TinyNet(Architecture arch, std::vector<DenseLayer> layers)
    : arch_(std::move(arch)), layers_(std::move(layers)) {}

TinyNet TinyNet::zeros(Architecture arch) {
  arch.validate();
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < arch.widths.size(); ++i) {
    const auto out = static_cast<Eigen::Index>(arch.widths[i + 1]);
    const auto in = static_cast<Eigen::Index>(arch.widths[i]);
    layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
  }
  return TinyNet(std::move(arch), std::move(layers));
}

TinyNet TinyNet::init(Architecture arch, std::uint64_t seed) {
  TinyNet net = zeros(std::move(arch));
  std::mt19937_64 rng(mix_seed(seed, 0x7e57));
  const std::size_t n_layers = net.layers_.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    auto& w = net.layers_[l].weight;
    double limit = std::sqrt(6.0 / static_cast<double>(w.cols()));
    if (l + 1 == n_layers) limit *= 0.1;
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
    }
  }
  // Pixels sit around mid-grey; start the first layer centred on 0.5 so the
  // common offset does not swamp the pre-activations.
  net.layers_[0].bias = -0.5 * net.layers_[0].weight.rowwise().sum();
  net.round_to_float();
  return net;
}

std::size_t TinyNet::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void TinyNet::round_to_float() {
  for (auto& l : layers_) {
    l.weight = l.weight.unaryExpr(&round_float);
    l.bias = l.bias.unaryExpr(&round_float);
  }
}

bool TinyNet::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(),
                     [](const DenseLayer& l) { return l.weight.allFinite() && l.bias.allFinite(); });
}

bool operator==(const TinyNet& a, const TinyNet& b) {
  if (!(a.arch_ == b.arch_) || a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    if (a.layers_[i].weight != b.layers_[i].weight || a.layers_[i].bias != b.layers_[i].bias) return false;
  }
  return true;
}

Eigen::MatrixXd one_hot(std::span<const int> labels, std::size_t classes) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(classes),
                                              static_cast<Eigen::Index>(labels.size()));
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] < 0 || static_cast<std::size_t>(labels[j]) >= classes) {
      throw ShapeError("label " + std::to_string(labels[j]) + " out of range");
    }
    out(labels[j], static_cast<Eigen::Index>(j)) = 1.0;
  }
  return out;
}

Eigen::MatrixXd forward(const TinyNet& net, const Eigen::MatrixXd& inputs) {
  auto act = run_forward(net, inputs);
  return head_output(net.head(), act.pre.back());
}

double loss(const TinyNet& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) {
  auto act = run_forward(net, inputs);
  return head_loss(net.head(), act.pre.back(), targets, nullptr);
}

Gradients backward(const TinyNet& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) {
  auto act = run_forward(net, inputs);
  const auto& layers = net.layers();
  Gradients g;
  Eigen::MatrixXd delta;
  g.loss = head_loss(net.head(), act.pre.back(), targets, &delta);
  g.layers.resize(layers.size());
  for (std::size_t l = layers.size(); l-- > 0;) {
    g.layers[l].weight = delta * act.post[l].transpose();
    g.layers[l].bias = delta.rowwise().sum();
    Eigen::MatrixXd upstream = layers[l].weight.transpose() * delta;
    if (l == 0) {
      g.input_grad = std::move(upstream);
    } else {
      delta = upstream.cwiseProduct((act.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return g;
}

LossGrad loss_and_input_grad(const TinyNet& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) {
  // Parameter gradients are not needed here, so only the input chain is propagated.
  auto act = run_forward(net, inputs);
  const auto& layers = net.layers();
  LossGrad out;
  Eigen::MatrixXd delta;
  out.loss = head_loss(net.head(), act.pre.back(), targets, &delta);
  for (std::size_t l = layers.size(); l-- > 0;) {
    Eigen::MatrixXd upstream = layers[l].weight.transpose() * delta;
    if (l == 0) {
      out.input_grad = std::move(upstream);
    } else {
      delta = upstream.cwiseProduct((act.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return out;
}

std::vector<int> predict(const TinyNet& net, const Eigen::MatrixXd& inputs) {
  if (net.head() != Head::softmax_classifier) throw ShapeError("predict() needs a softmax classifier");
  auto act = run_forward(net, inputs);
  const auto& logits = act.pre.back();
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < logits.rows(); ++i) {
      if (logits(i, j) > logits(best, j)) best = i;
    }
    out[static_cast<std::size_t>(j)] = static_cast<int>(best);
  }
  return out;
}

int predict_one(const TinyNet& net, std::span<const float> image) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(image.size()), 1);
  for (std::size_t i = 0; i < image.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = image[i];
  return predict(net, x).front();
}

TrainResult train_with_transform(TinyNet net, const Batch& data, const TrainOptions& options,
                                 const BatchTransform& transform) {
  if (options.lr <= 0) throw ConfigError("learning rate must be positive");
  if (options.batch_size == 0) throw ConfigError("batch size must be positive");
  if (options.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (data.size() == 0) throw Error("cannot train on an empty dataset");
  if (static_cast<std::size_t>(data.inputs.rows()) != net.input_dim() ||
      static_cast<std::size_t>(data.targets.rows()) != net.output_dim() ||
      data.targets.cols() != data.inputs.cols()) {
    throw ShapeError("training batch does not match the network shape");
  }

  if (options.momentum < 0 || options.momentum >= 1) throw ConfigError("momentum must lie in [0, 1)");
  if (options.beta2 < 0 || options.beta2 >= 1) throw ConfigError("beta2 must lie in [0, 1)");
  TrainResult result;
  const std::size_t n = data.size();
  auto zeros_like = [&] {
    std::vector<DenseLayer> z;
    for (const auto& layer : net.layers()) {
      z.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                   Eigen::VectorXd::Zero(layer.bias.size())});
    }
    return z;
  };
  std::vector<DenseLayer> first = zeros_like();   // velocity (SGD) or first moment (Adam)
  std::vector<DenseLayer> second = zeros_like();  // Adam second moment
  std::uint64_t step = 0;
  constexpr double kAdamEps = 1e-8;
  std::vector<Eigen::Index> order(n);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(mix_seed(options.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0, batch_no = 0; start < n; start += options.batch_size, ++batch_no) {
      const std::size_t stop = std::min(n, start + options.batch_size);
      std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(stop));
      Eigen::MatrixXd x = data.inputs(Eigen::all, idx);
      Eigen::MatrixXd t = data.targets(Eigen::all, idx);
      if (transform) {
        transform(net, x, t, epoch, mix_seed(mix_seed(options.seed, static_cast<std::uint64_t>(epoch)), batch_no));
      }
      Gradients g = backward(net, x, t);
      epoch_loss += g.loss * static_cast<double>(stop - start);
      auto& layers = net.layers();
      ++step;
      const double b1 = options.momentum, b2 = options.beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
      for (std::size_t l = 0; l < layers.size(); ++l) {
        if (options.weight_decay > 0) {
          g.layers[l].weight += options.weight_decay * layers[l].weight;
        }
        if (options.optimizer == Optimizer::sgd) {
          first[l].weight = b1 * first[l].weight + g.layers[l].weight;
          first[l].bias = b1 * first[l].bias + g.layers[l].bias;
          layers[l].weight -= options.lr * first[l].weight;
          layers[l].bias -= options.lr * first[l].bias;
          continue;
        }
        first[l].weight = b1 * first[l].weight + (1 - b1) * g.layers[l].weight;
        first[l].bias = b1 * first[l].bias + (1 - b1) * g.layers[l].bias;
        second[l].weight = b2 * second[l].weight + (1 - b2) * g.layers[l].weight.cwiseAbs2();
        second[l].bias = b2 * second[l].bias + (1 - b2) * g.layers[l].bias.cwiseAbs2();
        layers[l].weight -= options.lr *
                            ((first[l].weight / c1).array() / ((second[l].weight / c2).array().sqrt() + kAdamEps)).matrix();
        layers[l].bias -= options.lr *
                          ((first[l].bias / c1).array() / ((second[l].bias / c2).array().sqrt() + kAdamEps)).matrix();
      }
      net.round_to_float();
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(n));
  }
  if (!net.all_finite()) throw Error("training diverged: non-finite weights");
  result.net = std::move(net);
  return result;
}

TrainResult train(TinyNet net, const Batch& data, const TrainOptions& options) {
  return train_with_transform(std::move(net), data, options, nullptr);
}

// Checkpoint: magic line, one-line JSON header, then little-endian float32
// parameters (per layer: weight row-major, then bias).
void save_checkpoint(const TinyNet& net, const std::filesystem::path& path) {
  nlohmann::json header;
  header["widths"] = net.architecture().widths;
  header["head"] = to_string(net.head());
  header["labels"] = net.labels();
  header["parameters"] = net.num_parameters();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open checkpoint for writing");
  out << kCheckpointMagic << '\n' << header.dump() << '\n';
  auto put = [&out](double v) {
    const float f = static_cast<float>(v);
    std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
    unsigned char bytes[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                              static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  };
  for (const auto& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put(l.weight(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put(l.bias(r));
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

TinyNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open checkpoint");
  std::string magic;
  std::string header_line;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) throw LoadError(path.string() + ": not a checkpoint (bad magic)");
  std::getline(in, header_line);
  Architecture arch;
  try {
    auto header = nlohmann::json::parse(header_line);
    arch.widths = header.at("widths").get<std::vector<std::size_t>>();
    arch.head = head_from_string(header.at("head").get<std::string>());
    arch.labels = header.at("labels").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": bad checkpoint header: " + e.what());
  }
  TinyNet net = TinyNet::zeros(std::move(arch));
  auto get = [&in, &path]() {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw LoadError(path.string() + ": truncated weights");
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[3]) << 24);
    return static_cast<double>(std::bit_cast<float>(bits));
  };
  for (auto& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = get();
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = get();
  }
  if (in.peek() != std::char_traits<char>::eof()) throw LoadError(path.string() + ": trailing bytes after weights");
  return net;
}

}  // namespace unmask
