#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "unmask/tinynet.hpp"

using namespace unmask;

namespace {

Architecture make_arch(std::vector<std::size_t> widths, Head head = Head::softmax_classifier) {
  Architecture a;
  a.widths = std::move(widths);
  a.head = head;
  return a;
}

Eigen::MatrixXd random_inputs(std::size_t d, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

Eigen::MatrixXd random_targets(const Architecture& a, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto k = a.output_dim();
  if (a.head == Head::softmax_classifier) {
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng() % k);
    return one_hot(y, k);
  }
  Eigen::MatrixXd t(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<double>(rng() & 1U);
  return t;
}

// ReLU on/off pattern of every hidden unit; an oracle forward pass kept
// separate from the library's.
std::vector<bool> relu_pattern(const TinyNet& net, const Eigen::MatrixXd& x) {
  std::vector<bool> pattern;
  Eigen::MatrixXd h = x;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].weight * h;
    z.colwise() += layers[l].bias;
    for (Eigen::Index i = 0; i < z.size(); ++i) pattern.push_back(z.data()[i] > 0);
    h = z.cwiseMax(0.0);
  }
  return pattern;
}

double rel_err(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale < 1e-7 ? std::abs(a - b) : std::abs(a - b) / scale;
}

TinyNet random_net(std::mt19937_64& rng, Head head) {
  std::uniform_int_distribution<std::size_t> w(2, 6);
  std::vector<std::size_t> widths = {w(rng)};
  const std::size_t hidden = 1 + rng() % 2;
  for (std::size_t i = 0; i < hidden; ++i) widths.push_back(w(rng));
  widths.push_back(head == Head::softmax_classifier ? w(rng) : 1 + rng() % 4);
  TinyNet net = TinyNet::init(make_arch(widths, head), rng());
  // Non-zero biases so the check covers their gradients too.
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& l : net.layers()) {
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = g(rng);
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] *= 2.0;
  }
  return net;
}

}  // namespace

TEST(TinyNet, InitIsDeterministicAndValidated) {
  const auto a = make_arch({8, 5, 3});
  EXPECT_EQ(TinyNet::init(a, 3), TinyNet::init(a, 3));
  EXPECT_FALSE(TinyNet::init(a, 0) == TinyNet::init(a, 1));
  EXPECT_THROW(TinyNet::init(make_arch({8}), 0), ShapeError);
  EXPECT_THROW(TinyNet::init(make_arch({8, 0, 3}), 0), ShapeError);
  auto labelled = a;
  labelled.labels = {"a", "b"};
  EXPECT_THROW(TinyNet::init(labelled, 0), ShapeError);
  EXPECT_TRUE(TinyNet::init(a, 0).all_finite());
}

TEST(TinyNet, ForwardHeads) {
  const auto zero = TinyNet::zeros(make_arch({6, 4, 5}));
  const Eigen::MatrixXd x = random_inputs(6, 7, 1);
  const Eigen::MatrixXd p = forward(zero, x);
  for (Eigen::Index i = 0; i < p.size(); ++i) EXPECT_NEAR(p.data()[i], 0.2, 1e-15);
  EXPECT_NEAR(loss(zero, x, random_targets(zero.architecture(), 7, 2)), std::log(5.0), 1e-12);

  const auto net = TinyNet::init(make_arch({6, 4, 5}), 9);
  const Eigen::MatrixXd q = forward(net, x);
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    EXPECT_NEAR(q.col(j).sum(), 1.0, 1e-6);
    EXPECT_GE(q.col(j).minCoeff(), 0.0);
  }

  const auto sig = TinyNet::zeros(make_arch({6, 4, 3}, Head::sigmoid_multilabel));
  const Eigen::MatrixXd s = forward(sig, x);
  for (Eigen::Index i = 0; i < s.size(); ++i) EXPECT_EQ(s.data()[i], 0.5);
  EXPECT_THROW(forward(net, random_inputs(5, 2, 1)), ShapeError);
}

TEST(TinyNet, PredictTiesAndArgmax) {
  const auto zero = TinyNet::zeros(make_arch({3, 4}));
  EXPECT_EQ(predict(zero, random_inputs(3, 5, 4)), std::vector<int>(5, 0));
  // Single affine layer with logits log(0.1, 0.7, 0.2).
  auto net = TinyNet::zeros(make_arch({1, 3}));
  net.layers()[0].bias << std::log(0.1), std::log(0.7), std::log(0.2);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 1);
  EXPECT_NEAR(forward(net, x)(1, 0), 0.7, 1e-12);
  EXPECT_EQ(predict(net, x)[0], 1);
}

TEST(TinyNet, ConfidentCorrectPredictionHasNearZeroLoss) {
  auto net = TinyNet::zeros(make_arch({1, 2}));
  net.layers()[0].bias << 40.0, -40.0;
  EXPECT_LT(loss(net, Eigen::MatrixXd::Zero(1, 1), one_hot(std::vector<int>{0}, 2)), 1e-12);
}

TEST(TinyNet, InputGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  const double h = 1e-4;
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Head head = trial % 2 ? Head::sigmoid_multilabel : Head::softmax_classifier;
    const TinyNet net = random_net(rng, head);
    const Eigen::MatrixXd x = random_inputs(net.input_dim(), 3, rng());
    const Eigen::MatrixXd t = random_targets(net.architecture(), 3, rng());
    const LossGrad lg = loss_and_input_grad(net, x, t);
    ASSERT_EQ(lg.input_grad.rows(), x.rows());
    ASSERT_EQ(lg.input_grad.cols(), x.cols());
    const auto base = relu_pattern(net, x);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::MatrixXd xp = x, xm = x;
      xp.data()[i] += h;
      xm.data()[i] -= h;
      if (relu_pattern(net, xp) != base || relu_pattern(net, xm) != base) continue;  // kink
      const double fd = (loss(net, xp, t) - loss(net, xm, t)) / (2 * h);
      EXPECT_LT(rel_err(lg.input_grad.data()[i], fd), 1e-4) << "trial " << trial << " index " << i;
      ++checked;
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(TinyNet, ParameterGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(22);
  const double h = 1e-4;
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Head head = trial % 2 ? Head::sigmoid_multilabel : Head::softmax_classifier;
    const TinyNet net = random_net(rng, head);
    const Eigen::MatrixXd x = random_inputs(net.input_dim(), 3, rng());
    const Eigen::MatrixXd t = random_targets(net.architecture(), 3, rng());
    const Gradients g = backward(net, x, t);
    EXPECT_NEAR(g.loss, loss(net, x, t), 1e-12);
    const auto base = relu_pattern(net, x);
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      auto probe = [&](auto select, double analytic) {
        TinyNet p = net, m = net;
        select(p) += h;
        select(m) -= h;
        if (relu_pattern(p, x) != base || relu_pattern(m, x) != base) return;
        const double fd = (loss(p, x, t) - loss(m, x, t)) / (2 * h);
        EXPECT_LT(rel_err(analytic, fd), 1e-4) << "trial " << trial << " layer " << l;
        ++checked;
      };
      const auto& W = net.layers()[l].weight;
      for (Eigen::Index i = 0; i < W.size(); ++i) {
        probe([&](TinyNet& n) -> double& { return n.layers()[l].weight.data()[i]; }, g.layers[l].weight.data()[i]);
      }
      for (Eigen::Index i = 0; i < net.layers()[l].bias.size(); ++i) {
        probe([&](TinyNet& n) -> double& { return n.layers()[l].bias(i); }, g.layers[l].bias(i));
      }
    }
  }
  EXPECT_GT(checked, 2000);
}

namespace {

// Two Gaussian blobs split by the hyperplane sum(x) = d/2.
Batch toy_batch(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.05);
  const std::size_t d = 4;
  Eigen::MatrixXd x(d, static_cast<Eigen::Index>(n));
  std::vector<int> y(n);
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = static_cast<int>(j % 2);
    for (std::size_t i = 0; i < d; ++i) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::clamp((y[j] ? 0.7 : 0.3) + g(rng), 0.0, 1.0);
    }
  }
  return {x, one_hot(y, 2)};
}

double train_accuracy(const TinyNet& net, const Batch& b) {
  const auto p = predict(net, b.inputs);
  int ok = 0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    Eigen::Index arg;
    b.targets.col(static_cast<Eigen::Index>(j)).maxCoeff(&arg);
    ok += p[j] == arg;
  }
  return static_cast<double>(ok) / static_cast<double>(p.size());
}

}  // namespace

TEST(TinyNet, TrainingBasics) {
  const Batch b = toy_batch(200, 5);
  const TinyNet init = TinyNet::init(make_arch({4, 8, 2}), 3);
  TrainOptions opt;
  opt.epochs = 0;
  EXPECT_EQ(train(init, b, opt).net, init);

  opt.epochs = 30;
  opt.seed = 4;
  const auto r1 = train(init, b, opt);
  const auto r2 = train(init, b, opt);
  EXPECT_EQ(r1.net, r2.net);
  EXPECT_EQ(r1.loss_curve, r2.loss_curve);
  EXPECT_EQ(r1.loss_curve.size(), 30u);
  EXPECT_GE(train_accuracy(r1.net, b), 0.99);

  opt.optimizer = Optimizer::sgd;
  opt.lr = 0.1;
  EXPECT_GE(train_accuracy(train(init, b, opt).net, b), 0.99);

  EXPECT_THROW(train(init, Batch{}, opt), Error);
  opt.lr = 0.0;
  EXPECT_THROW(train(init, b, opt), ConfigError);
}

TEST(TinyNet, FullBatchLossIsNonIncreasingAtSmallRate) {
  const Batch b = toy_batch(64, 6);
  TrainOptions opt;
  opt.optimizer = Optimizer::sgd;
  opt.momentum = 0.0;
  opt.lr = 1e-2;
  opt.batch_size = 64;
  opt.epochs = 40;
  const auto r = train(TinyNet::init(make_arch({4, 8, 2}), 1), b, opt);
  for (std::size_t e = 1; e < r.loss_curve.size(); ++e) EXPECT_LE(r.loss_curve[e], r.loss_curve[e - 1] + 1e-12);
}

TEST(TinyNet, CheckpointRoundTripIsBitExact) {
  auto arch = make_arch({5, 4, 3}, Head::sigmoid_multilabel);
  arch.labels = {"wheel", "front side", "beak"};
  const TinyNet net = TinyNet::init(arch, 17);
  const auto path = std::filesystem::temp_directory_path() / "unmask_tinynet_ckpt.bin";
  save_checkpoint(net, path);
  const TinyNet back = load_checkpoint(path);
  EXPECT_EQ(back, net);
  EXPECT_EQ(back.architecture(), net.architecture());
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), Error);
}

TEST(TinyNet, OptimizerNames) {
  EXPECT_EQ(optimizer_from_string("Adam"), Optimizer::adam);
  EXPECT_EQ(optimizer_from_string(to_string(Optimizer::sgd)), Optimizer::sgd);
  EXPECT_THROW(optimizer_from_string("rmsprop"), ConfigError);
  EXPECT_EQ(head_from_string(to_string(Head::sigmoid_multilabel)), Head::sigmoid_multilabel);
}
