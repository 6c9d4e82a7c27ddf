#include "unmask/attacks.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace unmask {

namespace {

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

Eigen::VectorXd unit_direction(const Eigen::VectorXd& g, Norm norm) {
  if (norm == Norm::linf) return g.unaryExpr(&sign);
  const double n = g.norm();
  if (n == 0.0) return Eigen::VectorXd::Zero(g.size());
  return g / n;
}

// Maps a candidate iterate to the closest float32 image that satisfies the
// eps-ball around `clean` and the [0,1] box, and writes it into `out`.
void finalize_iterate(const Eigen::VectorXd& clean, const Eigen::VectorXd& candidate, Norm norm, double eps,
                      Eigen::Ref<Eigen::VectorXd> out) {
  Eigen::VectorXd delta = project(candidate - clean, norm, eps);
  const Eigen::Index d = clean.size();
  auto round_clip = [&](const Eigen::VectorXd& dl) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double v = std::clamp(clean(i) + dl(i), 0.0, 1.0);
      float r = static_cast<float>(v);
      const auto x = static_cast<float>(clean(i));
      if (norm == Norm::linf) {
        while (static_cast<double>(r) - clean(i) > eps) r = std::nextafter(r, x);
        while (clean(i) - static_cast<double>(r) > eps) r = std::nextafter(r, x);
      }
      out(i) = r;
    }
  };
  round_clip(delta);
  if (norm == Norm::l2) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const double n = (out - clean).norm();
      if (n <= eps) return;
      const double shrink = (eps / n) * (1.0 - 1e-9 * static_cast<double>(attempt + 1));
      delta = (out - clean) * shrink;
      round_clip(delta);
    }
    out = clean;  // unreachable in practice; the clean image always satisfies the bound
  }
}

}  // namespace

std::string to_string(AttackMethod method) { return method == AttackMethod::pgd ? "PGD" : "MIA"; }
std::string to_string(Norm norm) { return norm == Norm::linf ? "Linf" : "L2"; }

AttackMethod attack_method_from_string(std::string_view text) {
  const std::string t = normalize_name(text);
  if (t == "pgd") return AttackMethod::pgd;
  if (t == "mia" || t == "mi-fgsm" || t == "mifgsm") return AttackMethod::mia;
  throw ConfigError("unknown attack method '" + std::string(text) + "'");
}

Norm norm_from_string(std::string_view text) {
  const std::string t = normalize_name(text);
  if (t == "linf" || t == "inf" || t == "l_inf") return Norm::linf;
  if (t == "l2" || t == "2") return Norm::l2;
  throw ConfigError("unknown norm '" + std::string(text) + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon_255 >= 0)) throw ConfigError("attack epsilon must be >= 0");
  if (steps < 1) throw ConfigError("attack steps must be >= 1");
  if (!(step_255 > 0)) throw ConfigError("attack step must be > 0");
  if (!(decay >= 0)) throw ConfigError("momentum decay must be >= 0");
}

std::string AttackConfig::describe() const {
  std::ostringstream out;
  out << to_string(method) << "-" << to_string(norm) << "(eps=" << epsilon_255 << ")";
  return out.str();
}

Eigen::VectorXd project(const Eigen::VectorXd& delta, Norm norm, double eps) {
  if (eps <= 0) return Eigen::VectorXd::Zero(delta.size());
  if (norm == Norm::linf) return delta.cwiseMax(-eps).cwiseMin(eps);
  const double n = delta.norm();
  if (n > eps) return delta * (eps / n);
  return delta;
}

double rescale_l2_epsilon(double nominal_epsilon_255, std::size_t desk_pixels, std::size_t reference_pixels) {
  return nominal_epsilon_255 * std::sqrt(static_cast<double>(desk_pixels) / static_cast<double>(reference_pixels));
}

Eigen::MatrixXd attack_columns(const TinyNet& net, const Eigen::MatrixXd& inputs, std::span<const int> labels,
                               const AttackConfig& cfg, std::span<const std::uint64_t> sample_seeds,
                               const IterateObserver& observer) {
  cfg.validate();
  if (net.head() != Head::softmax_classifier) throw ShapeError("attacks need a softmax classifier");
  if (static_cast<std::size_t>(inputs.cols()) != labels.size()) throw ShapeError("one label per column required");
  if (!sample_seeds.empty() && sample_seeds.size() != labels.size()) {
    throw ShapeError("one seed per column required");
  }
  const Eigen::Index n = inputs.cols();
  const Eigen::Index d = inputs.rows();
  const double eps = cfg.epsilon();
  const Eigen::MatrixXd targets = one_hot(labels, net.output_dim());

  Eigen::MatrixXd iterates = inputs;
  if (cfg.random_start && eps > 0) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const std::uint64_t s = sample_seeds.empty() ? static_cast<std::uint64_t>(j) : sample_seeds[j];
      std::mt19937_64 rng(mix_seed(cfg.seed, s));
      Eigen::VectorXd delta(d);
      if (cfg.norm == Norm::linf) {
        std::uniform_real_distribution<double> u(-eps, eps);
        for (Eigen::Index i = 0; i < d; ++i) delta(i) = u(rng);
      } else {
        std::normal_distribution<double> g(0.0, 1.0);
        for (Eigen::Index i = 0; i < d; ++i) delta(i) = g(rng);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double radius = eps * std::pow(u(rng), 1.0 / static_cast<double>(d));
        const double norm = delta.norm();
        if (norm > 0) delta *= radius / norm;
      }
      finalize_iterate(inputs.col(j), inputs.col(j) + delta, cfg.norm, eps, iterates.col(j));
    }
  }

  Eigen::MatrixXd momentum = Eigen::MatrixXd::Zero(d, n);
  const double mia_alpha = eps / static_cast<double>(cfg.steps);
  for (int t = 0; t < cfg.steps; ++t) {
    const Eigen::MatrixXd grad = loss_and_input_grad(net, iterates, targets).input_grad;
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::VectorXd candidate;
      if (cfg.method == AttackMethod::pgd) {
        candidate = iterates.col(j) + cfg.step() * unit_direction(grad.col(j), cfg.norm);
      } else {
        const double l1 = grad.col(j).lpNorm<1>();
        momentum.col(j) *= cfg.decay;
        if (l1 > 0) momentum.col(j) += grad.col(j) / l1;
        candidate = iterates.col(j) + mia_alpha * unit_direction(momentum.col(j), cfg.norm);
      }
      finalize_iterate(inputs.col(j), candidate, cfg.norm, eps, iterates.col(j));
    }
    if (observer) observer(t + 1, iterates);
  }
  return iterates;
}

namespace {

AttackResult single(const TinyNet& net, const Image& image, int label, const AttackConfig& cfg,
                    const IterateObserver& observer) {
  if (image.size() != net.input_dim()) throw ShapeError("image size does not match the network input");
  const Eigen::MatrixXd x = image_column(image);
  const int labels[1] = {label};
  const Eigen::MatrixXd xp = attack_columns(net, x, labels, cfg, {}, observer);
  AttackResult r;
  r.perturbed.resize(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) r.perturbed[i] = static_cast<float>(xp(static_cast<Eigen::Index>(i), 0));
  r.success = predict(net, xp).front() != label;
  r.iterations_run = cfg.steps;
  return r;
}

}  // namespace

AttackResult pgd(const TinyNet& net, const Image& image, int label, const AttackConfig& cfg,
                 const IterateObserver& observer) {
  if (cfg.method != AttackMethod::pgd) throw ConfigError("pgd() called with a non-PGD config");
  return single(net, image, label, cfg, observer);
}

AttackResult mia(const TinyNet& net, const Image& image, int label, const AttackConfig& cfg,
                 const IterateObserver& observer) {
  if (cfg.method != AttackMethod::mia) throw ConfigError("mia() called with a non-MIA config");
  return single(net, image, label, cfg, observer);
}

AttackResult run_attack(const TinyNet& net, const Image& image, int label, const AttackConfig& cfg,
                        const IterateObserver& observer) {
  return single(net, image, label, cfg, observer);
}

Dataset BatchAttackResult::successful() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < success.size(); ++i) {
    if (success[i]) idx.push_back(i);
  }
  return subset(attacked, idx);
}

double BatchAttackResult::success_rate() const {
  if (success.empty()) return 0.0;
  std::size_t k = 0;
  for (bool s : success) k += s ? 1 : 0;
  return static_cast<double>(k) / static_cast<double>(success.size());
}

BatchAttackResult attack_batch(const TinyNet& net, const Dataset& data, const AttackConfig& cfg, std::size_t chunk) {
  if (data.empty()) throw Error("cannot attack an empty dataset");
  if (data.dims.pixels() != net.input_dim()) throw ShapeError("dataset image size does not match the network input");
  if (chunk == 0) chunk = 1;
  const std::vector<int> labels = label_indices(data, net.labels());
  BatchAttackResult out;
  out.attacked = data;
  out.success.assign(data.size(), false);
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t stop = std::min(data.size(), start + chunk);
    std::vector<std::size_t> idx;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = start; i < stop; ++i) {
      idx.push_back(i);
      seeds.push_back(fnv1a64(data.samples[i].id));
    }
    const Dataset part = subset(data, idx);
    const std::span<const int> part_labels(labels.data() + start, stop - start);
    const Eigen::MatrixXd xp = attack_columns(net, image_matrix(part), part_labels, cfg, seeds);
    const std::vector<int> pred = predict(net, xp);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto& img = out.attacked.samples[start + k].image;
      for (std::size_t p = 0; p < img.size(); ++p) {
        img[p] = static_cast<float>(xp(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k)));
      }
      out.success[start + k] = pred[k] != part_labels[k];
    }
  }
  return out;
}

}  // namespace unmask
