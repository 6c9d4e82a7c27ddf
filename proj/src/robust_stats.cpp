#include "unmask/robust_stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

namespace unmask {

namespace {

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

BinaryData one_vs_rest(const Dataset& data, std::string_view positive_class) {
  if (data.empty()) throw Error("empty dataset");
  BinaryData out;
  out.inputs = image_matrix(data);
  const std::string key = normalize_name(positive_class);
  bool any = false;
  for (const auto& s : data.samples) {
    const bool pos = normalize_name(s.label) == key;
    any = any || pos;
    out.labels.push_back(pos ? 1 : -1);
  }
  if (!any) throw LookupError("class '" + std::string(positive_class) + "' does not occur in the dataset");
  return out;
}

FeatureFunction linear_feature(Eigen::VectorXd weight, double bias, std::string name) {
  FeatureFunction f;
  f.name = std::move(name);
  f.value = [weight, bias](const Eigen::VectorXd& x) { return weight.dot(x) + bias; };
  f.gradient = [weight](const Eigen::VectorXd&) { return weight; };
  return f;
}

FeatureFunction patch_indicator(const LayoutSpec& layout, FeatureId feature, std::string name) {
  const auto& opt = layout.options;
  const PatchSlot& slot = layout.slot(feature);
  const std::vector<float> stamp = layout.stamp(feature);
  const std::size_t W = opt.dims.width;
  const std::size_t C = opt.dims.channels;
  const double scale = 1.0 / (opt.contrast * static_cast<double>(stamp.size() * C));
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(opt.dims.pixels()));
  double bias = 0.0;
  for (std::size_t r = 0; r < opt.patch; ++r) {
    for (std::size_t c = 0; c < opt.patch; ++c) {
      for (std::size_t ch = 0; ch < C; ++ch) {
        const double s = stamp[r * opt.patch + c] * scale;
        w(static_cast<Eigen::Index>(((slot.row + r) * W + slot.col + c) * C + ch)) = s;
        bias -= 0.5 * s;  // centre on mid-grey
      }
    }
  }
  FeatureFunction f = linear_feature(std::move(w), bias, std::move(name));
  if (!opt.random_polarity) return f;
  // Either polarity counts as the patch being present.
  auto lin_value = f.value;
  auto lin_grad = f.gradient;
  f.value = [lin_value](const Eigen::VectorXd& x) { return std::abs(lin_value(x)); };
  f.gradient = [lin_value, lin_grad](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return lin_value(x) < 0 ? Eigen::VectorXd(-lin_grad(x)) : lin_grad(x);
  };
  return f;
}

double usefulness(const FeatureFunction& f, const BinaryData& data) {
  if (data.size() == 0) throw Error("empty dataset");
  double total = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    total += data.labels[j] * f.value(data.inputs.col(static_cast<Eigen::Index>(j)));
  }
  return total / static_cast<double>(data.size());
}

RobustnessEstimate robustness(const FeatureFunction& f, const BinaryData& data, const AttackConfig& perturber,
                              std::uint64_t seed) {
  if (data.size() == 0) throw Error("empty dataset");
  perturber.validate();
  const double eps = perturber.epsilon();
  RobustnessEstimate est;
  est.probe_only = !f.gradient;
  const Eigen::Index d = data.inputs.rows();
  double total = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const Eigen::VectorXd x = data.inputs.col(static_cast<Eigen::Index>(j));
    const double y = data.labels[j];
    double best = y * f.value(x);
    if (eps > 0) {
      if (f.gradient) {
        Eigen::VectorXd delta = Eigen::VectorXd::Zero(d);
        for (int t = 0; t < perturber.steps; ++t) {
          const Eigen::VectorXd g = -y * f.gradient(x + delta);
          Eigen::VectorXd dir;
          if (perturber.norm == Norm::linf) {
            dir = g.unaryExpr(&sign);
          } else {
            const double n = g.norm();
            dir = n > 0 ? Eigen::VectorXd(g / n) : Eigen::VectorXd::Zero(d);
          }
          delta = project(delta + perturber.step() * dir, perturber.norm, eps);
          best = std::min(best, y * f.value(x + delta));
        }
      }
      std::mt19937_64 rng(mix_seed(seed, j));
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (int k = 0; k < kCornerProbes; ++k) {
        Eigen::VectorXd delta(d);
        if (perturber.norm == Norm::linf) {
          for (Eigen::Index i = 0; i < d; ++i) delta(i) = (rng() & 1U) ? eps : -eps;
        } else {
          for (Eigen::Index i = 0; i < d; ++i) delta(i) = gauss(rng);
          delta *= eps / delta.norm();
        }
        best = std::min(best, y * f.value(x + delta));
      }
    }
    total += best;
  }
  est.gamma = total / static_cast<double>(data.size());
  return est;
}

std::string to_string(FeatureCategory category) {
  switch (category) {
    case FeatureCategory::p_useful: return "p-useful";
    case FeatureCategory::gamma_robust: return "gamma-robust";
    case FeatureCategory::useful_non_robust: return "useful-non-robust";
    case FeatureCategory::neither: return "neither";
  }
  return "neither";
}

FeatureCategory categorize(double p, std::optional<double> gamma, double p_min) {
  if (!(p > p_min)) return FeatureCategory::neither;
  if (!gamma) return FeatureCategory::p_useful;
  return *gamma > 0 ? FeatureCategory::gamma_robust : FeatureCategory::useful_non_robust;
}

UsefulnessReport assess(const FeatureFunction& f, const BinaryData& data, const std::optional<AttackConfig>& perturber,
                        std::uint64_t seed) {
  UsefulnessReport r;
  r.feature = f.name;
  r.p = usefulness(f, data);
  if (perturber) {
    const auto est = robustness(f, data, *perturber, seed);
    r.gamma = est.gamma;
    r.probe_only = est.probe_only;
  }
  r.category = categorize(r.p, r.gamma);
  return r;
}

void write_usefulness_csv(const std::vector<UsefulnessReport>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << "feature,p,gamma,category\n";
  for (const auto& r : rows) {
    out << r.feature << ',' << fmt(r.p) << ',' << (r.gamma ? fmt(*r.gamma) : std::string()) << ','
        << to_string(r.category) << '\n';
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

Dataset build_robust_dataset(const Dataset& data, const FeatureSet& robust_features, const LayoutSpec& layout,
                             std::uint64_t seed) {
  const auto& opt = layout.options;
  if (!(data.dims == opt.dims)) throw ShapeError("dataset dims do not match the layout");
  const std::size_t W = opt.dims.width;
  const std::size_t C = opt.dims.channels;
  Dataset out;
  out.dims = data.dims;
  out.samples.reserve(data.size());
  for (const auto& s : data.samples) {
    if (s.image.size() != opt.dims.pixels()) throw ShapeError("sample '" + s.id + "' has the wrong image size");
    std::vector<char> keep(opt.dims.pixels(), 0);
    std::vector<FeatureId> kept;
    for (FeatureId f : s.truth_features) {
      const PatchSlot* slot = layout.find(f);
      if (!slot) throw ShapeError("sample '" + s.id + "' has a feature outside the layout");
      if (!robust_features.contains(f)) continue;
      kept.push_back(f);
      for (std::size_t r = 0; r < opt.patch; ++r) {
        for (std::size_t c = 0; c < opt.patch; ++c) {
          for (std::size_t ch = 0; ch < C; ++ch) keep[((slot->row + r) * W + slot->col + c) * C + ch] = 1;
        }
      }
    }
    Sample t;
    t.id = s.id;
    t.label = s.label;
    t.truth_features = FeatureSet(std::move(kept));
    t.image.resize(s.image.size());
    std::mt19937_64 rng(mix_seed(seed, fnv1a64(s.id)));
    std::normal_distribution<double> noise(0.0, opt.noise_sigma);
    for (std::size_t p = 0; p < s.image.size(); ++p) {
      const double fresh = std::clamp(0.5 + noise(rng), 0.0, 1.0);  // drawn for every pixel to keep streams aligned
      t.image[p] = keep[p] ? s.image[p] : static_cast<float>(fresh);
    }
    out.samples.push_back(std::move(t));
  }
  return out;
}

}  // namespace unmask
