#include "unmask/alignment.hpp"

#include <algorithm>

namespace unmask {

double jaccard(const FeatureSet& a, const FeatureSet& b) {
  const std::size_t u = union_size(a, b);
  if (u == 0) return 0.0;
  return static_cast<double>(intersection_size(a, b)) / static_cast<double>(u);
}

Detection detect(const FeatureSet& extracted, const FeatureSet& expected, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("detection threshold must lie in [0,1]");
  Detection d;
  d.similarity = jaccard(extracted, expected);
  d.distance = 1.0 - d.similarity;
  d.threshold = t;
  d.verdict = d.distance >= t ? Verdict::adversarial : Verdict::benign;
  return d;
}

std::string rectify(const FeatureSet& extracted, const ClassFeatureMatrix& matrix, const ClassSet& classes) {
  if (classes.classes.empty()) throw Error("cannot rectify against an empty class set");
  // Visit candidates in matrix order so that ">" keeps the earliest on ties.
  std::vector<std::size_t> order;
  for (const auto& c : classes.classes) order.push_back(matrix.class_index(c));
  std::sort(order.begin(), order.end());
  std::size_t best = order.front();
  double best_s = -1.0;
  for (std::size_t idx : order) {
    const double s = jaccard(extracted, matrix.row(idx));
    if (s > best_s) {
      best_s = s;
      best = idx;
    }
  }
  return matrix.classes()[best];
}

std::string to_string(PipelineMode mode) {
  return mode == PipelineMode::detect_then_rectify ? "detect_then_rectify" : "always_rectify";
}

PipelineMode pipeline_mode_from_string(std::string_view text) {
  const std::string t = normalize_name(text);
  if (t == "detect_then_rectify") return PipelineMode::detect_then_rectify;
  if (t == "always_rectify") return PipelineMode::always_rectify;
  throw ConfigError("unknown pipeline mode '" + std::string(text) + "'");
}

void PipelineParts::validate() const {
  if (!model || !extractor || !matrix || !classes) throw ConfigError("pipeline is missing a component");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("detection threshold must lie in [0,1]");
  if (!(cutoff >= 0.0 && cutoff <= 1.0)) throw ConfigError("confidence cutoff must lie in [0,1]");
}

DefenseOutcome unmask_with_prediction(const Sample& sample, const std::string& model_prediction,
                                      const PipelineParts& parts) {
  parts.validate();
  DefenseOutcome out;
  out.model_prediction = model_prediction;
  out.extracted = to_feature_set(parts.extractor->extract(sample), parts.cutoff);
  out.detection = detect(out.extracted, expected_features(*parts.matrix, model_prediction), parts.threshold);
  const bool rectify_now = parts.mode == PipelineMode::always_rectify || out.detection.adversarial();
  out.rectified = rectify_now;
  out.predicted_class = rectify_now ? rectify(out.extracted, *parts.matrix, *parts.classes) : model_prediction;
  return out;
}

DefenseOutcome unmask_pipeline(const Sample& sample, const PipelineParts& parts) {
  parts.validate();
  const int y = predict_one(*parts.model, sample.image);
  return unmask_with_prediction(sample, parts.model->labels().at(static_cast<std::size_t>(y)), parts);
}

}  // namespace unmask
