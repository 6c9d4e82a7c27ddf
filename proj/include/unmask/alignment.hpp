#pragma once

#include <string>

#include "unmask/dataset.hpp"
#include "unmask/extractor.hpp"
#include "unmask/feature_matrix.hpp"
#include "unmask/tinynet.hpp"

namespace unmask {

/// |a ∩ b| / |a ∪ b|. An empty set scores 0 against anything, itself included.
double jaccard(const FeatureSet& a, const FeatureSet& b);

enum class Verdict : int { benign = 1, adversarial = -1 };

struct Detection {
  double similarity = 0.0;
  double distance = 1.0;  // 1 - similarity
  double threshold = 0.5;
  Verdict verdict = Verdict::adversarial;

  bool adversarial() const { return verdict == Verdict::adversarial; }
};

/// Flags the input as adversarial iff distance >= t.
Detection detect(const FeatureSet& extracted, const FeatureSet& expected, double t);

/// Class of `classes` whose row is most similar to `extracted`. Ties go to the
/// class that comes first in the matrix.
std::string rectify(const FeatureSet& extracted, const ClassFeatureMatrix& matrix, const ClassSet& classes);

enum class PipelineMode { detect_then_rectify, always_rectify };

std::string to_string(PipelineMode mode);
PipelineMode pipeline_mode_from_string(std::string_view text);

struct DefenseOutcome {
  Detection detection;
  std::string model_prediction;
  std::string predicted_class;
  bool rectified = false;
  FeatureSet extracted;
};

struct PipelineParts {
  const TinyNet* model = nullptr;
  const Extractor* extractor = nullptr;
  const ClassFeatureMatrix* matrix = nullptr;  // expanded
  const ClassSet* classes = nullptr;
  double threshold = 0.5;
  double cutoff = 0.5;
  PipelineMode mode = PipelineMode::detect_then_rectify;

  void validate() const;
};

/// Full detection + defense pass for one sample.
DefenseOutcome unmask_pipeline(const Sample& sample, const PipelineParts& parts);

/// Same, reusing a model prediction computed elsewhere (e.g. for a whole batch).
DefenseOutcome unmask_with_prediction(const Sample& sample, const std::string& model_prediction,
                                      const PipelineParts& parts);

}  // namespace unmask
