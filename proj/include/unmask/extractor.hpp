#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "unmask/dataset.hpp"
#include "unmask/feature_matrix.hpp"
#include "unmask/tinynet.hpp"

namespace unmask {

struct FeatureDetection {
  FeatureId feature = 0;
  double confidence = 0.0;

  friend bool operator==(const FeatureDetection&, const FeatureDetection&) = default;
};

/// At most one detection per feature, confidences in [0,1], sorted by feature id.
struct ExtractionResult {
  std::vector<FeatureDetection> detections;

  void add(FeatureId feature, double confidence);
  friend bool operator==(const ExtractionResult&, const ExtractionResult&) = default;
};

/// Features whose confidence is at least `cutoff`.
FeatureSet to_feature_set(const ExtractionResult& result, double cutoff = 0.5);

/// Robust-feature extractor (the "K" model) behind one interface.
class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual ExtractionResult extract(const Sample& sample) const = 0;
  virtual std::string kind() const = 0;
};

struct ExtractorNoise {
  double p_miss = 0.2;  // drop each true feature
  double p_spur = 0.05; // inject one false feature from the candidate set
  void validate() const;
};

/// Reports the sample's ground-truth features, perturbed by seeded noise that
/// depends only on (sample id, seed). Ignores pixels.
class OracleExtractor final : public Extractor {
 public:
  OracleExtractor(FeatureSet candidates, ExtractorNoise noise, std::uint64_t seed);

  ExtractionResult extract(const Sample& sample) const override;
  std::string kind() const override { return "oracle"; }

  const ExtractorNoise& noise() const { return noise_; }

 private:
  FeatureSet candidates_;
  ExtractorNoise noise_;
  std::uint64_t seed_;
};

/// Multi-label TinyNet; output unit i scores `features()[i]`. Uses pixels only.
class TrainedExtractor final : public Extractor {
 public:
  TrainedExtractor(TinyNet net, std::vector<FeatureId> features);
  /// Rebuilds the feature list from the net's labels.
  TrainedExtractor(TinyNet net, const FeatureVocabulary& vocab);

  ExtractionResult extract(const Sample& sample) const override;
  std::string kind() const override { return "trained"; }
  /// Confidences for many samples at once; (features x n).
  Eigen::MatrixXd confidences(const Eigen::MatrixXd& images) const;

  const TinyNet& net() const { return net_; }
  const std::vector<FeatureId>& features() const { return features_; }

 private:
  TinyNet net_;
  std::vector<FeatureId> features_;
};

/// Precomputed detections keyed by sample id (JSON lines).
class FileExtractor final : public Extractor {
 public:
  explicit FileExtractor(std::unordered_map<std::string, ExtractionResult> records);
  static FileExtractor load(const std::filesystem::path& path, const FeatureVocabulary& vocab);

  /// Throws LookupError for an unknown sample id.
  ExtractionResult extract(const Sample& sample) const override;
  std::string kind() const override { return "file"; }
  std::size_t size() const { return records_.size(); }

 private:
  std::unordered_map<std::string, ExtractionResult> records_;
};

/// One JSON object per line: {"id": ..., "detections": [{"feature": ..., "confidence": ...}]}.
void export_detections(const Extractor& extractor, const Dataset& data, const FeatureVocabulary& vocab,
                       const std::filesystem::path& path);

/// 0/1 target columns (features x n) from each sample's truth features.
Eigen::MatrixXd feature_targets(const Dataset& data, std::span<const FeatureId> features);

struct ExtractorTraining {
  std::vector<std::size_t> hidden = {128};
  TrainOptions train = {.epochs = 60};
};

/// Multi-label net trained with per-feature binary cross-entropy against the
/// truth-feature bitvectors of `data`.
TrainedExtractor train_extractor(const Dataset& data, std::vector<FeatureId> features,
                                 const FeatureVocabulary& vocab, const ExtractorTraining& options);

/// Macro-averaged per-feature F1 at `cutoff`. Features that are neither
/// present nor predicted anywhere are left out of the average.
double mean_feature_f1(const Extractor& extractor, const Dataset& data, std::span<const FeatureId> features,
                       double cutoff = 0.5);

}  // namespace unmask
