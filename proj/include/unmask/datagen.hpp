#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unmask/dataset.hpp"
#include "unmask/feature_matrix.hpp"

namespace unmask {

/// Top-left pixel of a feature's patch and the seed of its +/- stamp.
struct PatchSlot {
  std::size_t row = 0;
  std::size_t col = 0;
  std::uint64_t pattern_id = 0;

  friend bool operator==(const PatchSlot&, const PatchSlot&) = default;
};

struct LayoutOptions {
  ImageDims dims;
  std::size_t patch = 5;
  double noise_sigma = 0.1;
  double contrast = 0.4;     // stamp amplitude around mid-grey
  double texture_amp = 0.03; // per-class background texture amplitude
  bool random_polarity = true; // each drawn patch is +stamp or -stamp with equal odds
};

/// Where each feature of a class set is drawn, and how.
///
/// Every class also owns a faint full-image +/- texture. It is a useful but
/// non-robust cue: the classifier can pick it up, an L-inf budget of a few
/// intensity units erases it, and the feature extractor never needs it.
struct LayoutSpec {
  LayoutOptions options;
  std::uint64_t seed = 0;
  std::vector<std::pair<FeatureId, PatchSlot>> positions;  // sorted by feature id
  std::vector<std::string> classes;
  std::vector<std::uint64_t> texture_ids;  // parallel to classes

  const ImageDims& dims() const { return options.dims; }
  const PatchSlot* find(FeatureId feature) const;
  /// Throws ShapeError if the feature has no slot.
  const PatchSlot& slot(FeatureId feature) const;
  FeatureSet features() const;

  /// +1/-1 stamp, patch x patch, row-major.
  std::vector<float> stamp(FeatureId feature) const;
  /// +1/-1 texture over H x W for a class in the layout.
  std::vector<float> texture(std::string_view class_name) const;

  friend bool operator==(const LayoutSpec& a, const LayoutSpec& b) {
    return a.seed == b.seed && a.positions == b.positions && a.classes == b.classes &&
           a.texture_ids == b.texture_ids && a.options.dims == b.options.dims &&
           a.options.patch == b.options.patch && a.options.noise_sigma == b.options.noise_sigma &&
           a.options.contrast == b.options.contrast && a.options.texture_amp == b.options.texture_amp &&
           a.options.random_polarity == b.options.random_polarity;
  }
};

std::size_t slot_capacity(const LayoutOptions& options);

/// Deterministic assignment of distinct slots to every feature of the class set.
/// Throws Error when the grid has fewer slots than features.
LayoutSpec feature_layout(const ClassFeatureMatrix& expanded, const ClassSet& classes, std::uint64_t seed,
                          const LayoutOptions& options = {});

nlohmann::json layout_to_json(const LayoutSpec& layout, const FeatureVocabulary& vocab);
LayoutSpec layout_from_json(const nlohmann::json& doc, const FeatureVocabulary& vocab);

/// Renders one sample of `class_name`. Each feature of the class row is kept
/// with probability 1 - drop_p, at least one always. Pure in
/// (class, layout, drop_p, seed, index).
Sample render_sample(std::string_view class_name, const ClassFeatureMatrix& expanded, const LayoutSpec& layout,
                     double drop_p, std::uint64_t seed, std::size_t index = 0);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Balanced per-class generation, classes interleaved within each split.
DatasetSplits generate_dataset(const ClassFeatureMatrix& expanded, const ClassSet& classes, const LayoutSpec& layout,
                               std::size_t per_class, double drop_p, std::uint64_t seed,
                               const SplitFractions& split = {});

std::string sample_id(std::string_view class_name, std::size_t index);

}  // namespace unmask
