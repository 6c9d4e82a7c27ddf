#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unmask/common.hpp"
#include "unmask/feature_matrix.hpp"

namespace unmask {

struct ImageDims {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;

  std::size_t pixels() const { return height * width * channels; }
  friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

struct Sample {
  std::string id;
  Image image;
  std::string label;
  FeatureSet truth_features;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  ImageDims dims;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Images as columns of a (pixels x n) matrix.
Eigen::MatrixXd image_matrix(const Dataset& data);
Eigen::MatrixXd image_column(const Image& image);

/// Index of each sample's label within `labels`; throws LookupError on a miss.
std::vector<int> label_indices(const Dataset& data, const std::vector<std::string>& labels);

/// Subset by position, keeping dims.
Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices);

}  // namespace unmask
