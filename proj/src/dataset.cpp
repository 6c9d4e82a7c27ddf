#include "unmask/dataset.hpp"

namespace unmask {

Eigen::MatrixXd image_column(const Image& image) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(image.size()), 1);
  for (std::size_t i = 0; i < image.size(); ++i) out(static_cast<Eigen::Index>(i), 0) = image[i];
  return out;
}

Eigen::MatrixXd image_matrix(const Dataset& data) {
  const auto d = static_cast<Eigen::Index>(data.dims.pixels());
  Eigen::MatrixXd out(d, static_cast<Eigen::Index>(data.size()));
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto& img = data.samples[j].image;
    if (img.size() != data.dims.pixels()) throw ShapeError("sample '" + data.samples[j].id + "' has wrong size");
    for (Eigen::Index i = 0; i < d; ++i) out(i, static_cast<Eigen::Index>(j)) = img[static_cast<std::size_t>(i)];
  }
  return out;
}

std::vector<int> label_indices(const Dataset& data, const std::vector<std::string>& labels) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& s : data.samples) {
    const std::string key = normalize_name(s.label);
    int found = -1;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (normalize_name(labels[i]) == key) {
        found = static_cast<int>(i);
        break;
      }
    }
    if (found < 0) throw LookupError("label '" + s.label + "' is not one of the model's classes");
    out.push_back(found);
  }
  return out;
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.dims = data.dims;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) out.samples.push_back(data.samples.at(i));
  return out;
}

}  // namespace unmask
