#include "unmask/extractor.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace unmask {

void ExtractionResult::add(FeatureId feature, double confidence) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) throw Error("confidence outside [0,1]");
  auto it = std::lower_bound(detections.begin(), detections.end(), feature,
                             [](const FeatureDetection& d, FeatureId f) { return d.feature < f; });
  if (it != detections.end() && it->feature == feature) throw Error("duplicate detection for one feature");
  detections.insert(it, {feature, confidence});
}

FeatureSet to_feature_set(const ExtractionResult& result, double cutoff) {
  std::vector<FeatureId> ids;
  for (const auto& d : result.detections) {
    if (d.confidence >= cutoff) ids.push_back(d.feature);
  }
  return FeatureSet(std::move(ids));
}

void ExtractorNoise::validate() const {
  if (!(p_miss >= 0 && p_miss <= 1) || !(p_spur >= 0 && p_spur <= 1)) {
    throw ConfigError("extractor noise probabilities must lie in [0,1]");
  }
}

// ---------------------------------------------------------------------------

OracleExtractor::OracleExtractor(FeatureSet candidates, ExtractorNoise noise, std::uint64_t seed)
    : candidates_(std::move(candidates)), noise_(noise), seed_(seed) {
  noise_.validate();
}

ExtractionResult OracleExtractor::extract(const Sample& sample) const {
  std::mt19937_64 rng(mix_seed(seed_, fnv1a64(sample.id)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ExtractionResult out;
  for (FeatureId f : sample.truth_features) {
    if (unit(rng) >= noise_.p_miss) out.add(f, 1.0);
  }
  if (unit(rng) < noise_.p_spur) {
    std::vector<FeatureId> foreign;
    for (FeatureId f : candidates_) {
      if (!sample.truth_features.contains(f)) foreign.push_back(f);
    }
    if (!foreign.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, foreign.size() - 1);
      out.add(foreign[pick(rng)], 1.0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

TrainedExtractor::TrainedExtractor(TinyNet net, std::vector<FeatureId> features)
    : net_(std::move(net)), features_(std::move(features)) {
  if (net_.head() != Head::sigmoid_multilabel) throw ShapeError("extractor net needs a sigmoid head");
  if (features_.size() != net_.output_dim()) throw ShapeError("extractor outputs and features differ in count");
}

TrainedExtractor::TrainedExtractor(TinyNet net, const FeatureVocabulary& vocab)
    : TrainedExtractor(net, [&] {
        std::vector<FeatureId> ids;
        for (const auto& label : net.labels()) ids.push_back(vocab.id(label));
        return ids;
      }()) {}

Eigen::MatrixXd TrainedExtractor::confidences(const Eigen::MatrixXd& images) const { return forward(net_, images); }

ExtractionResult TrainedExtractor::extract(const Sample& sample) const {
  if (sample.image.size() != net_.input_dim()) throw ShapeError("image size does not match the extractor input");
  const Eigen::MatrixXd conf = confidences(image_column(sample.image));
  ExtractionResult out;
  for (std::size_t i = 0; i < features_.size(); ++i) out.add(features_[i], conf(static_cast<Eigen::Index>(i), 0));
  return out;
}

// ---------------------------------------------------------------------------

FileExtractor::FileExtractor(std::unordered_map<std::string, ExtractionResult> records)
    : records_(std::move(records)) {}

FileExtractor FileExtractor::load(const std::filesystem::path& path, const FeatureVocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open detection file");
  std::unordered_map<std::string, ExtractionResult> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      const std::string id = rec.at("id").get<std::string>();
      ExtractionResult result;
      for (const auto& d : rec.at("detections")) {
        result.add(vocab.id(d.at("feature").get<std::string>()), d.at("confidence").get<double>());
      }
      if (!records.emplace(id, std::move(result)).second) throw Error("duplicate sample id '" + id + "'");
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw LoadError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return FileExtractor(std::move(records));
}

ExtractionResult FileExtractor::extract(const Sample& sample) const {
  auto it = records_.find(sample.id);
  if (it == records_.end()) throw LookupError("no precomputed detections for sample '" + sample.id + "'");
  return it->second;
}

void export_detections(const Extractor& extractor, const Dataset& data, const FeatureVocabulary& vocab,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  for (const auto& s : data.samples) {
    nlohmann::json rec;
    rec["id"] = s.id;
    rec["detections"] = nlohmann::json::array();
    for (const auto& d : extractor.extract(s).detections) {
      rec["detections"].push_back({{"feature", vocab.name(d.feature)}, {"confidence", d.confidence}});
    }
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd feature_targets(const Dataset& data, std::span<const FeatureId> features) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(features.size()),
                                            static_cast<Eigen::Index>(data.size()));
  for (std::size_t j = 0; j < data.size(); ++j) {
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (data.samples[j].truth_features.contains(features[i])) {
        t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
      }
    }
  }
  return t;
}

TrainedExtractor train_extractor(const Dataset& data, std::vector<FeatureId> features,
                                 const FeatureVocabulary& vocab, const ExtractorTraining& options) {
  if (data.empty()) throw Error("cannot train an extractor on an empty dataset");
  if (features.empty()) throw ConfigError("extractor needs at least one feature");
  Architecture arch;
  arch.head = Head::sigmoid_multilabel;
  arch.widths.push_back(data.dims.pixels());
  arch.widths.insert(arch.widths.end(), options.hidden.begin(), options.hidden.end());
  arch.widths.push_back(features.size());
  for (FeatureId f : features) arch.labels.push_back(vocab.name(f));
  TinyNet net = TinyNet::init(std::move(arch), options.train.seed);
  Batch batch{image_matrix(data), feature_targets(data, features)};
  auto result = train(std::move(net), batch, options.train);
  return TrainedExtractor(std::move(result.net), std::move(features));
}

double mean_feature_f1(const Extractor& extractor, const Dataset& data, std::span<const FeatureId> features,
                       double cutoff) {
  std::vector<std::size_t> tp(features.size(), 0);
  std::vector<std::size_t> fp(features.size(), 0);
  std::vector<std::size_t> fn(features.size(), 0);
  for (const auto& s : data.samples) {
    const FeatureSet predicted = to_feature_set(extractor.extract(s), cutoff);
    for (std::size_t i = 0; i < features.size(); ++i) {
      const bool truth = s.truth_features.contains(features[i]);
      const bool pred = predicted.contains(features[i]);
      if (truth && pred) ++tp[i];
      if (!truth && pred) ++fp[i];
      if (truth && !pred) ++fn[i];
    }
  }
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const std::size_t denom = 2 * tp[i] + fp[i] + fn[i];
    if (denom == 0) continue;
    total += 2.0 * static_cast<double>(tp[i]) / static_cast<double>(denom);
    ++counted;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

}  // namespace unmask
