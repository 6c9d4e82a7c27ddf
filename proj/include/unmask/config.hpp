#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unmask/advtrain.hpp"
#include "unmask/alignment.hpp"
#include "unmask/attacks.hpp"
#include "unmask/datagen.hpp"
#include "unmask/extractor.hpp"
#include "unmask/tinynet.hpp"

namespace unmask {

struct RunSection {
  std::string name = "experiment";
  std::filesystem::path out = "runs/experiment";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct MatrixSection {
  std::filesystem::path path;  // empty means the bundled matrix
  std::vector<std::string> class_sets = {"CS3a", "CS3b", "CS5a", "CS5b"};
};

struct DataSection {
  std::size_t per_class = 400;
  std::size_t extractor_per_class = 500;  // separate annotated set for the extractor
  double drop_p = 0.2;
  SplitFractions split = {0.5, 0.1, 0.4};
  LayoutOptions layout;
};

struct ModelSection {
  std::vector<std::size_t> hidden = {128, 64};
  TrainOptions train = {.epochs = 10};
};

struct AdvTrainSection {
  double epsilon = 4.0;
  Norm norm = Norm::linf;
  int steps = 5;
  int warmup_epochs = 5;
  TrainOptions train = {.epochs = 20};
  std::vector<double> grid = {1, 2, 4, 6, 8, 16};
};

struct ExtractorSection {
  std::string kind = "trained";  // trained | oracle | file
  ExtractorTraining training;
  bool texture_free = true;      // train on the robustified copy of the data
  ExtractorNoise noise;
  std::filesystem::path file;    // for kind = file
};

struct AttackSection {
  int steps = 20;
  double linf_step = 2.0;
  std::vector<std::string> vectors;  // empty means all eight
};

struct EvalSection {
  double threshold = 0.5;
  double cutoff = 0.5;
  PipelineMode mode = PipelineMode::always_rectify;
};

/// Effective experiment configuration. `doc` is the merged document (file plus
/// overrides); the typed sections are parsed from it.
struct ExperimentConfig {
  nlohmann::json doc = nlohmann::json::object();
  RunSection run;
  MatrixSection matrix;
  DataSection data;
  ModelSection model;
  AdvTrainSection advtrain;
  ExtractorSection extractor;
  AttackSection attack;
  EvalSection eval;
};

/// YAML text to JSON. Scalars keep their YAML type (bool, int, float, string).
nlohmann::json parse_config_text(std::string_view text, std::string_view source = "<config>");

/// Applies "section.key=value" overrides in order. Values are read as YAML
/// scalars or flow sequences, so "[1, 2]" becomes an array.
void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& overrides);

/// Typed view of a merged document. Throws ConfigError on unknown sections or
/// keys, wrong types and out-of-range values.
ExperimentConfig config_from_json(const nlohmann::json& doc);

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Every setting with defaults filled in; what run metadata records.
nlohmann::json resolved_config(const ExperimentConfig& config);

/// Stable hash of the given sections of the effective document.
std::string config_fingerprint(const ExperimentConfig& config, const std::vector<std::string>& sections);

}  // namespace unmask
