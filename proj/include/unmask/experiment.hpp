#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "unmask/config.hpp"
#include "unmask/datagen.hpp"
#include "unmask/evalharness.hpp"
#include "unmask/extractor.hpp"
#include "unmask/feature_matrix.hpp"

namespace unmask {

/// Path of a file shipped in the data directory (matrix JSON etc.).
std::filesystem::path bundled_data_path(std::string_view file);

/// Artifact store and stage runner for one configuration.
///
/// Every stage is cached under `run.out`: data in data/<set>/, nets in
/// models/<set>/, attacked sets in attacks/<set>/, tables and charts in
/// reports/. A cached artifact is reused only when its recorded fingerprint
/// matches the config sections it was built from.
class Experiment {
 public:
  struct ClassSetData {
    ClassSet classes;
    LayoutSpec layout;
    DatasetSplits splits;
    Dataset extractor_train;  // separately drawn annotated set
  };

  explicit Experiment(ExperimentConfig config, std::ostream* log = nullptr);

  const ExperimentConfig& config() const { return config_; }
  const ClassFeatureMatrix& matrix() const { return matrix_; }  // expanded
  const std::filesystem::path& out() const { return config_.run.out; }

  const ClassSetData& data(const std::string& class_set);
  const TinyNet& model(const std::string& class_set);
  const TinyNet& adv_trained(const std::string& class_set);
  const Extractor& extractor(const std::string& class_set);

  /// The configured attack vectors at this run's image size.
  std::vector<AttackVector> vectors() const;

  // Stages, one per subcommand.
  void gen_data();
  void train_models();
  void train_extractors();
  void attack();
  void adv_train_models();
  void sweep_epsilon();
  EvalReport detect();
  EvalReport defend();
  EvalReport grid();
  /// Re-renders reports/grid from its report.json.
  void report();

  /// Writes <out>/run.meta: subcommand, effective config and derived seeds.
  void write_run_meta(const std::string& subcommand) const;

 private:
  void say(const std::string& line) const;
  std::uint64_t set_seed(const std::string& class_set, std::uint64_t base) const;
  std::vector<GridClassSet> grid_sets(bool with_adv_trained);
  GridOptions grid_options() const;

  ExperimentConfig config_;
  std::ostream* log_;
  ClassFeatureMatrix matrix_;
  std::map<std::string, ClassSetData> data_;
  std::map<std::string, TinyNet> models_;
  std::map<std::string, TinyNet> adv_models_;
  std::map<std::string, std::unique_ptr<Extractor>> extractors_;
};

const std::vector<std::string>& subcommands();

/// Parses `args` (without the program name), runs the subcommand and returns
/// the exit status: 0 success, 1 runtime failure, 2 usage or config error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace unmask
