#include "unmask/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "unmask/advtrain.hpp"
#include "unmask/ingest.hpp"
#include "unmask/robust_stats.hpp"
#include "unmask/svg.hpp"

#ifndef UNMASK_DATA_DIR
#define UNMASK_DATA_DIR "data"
#endif

namespace unmask {

namespace fs = std::filesystem;

namespace {

void write_report(const fs::path& path, const std::string& body) {
  fs::create_directories(path.parent_path());
  write_text_file(path, body);
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

bool fingerprint_matches(const fs::path& meta, const std::string& fingerprint) {
  if (!fs::exists(meta)) return false;
  try {
    return read_json(meta).value("fingerprint", "") == fingerprint;
  } catch (const Error&) {
    return false;
  }
}

void write_meta(const fs::path& meta, const std::string& fingerprint, const std::string& class_set) {
  write_text_file(meta, nlohmann::json{{"fingerprint", fingerprint}, {"class_set", class_set}}.dump(2) + "\n");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

Architecture classifier_arch(const ImageDims& dims, const std::vector<std::size_t>& hidden,
                             const std::vector<std::string>& classes) {
  Architecture arch;
  arch.widths.push_back(dims.pixels());
  arch.widths.insert(arch.widths.end(), hidden.begin(), hidden.end());
  arch.widths.push_back(classes.size());
  arch.labels = classes;
  return arch;
}

}  // namespace

fs::path bundled_data_path(std::string_view file) {
  // An installed package points this at its own copy of the data.
  const char* dir = std::getenv("UNMASK_DATA_DIR");
  return fs::path(dir && *dir ? dir : UNMASK_DATA_DIR) / std::string(file);
}

Experiment::Experiment(ExperimentConfig config, std::ostream* log) : config_(std::move(config)), log_(log) {
  const fs::path path =
      config_.matrix.path.empty() ? bundled_data_path("unmask_matrix.json") : config_.matrix.path;
  matrix_ = expand_subfeatures(load_matrix(path));
  for (const auto& name : config_.matrix.class_sets) {
    try {
      named_class_set(matrix_, name);
    } catch (const LookupError& e) {
      throw ConfigError(std::string("matrix.class_sets: ") + e.what());
    }
  }
  try {
    vectors();
  } catch (const LookupError& e) {
    throw ConfigError(std::string("attack.vectors: ") + e.what());
  }
}

void Experiment::say(const std::string& line) const {
  if (log_) *log_ << "[unmask] " << line << std::endl;
}

std::uint64_t Experiment::set_seed(const std::string& class_set, std::uint64_t base) const {
  return mix_seed(mix_seed(config_.run.seed, base), fnv1a64(class_set));
}

std::vector<AttackVector> Experiment::vectors() const {
  auto all = reference_attack_vectors(config_.data.layout.dims.pixels(), config_.attack.steps, config_.attack.linf_step);
  if (config_.attack.vectors.empty()) return all;
  std::vector<AttackVector> chosen;
  for (const auto& name : config_.attack.vectors) {
    auto it = std::find_if(all.begin(), all.end(),
                           [&](const AttackVector& v) { return normalize_name(v.name) == normalize_name(name); });
    if (it == all.end()) throw LookupError("unknown attack vector '" + name + "'");
    chosen.push_back(*it);
  }
  return chosen;
}

// ---------------------------------------------------------------------------
// Artifacts

const Experiment::ClassSetData& Experiment::data(const std::string& cs) {
  if (auto it = data_.find(cs); it != data_.end()) return it->second;
  const fs::path dir = out() / "data" / file_slug(cs);
  const std::string fp = config_fingerprint(config_, {"matrix", "data"});
  const auto& vocab = matrix_.vocabulary();
  ClassSetData d;
  d.classes = named_class_set(matrix_, cs);
  if (fingerprint_matches(dir / "meta.json", fp)) {
    d.layout = layout_from_json(read_json(dir / "layout.json"), vocab);
    d.splits.train = load_dataset(dir / "train", vocab);
    d.splits.val = load_dataset(dir / "val", vocab);
    d.splits.test = load_dataset(dir / "test", vocab);
    d.extractor_train = load_dataset(dir / "extractor", vocab);
    say("loaded data for " + cs);
  } else {
    const auto& dc = config_.data;
    d.layout = feature_layout(matrix_, d.classes, set_seed(cs, 0x1a), dc.layout);
    d.splits = generate_dataset(matrix_, d.classes, d.layout, dc.per_class, dc.drop_p, set_seed(cs, 0xda), dc.split);
    d.extractor_train = dc.extractor_per_class == 0
                            ? d.splits.train
                            : generate_dataset(matrix_, d.classes, d.layout, dc.extractor_per_class, dc.drop_p,
                                               set_seed(cs, 0xe7), {1.0, 0.0, 0.0})
                                  .train;
    fs::create_directories(dir);
    write_text_file(dir / "layout.json", layout_to_json(d.layout, vocab).dump(2) + "\n");
    save_dataset(d.splits.train, vocab, dir / "train");
    save_dataset(d.splits.val, vocab, dir / "val");
    save_dataset(d.splits.test, vocab, dir / "test");
    save_dataset(d.extractor_train, vocab, dir / "extractor");
    write_meta(dir / "meta.json", fp, cs);
    say("generated data for " + cs + ": " + std::to_string(d.splits.train.size()) + " train, " +
        std::to_string(d.splits.test.size()) + " test, " + std::to_string(d.extractor_train.size()) +
        " extractor");
  }
  return data_.emplace(cs, std::move(d)).first->second;
}

const TinyNet& Experiment::model(const std::string& cs) {
  if (auto it = models_.find(cs); it != models_.end()) return it->second;
  const ClassSetData& d = data(cs);
  const fs::path dir = out() / "models" / file_slug(cs);
  const std::string fp = config_fingerprint(config_, {"matrix", "data", "model"});
  TinyNet net;
  if (fingerprint_matches(dir / "undefended.json", fp)) {
    net = load_checkpoint(dir / "undefended.bin");
    say("loaded undefended model for " + cs);
  } else {
    TrainOptions opt = config_.model.train;
    opt.seed = set_seed(cs, opt.seed);
    const Architecture arch = classifier_arch(d.splits.train.dims, config_.model.hidden, d.classes.classes);
    net = train(TinyNet::init(arch, opt.seed), classifier_batch(d.splits.train, arch.labels), opt).net;
    fs::create_directories(dir);
    save_checkpoint(net, dir / "undefended.bin");
    write_meta(dir / "undefended.json", fp, cs);
    say("trained undefended model for " + cs + ": test accuracy " + fmt(accuracy(net, d.splits.test)));
  }
  return models_.emplace(cs, std::move(net)).first->second;
}

const TinyNet& Experiment::adv_trained(const std::string& cs) {
  if (auto it = adv_models_.find(cs); it != adv_models_.end()) return it->second;
  const ClassSetData& d = data(cs);
  const fs::path dir = out() / "models" / file_slug(cs);
  const std::string fp = config_fingerprint(config_, {"matrix", "data", "model", "advtrain"});
  TinyNet net;
  if (fingerprint_matches(dir / "adv_trained.json", fp)) {
    net = load_checkpoint(dir / "adv_trained.bin");
    say("loaded adversarially trained model for " + cs);
  } else {
    const auto& a = config_.advtrain;
    TrainOptions opt = a.train;
    opt.seed = set_seed(cs, opt.seed);
    const Architecture arch = classifier_arch(d.splits.train.dims, config_.model.hidden, d.classes.classes);
    net = adv_train(TinyNet::init(arch, opt.seed), classifier_batch(d.splits.train, arch.labels),
                    inner_pgd(a.epsilon, a.norm, a.steps), opt, a.warmup_epochs)
              .net;
    fs::create_directories(dir);
    save_checkpoint(net, dir / "adv_trained.bin");
    write_meta(dir / "adv_trained.json", fp, cs);
    say("adversarially trained model for " + cs + ": test accuracy " + fmt(accuracy(net, d.splits.test)));
  }
  return adv_models_.emplace(cs, std::move(net)).first->second;
}

const Extractor& Experiment::extractor(const std::string& cs) {
  if (auto it = extractors_.find(cs); it != extractors_.end()) return *it->second;
  const ClassSetData& d = data(cs);
  const auto& e = config_.extractor;
  const auto& vocab = matrix_.vocabulary();
  std::unique_ptr<Extractor> ex;
  if (e.kind == "oracle") {
    ex = std::make_unique<OracleExtractor>(class_set_features(matrix_, d.classes), e.noise, set_seed(cs, 0x0c));
  } else if (e.kind == "file") {
    ex = std::make_unique<FileExtractor>(FileExtractor::load(e.file, vocab));
  } else {
    const fs::path dir = out() / "models" / file_slug(cs);
    const std::string fp = config_fingerprint(config_, {"matrix", "data", "extractor"});
    if (fingerprint_matches(dir / "extractor.json", fp)) {
      ex = std::make_unique<TrainedExtractor>(load_checkpoint(dir / "extractor.bin"), vocab);
      say("loaded extractor for " + cs);
    } else {
      ExtractorTraining opt = e.training;
      opt.train.seed = set_seed(cs, opt.train.seed);
      const Dataset source = e.texture_free ? build_robust_dataset(d.extractor_train, d.layout.features(), d.layout,
                                                                   set_seed(cs, 0x70))
                                            : d.extractor_train;
      auto trained = train_extractor(source, class_set_features(matrix_, d.classes).ids(), vocab, opt);
      fs::create_directories(dir);
      save_checkpoint(trained.net(), dir / "extractor.bin");
      write_meta(dir / "extractor.json", fp, cs);
      ex = std::make_unique<TrainedExtractor>(std::move(trained));
      say("trained extractor for " + cs);
    }
  }
  return *extractors_.emplace(cs, std::move(ex)).first->second;
}

// ---------------------------------------------------------------------------
// Stages

void Experiment::gen_data() {
  for (const auto& cs : config_.matrix.class_sets) data(cs);
}

void Experiment::train_models() {
  std::string csv = "class_set,train_accuracy,test_accuracy\n";
  for (const auto& cs : config_.matrix.class_sets) {
    const TinyNet& net = model(cs);
    const auto& d = data(cs);
    csv += cs + ',' + fmt(accuracy(net, d.splits.train)) + ',' + fmt(accuracy(net, d.splits.test)) + '\n';
  }
  write_report(out() / "reports" / "models.csv", csv);
}

void Experiment::train_extractors() {
  std::string csv = "class_set,kind,mean_f1\n";
  for (const auto& cs : config_.matrix.class_sets) {
    const Extractor& ex = extractor(cs);
    const auto& d = data(cs);
    const FeatureSet feats = class_set_features(matrix_, d.classes);
    csv += cs + ',' + ex.kind() + ',' + fmt(mean_feature_f1(ex, d.splits.test, feats.ids(), config_.eval.cutoff)) +
           '\n';
  }
  write_report(out() / "reports" / "extractor.csv", csv);
}

void Experiment::attack() {
  std::string csv = "class_set,vector,success_rate,accuracy\n";
  const auto vs = vectors();
  for (const auto& cs : config_.matrix.class_sets) {
    const TinyNet& net = model(cs);
    const auto& test = data(cs).splits.test;
    std::vector<BatchAttackResult> results(vs.size());
    parallel_for(vs.size(), config_.run.jobs,
                 [&](std::size_t i) { results[i] = attack_batch(net, test, vs[i].config); });
    for (std::size_t i = 0; i < vs.size(); ++i) {
      save_dataset(results[i].attacked, matrix_.vocabulary(), out() / "attacks" / file_slug(cs) / file_slug(vs[i].name));
      csv += cs + ',' + vs[i].name + ',' + fmt(results[i].success_rate()) + ',' +
             fmt(1.0 - results[i].success_rate()) + '\n';
    }
    say("attacked " + cs + " with " + std::to_string(vs.size()) + " vectors");
  }
  write_report(out() / "reports" / "attacks.csv", csv);
}

void Experiment::adv_train_models() {
  std::string csv = "class_set,clean_accuracy";
  const auto vs = vectors();
  for (const auto& v : vs) csv += ',' + v.name;
  csv += '\n';
  for (const auto& cs : config_.matrix.class_sets) {
    const TinyNet& net = adv_trained(cs);
    const auto& test = data(cs).splits.test;
    std::vector<double> acc(vs.size());
    parallel_for(vs.size(), config_.run.jobs,
                 [&](std::size_t i) { acc[i] = robust_accuracy(net, test, vs[i].config); });
    csv += cs + ',' + fmt(accuracy(net, test));
    for (double a : acc) csv += ',' + fmt(a);
    csv += '\n';
  }
  write_report(out() / "reports" / "adv_trained.csv", csv);
}

void Experiment::sweep_epsilon() {
  const fs::path dir = out() / "reports" / "sweep";
  fs::create_directories(dir);
  std::string chosen = "class_set,epsilon\n";
  std::vector<AttackConfig> attacks;
  for (const auto& v : vectors()) attacks.push_back(v.config);
  for (const auto& cs : config_.matrix.class_sets) {
    const auto& d = data(cs);
    LineSearchOptions opt;
    opt.arch = classifier_arch(d.splits.train.dims, config_.model.hidden, d.classes.classes);
    opt.train = config_.advtrain.train;
    opt.train.seed = set_seed(cs, opt.train.seed);
    opt.inner_steps = config_.advtrain.steps;
    opt.warmup_epochs = config_.advtrain.warmup_epochs;
    const LineSearchReport rep = epsilon_line_search(d.splits.train, d.splits.val, config_.advtrain.grid, attacks, opt);
    write_line_search_csv(rep, dir / (file_slug(cs) + ".csv"));
    write_line_search_svg(rep, dir / (file_slug(cs) + ".svg"));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", rep.chosen);
    chosen += cs + ',' + buf + '\n';
    say("line search for " + cs + " picked epsilon " + buf);
  }
  write_text_file(dir / "chosen.csv", chosen);
}

std::vector<GridClassSet> Experiment::grid_sets(bool with_adv_trained) {
  std::vector<GridClassSet> sets;
  for (const auto& cs : config_.matrix.class_sets) {
    GridClassSet g;
    g.classes = data(cs).classes;
    g.matrix = &matrix_;
    g.undefended = &model(cs);
    g.adv_trained = with_adv_trained ? &adv_trained(cs) : nullptr;
    g.extractor = &extractor(cs);
    g.test = data(cs).splits.test;
    sets.push_back(std::move(g));
  }
  return sets;
}

GridOptions Experiment::grid_options() const {
  GridOptions o;
  o.vectors = vectors();
  o.threshold = config_.eval.threshold;
  o.cutoff = config_.eval.cutoff;
  o.defense_mode = config_.eval.mode;
  o.seed = mix_seed(config_.run.seed, 0x9e1d);
  o.jobs = config_.run.jobs;
  return o;
}

EvalReport Experiment::detect() {
  EvalReport rep = attack_grid(grid_sets(false), grid_options());
  rep.accuracy.clear();
  emit_report(rep, out() / "reports" / "detect");
  return rep;
}

EvalReport Experiment::defend() {
  EvalReport rep = attack_grid(grid_sets(false), grid_options());
  rep.detection.clear();
  emit_report(rep, out() / "reports" / "defend");
  return rep;
}

EvalReport Experiment::grid() {
  EvalReport rep = attack_grid(grid_sets(true), grid_options());
  emit_report(rep, out() / "reports" / "grid");
  return rep;
}

void Experiment::report() {
  const fs::path dir = out() / "reports" / "grid";
  if (!fs::exists(dir / "report.json")) throw IoError((dir / "report.json").string() + ": run the grid first");
  emit_report(report_from_json(read_json(dir / "report.json")), dir);
}

void Experiment::write_run_meta(const std::string& subcommand) const {
  nlohmann::json meta;
  meta["subcommand"] = subcommand;
  meta["config"] = resolved_config(config_);
  nlohmann::json seeds = nlohmann::json::object();
  for (const auto& cs : config_.matrix.class_sets) {
    seeds[cs] = {{"layout", set_seed(cs, 0x1a)},
                 {"data", set_seed(cs, 0xda)},
                 {"extractor_data", set_seed(cs, 0xe7)},
                 {"model", set_seed(cs, config_.model.train.seed)},
                 {"adv_trained", set_seed(cs, config_.advtrain.train.seed)},
                 {"extractor", set_seed(cs, config_.extractor.training.train.seed)}};
  }
  meta["seeds"] = seeds;
  fs::create_directories(out());
  write_text_file(out() / "run.meta", meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Command line

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"gen-data", "train",  "train-extractor", "attack", "adv-train",
                                                 "sweep-epsilon", "detect", "defend", "grid", "report"};
  return names;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust-feature alignment experiments"};
  app.set_help_flag("-h,--help");
  app.allow_extras();
  std::string subcommand;
  std::string config_path;
  std::string out_dir;
  std::size_t jobs = 0;
  bool quiet = false;
  app.add_option("subcommand", subcommand, "one of: gen-data train train-extractor attack adv-train sweep-epsilon "
                                           "detect defend grid report")
      ->required();
  app.add_option("-c,--config", config_path, "experiment config (YAML)")->required();
  app.add_option("-o,--out", out_dir, "output directory (overrides run.out)");
  app.add_option("-j,--jobs", jobs, "worker threads (overrides run.jobs)");
  app.add_flag("-q,--quiet", quiet, "no progress lines");
  app.footer("Any config key can be overridden with --section.key=value.");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  if (std::find(subcommands().begin(), subcommands().end(), subcommand) == subcommands().end()) {
    err << "error: unknown subcommand '" << subcommand << "'\n";
    return 2;
  }

  std::vector<std::string> overrides;
  for (const auto& extra : app.remaining()) {
    if (extra.rfind("--", 0) != 0 || extra.find('=') == std::string::npos) {
      err << "error: unexpected argument '" << extra << "'\n";
      return 2;
    }
    overrides.push_back(extra);
  }
  if (!out_dir.empty()) overrides.push_back("run.out=" + out_dir);
  if (jobs > 0) overrides.push_back("run.jobs=" + std::to_string(jobs));

  std::unique_ptr<Experiment> exp;
  try {
    exp = std::make_unique<Experiment>(load_config(config_path, overrides), quiet ? nullptr : &err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    exp->write_run_meta(subcommand);
    if (subcommand == "gen-data") exp->gen_data();
    else if (subcommand == "train") exp->train_models();
    else if (subcommand == "train-extractor") exp->train_extractors();
    else if (subcommand == "attack") exp->attack();
    else if (subcommand == "adv-train") exp->adv_train_models();
    else if (subcommand == "sweep-epsilon") exp->sweep_epsilon();
    else if (subcommand == "detect") exp->detect();
    else if (subcommand == "defend") exp->defend();
    else if (subcommand == "grid") exp->grid();
    else if (subcommand == "report") exp->report();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  out << subcommand << ": artifacts in " << exp->out().string() << "\n";
  return 0;
}

}  // namespace unmask
