#include "unmask/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace unmask {

namespace {

nlohmann::json scalar_to_json(const YAML::Node& node) {
  const std::string text = node.Scalar();
  if (node.Tag() == "!") return text;  // quoted: always a string
  if (text == "true" || text == "True") return true;
  if (text == "false" || text == "False") return false;
  if (text == "null" || text == "~" || text.empty()) return nullptr;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  if (!text.empty() && text[0] != '-') {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(text, &used);  // seeds above 2^63
      if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  return text;
}

nlohmann::json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return scalar_to_json(node);
    case YAML::NodeType::Sequence: {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      nlohmann::json obj = nlohmann::json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return obj;
    }
  }
  return nullptr;
}

// Typed, strict access to one config section; unknown keys are errors.
class SectionReader {
 public:
  SectionReader(const nlohmann::json& doc, std::string name) : name_(std::move(name)) {
    if (doc.contains(name_)) {
      section_ = doc.at(name_);
      if (!section_.is_object()) throw ConfigError("section '" + name_ + "' must be a mapping");
    }
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!section_.contains(key) || section_.at(key).is_null()) return fallback;
    try {
      return convert<T>(section_.at(key));
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(name_ + "." + key + ": wrong type");
    }
  }

  bool has(const std::string& key) const { return section_.contains(key) && !section_.at(key).is_null(); }

  void finish() const {
    for (auto it = section_.begin(); it != section_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError("unknown key '" + name_ + "." + it.key() + "'");
    }
  }

 private:
  template <class T>
  static T convert(const nlohmann::json& v) {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw nlohmann::json::type_error::create(302, "number expected", nullptr);
      return v.get<double>();
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) throw nlohmann::json::type_error::create(302, "integer expected", nullptr);
      if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned() && v.get<long long>() < 0) throw nlohmann::json::type_error::create(302, "negative", nullptr);
      }
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      if (!v.is_array()) throw nlohmann::json::type_error::create(302, "array expected", nullptr);
      T out;
      for (const auto& x : v) out.push_back(convert<double>(x));
      return out;
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      if (!v.is_array()) throw nlohmann::json::type_error::create(302, "array expected", nullptr);
      T out;
      for (const auto& x : v) out.push_back(convert<std::size_t>(x));
      return out;
    } else {
      return v.get<T>();
    }
  }

  std::string name_;
  nlohmann::json section_ = nlohmann::json::object();
  std::set<std::string> used_;
};

TrainOptions read_train(SectionReader& r, TrainOptions base, std::uint64_t seed) {
  base.epochs = r.get("epochs", base.epochs);
  base.lr = r.get("lr", base.lr);
  base.batch_size = r.get("batch_size", base.batch_size);
  base.optimizer = optimizer_from_string(r.get<std::string>("optimizer", to_string(base.optimizer)));
  base.momentum = r.get("momentum", base.momentum);
  base.weight_decay = r.get("weight_decay", base.weight_decay);
  base.seed = r.get<std::uint64_t>("seed", seed);
  if (base.lr <= 0) throw ConfigError("learning rate must be positive");
  if (base.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (base.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (base.momentum < 0 || base.momentum >= 1) throw ConfigError("momentum must lie in [0, 1)");
  return base;
}

void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0, 1]");
}

const std::set<std::string> kSections = {"run", "matrix", "data", "model", "advtrain", "extractor", "attack", "eval"};

}  // namespace

nlohmann::json parse_config_text(std::string_view text, std::string_view source) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string(source) + ": " + e.what());
  }
  nlohmann::json doc = yaml_to_json(root);
  if (doc.is_null()) return nlohmann::json::object();
  if (!doc.is_object()) throw ConfigError(std::string(source) + ": top level must be a mapping of sections");
  return doc;
}

void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& overrides) {
  for (const auto& raw : overrides) {
    std::string item = raw;
    if (item.rfind("--", 0) == 0) item = item.substr(2);
    const auto eq = item.find('=');
    const auto dot = item.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 || dot + 1 == eq) {
      throw ConfigError("override '" + raw + "' is not of the form section.key=value");
    }
    const std::string section = item.substr(0, dot);
    const std::string key = item.substr(dot + 1, eq - dot - 1);
    const std::string value = item.substr(eq + 1);
    nlohmann::json parsed;
    try {
      parsed = yaml_to_json(YAML::Load(value));
    } catch (const YAML::Exception&) {
      parsed = value;
    }
    if (!doc.contains(section)) doc[section] = nlohmann::json::object();
    if (!doc[section].is_object()) throw ConfigError("section '" + section + "' must be a mapping");
    doc[section][key] = parsed;
  }
}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a mapping of sections");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!kSections.count(it.key())) throw ConfigError("unknown section '" + it.key() + "'");
  }
  ExperimentConfig cfg;
  cfg.doc = doc;

  {
    SectionReader r(doc, "run");
    cfg.run.name = r.get("name", cfg.run.name);
    cfg.run.out = r.get<std::string>("out", "runs/" + cfg.run.name);
    cfg.run.seed = r.get("seed", cfg.run.seed);
    cfg.run.jobs = r.get("jobs", cfg.run.jobs);
    if (cfg.run.jobs == 0) throw ConfigError("run.jobs must be positive");
    r.finish();
  }
  const std::uint64_t seed = cfg.run.seed;
  {
    SectionReader r(doc, "matrix");
    cfg.matrix.path = r.get<std::string>("path", "");
    cfg.matrix.class_sets = r.get("class_sets", cfg.matrix.class_sets);
    if (cfg.matrix.class_sets.empty()) throw ConfigError("matrix.class_sets must not be empty");
    r.finish();
  }
  {
    SectionReader r(doc, "data");
    auto& d = cfg.data;
    d.per_class = r.get("per_class", d.per_class);
    d.extractor_per_class = r.get("extractor_per_class", d.extractor_per_class);
    d.drop_p = r.get("drop_p", d.drop_p);
    const auto split = r.get("split", std::vector<double>{d.split.train, d.split.val, d.split.test});
    if (split.size() != 3) throw ConfigError("data.split needs three fractions (train, val, test)");
    d.split = {split[0], split[1], split[2]};
    d.layout.dims.height = r.get("height", d.layout.dims.height);
    d.layout.dims.width = r.get("width", d.layout.dims.width);
    d.layout.patch = r.get("patch", d.layout.patch);
    d.layout.noise_sigma = r.get("noise_sigma", d.layout.noise_sigma);
    d.layout.contrast = r.get("contrast", d.layout.contrast);
    d.layout.texture_amp = r.get("texture_amp", d.layout.texture_amp);
    d.layout.random_polarity = r.get("random_polarity", d.layout.random_polarity);
    check_unit(d.drop_p, "data.drop_p");
    if (d.per_class == 0) throw ConfigError("data.per_class must be positive");
    if (d.layout.noise_sigma < 0 || d.layout.contrast < 0 || d.layout.texture_amp < 0) {
      throw ConfigError("data noise_sigma, contrast and texture_amp must be non-negative");
    }
    for (double f : split) {
      if (f < 0) throw ConfigError("data.split fractions must be non-negative");
    }
    r.finish();
  }
  {
    SectionReader r(doc, "model");
    cfg.model.hidden = r.get("hidden", cfg.model.hidden);
    cfg.model.train = read_train(r, cfg.model.train, mix_seed(seed, 1));
    r.finish();
  }
  {
    SectionReader r(doc, "advtrain");
    auto& a = cfg.advtrain;
    a.epsilon = r.get("epsilon", a.epsilon);
    a.norm = norm_from_string(r.get<std::string>("norm", to_string(a.norm)));
    a.steps = r.get("steps", a.steps);
    a.warmup_epochs = r.get("warmup_epochs", a.warmup_epochs);
    a.grid = r.get("grid", a.grid);
    a.train = read_train(r, a.train, mix_seed(seed, 2));
    if (a.epsilon < 0) throw ConfigError("advtrain.epsilon must be non-negative");
    if (a.steps <= 0) throw ConfigError("advtrain.steps must be positive");
    if (a.warmup_epochs < 0) throw ConfigError("advtrain.warmup_epochs must be non-negative");
    if (a.grid.empty()) throw ConfigError("advtrain.grid must not be empty");
    r.finish();
  }
  {
    SectionReader r(doc, "extractor");
    auto& e = cfg.extractor;
    e.kind = normalize_name(r.get("kind", e.kind));
    if (e.kind != "trained" && e.kind != "oracle" && e.kind != "file") {
      throw ConfigError("extractor.kind must be trained, oracle or file");
    }
    e.training.hidden = r.get("hidden", e.training.hidden);
    e.training.train = read_train(r, e.training.train, mix_seed(seed, 3));
    e.texture_free = r.get("texture_free", e.texture_free);
    e.noise.p_miss = r.get("p_miss", e.noise.p_miss);
    e.noise.p_spur = r.get("p_spur", e.noise.p_spur);
    e.noise.validate();
    e.file = r.get<std::string>("file", "");
    if (e.kind == "file" && e.file.empty()) throw ConfigError("extractor.file is required for kind = file");
    r.finish();
  }
  {
    SectionReader r(doc, "attack");
    cfg.attack.steps = r.get("steps", cfg.attack.steps);
    cfg.attack.linf_step = r.get("linf_step", cfg.attack.linf_step);
    cfg.attack.vectors = r.get("vectors", cfg.attack.vectors);
    if (cfg.attack.steps <= 0) throw ConfigError("attack.steps must be positive");
    if (cfg.attack.linf_step <= 0) throw ConfigError("attack.linf_step must be positive");
    r.finish();
  }
  {
    SectionReader r(doc, "eval");
    cfg.eval.threshold = r.get("threshold", cfg.eval.threshold);
    cfg.eval.cutoff = r.get("cutoff", cfg.eval.cutoff);
    cfg.eval.mode = pipeline_mode_from_string(r.get<std::string>("mode", to_string(cfg.eval.mode)));
    check_unit(cfg.eval.threshold, "eval.threshold");
    check_unit(cfg.eval.cutoff, "eval.cutoff");
    r.finish();
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config");
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json doc = parse_config_text(buf.str(), path.string());
  apply_overrides(doc, overrides);
  return config_from_json(doc);
}

namespace {

nlohmann::json train_to_json(const TrainOptions& t) {
  return {{"epochs", t.epochs},         {"lr", t.lr},
          {"batch_size", t.batch_size}, {"optimizer", to_string(t.optimizer)},
          {"momentum", t.momentum},     {"weight_decay", t.weight_decay},
          {"seed", t.seed}};
}

}  // namespace

nlohmann::json resolved_config(const ExperimentConfig& c) {
  nlohmann::json j;
  j["run"] = {{"name", c.run.name}, {"out", c.run.out.string()}, {"seed", c.run.seed}, {"jobs", c.run.jobs}};
  j["matrix"] = {{"path", c.matrix.path.string()}, {"class_sets", c.matrix.class_sets}};
  const auto& d = c.data;
  j["data"] = {{"per_class", d.per_class},
               {"extractor_per_class", d.extractor_per_class},
               {"drop_p", d.drop_p},
               {"split", {d.split.train, d.split.val, d.split.test}},
               {"height", d.layout.dims.height},
               {"width", d.layout.dims.width},
               {"patch", d.layout.patch},
               {"noise_sigma", d.layout.noise_sigma},
               {"contrast", d.layout.contrast},
               {"texture_amp", d.layout.texture_amp},
               {"random_polarity", d.layout.random_polarity}};
  j["model"] = train_to_json(c.model.train);
  j["model"]["hidden"] = c.model.hidden;
  const auto& a = c.advtrain;
  j["advtrain"] = train_to_json(a.train);
  j["advtrain"].update({{"epsilon", a.epsilon},
                        {"norm", to_string(a.norm)},
                        {"steps", a.steps},
                        {"warmup_epochs", a.warmup_epochs},
                        {"grid", a.grid}});
  const auto& e = c.extractor;
  j["extractor"] = train_to_json(e.training.train);
  j["extractor"].update({{"kind", e.kind},
                         {"hidden", e.training.hidden},
                         {"texture_free", e.texture_free},
                         {"p_miss", e.noise.p_miss},
                         {"p_spur", e.noise.p_spur},
                         {"file", e.file.string()}});
  j["attack"] = {{"steps", c.attack.steps}, {"linf_step", c.attack.linf_step}, {"vectors", c.attack.vectors}};
  j["eval"] = {{"threshold", c.eval.threshold}, {"cutoff", c.eval.cutoff}, {"mode", to_string(c.eval.mode)}};
  return j;
}

std::string config_fingerprint(const ExperimentConfig& config, const std::vector<std::string>& sections) {
  const nlohmann::json full = resolved_config(config);
  nlohmann::json part = nlohmann::json::object();
  for (const auto& s : sections) part[s] = full.at(s);
  // run.seed feeds every derived seed, so it is always part of the identity.
  part["seed"] = config.run.seed;
  return to_hex(fnv1a64(part.dump()));
}

}  // namespace unmask
