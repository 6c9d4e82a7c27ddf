#include "unmask/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace unmask {

namespace {

std::vector<float> sign_pattern(std::uint64_t pattern_id, std::size_t n) {
  std::mt19937_64 rng(pattern_id);
  std::vector<float> out(n);
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 64 == 0) bits = rng();
    out[i] = ((bits >> (i % 64)) & 1U) ? 1.0f : -1.0f;
  }
  return out;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

std::size_t slot_capacity(const LayoutOptions& options) {
  if (options.patch == 0) return 0;
  return (options.dims.height / options.patch) * (options.dims.width / options.patch);
}

const PatchSlot* LayoutSpec::find(FeatureId feature) const {
  auto it = std::lower_bound(positions.begin(), positions.end(), feature,
                             [](const auto& p, FeatureId f) { return p.first < f; });
  if (it == positions.end() || it->first != feature) return nullptr;
  return &it->second;
}

const PatchSlot& LayoutSpec::slot(FeatureId feature) const {
  const PatchSlot* s = find(feature);
  if (!s) throw ShapeError("feature id " + std::to_string(feature) + " has no slot in the layout");
  return *s;
}

FeatureSet LayoutSpec::features() const {
  std::vector<FeatureId> ids;
  for (const auto& p : positions) ids.push_back(p.first);
  return FeatureSet(std::move(ids));
}

std::vector<float> LayoutSpec::stamp(FeatureId feature) const {
  return sign_pattern(slot(feature).pattern_id, options.patch * options.patch);
}

std::vector<float> LayoutSpec::texture(std::string_view class_name) const {
  const std::string key = normalize_name(class_name);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (normalize_name(classes[i]) == key) return sign_pattern(texture_ids[i], options.dims.height * options.dims.width);
  }
  throw LookupError("class '" + std::string(class_name) + "' is not part of the layout");
}

LayoutSpec feature_layout(const ClassFeatureMatrix& expanded, const ClassSet& classes, std::uint64_t seed,
                          const LayoutOptions& options) {
  if (options.patch == 0 || options.patch > options.dims.height || options.patch > options.dims.width) {
    throw ConfigError("patch size does not fit the image");
  }
  const FeatureSet features = class_set_features(expanded, classes);
  const std::size_t grid_rows = options.dims.height / options.patch;
  const std::size_t grid_cols = options.dims.width / options.patch;
  const std::size_t capacity = grid_rows * grid_cols;
  if (features.size() > capacity) {
    throw Error("layout capacity exceeded: " + std::to_string(features.size()) + " features for " +
                std::to_string(capacity) + " slots");
  }
  const std::size_t off_r = (options.dims.height - grid_rows * options.patch) / 2;
  const std::size_t off_c = (options.dims.width - grid_cols * options.patch) / 2;

  std::vector<std::size_t> slots(capacity);
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(seed, 0x1a70));
  std::shuffle(slots.begin(), slots.end(), rng);

  LayoutSpec layout;
  layout.options = options;
  layout.seed = seed;
  std::size_t k = 0;
  for (FeatureId f : features) {
    const std::size_t s = slots[k++];
    PatchSlot slot;
    slot.row = off_r + (s / grid_cols) * options.patch;
    slot.col = off_c + (s % grid_cols) * options.patch;
    slot.pattern_id = mix_seed(mix_seed(seed, 0x57a9), f);
    layout.positions.emplace_back(f, slot);
  }
  for (std::size_t c = 0; c < classes.classes.size(); ++c) {
    layout.classes.push_back(classes.classes[c]);
    layout.texture_ids.push_back(mix_seed(mix_seed(seed, 0x7e47), c));
  }
  return layout;
}

nlohmann::json layout_to_json(const LayoutSpec& layout, const FeatureVocabulary& vocab) {
  nlohmann::json doc;
  doc["dims"] = {layout.options.dims.height, layout.options.dims.width, layout.options.dims.channels};
  doc["patch"] = layout.options.patch;
  doc["noise_sigma"] = layout.options.noise_sigma;
  doc["contrast"] = layout.options.contrast;
  doc["texture_amp"] = layout.options.texture_amp;
  doc["random_polarity"] = layout.options.random_polarity;
  doc["seed"] = layout.seed;
  doc["vocabulary_hash"] = vocab.hash();
  auto& pos = doc["positions"];
  pos = nlohmann::json::array();
  for (const auto& [f, slot] : layout.positions) {
    pos.push_back({{"feature", vocab.name(f)}, {"row", slot.row}, {"col", slot.col}, {"pattern", slot.pattern_id}});
  }
  auto& cls = doc["classes"];
  cls = nlohmann::json::array();
  for (std::size_t i = 0; i < layout.classes.size(); ++i) {
    cls.push_back({{"class", layout.classes[i]}, {"texture", layout.texture_ids[i]}});
  }
  return doc;
}

LayoutSpec layout_from_json(const nlohmann::json& doc, const FeatureVocabulary& vocab) {
  try {
    if (doc.contains("vocabulary_hash") && doc.at("vocabulary_hash").get<std::string>() != vocab.hash()) {
      throw LoadError("layout was generated for a different feature vocabulary");
    }
    LayoutSpec layout;
    auto dims = doc.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != 3) throw LoadError("layout dims must have three entries");
    layout.options.dims = {dims[0], dims[1], dims[2]};
    layout.options.patch = doc.at("patch").get<std::size_t>();
    layout.options.noise_sigma = doc.at("noise_sigma").get<double>();
    layout.options.contrast = doc.at("contrast").get<double>();
    layout.options.texture_amp = doc.at("texture_amp").get<double>();
    layout.options.random_polarity = doc.value("random_polarity", true);
    layout.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& p : doc.at("positions")) {
      PatchSlot slot{p.at("row").get<std::size_t>(), p.at("col").get<std::size_t>(),
                     p.at("pattern").get<std::uint64_t>()};
      layout.positions.emplace_back(vocab.id(p.at("feature").get<std::string>()), slot);
    }
    std::sort(layout.positions.begin(), layout.positions.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& c : doc.at("classes")) {
      layout.classes.push_back(c.at("class").get<std::string>());
      layout.texture_ids.push_back(c.at("texture").get<std::uint64_t>());
    }
    return layout;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("bad layout: ") + e.what());
  }
}

std::string sample_id(std::string_view class_name, std::size_t index) {
  std::string slug;
  for (char c : normalize_name(class_name)) slug += (c == ' ' ? '_' : c);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06zu", index);
  return slug + "-" + buf;
}

Sample render_sample(std::string_view class_name, const ClassFeatureMatrix& expanded, const LayoutSpec& layout,
                     double drop_p, std::uint64_t seed, std::size_t index) {
  if (!(drop_p >= 0.0 && drop_p < 1.0)) throw ConfigError("drop_p must lie in [0, 1)");
  const std::size_t cls = expanded.class_index(class_name);
  const FeatureSet& row = expanded.row(cls);
  const auto& opt = layout.options;
  const std::size_t H = opt.dims.height;
  const std::size_t W = opt.dims.width;
  const std::size_t C = opt.dims.channels;

  std::mt19937_64 rng(mix_seed(seed, index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, opt.noise_sigma);

  std::vector<FeatureId> kept;
  for (FeatureId f : row) {
    if (unit(rng) >= drop_p) kept.push_back(f);
  }
  if (kept.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, row.size() - 1);
    kept.push_back(row.ids()[pick(rng)]);
  }

  const std::vector<float> texture = layout.texture(expanded.classes()[cls]);
  std::vector<double> base(H * W);
  for (std::size_t p = 0; p < H * W; ++p) base[p] = 0.5 + opt.texture_amp * texture[p];
  for (FeatureId f : kept) {
    const PatchSlot& slot = layout.slot(f);
    const std::vector<float> s = layout.stamp(f);
    const double polarity = opt.random_polarity && (rng() & 1U) ? -1.0 : 1.0;
    for (std::size_t r = 0; r < opt.patch; ++r) {
      for (std::size_t c = 0; c < opt.patch; ++c) {
        base[(slot.row + r) * W + slot.col + c] = 0.5 + polarity * opt.contrast * s[r * opt.patch + c];
      }
    }
  }

  Sample sample;
  sample.id = sample_id(expanded.classes()[cls], index);
  sample.label = expanded.classes()[cls];
  sample.truth_features = FeatureSet(std::move(kept));
  sample.image.resize(H * W * C);
  for (std::size_t p = 0; p < H * W; ++p) {
    for (std::size_t ch = 0; ch < C; ++ch) sample.image[p * C + ch] = clamp01(base[p] + noise(rng));
  }
  return sample;
}

DatasetSplits generate_dataset(const ClassFeatureMatrix& expanded, const ClassSet& classes, const LayoutSpec& layout,
                               std::size_t per_class, double drop_p, std::uint64_t seed,
                               const SplitFractions& split) {
  if (per_class < 1) throw ConfigError("per_class must be at least 1");
  if (split.train < 0 || split.val < 0 || split.test < 0 ||
      std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(per_class) * split.train));
  const auto n_val = std::min(per_class - n_train,
                              static_cast<std::size_t>(std::llround(static_cast<double>(per_class) * split.val)));

  DatasetSplits out;
  out.train.dims = out.val.dims = out.test.dims = layout.dims();
  for (std::size_t i = 0; i < per_class; ++i) {
    Dataset& target = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    for (std::size_t c = 0; c < classes.classes.size(); ++c) {
      target.samples.push_back(render_sample(classes.classes[c], expanded, layout, drop_p, mix_seed(seed, c), i));
    }
  }
  return out;
}

}  // namespace unmask
