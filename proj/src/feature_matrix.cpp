#include "unmask/feature_matrix.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace unmask {

namespace {

using ordered_json = nlohmann::ordered_json;

// 1-based line of the n-th (1-based) occurrence of `needle` at or after `from`.
std::size_t line_of(std::string_view text, std::string_view needle, std::size_t from = 0, int nth = 1) {
  std::size_t pos = from;
  for (int i = 0; i < nth; ++i) {
    pos = text.find(needle, i == 0 ? pos : pos + 1);
    if (pos == std::string_view::npos) return 0;
  }
  return static_cast<std::size_t>(std::count(text.begin(), text.begin() + pos, '\n')) + 1;
}

std::string json_quoted(std::string_view s) {
  std::string out = "\"";
  out += s;
  out += '"';
  return out;
}

[[noreturn]] void fail(std::string_view source, std::size_t line, const std::string& what) {
  std::ostringstream msg;
  msg << source;
  if (line > 0) msg << ":" << line;
  msg << ": " << what;
  throw LoadError(msg.str());
}

}  // namespace

// ---------------------------------------------------------------------------
// FeatureVocabulary

FeatureVocabulary::FeatureVocabulary(
    std::vector<std::string> features,
    std::vector<std::pair<std::string, std::vector<std::string>>> subfeatures)
    : features_(std::move(features)) {
  auto add = [this](const std::string& raw) -> FeatureId {
    std::string key = normalize_name(raw);
    if (key.empty()) throw LoadError("empty feature name");
    if (index_.count(key)) throw LoadError("duplicate feature name '" + raw + "'");
    auto id = static_cast<FeatureId>(names_.size());
    names_.push_back(key);
    subfeatures_.emplace_back();
    index_.emplace(std::move(key), id);
    return id;
  };
  for (const auto& f : features_) add(f);
  for (auto& f : features_) f = normalize_name(f);
  for (const auto& [parent, subs] : subfeatures) {
    auto pid = find(parent);
    if (!pid) throw LoadError("sub-features declared for unknown feature '" + parent + "'");
    if (subs.empty()) throw LoadError("compound feature '" + parent + "' has no sub-features");
    std::vector<FeatureId> ids;
    for (const auto& s : subs) ids.push_back(add(s));
    subfeatures_[*pid] = std::move(ids);
  }
}

std::optional<FeatureId> FeatureVocabulary::find(std::string_view name) const {
  auto it = index_.find(normalize_name(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

FeatureId FeatureVocabulary::id(std::string_view name) const {
  auto found = find(name);
  if (!found) throw LookupError("unknown feature '" + std::string(name) + "'");
  return *found;
}

bool FeatureVocabulary::has_subfeatures() const {
  return std::any_of(subfeatures_.begin(), subfeatures_.end(),
                     [](const auto& s) { return !s.empty(); });
}

std::vector<FeatureId> FeatureVocabulary::expanded_ids() const {
  std::vector<FeatureId> out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (subfeatures_[i].empty()) out.push_back(static_cast<FeatureId>(i));
  }
  return out;
}

std::string FeatureVocabulary::hash() const {
  std::string canon;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    canon += names_[i];
    for (FeatureId s : subfeatures_[i]) canon += "|" + std::to_string(s);
    canon += '\n';
  }
  return to_hex(fnv1a64(canon));
}

// ---------------------------------------------------------------------------
// FeatureSet

FeatureSet::FeatureSet(std::initializer_list<FeatureId> ids) : FeatureSet(std::vector<FeatureId>(ids)) {}

FeatureSet::FeatureSet(std::vector<FeatureId> ids) : ids_(std::move(ids)) {
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
}

FeatureSet FeatureSet::from_names(const FeatureVocabulary& vocab, std::span<const std::string> names) {
  std::vector<FeatureId> ids;
  ids.reserve(names.size());
  for (const auto& n : names) ids.push_back(vocab.id(n));
  return FeatureSet(std::move(ids));
}

bool FeatureSet::contains(FeatureId id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }

void FeatureSet::insert(FeatureId id) {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) ids_.insert(it, id);
}

void FeatureSet::erase(FeatureId id) {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it != ids_.end() && *it == id) ids_.erase(it);
}

std::vector<std::string> FeatureSet::names(const FeatureVocabulary& vocab) const {
  std::vector<std::string> out;
  out.reserve(ids_.size());
  for (FeatureId id : ids_) out.push_back(vocab.name(id));
  return out;
}

std::size_t intersection_size(const FeatureSet& a, const FeatureSet& b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

std::size_t union_size(const FeatureSet& a, const FeatureSet& b) {
  return a.size() + b.size() - intersection_size(a, b);
}

FeatureSet set_union(const FeatureSet& a, const FeatureSet& b) {
  std::vector<FeatureId> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return FeatureSet(std::move(out));
}

// ---------------------------------------------------------------------------
// ClassFeatureMatrix

ClassFeatureMatrix::ClassFeatureMatrix(std::shared_ptr<const FeatureVocabulary> vocab,
                                       std::vector<std::string> classes, std::vector<FeatureSet> rows,
                                       std::vector<std::pair<std::string, std::vector<std::string>>> class_sets)
    : vocab_(std::move(vocab)),
      classes_(std::move(classes)),
      rows_(std::move(rows)),
      class_sets_(std::move(class_sets)) {
  if (!vocab_) throw Error("matrix requires a vocabulary");
  if (classes_.size() != rows_.size()) throw Error("matrix classes and rows differ in length");
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (rows_[i].empty()) throw Error("class '" + classes_[i] + "' has an empty feature row");
    for (FeatureId id : rows_[i]) {
      if (id >= vocab_->size()) throw Error("class '" + classes_[i] + "' references an invalid feature id");
    }
  }
}

std::optional<std::size_t> ClassFeatureMatrix::find_class(std::string_view name) const {
  const std::string key = normalize_name(name);
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (normalize_name(classes_[i]) == key) return i;
  }
  return std::nullopt;
}

std::size_t ClassFeatureMatrix::class_index(std::string_view name) const {
  auto found = find_class(name);
  if (!found) throw LookupError("unknown class '" + std::string(name) + "'");
  return *found;
}

const std::vector<std::string>& ClassFeatureMatrix::class_set_members(std::string_view name) const {
  const std::string key = normalize_name(name);
  for (const auto& [n, members] : class_sets_) {
    if (normalize_name(n) == key) return members;
  }
  throw LookupError("unknown class set '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Loading

ClassFeatureMatrix parse_matrix(std::string_view text, std::string_view source) {
  // Duplicate keys would silently collapse in the JSON object model, so the
  // class names are checked while parsing.
  std::string top_key;
  std::set<std::string> seen_classes;
  std::map<std::string, int> seen_count;
  ordered_json doc;
  try {
    doc = ordered_json::parse(
        text.begin(), text.end(),
        [&](int depth, ordered_json::parse_event_t event, ordered_json& parsed) {
          if (event != ordered_json::parse_event_t::key) return true;
          const std::string key = parsed.get<std::string>();
          if (depth == 1) top_key = key;
          if (depth == 2 && top_key == "classes") {
            int nth = ++seen_count[key];
            if (!seen_classes.insert(normalize_name(key)).second) {
              const std::size_t start = text.find("\"classes\"");
              fail(source, line_of(text, json_quoted(key), start, nth), "duplicate class '" + key + "'");
            }
          }
          return true;
        });
  } catch (const ordered_json::exception& e) {
    fail(source, 0, std::string("parse error: ") + e.what());
  }

  if (!doc.is_object()) fail(source, 1, "matrix must be a JSON object");
  for (const char* key : {"features", "classes"}) {
    if (!doc.contains(key)) fail(source, 0, std::string("missing key '") + key + "'");
  }

  std::vector<std::string> features;
  std::vector<std::pair<std::string, std::vector<std::string>>> subfeatures;
  std::vector<std::string> classes;
  std::vector<std::vector<std::string>> raw_rows;
  std::vector<std::pair<std::string, std::vector<std::string>>> class_sets;
  try {
    features = doc.at("features").get<std::vector<std::string>>();
    if (doc.contains("subfeatures")) {
      for (const auto& [k, v] : doc.at("subfeatures").items()) {
        subfeatures.emplace_back(k, v.get<std::vector<std::string>>());
      }
    }
    for (const auto& [k, v] : doc.at("classes").items()) {
      classes.push_back(k);
      raw_rows.push_back(v.get<std::vector<std::string>>());
    }
    if (doc.contains("class_sets")) {
      for (const auto& [k, v] : doc.at("class_sets").items()) {
        class_sets.emplace_back(k, v.get<std::vector<std::string>>());
      }
    }
  } catch (const ordered_json::exception& e) {
    fail(source, 0, std::string("schema error: ") + e.what());
  }

  std::shared_ptr<FeatureVocabulary> vocab;
  try {
    vocab = std::make_shared<FeatureVocabulary>(features, subfeatures);
  } catch (const LoadError& e) {
    fail(source, line_of(text, "\"features\""), e.what());
  }

  const std::size_t classes_pos = text.find("\"classes\"");
  std::vector<FeatureSet> rows;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const std::size_t class_line = line_of(text, json_quoted(classes[c]), classes_pos);
    if (raw_rows[c].empty()) fail(source, class_line, "class '" + classes[c] + "' has no features");
    std::vector<FeatureId> ids;
    for (const auto& name : raw_rows[c]) {
      auto id = vocab->find(name);
      if (!id) {
        std::size_t line = line_of(text, json_quoted(name), classes_pos);
        fail(source, line ? line : class_line,
             "unknown feature '" + name + "' in class '" + classes[c] + "'");
      }
      ids.push_back(*id);
    }
    rows.emplace_back(std::move(ids));
  }

  const std::size_t sets_pos = text.find("\"class_sets\"");
  std::set<std::string> class_keys;
  for (const auto& c : classes) class_keys.insert(normalize_name(c));
  for (const auto& [name, members] : class_sets) {
    if (members.empty()) fail(source, line_of(text, json_quoted(name), sets_pos), "class set '" + name + "' is empty");
    for (const auto& m : members) {
      if (!class_keys.count(normalize_name(m))) {
        fail(source, line_of(text, json_quoted(name), sets_pos),
             "class set '" + name + "' references unknown class '" + m + "'");
      }
    }
  }

  return ClassFeatureMatrix(std::move(vocab), std::move(classes), std::move(rows), std::move(class_sets));
}

ClassFeatureMatrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string() + ": cannot open matrix file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_matrix(buf.str(), path.string());
}

// ---------------------------------------------------------------------------
// Operations

ClassFeatureMatrix expand_subfeatures(const ClassFeatureMatrix& matrix) {
  const auto& vocab = matrix.vocabulary();
  std::vector<FeatureSet> rows;
  rows.reserve(matrix.num_classes());
  for (std::size_t c = 0; c < matrix.num_classes(); ++c) {
    std::vector<FeatureId> ids;
    for (FeatureId id : matrix.row(c)) {
      if (vocab.is_compound(id)) {
        auto subs = vocab.subfeatures(id);
        ids.insert(ids.end(), subs.begin(), subs.end());
      } else {
        ids.push_back(id);
      }
    }
    rows.emplace_back(std::move(ids));
  }
  return ClassFeatureMatrix(matrix.shared_vocabulary(), matrix.classes(), std::move(rows), matrix.class_sets());
}

const FeatureSet& expected_features(const ClassFeatureMatrix& matrix, std::string_view class_name) {
  return matrix.row(class_name);
}

ClassSet class_set_stats(const ClassFeatureMatrix& matrix, std::span<const std::string> classes,
                         std::string name) {
  if (classes.empty()) throw Error("class set must contain at least one class");
  std::vector<int> counts(matrix.vocabulary().size(), 0);
  ClassSet out;
  out.name = std::move(name);
  std::set<std::size_t> seen;
  for (const auto& c : classes) {
    const std::size_t idx = matrix.class_index(c);
    if (!seen.insert(idx).second) throw Error("class '" + c + "' listed twice in class set");
    out.classes.push_back(matrix.classes()[idx]);
    for (FeatureId id : matrix.row(idx)) ++counts[id];
  }
  for (int n : counts) {
    if (n >= 1) ++out.parts;
    if (n >= 2) ++out.shared;
  }
  out.overlap = static_cast<double>(out.shared) / static_cast<double>(out.parts);
  return out;
}

ClassSet named_class_set(const ClassFeatureMatrix& expanded, std::string_view name) {
  const auto& members = expanded.class_set_members(name);
  for (const auto& [n, m] : expanded.class_sets()) {
    if (normalize_name(n) == normalize_name(name)) return class_set_stats(expanded, members, n);
  }
  return class_set_stats(expanded, members, std::string(name));
}

FeatureSet class_set_features(const ClassFeatureMatrix& matrix, const ClassSet& classes) {
  FeatureSet out;
  for (const auto& c : classes.classes) out = set_union(out, matrix.row(c));
  return out;
}

}  // namespace unmask
