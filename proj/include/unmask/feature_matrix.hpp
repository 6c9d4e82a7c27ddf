#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unmask/common.hpp"

namespace unmask {

using FeatureId = std::uint16_t;

/// Named robust-feature vocabulary.
///
/// Identifiers cover the top-level features followed by every sub-feature of
/// the compound features. Name lookup trims whitespace and ignores case.
class FeatureVocabulary {
 public:
  FeatureVocabulary() = default;
  FeatureVocabulary(std::vector<std::string> features,
                    std::vector<std::pair<std::string, std::vector<std::string>>> subfeatures);

  /// Top-level feature names in file order.
  const std::vector<std::string>& features() const { return features_; }
  /// Every identifier name (top-level first, then sub-features).
  const std::vector<std::string>& identifiers() const { return names_; }
  std::size_t size() const { return names_.size(); }

  std::optional<FeatureId> find(std::string_view name) const;
  /// Throws LookupError("unknown feature ...") when absent.
  FeatureId id(std::string_view name) const;
  const std::string& name(FeatureId id) const { return names_.at(id); }

  bool is_compound(FeatureId id) const { return !subfeatures_.at(id).empty(); }
  std::span<const FeatureId> subfeatures(FeatureId id) const { return subfeatures_.at(id); }
  bool has_subfeatures() const;

  /// Identifiers that survive sub-feature expansion (non-compound features).
  std::vector<FeatureId> expanded_ids() const;

  /// Stable checksum of the identifier list; ties datasets to a vocabulary.
  std::string hash() const;

 private:
  std::vector<std::string> features_;
  std::vector<std::string> names_;
  std::vector<std::vector<FeatureId>> subfeatures_;
  std::map<std::string, FeatureId, std::less<>> index_;
};

/// Sorted, duplicate-free set of feature identifiers.
class FeatureSet {
 public:
  FeatureSet() = default;
  FeatureSet(std::initializer_list<FeatureId> ids);
  explicit FeatureSet(std::vector<FeatureId> ids);

  static FeatureSet from_names(const FeatureVocabulary& vocab, std::span<const std::string> names);

  bool contains(FeatureId id) const;
  void insert(FeatureId id);
  void erase(FeatureId id);
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  auto begin() const { return ids_.begin(); }
  auto end() const { return ids_.end(); }
  const std::vector<FeatureId>& ids() const { return ids_; }

  std::vector<std::string> names(const FeatureVocabulary& vocab) const;

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;

 private:
  std::vector<FeatureId> ids_;
};

std::size_t intersection_size(const FeatureSet& a, const FeatureSet& b);
std::size_t union_size(const FeatureSet& a, const FeatureSet& b);
FeatureSet set_union(const FeatureSet& a, const FeatureSet& b);

/// Class -> FeatureSet mapping (one row per class), plus the named class sets
/// carried by the matrix file.
class ClassFeatureMatrix {
 public:
  ClassFeatureMatrix() = default;
  ClassFeatureMatrix(std::shared_ptr<const FeatureVocabulary> vocab, std::vector<std::string> classes,
                     std::vector<FeatureSet> rows,
                     std::vector<std::pair<std::string, std::vector<std::string>>> class_sets = {});

  const FeatureVocabulary& vocabulary() const { return *vocab_; }
  std::shared_ptr<const FeatureVocabulary> shared_vocabulary() const { return vocab_; }

  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t num_classes() const { return classes_.size(); }

  std::optional<std::size_t> find_class(std::string_view name) const;
  /// Throws LookupError("unknown class ...") when absent.
  std::size_t class_index(std::string_view name) const;

  const FeatureSet& row(std::size_t index) const { return rows_.at(index); }
  const FeatureSet& row(std::string_view name) const { return rows_.at(class_index(name)); }

  const std::vector<std::pair<std::string, std::vector<std::string>>>& class_sets() const {
    return class_sets_;
  }
  /// Throws LookupError for an unknown class-set name.
  const std::vector<std::string>& class_set_members(std::string_view name) const;

  friend bool operator==(const ClassFeatureMatrix& a, const ClassFeatureMatrix& b) {
    return a.classes_ == b.classes_ && a.rows_ == b.rows_;
  }

 private:
  std::shared_ptr<const FeatureVocabulary> vocab_;
  std::vector<std::string> classes_;
  std::vector<FeatureSet> rows_;
  std::vector<std::pair<std::string, std::vector<std::string>>> class_sets_;
};

/// A group of classes with its feature-overlap statistics.
struct ClassSet {
  std::string name;
  std::vector<std::string> classes;
  std::size_t parts = 0;   // unique expanded features across the classes
  std::size_t shared = 0;  // features present in two or more classes
  double overlap = 0.0;    // shared / parts
};

ClassFeatureMatrix load_matrix(const std::filesystem::path& path);

/// Parses matrix JSON. `source` prefixes error messages.
ClassFeatureMatrix parse_matrix(std::string_view text, std::string_view source = "<matrix>");

/// Replaces every compound feature with its sub-features. Idempotent.
ClassFeatureMatrix expand_subfeatures(const ClassFeatureMatrix& matrix);

const FeatureSet& expected_features(const ClassFeatureMatrix& matrix, std::string_view class_name);

/// `matrix` must already be expanded. Throws Error on an empty class list.
ClassSet class_set_stats(const ClassFeatureMatrix& matrix, std::span<const std::string> classes,
                         std::string name = {});

/// Stats for a class set named in the matrix file, computed on the expanded matrix.
ClassSet named_class_set(const ClassFeatureMatrix& expanded, std::string_view name);

/// Union of the rows of every class in the set, in identifier order.
FeatureSet class_set_features(const ClassFeatureMatrix& matrix, const ClassSet& classes);

}  // namespace unmask
