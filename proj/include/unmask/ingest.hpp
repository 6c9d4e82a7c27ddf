#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "unmask/dataset.hpp"
#include "unmask/feature_matrix.hpp"

namespace unmask {

inline constexpr const char* kManifestVersion = "v1";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "images.bin";

/// Writes `dir/manifest.json` and `dir/images.bin` (little-endian float32,
/// one row-major image after another). The manifest records the vocabulary
/// hash and an FNV-1a checksum of the blob.
void save_dataset(const Dataset& data, const FeatureVocabulary& vocab, const std::filesystem::path& dir);

/// Inverse of save_dataset; bit-exact. Throws LoadError on a version or
/// vocabulary mismatch, a missing or truncated blob, a checksum failure, or
/// overlapping / out-of-range records.
Dataset load_dataset(const std::filesystem::path& dir, const FeatureVocabulary& vocab);

/// 64-bit difference hash: grey image area-averaged down to 9 x 8 cells, bit
/// set where a cell is brighter than its right neighbour by more than 1e-9.
std::uint64_t dhash(std::span<const float> image, const ImageDims& dims);

int hamming(std::uint64_t a, std::uint64_t b);

/// Samples of `a` whose hash is farther than `max_hamming` from every hash in `b`.
Dataset dedup(const Dataset& a, const Dataset& b, int max_hamming);

}  // namespace unmask
