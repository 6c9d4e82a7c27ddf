#include "unmask/ingest.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace unmask {

namespace {

static_assert(sizeof(float) == 4, "32-bit floats required");

void put_le(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xffU));
}

float get_le(const char* p) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[k])) << (8 * k);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string() + ": cannot open");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

void save_dataset(const Dataset& data, const FeatureVocabulary& vocab, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": " + ec.message());
  const std::size_t n_px = data.dims.pixels();
  std::string blob;
  blob.reserve(data.size() * n_px * 4);
  nlohmann::json records = nlohmann::json::array();
  std::unordered_set<std::string> ids;
  for (const auto& s : data.samples) {
    if (s.image.size() != n_px) throw ShapeError("sample '" + s.id + "' has the wrong image size");
    if (!ids.insert(s.id).second) throw Error("duplicate sample id '" + s.id + "'");
    const std::size_t offset = blob.size();
    for (float v : s.image) put_le(blob, v);
    records.push_back({{"id", s.id},
                       {"label", s.label},
                       {"features", s.truth_features.names(vocab)},
                       {"offset", offset},
                       {"length", blob.size() - offset}});
  }
  nlohmann::json manifest;
  manifest["version"] = kManifestVersion;
  manifest["vocabulary_hash"] = vocab.hash();
  manifest["dims"] = {data.dims.height, data.dims.width, data.dims.channels};
  manifest["blob"] = kBlobFile;
  manifest["blob_bytes"] = blob.size();
  manifest["checksum"] = to_hex(fnv1a64(blob));
  manifest["records"] = std::move(records);

  std::ofstream b(dir / kBlobFile, std::ios::binary | std::ios::trunc);
  b.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!b) throw IoError((dir / kBlobFile).string() + ": write failed");
  std::ofstream m(dir / kManifestFile, std::ios::binary | std::ios::trunc);
  m << manifest.dump(1) << '\n';
  if (!m) throw IoError((dir / kManifestFile).string() + ": write failed");
}

Dataset load_dataset(const std::filesystem::path& dir, const FeatureVocabulary& vocab) {
  const auto manifest_path = dir / kManifestFile;
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(manifest_path.string() + ": " + e.what());
  }
  try {
    const auto version = manifest.at("version").get<std::string>();
    if (version != kManifestVersion) {
      throw LoadError(manifest_path.string() + ": unsupported manifest version '" + version + "'");
    }
    if (manifest.at("vocabulary_hash").get<std::string>() != vocab.hash()) {
      throw LoadError(manifest_path.string() + ": dataset was written against a different feature vocabulary");
    }
    const auto blob_path = dir / manifest.at("blob").get<std::string>();
    if (!std::filesystem::exists(blob_path)) throw LoadError(blob_path.string() + ": blob file is missing");
    const std::string blob = read_file(blob_path);
    if (blob.size() != manifest.at("blob_bytes").get<std::size_t>()) {
      throw LoadError(blob_path.string() + ": blob is truncated or has the wrong size");
    }
    if (to_hex(fnv1a64(blob)) != manifest.at("checksum").get<std::string>()) {
      throw LoadError(blob_path.string() + ": checksum mismatch");
    }
    const auto dims = manifest.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != 3) throw LoadError(manifest_path.string() + ": dims must have three entries");
    Dataset data;
    data.dims = {dims[0], dims[1], dims[2]};
    const std::size_t bytes = data.dims.pixels() * 4;
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    std::unordered_set<std::string> ids;
    for (const auto& r : manifest.at("records")) {
      Sample s;
      s.id = r.at("id").get<std::string>();
      if (!ids.insert(s.id).second) throw LoadError(manifest_path.string() + ": duplicate id '" + s.id + "'");
      s.label = r.at("label").get<std::string>();
      s.truth_features = FeatureSet::from_names(vocab, r.at("features").get<std::vector<std::string>>());
      const auto offset = r.at("offset").get<std::size_t>();
      const auto length = r.at("length").get<std::size_t>();
      if (length != bytes) throw LoadError(manifest_path.string() + ": record '" + s.id + "' has the wrong length");
      if (offset > blob.size() || blob.size() - offset < length) {
        throw LoadError(manifest_path.string() + ": record '" + s.id + "' points outside the blob");
      }
      spans.emplace_back(offset, length);
      s.image.resize(data.dims.pixels());
      for (std::size_t p = 0; p < s.image.size(); ++p) s.image[p] = get_le(blob.data() + offset + 4 * p);
      data.samples.push_back(std::move(s));
    }
    std::sort(spans.begin(), spans.end());
    std::size_t end = 0;
    for (const auto& [off, len] : spans) {
      if (off < end) throw LoadError(manifest_path.string() + ": records overlap in the blob");
      end = off + len;
    }
    return data;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(manifest_path.string() + ": " + e.what());
  } catch (const LookupError& e) {
    throw LoadError(manifest_path.string() + ": " + e.what());
  }
}

std::uint64_t dhash(std::span<const float> image, const ImageDims& dims) {
  const std::size_t H = dims.height, W = dims.width, C = dims.channels;
  if (image.size() != dims.pixels() || H == 0 || W == 0) throw ShapeError("image does not match its dims");
  constexpr std::size_t GW = 9, GH = 8;
  constexpr double kLevelTolerance = 1e-9;
  // Area-weighted mean of every cell; pixel edges map to fractional cell edges.
  double cells[GH][GW] = {};
  for (std::size_t gy = 0; gy < GH; ++gy) {
    const double y0 = static_cast<double>(gy) * H / GH, y1 = static_cast<double>(gy + 1) * H / GH;
    for (std::size_t gx = 0; gx < GW; ++gx) {
      const double x0 = static_cast<double>(gx) * W / GW, x1 = static_cast<double>(gx + 1) * W / GW;
      double sum = 0.0, area = 0.0;
      for (auto y = static_cast<std::size_t>(y0); y < H && static_cast<double>(y) < y1; ++y) {
        const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
        for (auto x = static_cast<std::size_t>(x0); x < W && static_cast<double>(x) < x1; ++x) {
          const double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
          double grey = 0.0;
          for (std::size_t c = 0; c < C; ++c) grey += image[(y * W + x) * C + c];
          sum += wy * wx * grey / static_cast<double>(C);
          area += wy * wx;
        }
      }
      cells[gy][gx] = sum / area;
    }
  }
  std::uint64_t bits = 0;
  for (std::size_t gy = 0; gy < GH; ++gy) {
    for (std::size_t gx = 0; gx + 1 < GW; ++gx) {
      // The margin absorbs rounding from fractional cell weights.
      bits = (bits << 1) | (cells[gy][gx] - cells[gy][gx + 1] > kLevelTolerance ? 1U : 0U);
    }
  }
  return bits;
}

int hamming(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

Dataset dedup(const Dataset& a, const Dataset& b, int max_hamming) {
  if (max_hamming < 0) throw ConfigError("max_hamming must be >= 0");
  std::vector<std::uint64_t> ref;
  ref.reserve(b.size());
  for (const auto& s : b.samples) ref.push_back(dhash(s.image, b.dims));
  Dataset out;
  out.dims = a.dims;
  for (const auto& s : a.samples) {
    const std::uint64_t h = dhash(s.image, a.dims);
    const bool dup = std::any_of(ref.begin(), ref.end(), [&](std::uint64_t r) { return hamming(h, r) <= max_hamming; });
    if (!dup) out.samples.push_back(s);
  }
  return out;
}

}  // namespace unmask
