#pragma once

#include <filesystem>
#include <optional>

#include "l2s/units/features.hpp"

namespace l2s::units {

struct Codebook {
  Mat centroids;  // K x D
  int k = 0;
  int feature_dim = 0;
  uint64_t training_seed = 0;
  std::string extractor_id;
};

struct UnitSequence {
  std::vector<int> codes;
  double frame_rate_hz = 50.0;

  int length() const { return int(codes.size()); }
};

// Nearest centroid under squared Euclidean distance; ties break toward the
// lowest centroid index.
inline UnitSequence quantize(const FeatureSequence& features, const Codebook& cb) {
  require(features.dim() == cb.feature_dim, "feature dim ", features.dim(),
          " does not match codebook dim ", cb.feature_dim);
  UnitSequence out;
  out.frame_rate_hz = features.frame_rate_hz;
  out.codes.resize(features.num_frames());
  for (int t = 0; t < features.num_frames(); ++t) {
    const double* f = features.frames.row(t);
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < cb.k; ++c) {
      const double* cen = cb.centroids.row(c);
      double d = 0.0;
      for (int j = 0; j < cb.feature_dim; ++j) {
        double diff = f[j] - cen[j];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    out.codes[t] = best;
  }
  return out;
}

// ---- UNCB binary container ----
// "UNCB", u32 version, u32 K, u32 D, u64 seed, string extractor_id, K*D f64.

inline constexpr uint32_t kUncbVersion = 1;

inline void codebook_save(const Codebook& cb, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open for writing: ", path.string());
  write_magic(os, "UNCB");
  write_u32(os, kUncbVersion);
  write_u32(os, uint32_t(cb.k));
  write_u32(os, uint32_t(cb.feature_dim));
  write_u64(os, cb.training_seed);
  write_string(os, cb.extractor_id);
  for (double v : cb.centroids.data) write_f64(os, v);
  require(os.good(), "write failed: ", path.string());
}

inline Codebook codebook_load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open: ", path.string());
  expect_magic(is, "UNCB", path.string());
  uint32_t version = read_u32(is);
  require(version == kUncbVersion, "unsupported UNCB version ", version);
  Codebook cb;
  cb.k = int(read_u32(is));
  cb.feature_dim = int(read_u32(is));
  cb.training_seed = read_u64(is);
  cb.extractor_id = read_string(is);
  require(cb.k >= 1 && cb.feature_dim >= 1, "corrupt codebook header in ", path.string());
  cb.centroids = Mat(cb.k, cb.feature_dim);
  for (double& v : cb.centroids.data) v = read_f64(is);
  require(bool(is), "truncated codebook file: ", path.string());
  return cb;
}

// Content hash used to tie checkpoints to the codebook they were trained
// against (FNV-1a over the header fields and centroid bytes).
inline std::string codebook_hash(const Codebook& cb) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  uint32_t k = uint32_t(cb.k), d = uint32_t(cb.feature_dim);
  mix(&k, 4);
  mix(&d, 4);
  mix(cb.extractor_id.data(), cb.extractor_id.size());
  mix(cb.centroids.data.data(), cb.centroids.data.size() * sizeof(double));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Surfaced when a codebook was trained with a different extractor than the
// one currently active.
inline std::optional<std::string> extractor_warning(const Codebook& cb,
                                                    const std::string& active_id) {
  if (cb.extractor_id == active_id) return std::nullopt;
  return "codebook was trained with extractor '" + cb.extractor_id +
         "' but the active extractor is '" + active_id + "'";
}

// ---- unit sequence text files: "<utt_id> <code> <code> ..." ----

inline void units_save(const std::vector<std::pair<std::string, UnitSequence>>& entries,
                       const std::filesystem::path& path) {
  std::ofstream os(path);
  require(os.good(), "cannot open for writing: ", path.string());
  for (const auto& [id, seq] : entries) {
    os << id;
    for (int c : seq.codes) os << ' ' << c;
    os << '\n';
  }
  require(os.good(), "write failed: ", path.string());
}

inline std::vector<std::pair<std::string, UnitSequence>> units_load(
    const std::filesystem::path& path, double frame_rate_hz = 50.0) {
  std::ifstream is(path);
  require(is.good(), "cannot open: ", path.string());
  std::vector<std::pair<std::string, UnitSequence>> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id;
    ls >> id;
    UnitSequence seq;
    seq.frame_rate_hz = frame_rate_hz;
    int c;
    while (ls >> c) {
      require(c >= 0, "negative unit code in ", path.string());
      seq.codes.push_back(c);
    }
    out.emplace_back(std::move(id), std::move(seq));
  }
  return out;
}

}  // namespace l2s::units
