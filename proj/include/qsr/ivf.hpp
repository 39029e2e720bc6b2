#pragma once

// Inverted file over a coarse k-means quantizer. Each base vector is stored
// in the posting list of its nearest centroid as the code of its residual
// x - centroid. Queries scan the wc closest lists with the query residual,
// scoring by approximate squared euclidean distance.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "qsr/search.hpp"

namespace qsr {

struct PostingList {
  std::vector<std::uint32_t> ids;
  CodeStore codes;
  std::vector<std::uint8_t> norm_bytes;  // quantized norm mode only
  std::size_t size() const { return ids.size(); }
};

struct IVFIndex {
  Codebook coarse;
  AnyCodec codec;  // trained on coarse residuals
  NormMode norm_mode = NormMode::quantized;
  std::optional<NormQuantizer> norm_quantizer;
  std::vector<PostingList> lists;

  std::size_t kc() const { return coarse.k; }
  std::size_t size() const;
};

struct IvfBuildOptions {
  std::optional<NormMode> norm_mode;  // quantized (residual) / product_fast (product) by default
  int coarse_iterations = 0;          // 0: use the clustering config's iterations
};

/// Coarse centroids from kmeans(train, kc, cfg); the codec is learned on the
/// train residuals with seed cfg.seed + 1.
IVFIndex build_ivf(const Dataset& train, const Dataset& base, std::size_t kc,
                   const CodecSpec& spec, const ClusteringConfig& cfg = {},
                   const IvfBuildOptions& opts = {});

struct IvfSearchResult {
  std::vector<Neighbor> hits;  // ascending approximate squared distance
  std::size_t scanned = 0;     // candidates scored
};

/// Indices of the wc centroids nearest to y, nearest first (lower id on ties).
std::vector<std::uint32_t> probe_lists(const IVFIndex& index, Vec y, std::size_t wc);

IvfSearchResult search_ivf(const IVFIndex& index, Vec y, std::size_t r, std::size_t wc);

/// As search_ivf, but inside each scanned list only entries whose first atom
/// is among the wprime atoms of C^1 best correlated with that list's query
/// residual are scored.
IvfSearchResult search_ivf_pruned(const IVFIndex& index, Vec y, std::size_t r, std::size_t wc,
                                  std::size_t wprime);

/// Batched variants, OpenMP-parallel over queries. wprime == 0 disables pruning.
std::vector<IvfSearchResult> search_ivf(const IVFIndex& index, const Dataset& queries,
                                        std::size_t r, std::size_t wc, std::size_t wprime = 0);
namespace serial {
std::vector<IvfSearchResult> search_ivf(const IVFIndex& index, const Dataset& queries,
                                        std::size_t r, std::size_t wc, std::size_t wprime = 0);
}

void save_ivf(const std::filesystem::path& path, const IVFIndex& index);
IVFIndex load_ivf(const std::filesystem::path& path);

}  // namespace qsr
