#pragma once

// Structured quantization baselines: Q(x) = sum_m Q_m(x).
//
// PQ splits x into M contiguous sub-vectors of D/M components and quantizes
// each one on its own codebook. RVQ quantizes the running residual with M
// full-dimension codebooks, greedily, layer after layer.

#include <cstdint>
#include <vector>

#include "qsr/clustering.hpp"

namespace qsr {

struct BaseCode {
  std::vector<std::uint32_t> indices;  // one per codebook, each < K
  friend bool operator==(const BaseCode&, const BaseCode&) = default;
};

struct PQCodec {
  std::size_t m = 0, k = 0, dim = 0;
  std::vector<Codebook> codebooks;  // M codebooks of dim D/M
  std::size_t sub_dim() const { return m ? dim / m : 0; }
  friend bool operator==(const PQCodec&, const PQCodec&) = default;
};

struct RVQCodec {
  std::size_t m = 0, k = 0, dim = 0;
  std::vector<Codebook> codebooks;  // M codebooks of dim D
  friend bool operator==(const RVQCodec&, const RVQCodec&) = default;
};

/// Codebook j is trained with seed `cfg.seed + j`.
PQCodec learn_pq(const Dataset& train, std::size_t m, std::size_t k,
                 const ClusteringConfig& cfg = {});
BaseCode encode_pq(const PQCodec& codec, Vec x);
std::vector<float> decode_pq(const PQCodec& codec, const BaseCode& code);

/// Layer j is trained on the residuals left by layers < j, seed `cfg.seed + j`.
RVQCodec learn_rvq(const Dataset& train, std::size_t m, std::size_t k,
                   const ClusteringConfig& cfg = {});
BaseCode encode_rvq(const RVQCodec& codec, Vec x);
std::vector<float> decode_rvq(const RVQCodec& codec, const BaseCode& code);

}  // namespace qsr
