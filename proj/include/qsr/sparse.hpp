#pragma once

// Quantized sparse representations.
//
// A vector is approximated as a weighted sum of M unit atoms, one per
// dictionary:  Q(x) = sum_m w_m c^m_{k_m} = C(k) w.
//
// Residual layout (Qa-RVQ): full-dimension dictionaries, atoms picked
// greedily on the running residual, then all M weights are refit jointly by
// least squares on the selected support.
//
// Product layout (Qa-PQ): dictionary m lives on the m-th block of D/M
// coordinates; each block picks its atom and weight independently.
//
// The weight vector w is then vector-quantized on a P-entry coefficient
// codebook. P = 0 keeps the raw weights (the unquantized a-RVQ / a-PQ).

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qsr/clustering.hpp"

namespace qsr {

enum class Layout : std::uint8_t { residual = 0, product = 1 };

struct CoefficientCodebook {
  Codebook book;                 // P codewords of dimension M
  std::vector<float> sq_norms;   // |a_p|^2

  std::size_t p() const { return book.k; }
  std::size_t m() const { return book.dim; }
  Vec codeword(std::size_t i) const { return book.center(i); }

  static CoefficientCodebook from(Codebook book);
  friend bool operator==(const CoefficientCodebook&, const CoefficientCodebook&) = default;
};

struct SparseCodec {
  Layout layout = Layout::residual;
  std::size_t m = 0, k = 0, dim = 0;
  std::vector<Codebook> dictionaries;        // spherical; dim D or D/M
  std::optional<CoefficientCodebook> coeffs;  // absent => raw weights

  std::size_t sub_dim() const { return layout == Layout::product ? dim / m : dim; }
  bool quantized() const { return coeffs.has_value(); }
  std::size_t p() const { return coeffs ? coeffs->p() : 0; }
  friend bool operator==(const SparseCodec&, const SparseCodec&) = default;
};

/// Atom indices plus either the coefficient index p or the raw weights.
struct SparseCode {
  std::vector<std::uint32_t> indices;
  std::optional<std::uint32_t> coeff;
  std::vector<float> alpha;
  friend bool operator==(const SparseCode&, const SparseCode&) = default;
};

struct PursuitResult {
  std::vector<std::uint32_t> indices;
  std::vector<float> weights;   // greedy weights r_m . c^m_{k_m}
  std::vector<float> residual;  // r_{M+1}
};

/// Greedy one-atom-per-dictionary pursuit over full-dimension dictionaries.
/// Atom choice maximizes the signed inner product with the residual (the
/// least negative one wins when all are negative); ties go to the lowest index.
PursuitResult pursuit(std::span<const Codebook> dicts, Vec x);

/// Least-squares weights for the selected atoms: argmin_a |x - C a|.
/// Rank-deficient supports get the minimum-norm solution; singular values
/// below 1e-6 * sigma_max count as zero.
std::vector<float> refit_weights(std::span<const Vec> atoms, Vec x);

/// P = 0 skips coefficient quantization.
SparseCodec learn_qarvq(const Dataset& train, std::size_t m, std::size_t k, std::size_t p,
                        const ClusteringConfig& cfg = {});
SparseCode encode_qarvq(const SparseCodec& codec, Vec x);
std::vector<float> decode_qarvq(const SparseCodec& codec, const SparseCode& code);

SparseCodec learn_qapq(const Dataset& train, std::size_t m, std::size_t k, std::size_t p,
                       const ClusteringConfig& cfg = {});
SparseCode encode_qapq(const SparseCodec& codec, Vec x);
std::vector<float> decode_qapq(const SparseCodec& codec, const SparseCode& code);

/// Learns the P-entry codebook over weight vectors (rows of `alphas`).
CoefficientCodebook learn_coefficients(const Dataset& alphas, std::size_t p,
                                       const ClusteringConfig& cfg = {});

/// Weights a code carries: a_p for quantized codecs, raw alpha otherwise.
std::span<const float> code_weights(const SparseCodec& codec, const SparseCode& code);

/// M*ceil(log2 K) + ceil(log2 P), plus 8 when a norm byte rides along.
std::size_t code_size_bits(const SparseCodec& codec, bool norm_byte = false);

}  // namespace qsr
