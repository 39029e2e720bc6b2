#pragma once

// Asymmetric search: the query stays uncompressed, database vectors are
// scored from their codes through per-query lookup tables.
//
//   numerator   y.Q(x) = sum_m w_m * t_m[k_m],  t_m[k] = y.c^m_k
//   cosine      y.Q(x) / |Q(x)|
//   euclidean   |y|^2 - 2 y.Q(x) + |Q(x)|^2
//
// |Q(x)| comes from one of three places: the Gram table of inter-dictionary
// atom products (exact, O(M^2) per code), a stored 1-byte scalar-quantized
// norm, or, for product layouts, the closed form available because blocks
// are mutually orthogonal.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "qsr/codec.hpp"
#include "qsr/topr.hpp"

namespace qsr {

struct LookupTable {
  std::size_t m = 0, k = 0;
  std::vector<float> values;  // m x k
  float at(std::size_t layer, std::size_t atom) const { return values[layer * k + atom]; }
  std::span<const float> layer(std::size_t j) const { return {values.data() + j * k, k}; }
};

LookupTable build_lookup(const AnyCodec& codec, Vec y);
/// Writes into `table` (resized as needed) to avoid per-query allocation.
void build_lookup(const AnyCodec& codec, Vec y, LookupTable& table);

/// sum_m w_m * t_m[k_m], products in f32, sum in f64. Empty weights mean 1.
double score_numerator(const LookupTable& table, std::span<const std::uint32_t> atoms,
                       std::span<const float> weights = {});
double score_numerator(const LookupTable& table, const BaseCode& code);
double score_numerator(const LookupTable& table, const SparseCode& code,
                       const CoefficientCodebook& coeffs);

/// All inter-dictionary atom inner products. Product layouts store zeros
/// off the diagonal blocks (disjoint supports).
class GramTable {
 public:
  GramTable() = default;
  explicit GramTable(const AnyCodec& codec);

  /// |c^m_k|^2
  float self(std::size_t m, std::size_t k) const { return self_[m * k_ + k]; }
  /// c^m_a . c^n_b for any m != n.
  float cross(std::size_t m, std::size_t a, std::size_t n, std::size_t b) const;

  /// |sum_m w_m c^m_{k_m}|^2
  double norm_sq(std::span<const std::uint32_t> atoms, std::span<const float> weights) const;

  std::size_t m() const { return m_; }
  std::size_t k() const { return k_; }

 private:
  std::size_t block_offset(std::size_t m, std::size_t n) const;
  std::size_t m_ = 0, k_ = 0;
  std::vector<float> self_;
  std::vector<float> cross_;  // upper-triangular blocks (m < n), each k x k
};

/// 256-level non-uniform scalar quantizer for code norms.
struct NormQuantizer {
  std::vector<float> levels;  // ascending (non-decreasing when padded)

  std::uint8_t encode(float v) const;
  float decode(std::uint8_t b) const { return levels[b]; }
  /// Largest half-gap between adjacent levels.
  float max_half_gap() const;
};

/// 1-D k-means with 256 levels (Lloyd from quantile seeds), end levels pinned
/// to the sample min and max. Fewer than 256 distinct samples yield those values
/// padded with the largest one.
NormQuantizer learn_norm_quantizer(std::span<const float> norms);

enum class NormMode : std::uint8_t { gram = 0, quantized = 1, product_fast = 2 };
const char* to_string(NormMode m);
NormMode parse_norm_mode(const std::string& s);

/// Residual layouts: quantized at N >= 1e6, gram below. Product: closed form.
NormMode default_norm_mode(const AnyCodec& codec, std::size_t n);

/// |Q(x)| for product-layout codes: |a_p|, |alpha| or sqrt(sum |codeword|^2).
double product_norm(const AnyCodec& codec, std::span<const std::uint32_t> atoms,
                    std::uint32_t coeff, std::span<const float> alpha);

/// Precomputed per-codec state for scoring stored codes against a table.
class CodeScorer {
 public:
  CodeScorer(const AnyCodec& codec, Metric metric, NormMode mode,
             const NormQuantizer* quantizer);

  /// Numerator y.Q(x) for stored code i.
  double numerator(const LookupTable& t, const CodeStore& codes, std::size_t i) const;
  /// |Q(x)| for stored code i; `norm_byte` is consulted in quantized mode.
  double norm(const CodeStore& codes, std::size_t i, std::optional<std::uint8_t> norm_byte) const;
  /// Final score; `query_sq_norm` only matters for the euclidean metric.
  float score(double numerator, double norm, double query_sq_norm) const;

  Metric metric() const { return metric_; }
  bool larger_is_better() const { return metric_ == Metric::cosine; }

 private:
  const AnyCodec* codec_;
  Metric metric_;
  NormMode mode_;
  const NormQuantizer* quantizer_;
  std::optional<GramTable> gram_;
  std::vector<float> unit_;  // all-ones weights for PQ/RVQ
};

/// |Q(x)| of one code through the requested method.
double norm_of_code(const AnyCodec& codec, const Code& code, NormMode mode,
                    const GramTable* gram = nullptr, const NormQuantizer* quantizer = nullptr,
                    std::optional<std::uint8_t> norm_byte = std::nullopt);

struct FlatIndex {
  AnyCodec codec;
  Metric metric = Metric::euclidean;
  NormMode norm_mode = NormMode::gram;
  CodeStore codes;
  std::optional<NormQuantizer> norm_quantizer;  // present iff norm_mode == quantized
  std::vector<std::uint8_t> norm_bytes;         // one per code in quantized mode

  std::size_t size() const { return codes.size(); }
};

struct FlatBuildOptions {
  Metric metric = Metric::euclidean;
  std::optional<NormMode> norm_mode;  // default_norm_mode() when empty
  /// Norm quantizer training data (decoded norms of these vectors); the base
  /// set is used when null.
  const Dataset* norm_train = nullptr;
};

FlatIndex build_flat(AnyCodec codec, const Dataset& base, const FlatBuildOptions& opts = {});

std::vector<Neighbor> search_flat(const FlatIndex& index, Vec y, std::size_t r);
/// One result list per query, OpenMP-parallel over queries.
std::vector<std::vector<Neighbor>> search_flat(const FlatIndex& index, const Dataset& queries,
                                               std::size_t r);
namespace serial {
std::vector<std::vector<Neighbor>> search_flat(const FlatIndex& index, const Dataset& queries,
                                               std::size_t r);
}

/// Norms |decode(code)| for every stored code.
std::vector<float> decoded_norms(const AnyCodec& codec, const CodeStore& codes);

void save_flat(const std::filesystem::path& path, const FlatIndex& index);
FlatIndex load_flat(const std::filesystem::path& path);

// Shared by the flat and IVF containers.
void write_norm_block(std::ostream& out, NormMode mode, const std::optional<NormQuantizer>& q);
void read_norm_block(std::istream& in, NormMode& mode, std::optional<NormQuantizer>& q);

}  // namespace qsr
