#pragma once

// Uniform view over the four codec families plus their unquantized variants,
// the packed record layout, and codec (de)serialization.
//
// Every family decodes to  sum_m w_m * atom^m_{k_m}  where atoms are either
// full-dimension (residual layout) or sit on the m-th coordinate block
// (product layout). PQ and RVQ use unit weights.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "qsr/baseline.hpp"
#include "qsr/sparse.hpp"

namespace qsr {

enum class Method : std::uint8_t { pq = 0, rvq = 1, apq = 2, arvq = 3, qapq = 4, qarvq = 5 };

const char* to_string(Method m);
Method parse_method(const std::string& s);
bool is_sparse(Method m);
bool is_quantized_sparse(Method m);

using AnyCodec = std::variant<PQCodec, RVQCodec, SparseCodec>;

struct CodecSpec {
  Method method = Method::qarvq;
  std::size_t m = 8, k = 256, p = 256;  // p ignored by pq/rvq/apq/arvq
};

AnyCodec learn_codec(const Dataset& train, const CodecSpec& spec, const ClusteringConfig& cfg = {});

Method method_of(const AnyCodec& c);
Layout layout_of(const AnyCodec& c);
std::size_t dim_of(const AnyCodec& c);
std::size_t m_of(const AnyCodec& c);
std::size_t k_of(const AnyCodec& c);
std::size_t p_of(const AnyCodec& c);
/// Per-layer codebooks (PQ/RVQ) or dictionaries (sparse).
const std::vector<Codebook>& books_of(const AnyCodec& c);
/// True for the a-PQ / a-RVQ variants whose codes carry raw float weights.
bool has_raw_weights(const AnyCodec& c);

/// Family-agnostic code. `coeff` is meaningful for quantized sparse codecs,
/// `alpha` for raw-weight codecs; both are ignored by PQ/RVQ.
struct Code {
  std::vector<std::uint32_t> atoms;
  std::uint32_t coeff = 0;
  std::vector<float> alpha;
  friend bool operator==(const Code&, const Code&) = default;
};

Code to_code(const BaseCode& c);
Code to_code(const SparseCode& c);
SparseCode to_sparse_code(const AnyCodec& codec, const Code& c);

Code encode(const AnyCodec& codec, Vec x);
std::vector<float> decode(const AnyCodec& codec, const Code& code);

/// Weight of each layer: ones for PQ/RVQ, a_p or raw alpha for sparse codecs.
/// Uses `scratch` when the weights do not already live in the codec or code.
std::span<const float> weights_of(const AnyCodec& codec, std::span<const std::uint32_t> atoms,
                                  std::uint32_t coeff, std::span<const float> alpha,
                                  std::vector<float>& scratch);

/// Struct-of-arrays storage for many codes of one codec.
class CodeStore {
 public:
  CodeStore() = default;
  CodeStore(std::size_t m, bool raw_alpha) : m_(m), raw_(raw_alpha) {}

  std::size_t size() const { return coeff_.size(); }
  std::size_t m() const { return m_; }
  bool raw_alpha() const { return raw_; }

  void push_back(const Code& c);
  void resize(std::size_t n);
  void set(std::size_t i, const Code& c);

  std::span<const std::uint32_t> atoms(std::size_t i) const { return {atoms_.data() + i * m_, m_}; }
  std::uint32_t coeff(std::size_t i) const { return coeff_[i]; }
  std::span<const float> alpha(std::size_t i) const {
    return raw_ ? std::span<const float>(alpha_.data() + i * m_, m_) : std::span<const float>();
  }
  Code get(std::size_t i) const;

  friend bool operator==(const CodeStore&, const CodeStore&) = default;

 private:
  std::size_t m_ = 0;
  bool raw_ = false;
  std::vector<std::uint32_t> atoms_;
  std::vector<std::uint32_t> coeff_;
  std::vector<float> alpha_;
};

/// Encodes every row. OpenMP-parallel over rows.
CodeStore encode_all(const AnyCodec& codec, const Dataset& ds);
namespace serial {
CodeStore encode_all(const AnyCodec& codec, const Dataset& ds);
}

/// Bits of one code: M*ceil(log2 K) + ceil(log2 P) (+8 with a norm byte).
std::size_t code_size_bits(const AnyCodec& codec, bool norm_byte = false);

/// Byte layout of one packed record:
///   atom bytes  ceil(M * ceil(log2 K) / 8), k_1 in the most significant bits
///   coeff bytes ceil(ceil(log2 P) / 8), little-endian p
///   alpha bytes M little-endian f32 (raw-weight codecs only)
///   norm byte   optional
struct RecordLayout {
  std::size_t m = 0;
  unsigned atom_bits = 0;
  std::size_t atom_bytes = 0;
  std::size_t coeff_bytes = 0;
  std::size_t alpha_bytes = 0;
  std::size_t norm_bytes = 0;
  std::size_t total() const { return atom_bytes + coeff_bytes + alpha_bytes + norm_bytes; }
};

RecordLayout record_layout(const AnyCodec& codec, bool norm_byte);
void pack_record(const RecordLayout& layout, std::span<const std::uint32_t> atoms,
                 std::uint32_t coeff, std::span<const float> alpha, std::uint8_t norm,
                 std::span<std::uint8_t> out);
/// Returns the stored norm byte (0 when the layout has none).
std::uint8_t unpack_record(const RecordLayout& layout, std::span<const std::uint8_t> in, Code& out);

/// Serialized codec block (header fields, dictionaries, coefficient codebook).
void write_codec_block(std::ostream& out, const AnyCodec& codec);
AnyCodec read_codec_block(std::istream& in);

enum class FileKind : std::uint8_t { codec = 0, flat = 1, ivf = 2 };
inline constexpr char kMagic[4] = {'Q', 'S', 'R', '1'};

void write_header(std::ostream& out, FileKind kind);
FileKind read_header(std::istream& in);
FileKind peek_file_kind(const std::filesystem::path& path);

void save_codec(const std::filesystem::path& path, const AnyCodec& codec);
AnyCodec load_codec(const std::filesystem::path& path);

}  // namespace qsr
