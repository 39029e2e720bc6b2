#include "qsr/codec.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "qsr/io.hpp"

namespace qsr {

const char* to_string(Method m) {
  switch (m) {
    case Method::pq: return "pq";
    case Method::rvq: return "rvq";
    case Method::apq: return "apq";
    case Method::arvq: return "arvq";
    case Method::qapq: return "qapq";
    case Method::qarvq: return "qarvq";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (auto m : {Method::pq, Method::rvq, Method::apq, Method::arvq, Method::qapq, Method::qarvq})
    if (s == to_string(m)) return m;
  throw ArgumentError("unknown method '" + s + "' (pq, rvq, apq, arvq, qapq, qarvq)");
}

bool is_sparse(Method m) { return m != Method::pq && m != Method::rvq; }
bool is_quantized_sparse(Method m) { return m == Method::qapq || m == Method::qarvq; }

AnyCodec learn_codec(const Dataset& train, const CodecSpec& spec, const ClusteringConfig& cfg) {
  switch (spec.method) {
    case Method::pq: return learn_pq(train, spec.m, spec.k, cfg);
    case Method::rvq: return learn_rvq(train, spec.m, spec.k, cfg);
    case Method::apq: return learn_qapq(train, spec.m, spec.k, 0, cfg);
    case Method::arvq: return learn_qarvq(train, spec.m, spec.k, 0, cfg);
    case Method::qapq:
      if (spec.p == 0) throw ArgumentError("qapq needs P >= 1");
      return learn_qapq(train, spec.m, spec.k, spec.p, cfg);
    case Method::qarvq:
      if (spec.p == 0) throw ArgumentError("qarvq needs P >= 1");
      return learn_qarvq(train, spec.m, spec.k, spec.p, cfg);
  }
  throw ArgumentError("unknown method");
}

Method method_of(const AnyCodec& c) {
  if (std::holds_alternative<PQCodec>(c)) return Method::pq;
  if (std::holds_alternative<RVQCodec>(c)) return Method::rvq;
  const auto& s = std::get<SparseCodec>(c);
  if (s.layout == Layout::product) return s.quantized() ? Method::qapq : Method::apq;
  return s.quantized() ? Method::qarvq : Method::arvq;
}

Layout layout_of(const AnyCodec& c) {
  if (std::holds_alternative<PQCodec>(c)) return Layout::product;
  if (std::holds_alternative<RVQCodec>(c)) return Layout::residual;
  return std::get<SparseCodec>(c).layout;
}

std::size_t dim_of(const AnyCodec& c) {
  return std::visit([](const auto& x) { return x.dim; }, c);
}
std::size_t m_of(const AnyCodec& c) {
  return std::visit([](const auto& x) { return x.m; }, c);
}
std::size_t k_of(const AnyCodec& c) {
  return std::visit([](const auto& x) { return x.k; }, c);
}
std::size_t p_of(const AnyCodec& c) {
  const auto* s = std::get_if<SparseCodec>(&c);
  return s ? s->p() : 0;
}

const std::vector<Codebook>& books_of(const AnyCodec& c) {
  if (const auto* p = std::get_if<PQCodec>(&c)) return p->codebooks;
  if (const auto* r = std::get_if<RVQCodec>(&c)) return r->codebooks;
  return std::get<SparseCodec>(c).dictionaries;
}

bool has_raw_weights(const AnyCodec& c) {
  const auto* s = std::get_if<SparseCodec>(&c);
  return s && !s->quantized();
}

Code to_code(const BaseCode& c) { return Code{c.indices, 0, {}}; }

Code to_code(const SparseCode& c) { return Code{c.indices, c.coeff.value_or(0), c.alpha}; }

SparseCode to_sparse_code(const AnyCodec& codec, const Code& c) {
  SparseCode s{c.atoms, std::nullopt, {}};
  if (has_raw_weights(codec))
    s.alpha = c.alpha;
  else
    s.coeff = c.coeff;
  return s;
}

Code encode(const AnyCodec& codec, Vec x) {
  if (const auto* p = std::get_if<PQCodec>(&codec)) return to_code(encode_pq(*p, x));
  if (const auto* r = std::get_if<RVQCodec>(&codec)) return to_code(encode_rvq(*r, x));
  const auto& s = std::get<SparseCodec>(codec);
  return to_code(s.layout == Layout::product ? encode_qapq(s, x) : encode_qarvq(s, x));
}

std::vector<float> decode(const AnyCodec& codec, const Code& code) {
  if (const auto* p = std::get_if<PQCodec>(&codec)) return decode_pq(*p, BaseCode{code.atoms});
  if (const auto* r = std::get_if<RVQCodec>(&codec)) return decode_rvq(*r, BaseCode{code.atoms});
  const auto& s = std::get<SparseCodec>(codec);
  const auto sc = to_sparse_code(codec, code);
  return s.layout == Layout::product ? decode_qapq(s, sc) : decode_qarvq(s, sc);
}

std::span<const float> weights_of(const AnyCodec& codec, std::span<const std::uint32_t> atoms,
                                  std::uint32_t coeff, std::span<const float> alpha,
                                  std::vector<float>& scratch) {
  const auto* s = std::get_if<SparseCodec>(&codec);
  if (!s) {
    scratch.assign(atoms.size(), 1.f);
    return scratch;
  }
  if (s->coeffs) return s->coeffs->codeword(coeff);
  return alpha;
}

void CodeStore::push_back(const Code& c) {
  atoms_.insert(atoms_.end(), c.atoms.begin(), c.atoms.end());
  coeff_.push_back(c.coeff);
  if (raw_) alpha_.insert(alpha_.end(), c.alpha.begin(), c.alpha.end());
}

void CodeStore::resize(std::size_t n) {
  atoms_.resize(n * m_);
  coeff_.resize(n);
  if (raw_) alpha_.resize(n * m_);
}

void CodeStore::set(std::size_t i, const Code& c) {
  std::copy(c.atoms.begin(), c.atoms.end(), atoms_.begin() + i * m_);
  coeff_[i] = c.coeff;
  if (raw_) std::copy(c.alpha.begin(), c.alpha.end(), alpha_.begin() + i * m_);
}

Code CodeStore::get(std::size_t i) const {
  Code c;
  auto a = atoms(i);
  c.atoms.assign(a.begin(), a.end());
  c.coeff = coeff_[i];
  auto w = alpha(i);
  c.alpha.assign(w.begin(), w.end());
  return c;
}

CodeStore encode_all(const AnyCodec& codec, const Dataset& ds) {
  if (ds.count() > 0 && ds.dim() != dim_of(codec))
    throw ArgumentError("encode_all: dataset dim does not match codec");
  CodeStore store(m_of(codec), has_raw_weights(codec));
  store.resize(ds.count());
  const auto n = static_cast<std::int64_t>(ds.count());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t i = 0; i < n; ++i) store.set(std::size_t(i), encode(codec, ds.row(std::size_t(i))));
  return store;
}

CodeStore serial::encode_all(const AnyCodec& codec, const Dataset& ds) {
  if (ds.count() > 0 && ds.dim() != dim_of(codec))
    throw ArgumentError("encode_all: dataset dim does not match codec");
  CodeStore store(m_of(codec), has_raw_weights(codec));
  for (std::size_t i = 0; i < ds.count(); ++i) store.push_back(encode(codec, ds.row(i)));
  return store;
}

std::size_t code_size_bits(const AnyCodec& codec, bool norm_byte) {
  return m_of(codec) * bits_for(k_of(codec)) + bits_for(p_of(codec)) + (norm_byte ? 8 : 0);
}

RecordLayout record_layout(const AnyCodec& codec, bool norm_byte) {
  RecordLayout l;
  l.m = m_of(codec);
  l.atom_bits = bits_for(k_of(codec));
  l.atom_bytes = bytes_for_bits(l.m * l.atom_bits);
  l.coeff_bytes = bytes_for_bits(bits_for(p_of(codec)));
  l.alpha_bytes = has_raw_weights(codec) ? 4 * l.m : 0;
  l.norm_bytes = norm_byte ? 1 : 0;
  return l;
}

void pack_record(const RecordLayout& layout, std::span<const std::uint32_t> atoms,
                 std::uint32_t coeff, std::span<const float> alpha, std::uint8_t norm,
                 std::span<std::uint8_t> out) {
  std::fill(out.begin(), out.begin() + layout.total(), std::uint8_t{0});
  // Atom indices: MSB-first bit stream.
  std::size_t bit = 0;
  for (std::size_t j = 0; j < layout.m; ++j) {
    for (int b = int(layout.atom_bits) - 1; b >= 0; --b, ++bit) {
      if ((atoms[j] >> b) & 1u) out[bit / 8] |= std::uint8_t(0x80u >> (bit % 8));
    }
  }
  std::size_t off = layout.atom_bytes;
  for (std::size_t i = 0; i < layout.coeff_bytes; ++i) out[off + i] = std::uint8_t(coeff >> (8 * i));
  off += layout.coeff_bytes;
  if (layout.alpha_bytes) {
    for (std::size_t j = 0; j < layout.m; ++j) {
      const auto u = std::bit_cast<std::uint32_t>(alpha[j]);
      for (int i = 0; i < 4; ++i) out[off + 4 * j + i] = std::uint8_t(u >> (8 * i));
    }
    off += layout.alpha_bytes;
  }
  if (layout.norm_bytes) out[off] = norm;
}

std::uint8_t unpack_record(const RecordLayout& layout, std::span<const std::uint8_t> in, Code& out) {
  out.atoms.assign(layout.m, 0);
  std::size_t bit = 0;
  for (std::size_t j = 0; j < layout.m; ++j) {
    std::uint32_t v = 0;
    for (unsigned b = 0; b < layout.atom_bits; ++b, ++bit)
      v = (v << 1) | ((in[bit / 8] >> (7 - bit % 8)) & 1u);
    out.atoms[j] = v;
  }
  std::size_t off = layout.atom_bytes;
  out.coeff = 0;
  for (std::size_t i = 0; i < layout.coeff_bytes; ++i) out.coeff |= std::uint32_t(in[off + i]) << (8 * i);
  off += layout.coeff_bytes;
  out.alpha.clear();
  if (layout.alpha_bytes) {
    out.alpha.resize(layout.m);
    for (std::size_t j = 0; j < layout.m; ++j) {
      std::uint32_t u = 0;
      for (int i = 0; i < 4; ++i) u |= std::uint32_t(in[off + 4 * j + i]) << (8 * i);
      out.alpha[j] = std::bit_cast<float>(u);
    }
    off += layout.alpha_bytes;
  }
  return layout.norm_bytes ? in[off] : std::uint8_t{0};
}

namespace {

void write_books(std::ostream& out, const std::vector<Codebook>& books) {
  for (const auto& b : books) io::put_floats(out, b.centers);
}

std::vector<Codebook> read_books(std::istream& in, std::size_t m, std::size_t k, std::size_t dim,
                                 CodebookKind kind) {
  std::vector<Codebook> books;
  for (std::size_t j = 0; j < m; ++j) books.push_back({k, dim, io::get_floats(in, k * dim), kind});
  return books;
}

}  // namespace

void write_codec_block(std::ostream& out, const AnyCodec& codec) {
  io::put_le(out, static_cast<std::uint8_t>(method_of(codec)));
  io::put_le(out, static_cast<std::uint8_t>(layout_of(codec)));
  io::put_le(out, static_cast<std::uint32_t>(dim_of(codec)));
  io::put_le(out, static_cast<std::uint32_t>(m_of(codec)));
  io::put_le(out, static_cast<std::uint32_t>(k_of(codec)));
  io::put_le(out, static_cast<std::uint32_t>(p_of(codec)));
  write_books(out, books_of(codec));
  if (const auto* s = std::get_if<SparseCodec>(&codec); s && s->coeffs)
    io::put_floats(out, s->coeffs->book.centers);
}

AnyCodec read_codec_block(std::istream& in) {
  const auto method_tag = io::get_le<std::uint8_t>(in);
  const auto layout_tag = io::get_le<std::uint8_t>(in);
  const std::size_t d = io::get_le<std::uint32_t>(in);
  const std::size_t m = io::get_le<std::uint32_t>(in);
  const std::size_t k = io::get_le<std::uint32_t>(in);
  const std::size_t p = io::get_le<std::uint32_t>(in);
  if (method_tag > static_cast<std::uint8_t>(Method::qarvq))
    throw FormatError("unknown codec kind tag " + std::to_string(method_tag));
  const auto method = static_cast<Method>(method_tag);
  if (d == 0 || m == 0 || k == 0) throw FormatError("codec header has a zero field");
  const Layout layout = static_cast<Layout>(layout_tag);
  const bool product = method == Method::pq || method == Method::apq || method == Method::qapq;
  if (layout_tag > 1 || (layout == Layout::product) != product)
    throw FormatError("codec layout tag does not match its kind");
  if (product && d % m != 0) throw FormatError("product codec with M not dividing D");
  if (is_quantized_sparse(method) != (p > 0)) throw FormatError("codec P does not match its kind");
  const std::size_t sub = product ? d / m : d;

  switch (method) {
    case Method::pq: return PQCodec{m, k, d, read_books(in, m, k, sub, CodebookKind::euclidean)};
    case Method::rvq: return RVQCodec{m, k, d, read_books(in, m, k, sub, CodebookKind::euclidean)};
    default: break;
  }
  SparseCodec s{layout, m, k, d, read_books(in, m, k, sub, CodebookKind::spherical), std::nullopt};
  if (p > 0)
    s.coeffs = CoefficientCodebook::from(
        Codebook{p, m, io::get_floats(in, p * m), CodebookKind::euclidean});
  return s;
}

void write_header(std::ostream& out, FileKind kind) {
  out.write(kMagic, 4);
  io::put_le(out, static_cast<std::uint8_t>(kind));
}

FileKind read_header(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic))
    throw FormatError("bad magic: not a QSR1 container");
  const auto kind = io::get_le<std::uint8_t>(in);
  if (kind > static_cast<std::uint8_t>(FileKind::ivf))
    throw FormatError("unknown container kind " + std::to_string(kind));
  return static_cast<FileKind>(kind);
}

FileKind peek_file_kind(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return read_header(in);
}

void save_codec(const std::filesystem::path& path, const AnyCodec& codec) {
  io::write_atomically(path, [&](std::ostream& out) {
    write_header(out, FileKind::codec);
    write_codec_block(out, codec);
  });
}

AnyCodec load_codec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  // Index containers embed a codec block right after the header.
  read_header(in);
  return read_codec_block(in);
}

}  // namespace qsr
