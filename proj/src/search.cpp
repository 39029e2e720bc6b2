#include "qsr/search.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include "qsr/io.hpp"

namespace qsr {

void build_lookup(const AnyCodec& codec, Vec y, LookupTable& table) {
  if (y.size() != dim_of(codec)) throw ArgumentError("build_lookup: query dim does not match codec");
  const auto& books = books_of(codec);
  const bool product = layout_of(codec) == Layout::product;
  table.m = books.size();
  table.k = k_of(codec);
  table.values.resize(table.m * table.k);
  for (std::size_t j = 0; j < table.m; ++j) {
    const auto& b = books[j];
    const float* q = y.data() + (product ? j * b.dim : 0);
    float* row = table.values.data() + j * table.k;
    for (std::size_t a = 0; a < b.k; ++a) row[a] = kernels::dot(q, b.centers.data() + a * b.dim, b.dim);
  }
}

LookupTable build_lookup(const AnyCodec& codec, Vec y) {
  LookupTable t;
  build_lookup(codec, y, t);
  return t;
}

double score_numerator(const LookupTable& table, std::span<const std::uint32_t> atoms,
                       std::span<const float> weights) {
  double s = 0.0;
  if (weights.empty()) {
    for (std::size_t j = 0; j < atoms.size(); ++j) s += table.values[j * table.k + atoms[j]];
  } else {
    for (std::size_t j = 0; j < atoms.size(); ++j)
      s += double(weights[j] * table.values[j * table.k + atoms[j]]);
  }
  return s;
}

double score_numerator(const LookupTable& table, const BaseCode& code) {
  return score_numerator(table, code.indices);
}

double score_numerator(const LookupTable& table, const SparseCode& code,
                       const CoefficientCodebook& coeffs) {
  if (code.coeff) return score_numerator(table, code.indices, coeffs.codeword(*code.coeff));
  return score_numerator(table, code.indices, code.alpha);
}

// ---------------------------------------------------------------------------

GramTable::GramTable(const AnyCodec& codec) : m_(m_of(codec)), k_(k_of(codec)) {
  const auto& books = books_of(codec);
  const bool product = layout_of(codec) == Layout::product;
  self_.resize(m_ * k_);
  for (std::size_t m = 0; m < m_; ++m)
    for (std::size_t a = 0; a < k_; ++a)
      self_[m * k_ + a] = kernels::norm_sq(books[m].centers.data() + a * books[m].dim, books[m].dim);
  cross_.assign(m_ * (m_ - 1) / 2 * k_ * k_, 0.f);
  if (product) return;
  for (std::size_t m = 0; m < m_; ++m) {
    for (std::size_t n = m + 1; n < m_; ++n) {
      float* blk = cross_.data() + block_offset(m, n);
      const auto& bm = books[m];
      const auto& bn = books[n];
      for (std::size_t a = 0; a < k_; ++a)
        for (std::size_t b = 0; b < k_; ++b)
          blk[a * k_ + b] = kernels::dot(bm.centers.data() + a * bm.dim, bn.centers.data() + b * bn.dim, bm.dim);
    }
  }
}

std::size_t GramTable::block_offset(std::size_t m, std::size_t n) const {
  // Blocks (m, n) with m < n, laid out row by row.
  const std::size_t before = m * (2 * m_ - m - 1) / 2;
  return (before + (n - m - 1)) * k_ * k_;
}

float GramTable::cross(std::size_t m, std::size_t a, std::size_t n, std::size_t b) const {
  if (m > n) {
    std::swap(m, n);
    std::swap(a, b);
  }
  return cross_[block_offset(m, n) + a * k_ + b];
}

double GramTable::norm_sq(std::span<const std::uint32_t> atoms, std::span<const float> w) const {
  double s = 0.0;
  for (std::size_t m = 0; m < m_; ++m) {
    const double wm = w[m];
    s += wm * wm * self_[m * k_ + atoms[m]];
    for (std::size_t n = m + 1; n < m_; ++n)
      s += 2.0 * wm * double(w[n]) * cross_[block_offset(m, n) + atoms[m] * k_ + atoms[n]];
  }
  return s;
}

// ---------------------------------------------------------------------------

std::uint8_t NormQuantizer::encode(float v) const {
  // Nearest level, lower one on ties; padded duplicates resolve to their first copy.
  const auto first_of = [&](float level) {
    return static_cast<std::uint8_t>(std::lower_bound(levels.begin(), levels.end(), level) - levels.begin());
  };
  auto it = std::lower_bound(levels.begin(), levels.end(), v);
  if (it == levels.end()) return first_of(levels.back());
  if (it == levels.begin()) return 0;
  const float lo = *(it - 1);
  return v - lo <= *it - v ? first_of(lo) : static_cast<std::uint8_t>(it - levels.begin());
}

float NormQuantizer::max_half_gap() const {
  float g = 0.f;
  for (std::size_t i = 1; i < levels.size(); ++i) g = std::max(g, (levels[i] - levels[i - 1]) / 2.f);
  return g;
}

NormQuantizer learn_norm_quantizer(std::span<const float> norms) {
  constexpr std::size_t L = 256;
  if (norms.empty()) throw ArgumentError("learn_norm_quantizer: no samples");
  std::vector<double> x(norms.begin(), norms.end());
  std::sort(x.begin(), x.end());
  std::vector<double> distinct;
  std::unique_copy(x.begin(), x.end(), std::back_inserter(distinct));
  NormQuantizer q;
  if (distinct.size() <= L) {
    for (double v : distinct) q.levels.push_back(static_cast<float>(v));
    q.levels.resize(L, q.levels.back());
    return q;
  }

  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> lv(L);
  for (std::size_t i = 0; i < L; ++i) lv[i] = x[std::min(n - 1, (2 * i + 1) * n / (2 * L))];
  // Quantile seeds can coincide on heavy atoms; spread duplicates over distinct values.
  for (std::size_t i = 1; i < L; ++i)
    if (lv[i] <= lv[i - 1]) {
      auto it = std::upper_bound(distinct.begin(), distinct.end(), lv[i - 1]);
      lv[i] = it != distinct.end() ? *it : lv[i - 1];
    }
  for (int it = 0; it < 200; ++it) {
    bool changed = false;
    std::size_t begin = 0;
    for (std::size_t i = 0; i < L; ++i) {
      std::size_t end = n;
      if (i + 1 < L) {
        const double mid = 0.5 * (lv[i] + lv[i + 1]);
        end = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), mid) - x.begin());
      }
      if (end > begin) {
        const double mean = (prefix[end] - prefix[begin]) / double(end - begin);
        if (mean != lv[i]) {
          lv[i] = mean;
          changed = true;
        }
      }
      begin = std::max(begin, end);
    }
    std::sort(lv.begin(), lv.end());
    if (!changed) break;
  }
  // Pin the end levels to the sample range so every sample lies within half a
  // gap of its level.
  lv.front() = x.front();
  lv.back() = x.back();
  for (double v : lv) q.levels.push_back(static_cast<float>(v));
  return q;
}

const char* to_string(NormMode m) {
  switch (m) {
    case NormMode::gram: return "gram";
    case NormMode::quantized: return "quantized";
    case NormMode::product_fast: return "product_fast";
  }
  return "?";
}

NormMode parse_norm_mode(const std::string& s) {
  if (s == "gram") return NormMode::gram;
  if (s == "quantized" || s == "byte") return NormMode::quantized;
  if (s == "product_fast" || s == "product") return NormMode::product_fast;
  throw ArgumentError("unknown norm mode '" + s + "' (gram, quantized, product_fast)");
}

NormMode default_norm_mode(const AnyCodec& codec, std::size_t n) {
  if (layout_of(codec) == Layout::product) return NormMode::product_fast;
  return n >= 1'000'000 ? NormMode::quantized : NormMode::gram;
}

double product_norm(const AnyCodec& codec, std::span<const std::uint32_t> atoms,
                    std::uint32_t coeff, std::span<const float> alpha) {
  if (const auto* p = std::get_if<PQCodec>(&codec)) {
    double s = 0.0;
    for (std::size_t j = 0; j < p->m; ++j) {
      auto c = p->codebooks[j].center(atoms[j]);
      s += kernels::dot_d(c.data(), c.data(), c.size());
    }
    return std::sqrt(s);
  }
  const auto* s = std::get_if<SparseCodec>(&codec);
  if (!s || s->layout != Layout::product)
    throw ArgumentError("product_fast norms need a product-layout codec");
  if (s->coeffs) return std::sqrt(double(s->coeffs->sq_norms[coeff]));
  double t = 0.0;
  for (float a : alpha) t += double(a) * a;
  return std::sqrt(t);
}

CodeScorer::CodeScorer(const AnyCodec& codec, Metric metric, NormMode mode,
                       const NormQuantizer* quantizer)
    : codec_(&codec), metric_(metric), mode_(mode), quantizer_(quantizer) {
  if (mode == NormMode::gram) {
    if (layout_of(codec) == Layout::product)
      std::clog << "warning: gram norms on a product-layout codec; product_fast is exact and cheaper\n";
    gram_.emplace(codec);
  }
  if (mode == NormMode::quantized && !quantizer)
    throw StateError("quantized norm mode without a norm quantizer");
  if (mode == NormMode::product_fast && layout_of(codec) != Layout::product)
    throw ArgumentError("product_fast norms need a product-layout codec");
  if (!std::holds_alternative<SparseCodec>(codec)) unit_.assign(m_of(codec), 1.f);
}

double CodeScorer::numerator(const LookupTable& t, const CodeStore& codes, std::size_t i) const {
  const auto atoms = codes.atoms(i);
  if (!unit_.empty()) return score_numerator(t, atoms);
  const auto& s = std::get<SparseCodec>(*codec_);
  if (s.coeffs) return score_numerator(t, atoms, s.coeffs->codeword(codes.coeff(i)));
  return score_numerator(t, atoms, codes.alpha(i));
}

double CodeScorer::norm(const CodeStore& codes, std::size_t i,
                        std::optional<std::uint8_t> norm_byte) const {
  switch (mode_) {
    case NormMode::quantized:
      if (!norm_byte) throw StateError("quantized norm requested but no norm byte stored");
      return quantizer_->decode(*norm_byte);
    case NormMode::product_fast:
      return product_norm(*codec_, codes.atoms(i), codes.coeff(i), codes.alpha(i));
    case NormMode::gram: {
      std::span<const float> w = unit_;
      if (unit_.empty()) {
        const auto& s = std::get<SparseCodec>(*codec_);
        w = s.coeffs ? s.coeffs->codeword(codes.coeff(i)) : codes.alpha(i);
      }
      return std::sqrt(std::max(0.0, gram_->norm_sq(codes.atoms(i), w)));
    }
  }
  return 0.0;
}

float CodeScorer::score(double numerator, double norm, double query_sq_norm) const {
  if (metric_ == Metric::cosine) return norm > 0.0 ? static_cast<float>(numerator / norm) : 0.f;
  return static_cast<float>(query_sq_norm - 2.0 * numerator + norm * norm);
}

double norm_of_code(const AnyCodec& codec, const Code& code, NormMode mode, const GramTable* gram,
                    const NormQuantizer* quantizer, std::optional<std::uint8_t> norm_byte) {
  switch (mode) {
    case NormMode::quantized:
      if (!quantizer || !norm_byte) throw StateError("quantized norm requested but no norm byte stored");
      return quantizer->decode(*norm_byte);
    case NormMode::product_fast:
      return product_norm(codec, code.atoms, code.coeff, code.alpha);
    case NormMode::gram: {
      std::optional<GramTable> local;
      if (!gram) gram = &local.emplace(codec);
      std::vector<float> scratch;
      const auto w = weights_of(codec, code.atoms, code.coeff, code.alpha, scratch);
      return std::sqrt(std::max(0.0, gram->norm_sq(code.atoms, w)));
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------

std::vector<float> decoded_norms(const AnyCodec& codec, const CodeStore& codes) {
  std::vector<float> out(codes.size());
  const auto n = static_cast<std::int64_t>(codes.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto v = decode(codec, codes.get(std::size_t(i)));
    out[i] = static_cast<float>(std::sqrt(kernels::dot_d(v.data(), v.data(), v.size())));
  }
  return out;
}

FlatIndex build_flat(AnyCodec codec, const Dataset& base, const FlatBuildOptions& opts) {
  FlatIndex idx{std::move(codec), opts.metric, NormMode::gram, {}, std::nullopt, {}};
  idx.norm_mode = opts.norm_mode.value_or(default_norm_mode(idx.codec, base.count()));
  if (idx.norm_mode == NormMode::product_fast && layout_of(idx.codec) != Layout::product)
    throw ArgumentError("product_fast norms need a product-layout codec");
  idx.codes = encode_all(idx.codec, base);
  if (idx.norm_mode == NormMode::quantized) {
    const auto norms = decoded_norms(idx.codec, idx.codes);
    if (opts.norm_train) {
      idx.norm_quantizer = learn_norm_quantizer(decoded_norms(idx.codec, encode_all(idx.codec, *opts.norm_train)));
    } else {
      idx.norm_quantizer = learn_norm_quantizer(norms);
    }
    idx.norm_bytes.resize(norms.size());
    for (std::size_t i = 0; i < norms.size(); ++i) idx.norm_bytes[i] = idx.norm_quantizer->encode(norms[i]);
  }
  return idx;
}

namespace {

std::vector<Neighbor> scan_flat(const FlatIndex& index, const CodeScorer& scorer, Vec y,
                                std::size_t r, LookupTable& table) {
  build_lookup(index.codec, y, table);
  const double ysq = kernels::dot_d(y.data(), y.data(), y.size());
  TopR top(r, scorer.larger_is_better());
  const bool bytes = !index.norm_bytes.empty();
  for (std::size_t i = 0; i < index.size(); ++i) {
    const double num = scorer.numerator(table, index.codes, i);
    const double nrm = scorer.norm(index.codes, i, bytes ? std::optional(index.norm_bytes[i]) : std::nullopt);
    top.push(static_cast<std::uint32_t>(i), scorer.score(num, nrm, ysq));
  }
  return top.sorted();
}

const NormQuantizer* quantizer_of(const FlatIndex& index) {
  return index.norm_quantizer ? &*index.norm_quantizer : nullptr;
}

}  // namespace

std::vector<Neighbor> search_flat(const FlatIndex& index, Vec y, std::size_t r) {
  if (r == 0) throw ArgumentError("search_flat: R must be at least 1");
  CodeScorer scorer(index.codec, index.metric, index.norm_mode, quantizer_of(index));
  LookupTable table;
  return scan_flat(index, scorer, y, r, table);
}

std::vector<std::vector<Neighbor>> search_flat(const FlatIndex& index, const Dataset& queries,
                                               std::size_t r) {
  if (r == 0) throw ArgumentError("search_flat: R must be at least 1");
  if (queries.count() > 0 && queries.dim() != dim_of(index.codec))
    throw ArgumentError("search_flat: query dim does not match index");
  CodeScorer scorer(index.codec, index.metric, index.norm_mode, quantizer_of(index));
  std::vector<std::vector<Neighbor>> out(queries.count());
  const auto n = static_cast<std::int64_t>(queries.count());
#pragma omp parallel
  {
    LookupTable table;
#pragma omp for schedule(dynamic, 4)
    for (std::int64_t q = 0; q < n; ++q) out[q] = scan_flat(index, scorer, queries.row(std::size_t(q)), r, table);
  }
  return out;
}

std::vector<std::vector<Neighbor>> serial::search_flat(const FlatIndex& index,
                                                       const Dataset& queries, std::size_t r) {
  std::vector<std::vector<Neighbor>> out;
  for (std::size_t q = 0; q < queries.count(); ++q) out.push_back(qsr::search_flat(index, queries.row(q), r));
  return out;
}

// ---------------------------------------------------------------------------

void write_norm_block(std::ostream& out, NormMode mode, const std::optional<NormQuantizer>& q) {
  io::put_le(out, static_cast<std::uint8_t>(mode));
  io::put_le(out, static_cast<std::uint8_t>(q ? 1 : 0));
  if (q) io::put_floats(out, q->levels);
}

void read_norm_block(std::istream& in, NormMode& mode, std::optional<NormQuantizer>& q) {
  const auto tag = io::get_le<std::uint8_t>(in);
  if (tag > static_cast<std::uint8_t>(NormMode::product_fast))
    throw FormatError("unknown norm mode tag " + std::to_string(tag));
  mode = static_cast<NormMode>(tag);
  const auto has = io::get_le<std::uint8_t>(in);
  if (has > 1) throw FormatError("bad norm level flag");
  if (has) q = NormQuantizer{io::get_floats(in, 256)};
  if ((mode == NormMode::quantized) != bool(has))
    throw FormatError("norm levels present iff norm mode is quantized");
}

void save_flat(const std::filesystem::path& path, const FlatIndex& index) {
  const bool bytes = index.norm_mode == NormMode::quantized;
  const auto layout = record_layout(index.codec, bytes);
  io::write_atomically(path, [&](std::ostream& out) {
    write_header(out, FileKind::flat);
    write_codec_block(out, index.codec);
    io::put_le(out, static_cast<std::uint8_t>(index.metric));
    write_norm_block(out, index.norm_mode, index.norm_quantizer);
    io::put_le(out, static_cast<std::uint64_t>(index.size()));
    std::vector<std::uint8_t> rec(layout.total());
    for (std::size_t i = 0; i < index.size(); ++i) {
      pack_record(layout, index.codes.atoms(i), index.codes.coeff(i), index.codes.alpha(i),
                  bytes ? index.norm_bytes[i] : 0, rec);
      out.write(reinterpret_cast<const char*>(rec.data()), std::streamsize(rec.size()));
    }
  });
}

FlatIndex load_flat(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  if (read_header(in) != FileKind::flat) throw FormatError("'" + path.string() + "' is not a flat index");
  FlatIndex idx{read_codec_block(in), Metric::euclidean, NormMode::gram, {}, std::nullopt, {}};
  const auto metric = io::get_le<std::uint8_t>(in);
  if (metric > 1) throw FormatError("unknown metric tag");
  idx.metric = static_cast<Metric>(metric);
  read_norm_block(in, idx.norm_mode, idx.norm_quantizer);
  const auto n = io::get_le<std::uint64_t>(in);
  const bool bytes = idx.norm_mode == NormMode::quantized;
  const auto layout = record_layout(idx.codec, bytes);
  idx.codes = CodeStore(m_of(idx.codec), has_raw_weights(idx.codec));
  std::vector<std::uint8_t> rec(layout.total());
  Code c;
  for (std::uint64_t i = 0; i < n; ++i) {
    if (!in.read(reinterpret_cast<char*>(rec.data()), std::streamsize(rec.size())))
      throw FormatError("truncated code record " + std::to_string(i));
    const auto nb = unpack_record(layout, rec, c);
    idx.codes.push_back(c);
    if (bytes) idx.norm_bytes.push_back(nb);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after code records");
  return idx;
}

}  // namespace qsr
