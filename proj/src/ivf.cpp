#include "qsr/ivf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "qsr/io.hpp"

namespace qsr {

std::size_t IVFIndex::size() const {
  std::size_t n = 0;
  for (const auto& l : lists) n += l.size();
  return n;
}

namespace {

NormMode ivf_norm_mode(const AnyCodec& codec, std::optional<NormMode> requested) {
  const bool product = layout_of(codec) == Layout::product;
  const NormMode mode = requested.value_or(product ? NormMode::product_fast : NormMode::quantized);
  if (mode == NormMode::product_fast && !product)
    throw ArgumentError("product_fast norms need a product-layout codec");
  return mode;
}

void subtract(Vec x, Vec c, std::vector<float>& out) {
  out.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - c[i];
}

}  // namespace

IVFIndex build_ivf(const Dataset& train, const Dataset& base, std::size_t kc,
                   const CodecSpec& spec, const ClusteringConfig& cfg,
                   const IvfBuildOptions& opts) {
  if (kc == 0) throw ArgumentError("kc must be at least 1");
  if (kc > train.count())
    throw ArgumentError("kc = " + std::to_string(kc) + " exceeds the " +
                        std::to_string(train.count()) + " training vectors");
  if (base.count() > 0 && base.dim() != train.dim())
    throw ArgumentError("build_ivf: base and train dimensions differ");
  if (base.count() > std::size_t(UINT32_MAX)) throw ArgumentError("build_ivf: too many base vectors");

  ClusteringConfig coarse_cfg = cfg;
  if (opts.coarse_iterations > 0) coarse_cfg.iterations = opts.coarse_iterations;
  Codebook coarse = kmeans(train, kc, coarse_cfg);

  Dataset train_res = train;
  {
    const auto labels = assign(train, coarse);
    for (std::size_t i = 0; i < train.count(); ++i)
      kernels::axpy_sub(train_res.row(i).data(), 1.f, coarse.center(labels[i]).data(), train.dim());
  }
  ClusteringConfig codec_cfg = cfg;
  codec_cfg.seed = cfg.seed + 1;
  AnyCodec codec = learn_codec(train_res, spec, codec_cfg);

  IVFIndex index{std::move(coarse), std::move(codec), NormMode::gram, std::nullopt, {}};
  index.norm_mode = ivf_norm_mode(index.codec, opts.norm_mode);
  const bool bytes = index.norm_mode == NormMode::quantized;
  if (bytes) index.norm_quantizer = learn_norm_quantizer(decoded_norms(index.codec, encode_all(index.codec, train_res)));

  const std::size_t n = base.count();
  std::vector<std::uint32_t> owner(n);
  CodeStore codes(m_of(index.codec), has_raw_weights(index.codec));
  codes.resize(n);
  std::vector<std::uint8_t> nbytes(bytes ? n : 0);
  const auto sn = static_cast<std::int64_t>(n);
#pragma omp parallel
  {
    std::vector<float> r;
#pragma omp for schedule(dynamic, 256)
    for (std::int64_t i = 0; i < sn; ++i) {
      const auto x = base.row(std::size_t(i));
      const auto c = argmin_l2(x.data(), index.coarse);
      owner[i] = c;
      subtract(x, index.coarse.center(c), r);
      const Code code = encode(index.codec, r);
      codes.set(std::size_t(i), code);
      if (bytes) {
        const auto v = decode(index.codec, code);
        nbytes[i] = index.norm_quantizer->encode(
            static_cast<float>(std::sqrt(kernels::dot_d(v.data(), v.data(), v.size()))));
      }
    }
  }

  index.lists.assign(kc, PostingList{});
  for (auto& l : index.lists) l.codes = CodeStore(m_of(index.codec), has_raw_weights(index.codec));
  for (std::size_t i = 0; i < n; ++i) {
    auto& l = index.lists[owner[i]];
    l.ids.push_back(static_cast<std::uint32_t>(i));
    l.codes.push_back(codes.get(i));
    if (bytes) l.norm_bytes.push_back(nbytes[i]);
  }
  return index;
}

std::vector<std::uint32_t> probe_lists(const IVFIndex& index, Vec y, std::size_t wc) {
  if (wc < 1 || wc > index.kc())
    throw ArgumentError("wc = " + std::to_string(wc) + " outside [1, " + std::to_string(index.kc()) + "]");
  if (y.size() != index.coarse.dim) throw ArgumentError("query dim does not match index");
  std::vector<std::pair<float, std::uint32_t>> d(index.kc());
  for (std::size_t c = 0; c < index.kc(); ++c)
    d[c] = {kernels::l2sq(y.data(), index.coarse.center(c).data(), y.size()), std::uint32_t(c)};
  std::partial_sort(d.begin(), d.begin() + std::ptrdiff_t(wc), d.end());
  std::vector<std::uint32_t> out(wc);
  for (std::size_t i = 0; i < wc; ++i) out[i] = d[i].second;
  return out;
}

namespace {

struct QueryState {
  std::vector<float> residual;
  LookupTable table;
  std::vector<std::uint32_t> order;
  std::vector<char> keep;
};

// Throws before any OpenMP region is entered.
void check_args(const IVFIndex& index, std::size_t dim, std::size_t r, std::size_t wc, std::size_t wprime) {
  if (r == 0) throw ArgumentError("R must be at least 1");
  if (wc < 1 || wc > index.kc())
    throw ArgumentError("wc = " + std::to_string(wc) + " outside [1, " + std::to_string(index.kc()) + "]");
  if (dim != index.coarse.dim) throw ArgumentError("query dim does not match index");
  const std::size_t k = k_of(index.codec);
  if (wprime > 0) {
    if (method_of(index.codec) != Method::qarvq && method_of(index.codec) != Method::arvq)
      throw UnsupportedError("first-layer pruning needs a residual-layout sparse codec");
    if (wprime > k)
      throw ArgumentError("wprime = " + std::to_string(wprime) + " outside [1, " + std::to_string(k) + "]");
  }
}

IvfSearchResult scan(const IVFIndex& index, const CodeScorer& scorer, Vec y, std::size_t r,
                     std::size_t wc, std::size_t wprime, QueryState& st) {
  const std::size_t k = k_of(index.codec);
  const bool prune = wprime > 0 && wprime < k;
  const auto probes = probe_lists(index, y, wc);

  TopR top(r, false);
  IvfSearchResult res;
  for (auto c : probes) {
    const auto& list = index.lists[c];
    if (list.size() == 0) continue;
    subtract(y, index.coarse.center(c), st.residual);
    build_lookup(index.codec, st.residual, st.table);
    const double ysq = kernels::dot_d(st.residual.data(), st.residual.data(), st.residual.size());
    if (prune) {
      const auto first = st.table.layer(0);
      st.order.resize(k);
      std::iota(st.order.begin(), st.order.end(), 0u);
      std::partial_sort(st.order.begin(), st.order.begin() + std::ptrdiff_t(wprime), st.order.end(),
                        [&](std::uint32_t a, std::uint32_t b) {
                          return first[a] != first[b] ? first[a] > first[b] : a < b;
                        });
      st.keep.assign(k, 0);
      for (std::size_t i = 0; i < wprime; ++i) st.keep[st.order[i]] = 1;
    }
    const bool bytes = !list.norm_bytes.empty();
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (prune && !st.keep[list.codes.atoms(i)[0]]) continue;
      ++res.scanned;
      const double num = scorer.numerator(st.table, list.codes, i);
      const double nrm = scorer.norm(list.codes, i, bytes ? std::optional(list.norm_bytes[i]) : std::nullopt);
      top.push(list.ids[i], scorer.score(num, nrm, ysq));
    }
  }
  res.hits = top.sorted();
  return res;
}

const NormQuantizer* quantizer_of(const IVFIndex& index) {
  return index.norm_quantizer ? &*index.norm_quantizer : nullptr;
}

}  // namespace

IvfSearchResult search_ivf(const IVFIndex& index, Vec y, std::size_t r, std::size_t wc) {
  CodeScorer scorer(index.codec, Metric::euclidean, index.norm_mode, quantizer_of(index));
  check_args(index, y.size(), r, wc, 0);
  QueryState st;
  return scan(index, scorer, y, r, wc, 0, st);
}

IvfSearchResult search_ivf_pruned(const IVFIndex& index, Vec y, std::size_t r, std::size_t wc,
                                  std::size_t wprime) {
  if (wprime == 0) throw ArgumentError("wprime must be at least 1");
  check_args(index, y.size(), r, wc, wprime);
  CodeScorer scorer(index.codec, Metric::euclidean, index.norm_mode, quantizer_of(index));
  QueryState st;
  return scan(index, scorer, y, r, wc, wprime, st);
}

std::vector<IvfSearchResult> search_ivf(const IVFIndex& index, const Dataset& queries,
                                        std::size_t r, std::size_t wc, std::size_t wprime) {
  check_args(index, queries.dim(), r, wc, wprime);
  CodeScorer scorer(index.codec, Metric::euclidean, index.norm_mode, quantizer_of(index));
  std::vector<IvfSearchResult> out(queries.count());
  const auto n = static_cast<std::int64_t>(queries.count());
#pragma omp parallel
  {
    QueryState st;
#pragma omp for schedule(dynamic, 4)
    for (std::int64_t q = 0; q < n; ++q) out[q] = scan(index, scorer, queries.row(std::size_t(q)), r, wc, wprime, st);
  }
  return out;
}

std::vector<IvfSearchResult> serial::search_ivf(const IVFIndex& index, const Dataset& queries,
                                                std::size_t r, std::size_t wc, std::size_t wprime) {
  std::vector<IvfSearchResult> out;
  for (std::size_t q = 0; q < queries.count(); ++q)
    out.push_back(wprime ? search_ivf_pruned(index, queries.row(q), r, wc, wprime)
                         : qsr::search_ivf(index, queries.row(q), r, wc));
  return out;
}

void save_ivf(const std::filesystem::path& path, const IVFIndex& index) {
  const bool bytes = index.norm_mode == NormMode::quantized;
  const auto layout = record_layout(index.codec, bytes);
  io::write_atomically(path, [&](std::ostream& out) {
    write_header(out, FileKind::ivf);
    write_codec_block(out, index.codec);
    io::put_le(out, static_cast<std::uint8_t>(Metric::euclidean));
    write_norm_block(out, index.norm_mode, index.norm_quantizer);
    io::put_le(out, static_cast<std::uint64_t>(index.size()));
    io::put_le(out, static_cast<std::uint32_t>(index.kc()));
    io::put_floats(out, index.coarse.centers);
    std::vector<std::uint8_t> rec(layout.total());
    for (const auto& l : index.lists) {
      io::put_le(out, static_cast<std::uint32_t>(l.size()));
      for (std::size_t i = 0; i < l.size(); ++i) {
        io::put_le(out, l.ids[i]);
        pack_record(layout, l.codes.atoms(i), l.codes.coeff(i), l.codes.alpha(i),
                    bytes ? l.norm_bytes[i] : 0, rec);
        out.write(reinterpret_cast<const char*>(rec.data()), std::streamsize(rec.size()));
      }
    }
  });
}

IVFIndex load_ivf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  if (read_header(in) != FileKind::ivf) throw FormatError("'" + path.string() + "' is not an IVF index");
  IVFIndex idx{{}, read_codec_block(in), NormMode::quantized, std::nullopt, {}};
  if (io::get_le<std::uint8_t>(in) != static_cast<std::uint8_t>(Metric::euclidean))
    throw FormatError("IVF index must use the euclidean metric");
  read_norm_block(in, idx.norm_mode, idx.norm_quantizer);
  const auto total = io::get_le<std::uint64_t>(in);
  const std::size_t kc = io::get_le<std::uint32_t>(in);
  const std::size_t d = dim_of(idx.codec);
  idx.coarse = Codebook{kc, d, io::get_floats(in, kc * d), CodebookKind::euclidean};
  const bool bytes = idx.norm_mode == NormMode::quantized;
  const auto layout = record_layout(idx.codec, bytes);
  std::vector<std::uint8_t> rec(layout.total());
  Code c;
  idx.lists.resize(kc);
  std::uint64_t seen = 0;
  for (auto& l : idx.lists) {
    l.codes = CodeStore(m_of(idx.codec), has_raw_weights(idx.codec));
    const auto len = io::get_le<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < len; ++i) {
      l.ids.push_back(io::get_le<std::uint32_t>(in));
      if (!in.read(reinterpret_cast<char*>(rec.data()), std::streamsize(rec.size())))
        throw FormatError("truncated IVF record");
      const auto nb = unpack_record(layout, rec, c);
      l.codes.push_back(c);
      if (bytes) l.norm_bytes.push_back(nb);
    }
    seen += len;
  }
  if (seen != total) throw FormatError("IVF list lengths do not add up to N");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after IVF lists");
  return idx;
}

}  // namespace qsr
