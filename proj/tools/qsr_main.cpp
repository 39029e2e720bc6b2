// qsr: train codecs, build flat/IVF indexes, search them, evaluate recall.
//
// Exit status: 0 ok, 2 usage, 3 I/O, 4 format/validation.

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qsr/eval.hpp"
#include "qsr/io.hpp"
#include "qsr/ivf.hpp"
#include "qsr/search.hpp"

namespace {

using namespace qsr;
namespace fs = std::filesystem;

constexpr int kUsage = 2, kIo = 3, kInvalid = 4;

struct Opts {
  // datasets
  std::string train, base, queries, gt, format;
  bool normalize = false;
  // codec
  std::string method = "qarvq";
  std::size_t m = 8, k = 256, p = 256;
  std::uint64_t seed = 1234;
  int iterations = 25;
  // index
  std::string codec_path, index_path, metric = "euclidean", norm_mode;
  std::size_t kc = 0;
  // search
  std::size_t r = 100, wc = 8, wprime = 0;
  // synth
  std::size_t n = 10000, d = 128, clusters = 0;
  float spread = 0.05f;
  // eval
  std::string results;
  std::vector<std::size_t> rs{1, 10, 100};
  std::string table;
  std::size_t depth = 100;
  std::string out;
};

using Config = std::vector<std::pair<std::string, std::string>>;

template <class T>
std::string str(const T& v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

Dataset load(const std::string& path, const Opts& o) {
  const VecFormat fmt = o.format.empty() ? format_from_path(path) : parse_format(o.format);
  Dataset ds = read_vectors(path, fmt);
  if (o.normalize) {
    auto res = l2_normalize(ds);
    if (res.skipped) std::clog << "warning: " << res.skipped << " zero vectors left unnormalized in " << path << '\n';
    ds = std::move(res.data);
  }
  return ds;
}

void write_config(std::ostream& out, const Config& cfg) {
  for (const auto& [k, v] : cfg) out << "# " << k << '=' << v << '\n';
}

CodecSpec codec_spec(const Opts& o) {
  CodecSpec s{parse_method(o.method), o.m, o.k, o.p};
  if (s.m == 0 || s.k == 0) throw ArgumentError("--m and --k must be positive");
  if (is_quantized_sparse(s.method) && s.p == 0) throw ArgumentError("--p is required for " + o.method);
  if (!is_quantized_sparse(s.method)) s.p = 0;
  return s;
}

void check_spec_against(const CodecSpec& s, std::size_t dim) {
  const bool product = s.method == Method::pq || s.method == Method::apq || s.method == Method::qapq;
  if (product && dim % s.m != 0)
    throw ArgumentError("--m " + std::to_string(s.m) + " does not divide the dimension " +
                        std::to_string(dim) + " (required by " + to_string(s.method) + ")");
}

ClusteringConfig clustering(const Opts& o) {
  ClusteringConfig c;
  c.seed = o.seed;
  c.iterations = o.iterations;
  return c;
}

Config codec_config(const AnyCodec& c) {
  return {{"method", to_string(method_of(c))}, {"D", str(dim_of(c))}, {"M", str(m_of(c))},
          {"K", str(k_of(c))}, {"P", str(p_of(c))}, {"bits", str(code_size_bits(c))}};
}

int cmd_synth(const Opts& o) {
  if (o.out.empty()) throw ArgumentError("--out is required");
  const Dataset ds = o.clusters ? synth_dataset(o.n, o.d, ClusteredModel{o.clusters, o.spread}, o.seed)
                                : synth_dataset(o.n, o.d, GaussianModel{}, o.seed);
  write_vectors(ds, o.out, o.format.empty() ? format_from_path(o.out) : parse_format(o.format));
  std::cout << "wrote " << ds.count() << " x " << ds.dim() << " to " << o.out << '\n';
  return 0;
}

int cmd_gt(const Opts& o) {
  if (o.base.empty() || o.queries.empty() || o.out.empty())
    throw ArgumentError("gt needs --base, --queries and --out");
  const Dataset base = load(o.base, o), q = load(o.queries, o);
  GroundTruth gt;
  const double t = time_seconds([&] { gt = brute_force_gt(base, q, parse_metric(o.metric), o.depth); });
  write_ivecs(to_ivecs(gt), o.out);
  std::cout << "ground truth: " << q.count() << " queries, depth " << std::min(o.depth, base.count())
            << ", " << std::setprecision(4) << t << " s\n";
  return 0;
}

int cmd_train(const Opts& o) {
  if (o.train.empty() || o.out.empty()) throw ArgumentError("train needs --train and --out");
  const CodecSpec spec = codec_spec(o);
  const Dataset train = load(o.train, o);
  check_spec_against(spec, train.dim());
  AnyCodec codec;
  const double t = time_seconds([&] { codec = learn_codec(train, spec, clustering(o)); });
  const double dist = distortion(train, codec);
  save_codec(o.out, codec);
  for (const auto& [k, v] : codec_config(codec)) std::cout << k << '=' << v << '\n';
  std::cout << "seed=" << o.seed << '\n'
            << "bits_per_vector=" << code_size_bits(codec) << '\n'
            << "train_distortion=" << std::setprecision(8) << dist << '\n'
            << "time_learn_s=" << std::setprecision(4) << t << '\n';
  return 0;
}

int cmd_build(const Opts& o) {
  if (o.base.empty() || o.out.empty()) throw ArgumentError("build needs --base and --out");
  const Dataset base = load(o.base, o);
  std::optional<NormMode> mode;
  if (!o.norm_mode.empty()) mode = parse_norm_mode(o.norm_mode);

  if (o.kc > 0) {
    if (o.train.empty()) throw ArgumentError("IVF build (--kc) needs --train");
    if (!o.codec_path.empty()) throw ArgumentError("IVF build learns its codec on residuals; drop --codec");
    if (parse_metric(o.metric) != Metric::euclidean) throw ArgumentError("IVF indexes are euclidean only");
    const CodecSpec spec = codec_spec(o);
    const Dataset train = load(o.train, o);
    check_spec_against(spec, train.dim());
    IvfBuildOptions bo;
    bo.norm_mode = mode;
    IVFIndex index;
    const double t = time_seconds([&] { index = build_ivf(train, base, o.kc, spec, clustering(o), bo); });
    save_ivf(o.out, index);
    std::size_t lo = base.count(), hi = 0, empty = 0;
    for (const auto& l : index.lists) {
      lo = std::min(lo, l.size());
      hi = std::max(hi, l.size());
      empty += l.size() == 0;
    }
    std::cout << "kind=ivf\nN=" << index.size() << "\nkc=" << index.kc() << "\nnorm_mode=" << to_string(index.norm_mode)
              << "\nbits=" << code_size_bits(index.codec, index.norm_mode == NormMode::quantized) << '\n';
    // Power-of-two histogram of posting list lengths.
    std::map<std::size_t, std::size_t> hist;
    for (const auto& l : index.lists) hist[l.size() ? std::bit_floor(l.size()) : 0]++;
    std::cout << "list_length_min=" << lo << "\nlist_length_max=" << hi << "\nempty_lists=" << empty << '\n';
    for (const auto& [b, c] : hist) std::cout << "list_length_bucket[" << b << "]=" << c << '\n';
    std::cout << "time_build_s=" << std::setprecision(4) << t << '\n';
    return 0;
  }

  if (o.codec_path.empty()) throw ArgumentError("flat build needs --codec (or --kc/--train for IVF)");
  AnyCodec codec = load_codec(o.codec_path);
  if (dim_of(codec) != base.dim())
    throw ValidationError("codec dimension " + std::to_string(dim_of(codec)) +
                          " does not match dataset dimension " + std::to_string(base.dim()));
  FlatBuildOptions bo;
  bo.metric = parse_metric(o.metric);
  bo.norm_mode = mode;
  FlatIndex index;
  const double t = time_seconds([&] { index = build_flat(std::move(codec), base, bo); });
  save_flat(o.out, index);
  std::cout << "kind=flat\nN=" << index.size() << "\nmetric=" << to_string(index.metric)
            << "\nnorm_mode=" << to_string(index.norm_mode)
            << "\nbits=" << code_size_bits(index.codec, index.norm_mode == NormMode::quantized)
            << "\ntime_build_s=" << std::setprecision(4) << t << '\n';
  return 0;
}

void write_results(const fs::path& path, const Config& cfg,
                   const std::vector<std::vector<Neighbor>>& res) {
  io::write_atomically(path, [&](std::ostream& out) {
    write_config(out, cfg);
    out << std::setprecision(9);
    for (std::size_t q = 0; q < res.size(); ++q) {
      out << q << ':';
      for (std::size_t i = 0; i < res[q].size(); ++i)
        out << (i ? "," : " ") << res[q][i].id << ':' << res[q][i].score;
      out << '\n';
    }
  });
}

int cmd_search(const Opts& o) {
  if (o.index_path.empty() || o.queries.empty() || o.out.empty())
    throw ArgumentError("search needs --index, --queries and --out");
  const Dataset q = load(o.queries, o);
  std::vector<std::vector<Neighbor>> res;
  Config cfg;
  double t = 0;
  if (peek_file_kind(o.index_path) == FileKind::ivf) {
    const IVFIndex index = load_ivf(o.index_path);
    if (o.wprime) {
      const Method m = method_of(index.codec);
      if (m != Method::qarvq && m != Method::arvq)
        throw ArgumentError("--wprime needs a qarvq or arvq IVF index, got " + std::string(to_string(m)));
    }
    std::vector<IvfSearchResult> hits;
    t = time_seconds([&] { hits = search_ivf(index, q, o.r, o.wc, o.wprime); });
    cfg = codec_config(index.codec);
    cfg.insert(cfg.end(), {{"index", "ivf"}, {"metric", "euclidean"}, {"kc", str(index.kc())},
                           {"wc", str(o.wc)}, {"wprime", str(o.wprime)}, {"R", str(o.r)}});
    std::size_t total = 0;
    std::ostringstream counts;
    for (std::size_t i = 0; i < hits.size(); ++i) {
      res.push_back(std::move(hits[i].hits));
      total += hits[i].scanned;
      counts << (i ? "," : "") << hits[i].scanned;
    }
    cfg.push_back({"candidates", counts.str()});
    for (std::size_t i = 0; i < hits.size(); ++i)
      std::cout << "query " << i << " candidates=" << hits[i].scanned << '\n';
    std::cout << "mean_candidates=" << (q.count() ? double(total) / double(q.count()) : 0.0) << '\n';
  } else {
    if (o.wprime) throw ArgumentError("--wprime only applies to IVF indexes");
    const FlatIndex index = load_flat(o.index_path);
    t = time_seconds([&] { res = search_flat(index, q, o.r); });
    cfg = codec_config(index.codec);
    cfg.insert(cfg.end(), {{"index", "flat"}, {"metric", to_string(index.metric)},
                           {"norm_mode", to_string(index.norm_mode)}, {"R", str(o.r)}});
  }
  write_results(o.out, cfg, res);
  std::cout << "queries=" << q.count() << "\ntime_search_s=" << std::setprecision(4) << t << '\n';
  return 0;
}

struct ParsedResults {
  Config config;
  std::vector<std::vector<Neighbor>> lists;
};

ParsedResults read_results(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  ParsedResults pr;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos && line.size() > 2) pr.config.push_back({line.substr(2, eq - 2), line.substr(eq + 1)});
      continue;
    }
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw FormatError("results line " + std::to_string(lineno) + ": missing ':'");
    if (std::stoul(line.substr(0, colon)) != pr.lists.size())
      throw FormatError("results line " + std::to_string(lineno) + ": query ids out of order");
    auto& l = pr.lists.emplace_back();
    std::istringstream rest(line.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
      const auto c = item.find(':');
      if (c == std::string::npos) throw FormatError("results line " + std::to_string(lineno) + ": bad entry '" + item + "'");
      l.push_back({static_cast<std::uint32_t>(std::stoul(item.substr(0, c))), std::stof(item.substr(c + 1))});
    }
  }
  return pr;
}

int cmd_eval(const Opts& o) {
  if (o.results.empty() || o.gt.empty()) throw ArgumentError("eval needs --results and --gt");
  const auto pr = read_results(o.results);
  const GroundTruth gt = from_ivecs(read_ivecs(o.gt), parse_metric(o.metric));
  if (gt.lists.size() < pr.lists.size())
    throw ValidationError("ground truth covers " + std::to_string(gt.lists.size()) + " queries, results have " +
                          std::to_string(pr.lists.size()));
  GroundTruth used{gt.metric, {gt.lists.begin(), gt.lists.begin() + std::ptrdiff_t(pr.lists.size())}};
  const auto ids = ids_of(pr.lists);

  EvalReport rep;
  rep.config = pr.config;
  for (std::size_t r : o.rs) {
    for (std::size_t q = 0; q < ids.size(); ++q)
      if (r > ids[q].size())
        throw ValidationError("R=" + std::to_string(r) + " exceeds the " + std::to_string(ids[q].size()) +
                              " results of query " + std::to_string(q));
    rep.recall[r] = recall_at(ids, used, r);
  }
  if (!o.codec_path.empty() && !o.base.empty()) {
    const AnyCodec codec = load_codec(o.codec_path);
    rep.distortion = distortion(load(o.base, o), codec);
  }
  rep.write_text(std::cout);
  if (!o.out.empty()) io::write_atomically(o.out, [&](std::ostream& out) { rep.write_text(out); });
  if (!o.table.empty()) io::write_atomically(o.table, [&](std::ostream& out) { rep.write_table(out); });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantized sparse representations for approximate nearest neighbor search"};
  app.require_subcommand(1);
  Opts o;

  auto add_data = [&](CLI::App* c) {
    c->add_option("--format", o.format, "f32|u8|i32 (default: from the extension)");
    c->add_flag("--normalize", o.normalize, "L2-normalize every loaded vector");
  };
  auto add_codec = [&](CLI::App* c) {
    c->add_option("--method", o.method, "pq|rvq|apq|arvq|qapq|qarvq")->capture_default_str();
    c->add_option("--m", o.m, "dictionaries / sub-vectors (M)")->capture_default_str();
    c->add_option("--k", o.k, "atoms per dictionary (K)")->capture_default_str();
    c->add_option("--p", o.p, "coefficient codewords (P), qapq/qarvq only")->capture_default_str();
    c->add_option("--iterations", o.iterations, "k-means iterations")->capture_default_str();
  };
  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "random seed")->capture_default_str(); };

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  synth->add_option("--n", o.n)->capture_default_str();
  synth->add_option("--d", o.d)->capture_default_str();
  synth->add_option("--clusters", o.clusters, "0: i.i.d. Gaussian")->capture_default_str();
  synth->add_option("--spread", o.spread)->capture_default_str();
  synth->add_option("--out", o.out)->required();
  synth->add_option("--format", o.format);
  add_seed(synth);

  auto* gt = app.add_subcommand("gt", "exact ground truth by exhaustive scan");
  gt->add_option("--base", o.base)->required();
  gt->add_option("--queries", o.queries)->required();
  gt->add_option("--depth", o.depth)->capture_default_str();
  gt->add_option("--metric", o.metric)->capture_default_str();
  gt->add_option("--out", o.out)->required();
  add_data(gt);

  auto* train = app.add_subcommand("train", "learn a codec");
  train->add_option("--train", o.train)->required();
  train->add_option("--out", o.out)->required();
  add_codec(train);
  add_seed(train);
  add_data(train);

  auto* build = app.add_subcommand("build", "encode a base set into a flat or IVF index");
  build->add_option("--base", o.base)->required();
  build->add_option("--codec", o.codec_path, "trained codec (flat index)");
  build->add_option("--train", o.train, "training set (IVF index)");
  build->add_option("--kc", o.kc, "coarse centroids; > 0 builds an IVF index");
  build->add_option("--metric", o.metric)->capture_default_str();
  build->add_option("--norm-mode", o.norm_mode, "gram|quantized|product_fast");
  build->add_option("--out", o.out)->required();
  add_codec(build);
  add_seed(build);
  add_data(build);

  auto* search = app.add_subcommand("search", "query an index");
  search->add_option("--index", o.index_path)->required();
  search->add_option("--queries", o.queries)->required();
  search->add_option("--r", o.r, "results per query")->capture_default_str();
  search->add_option("--wc", o.wc, "posting lists scanned (IVF)")->capture_default_str();
  search->add_option("--wprime", o.wprime, "first-layer pruning width, 0 = off (IVF)")->capture_default_str();
  search->add_option("--out", o.out)->required();
  add_data(search);

  auto* ev = app.add_subcommand("eval", "recall@R of a results file");
  ev->add_option("--results", o.results)->required();
  ev->add_option("--gt", o.gt)->required();
  ev->add_option("--R", o.rs, "cut-offs")->delimiter(',')->capture_default_str();
  ev->add_option("--metric", o.metric)->capture_default_str();
  ev->add_option("--codec", o.codec_path, "with --base: also report distortion");
  ev->add_option("--base", o.base);
  ev->add_option("--out", o.out, "key=value report");
  ev->add_option("--table", o.table, "tab-separated method/bits/R/recall rows");
  add_data(ev);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*gt) return cmd_gt(o);
    if (*train) return cmd_train(o);
    if (*build) return cmd_build(o);
    if (*search) return cmd_search(o);
    if (*ev) return cmd_eval(o);
  } catch (const ArgumentError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const UnsupportedError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kInvalid;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kInvalid;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kUsage;
}
