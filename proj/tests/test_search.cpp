#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "qsr/search.hpp"

using namespace qsr;
using Catch::Approx;

namespace {

ClusteringConfig quick(int iters = 5) {
  ClusteringConfig c;
  c.iterations = iters;
  return c;
}

const std::vector<Method> kFamilies{Method::pq, Method::rvq, Method::qapq, Method::qarvq};

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("top-R keeps the best entries with id tie-break", "[search]") {
  TopR hi(3, true);
  for (std::uint32_t i = 0; i < 10; ++i) hi.push(i, float(i % 4));
  const auto s = hi.sorted();
  REQUIRE(s.size() == 3);
  CHECK(s[0] == Neighbor{3, 3.f});
  CHECK(s[1] == Neighbor{7, 3.f});
  CHECK(s[2] == Neighbor{2, 2.f});

  TopR lo(2, false);
  for (std::uint32_t i = 10; i-- > 0;) lo.push(i, float(i % 3));
  CHECK(lo.sorted() == std::vector<Neighbor>{{0, 0.f}, {3, 0.f}});

  TopR a(2, false), b(2, false);
  a.push(5, 1.f);
  b.push(1, 1.f);
  b.push(2, 0.5f);
  a.merge(b);
  CHECK(a.sorted() == std::vector<Neighbor>{{2, 0.5f}, {1, 1.f}});
}

TEST_CASE("lookup tables", "[search]") {
  const Dataset train = synth_dataset(800, 12, GaussianModel{}, 1);
  const AnyCodec c = learn_codec(train, {Method::qarvq, 3, 16, 16}, quick());
  const auto& atoms = books_of(c);
  SECTION("unit atom self product") {
    const auto t = build_lookup(c, atoms[0].center(3));
    CHECK(t.at(0, 3) == Approx(1.f).margin(1e-6));
  }
  SECTION("zero query") {
    const std::vector<float> y(12, 0.f);
    const auto t = build_lookup(c, y);
    for (float v : t.values) CHECK(v == 0.f);
    const Code code = encode(c, train.row(0));
    CHECK(score_numerator(t, code.atoms, std::get<SparseCodec>(c).coeffs->codeword(code.coeff)) == 0.0);
  }
  SECTION("matches direct products for every family") {
    std::mt19937_64 rng(2);
    for (Method m : kFamilies) {
      const AnyCodec cc = learn_codec(train, {m, 3, 16, 16}, quick());
      const auto y = oracle::random_vector(12, rng);
      const auto t = build_lookup(cc, y);
      const bool product = layout_of(cc) == Layout::product;
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t a = 0; a < 16; ++a) {
          const auto& b = books_of(cc)[j];
          const double want = oracle::dot(y.data() + (product ? j * 4 : 0), b.center(a).data(), b.dim);
          CHECK(t.at(j, a) == Approx(want).margin(1e-6));
        }
    }
  }
  SECTION("dimension mismatch") {
    const std::vector<float> y(5, 0.f);
    CHECK_THROWS_AS(build_lookup(c, y), ArgumentError);
  }
}

TEST_CASE("PQ with K = 1 sums the first column", "[search]") {
  const Dataset train = synth_dataset(50, 4, GaussianModel{}, 3);
  const PQCodec pq = learn_pq(train, 2, 1);
  const AnyCodec c = pq;
  const std::vector<float> y{1, 2, 3, 4};
  const auto t = build_lookup(c, y);
  CHECK(score_numerator(t, BaseCode{{0, 0}}) == Approx(double(t.at(0, 0)) + t.at(1, 0)));
}

TEST_CASE("table numerators equal decode-then-dot", "[search]") {
  const Dataset train = synth_dataset(2000, 16, GaussianModel{}, 4);
  const Dataset xs = synth_dataset(300, 16, GaussianModel{}, 5);
  std::mt19937_64 rng(6);
  for (Method m : kFamilies) {
    const AnyCodec c = learn_codec(train, {m, 4, 32, 64}, quick());
    const auto codes = encode_all(c, xs);
    const CodeScorer scorer(c, Metric::euclidean, layout_of(c) == Layout::product ? NormMode::product_fast : NormMode::gram, nullptr);
    for (int q = 0; q < 10; ++q) {
      const auto y = oracle::random_vector(16, rng);
      const auto t = build_lookup(c, y);
      for (std::size_t i = 0; i < codes.size(); ++i) {
        const auto rec = oracle::reconstruct(c, codes.get(i));
        double want = 0;
        for (std::size_t d = 0; d < 16; ++d) want += y[d] * rec[d];
        CHECK(rel_err(scorer.numerator(t, codes, i), want) <= 1e-5);
      }
    }
  }
}

TEST_CASE("typed numerator overloads", "[search]") {
  const Dataset train = synth_dataset(600, 8, GaussianModel{}, 7);
  const SparseCodec s = learn_qarvq(train, 2, 8, 8, quick());
  const AnyCodec c = s;
  const auto y = train.row(1);
  const auto t = build_lookup(c, y);
  const SparseCode code = encode_qarvq(s, train.row(0));
  const auto rec = decode_qarvq(s, code);
  CHECK(score_numerator(t, code, *s.coeffs) == Approx(oracle::dot(y.data(), rec.data(), 8)).epsilon(1e-5));
}

TEST_CASE("gram norms equal decoded norms", "[search]") {
  const Dataset train = synth_dataset(2000, 16, GaussianModel{}, 8);
  for (Method m : {Method::rvq, Method::arvq, Method::qarvq, Method::pq, Method::qapq}) {
    const AnyCodec c = learn_codec(train, {m, 4, 16, 32}, quick());
    const GramTable g(c);
    for (std::size_t i = 0; i < 1000; ++i) {
      const Code code = encode(c, train.row(i));
      const double want = oracle::norm(oracle::reconstruct(c, code));
      CHECK(rel_err(norm_of_code(c, code, NormMode::gram, &g), want) <= 1e-5);
      if (layout_of(c) == Layout::product)
        CHECK(std::abs(norm_of_code(c, code, NormMode::product_fast) - want) <= 1e-5 * std::max(1.0, want));
    }
  }
}

TEST_CASE("orthonormal atoms with unit weights have norm sqrt(M)", "[search]") {
  SparseCodec s{Layout::residual, 3, 2, 3, {}, std::nullopt};
  for (std::size_t j = 0; j < 3; ++j) {
    Codebook cb{2, 3, std::vector<float>(6, 0.f), CodebookKind::spherical};
    cb.centers[j] = 1.f;
    cb.centers[3 + (j + 1) % 3] = 1.f;
    s.dictionaries.push_back(cb);
  }
  s.coeffs = CoefficientCodebook::from(Codebook{1, 3, {1, 1, 1}, CodebookKind::euclidean});
  const AnyCodec c = s;
  const Code code{{0, 0, 0}, 0, {}};
  CHECK(norm_of_code(c, code, NormMode::gram) == Approx(std::sqrt(3.0)));
}

TEST_CASE("gram table is symmetric with unit self products", "[search]") {
  const Dataset train = synth_dataset(500, 8, GaussianModel{}, 9);
  const AnyCodec c = learn_codec(train, {Method::qarvq, 3, 8, 4}, quick());
  const GramTable g(c);
  for (std::size_t m = 0; m < 3; ++m)
    for (std::size_t a = 0; a < 8; ++a) {
      CHECK(g.self(m, a) == Approx(1.f).margin(1e-6));
      for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t b = 0; b < 8; ++b)
          if (m != n) CHECK(g.cross(m, a, n, b) == g.cross(n, b, m, a));
    }
}

TEST_CASE("norm quantizer", "[search]") {
  SECTION("constant input") {
    const std::vector<float> v(500, 5.f);
    const auto q = learn_norm_quantizer(v);
    REQUIRE(q.levels.size() == 256);
    for (float l : q.levels) CHECK(l == 5.f);
    CHECK(q.decode(q.encode(5.f)) == 5.f);
  }
  SECTION("two-point input") {
    std::vector<float> v;
    for (int i = 0; i < 300; ++i) v.push_back(i % 2 ? 2.f : 1.f);
    const auto q = learn_norm_quantizer(v);
    CHECK(q.decode(q.encode(1.f)) == 1.f);
    CHECK(q.decode(q.encode(2.f)) == 2.f);
  }
  SECTION("uniform input") {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<float> u(0.f, 1.f);
    std::vector<float> v(100000);
    for (auto& x : v) x = u(rng);
    const auto q = learn_norm_quantizer(v);
    for (std::size_t i = 1; i < 256; ++i) CHECK(q.levels[i] > q.levels[i - 1]);
    double err = 0;
    for (float x : v) {
      const double e = std::abs(q.decode(q.encode(x)) - x);
      CHECK(e <= q.max_half_gap() + 1e-7);
      err += e;
    }
    CHECK(err / double(v.size()) < 1.0 / 256);
  }
  SECTION("nearest level with lower tie") {
    NormQuantizer q;
    for (int i = 0; i < 256; ++i) q.levels.push_back(float(i));
    CHECK(q.encode(2.5f) == 2);
    CHECK(q.encode(2.6f) == 3);
    CHECK(q.encode(-4.f) == 0);
    CHECK(q.encode(1000.f) == 255);
  }
  CHECK_THROWS_AS(learn_norm_quantizer(std::vector<float>{}), ArgumentError);
}

TEST_CASE("quantized norm errors stay within the learned half gap", "[search]") {
  const Dataset train = synth_dataset(3000, 16, GaussianModel{}, 11);
  const AnyCodec c = learn_codec(train, {Method::qarvq, 4, 32, 64}, quick());
  FlatBuildOptions opts;
  opts.norm_mode = NormMode::quantized;
  const auto idx = build_flat(c, train, opts);
  REQUIRE(idx.norm_bytes.size() == train.count());
  const auto norms = decoded_norms(c, idx.codes);
  for (std::size_t i = 0; i < norms.size(); ++i)
    CHECK(std::abs(idx.norm_quantizer->decode(idx.norm_bytes[i]) - norms[i]) <= idx.norm_quantizer->max_half_gap() + 1e-6f);
  CHECK_THROWS_AS(norm_of_code(c, idx.codes.get(0), NormMode::quantized), StateError);
}

TEST_CASE("default norm policy", "[search]") {
  const AnyCodec r = RVQCodec{2, 4, 4, {}}, p = PQCodec{2, 4, 4, {}};
  CHECK(default_norm_mode(r, 999'999) == NormMode::gram);
  CHECK(default_norm_mode(r, 1'000'000) == NormMode::quantized);
  CHECK(default_norm_mode(p, 10) == NormMode::product_fast);
  for (NormMode m : {NormMode::gram, NormMode::quantized, NormMode::product_fast}) CHECK(parse_norm_mode(to_string(m)) == m);
}

TEST_CASE("flat search against a decode oracle", "[search]") {
  const auto [base, queries] = oracle::base_and_queries(3000, 20, 16, 30, 0.4f, 12);
  for (Method m : kFamilies) {
    const AnyCodec c = learn_codec(base, {m, 4, 32, 64}, quick());
    for (Metric metric : {Metric::euclidean, Metric::cosine}) {
      FlatBuildOptions opts;
      opts.metric = metric;
      const auto idx = build_flat(c, base, opts);
      const auto res = search_flat(idx, queries, idx.size());
      CHECK(res == serial::search_flat(idx, queries, idx.size()));
      std::vector<std::vector<double>> rec(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) rec[i] = oracle::reconstruct(c, idx.codes.get(i));
      for (std::size_t q = 0; q < queries.count(); ++q) {
        const auto y = queries.row(q);
        REQUIRE(res[q].size() == idx.size());
        std::vector<double> score(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
          double num = 0, nn = 0, yy = 0;
          for (std::size_t d = 0; d < 16; ++d) num += y[d] * rec[i][d], nn += rec[i][d] * rec[i][d], yy += double(y[d]) * y[d];
          score[i] = metric == Metric::cosine ? num / std::sqrt(nn) : yy - 2 * num + nn;
        }
        for (std::size_t pos = 0; pos < res[q].size(); ++pos) {
          const auto& nb = res[q][pos];
          CHECK(rel_err(nb.score, score[nb.id]) <= 1e-5);
          if (pos + 1 < res[q].size()) {
            const double gap = score[res[q][pos + 1].id] - score[nb.id];
            // Whenever the oracle separates two entries clearly, order agrees.
            if (std::abs(gap) > 1e-4) CHECK((metric == Metric::cosine ? gap < 0 : gap > 0));
          }
        }
      }
    }
  }
}

TEST_CASE("flat search edge cases", "[search]") {
  const Dataset base = synth_dataset(200, 8, GaussianModel{}, 13);
  const AnyCodec c = learn_codec(base, {Method::pq, 4, 200, 0}, quick(2));
  const auto idx = build_flat(c, base);
  SECTION("self retrieval on a memorizing codec") {
    const auto res = search_flat(idx, base, 1);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < base.count(); ++i) hits += res[i][0].id == i;
    CHECK(hits == base.count());
  }
  SECTION("R larger than N returns every id once") {
    const auto res = search_flat(idx, base.row(0), 1000);
    REQUIRE(res.size() == 200);
    std::vector<std::uint32_t> ids;
    for (auto& n : res) ids.push_back(n.id);
    std::sort(ids.begin(), ids.end());
    for (std::uint32_t i = 0; i < 200; ++i) CHECK(ids[i] == i);
  }
  SECTION("R = 0") { CHECK_THROWS_AS(search_flat(idx, base.row(0), 0), ArgumentError); }
}

TEST_CASE("cosine ranking ignores query scale", "[search]") {
  const auto [base, queries] = oracle::base_and_queries(2000, 10, 16, 20, 0.5f, 14);
  const AnyCodec c = learn_codec(base, {Method::qarvq, 4, 32, 32}, quick());
  FlatBuildOptions opts;
  opts.metric = Metric::cosine;
  const auto idx = build_flat(c, base, opts);
  for (std::size_t q = 0; q < queries.count(); ++q) {
    std::vector<float> y(queries.row(q).begin(), queries.row(q).end()), y2 = y;
    for (auto& v : y2) v *= 4.f;  // power of two keeps float products exact
    const auto a = search_flat(idx, y, 50), b = search_flat(idx, y2, 50);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].id == b[i].id);
  }
}

TEST_CASE("equal norms make euclidean and cosine rankings agree", "[search]") {
  const auto [base, queries] = oracle::base_and_queries(2000, 10, 16, 20, 0.5f, 15);
  const AnyCodec c = learn_codec(base, {Method::qapq, 4, 32, 1}, quick());
  FlatBuildOptions oe, oc;
  oc.metric = Metric::cosine;
  const auto ie = build_flat(c, base, oe), ic = build_flat(c, base, oc);
  for (std::size_t q = 0; q < queries.count(); ++q) {
    const auto a = search_flat(ie, queries.row(q), 100), b = search_flat(ic, queries.row(q), 100);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].id == b[i].id);
  }
}

TEST_CASE("flat index files round trip", "[search]") {
  const Dataset base = synth_dataset(500, 8, GaussianModel{}, 16);
  for (Method m : {Method::pq, Method::arvq, Method::qarvq, Method::apq}) {
    const AnyCodec c = learn_codec(base, {m, 2, 16, 8}, quick(2));
    for (NormMode mode : {NormMode::gram, NormMode::quantized}) {
      FlatBuildOptions opts;
      opts.norm_mode = mode;
      opts.metric = Metric::cosine;
      const auto idx = build_flat(c, base, opts);
      const auto p = oracle::temp_path("flat.qsr");
      save_flat(p, idx);
      CHECK(peek_file_kind(p) == FileKind::flat);
      const auto back = load_flat(p);
      CHECK(back.codec == idx.codec);
      CHECK(back.codes == idx.codes);
      CHECK(back.norm_bytes == idx.norm_bytes);
      CHECK(back.metric == idx.metric);
      CHECK(back.norm_mode == idx.norm_mode);
      CHECK(search_flat(back, base, 5) == search_flat(idx, base, 5));
    }
  }
}
