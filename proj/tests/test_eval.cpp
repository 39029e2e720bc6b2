#include <catch_amalgamated.hpp>

#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "qsr/eval.hpp"
#include "qsr/search.hpp"

using namespace qsr;

TEST_CASE("ground truth matches a naive double loop", "[eval]") {
  const auto [base, queries] = oracle::base_and_queries(1000, 100, 12, 20, 0.5f, 1);
  for (Metric metric : {Metric::euclidean, Metric::cosine}) {
    const auto gt = brute_force_gt(base, queries, metric, 10);
    CHECK(gt.metric == metric);
    CHECK(serial::brute_force_gt(base, queries, metric, 10).lists == gt.lists);
    for (std::size_t q = 0; q < queries.count(); ++q) {
      std::vector<std::pair<double, std::uint32_t>> all;
      for (std::size_t i = 0; i < base.count(); ++i) {
        double key;
        if (metric == Metric::euclidean) {
          key = oracle::sqdist(queries.row(q).data(), base.row(i).data(), 12);
        } else {
          const double nx = std::sqrt(oracle::dot(base.row(i).data(), base.row(i).data(), 12));
          key = -oracle::dot(queries.row(q).data(), base.row(i).data(), 12) / nx;
        }
        all.push_back({key, std::uint32_t(i)});
      }
      std::sort(all.begin(), all.end());
      REQUIRE(gt.lists[q].size() == 10);
      for (std::size_t r = 0; r < 10; ++r) CHECK(gt.lists[q][r] == all[r].second);
    }
  }
}

TEST_CASE("ground truth edge cases", "[eval]") {
  const Dataset base = l2_normalize(synth_dataset(50, 4, GaussianModel{}, 2)).data;
  const Dataset q = base.slice(7, 9);
  const auto eu = brute_force_gt(base, q, Metric::euclidean, 3);
  const auto co = brute_force_gt(base, q, Metric::cosine, 3);
  CHECK(eu.lists[0][0] == 7);
  CHECK(eu.lists[1][0] == 8);
  CHECK(co.lists[0][0] == 7);
  CHECK(brute_force_gt(base, q, Metric::euclidean, 0).lists == std::vector<std::vector<std::uint32_t>>(2));
  CHECK(brute_force_gt(base, q, Metric::euclidean, 500).lists[0].size() == 50);

  const Dataset dup(1, {1, 1, 1});
  CHECK(brute_force_gt(dup, Dataset(1, {1}), Metric::euclidean, 3).lists[0] == std::vector<std::uint32_t>{0, 1, 2});
  CHECK_THROWS_AS(brute_force_gt(base, Dataset(3, {0, 0, 0}), Metric::euclidean, 1), ArgumentError);
}

TEST_CASE("ground truth round trips through i32 files", "[eval]") {
  GroundTruth gt{Metric::euclidean, {{3, 1, 2}, {0, 5, 4}}};
  const auto p = oracle::temp_path("gt_rt.ivecs");
  write_ivecs(to_ivecs(gt), p);
  CHECK(from_ivecs(read_ivecs(p), Metric::euclidean).lists == gt.lists);
}

TEST_CASE("recall@R", "[eval]") {
  const GroundTruth gt{Metric::euclidean, {{1, 2}, {3, 4}, {5, 6}, {7, 8}}};
  const ResultLists same{{1, 2}, {3, 4}, {5, 6}, {7, 8}};
  CHECK(recall_at(same, gt, 1) == 1.0);
  CHECK(recall_at(same, gt, 2) == 1.0);
  const ResultLists disjoint{{9, 9}, {9, 9}, {9, 9}, {9, 9}};
  CHECK(recall_at(disjoint, gt, 2) == 0.0);
  const ResultLists mixed{{2, 1, 0}, {3, 0, 0}, {0, 0, 5}, {0, 0, 0}};
  CHECK(recall_at(mixed, gt, 1) == 0.25);
  CHECK(recall_at(mixed, gt, 2) == 0.5);
  CHECK(recall_at(mixed, gt, 3) == 0.75);
  CHECK_THROWS_AS(recall_at(ResultLists{{1}}, gt, 1), ArgumentError);

  std::mt19937_64 rng(3);
  ResultLists perms(4, std::vector<std::uint32_t>(20));
  for (auto& p : perms) {
    std::iota(p.begin(), p.end(), 0u);
    std::shuffle(p.begin(), p.end(), rng);
  }
  const GroundTruth small{Metric::euclidean, {{4}, {0}, {19}, {7}}};
  double prev = 0;
  for (std::size_t r = 1; r <= 20; ++r) {
    const double v = recall_at(perms, small, r);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK(prev == 1.0);
}

TEST_CASE("distortion", "[eval]") {
  const Dataset ds = synth_dataset(64, 8, GaussianModel{}, 4);
  SECTION("memorizing codec") {
    const AnyCodec c = learn_codec(ds, {Method::pq, 2, 64, 0});
    CHECK(distortion(ds, c) == 0.0);
  }
  SECTION("matches an independent accumulation") {
    const Dataset big = synth_dataset(2000, 8, GaussianModel{}, 5);
    for (Method m : {Method::pq, Method::rvq, Method::qapq, Method::qarvq, Method::arvq}) {
      const AnyCodec c = learn_codec(big, {m, 2, 16, 16});
      double acc = 0;
      for (std::size_t i = 0; i < big.count(); ++i)
        acc += oracle::sqdist(big.row(i).data(), oracle::reconstruct(c, encode(c, big.row(i))));
      acc /= double(big.count());
      const double d = distortion(big, c);
      CHECK(d >= 0);
      CHECK(std::abs(d - acc) <= 1e-6 * acc);
    }
  }
  CHECK(distortion(Dataset(8, 0), AnyCodec(PQCodec{2, 1, 8, {}})) == 0.0);
}

TEST_CASE("bench tables report relative timings", "[eval]") {
  BenchTable t;
  t.add("learn", "PQ", 2.0);
  t.add("learn", "Qa-PQ", 1.0);
  t.add("search", "PQ", 4.0);
  CHECK(t.relative("learn", "Qa-PQ", "PQ") == 0.5);
  CHECK(!t.relative("search", "Qa-PQ", "PQ"));
  std::ostringstream out;
  t.write(out, "PQ");
  CHECK_THAT(out.str(), Catch::Matchers::ContainsSubstring("learn\tQa-PQ\t1\t0.5"));
  CHECK(t.run("x", "y", [] {}) >= 0.0);
}

TEST_CASE("repeated timings give stable ratios", "[eval]") {
  const Dataset base = synth_dataset(20000, 32, GaussianModel{}, 6);
  const Dataset q = synth_dataset(100, 32, GaussianModel{}, 7);
  auto run = [&] { (void)brute_force_gt(base, q, Metric::euclidean, 10); };
  run();  // warm-up
  // Interleaved so slow drift in machine load hits both series alike.
  double a = 1e300, b = 1e300;
  for (int i = 0; i < 7; ++i) {
    a = std::min(a, time_seconds(run));
    b = std::min(b, time_seconds(run));
  }
  CHECK(a / b == Catch::Approx(1.0).epsilon(0.35));
}

TEST_CASE("lookup table cost grows linearly in K", "[eval]") {
  const Dataset train = synth_dataset(300, 64, GaussianModel{}, 8);
  const Dataset q = synth_dataset(200, 64, GaussianModel{}, 9);
  std::vector<double> ks, ts;
  for (std::size_t k : {64, 128, 256}) {
    ClusteringConfig cfg;
    cfg.iterations = 1;
    const AnyCodec c = learn_codec(train, {Method::rvq, 8, k, 0}, cfg);
    LookupTable lt;
    double b = 1e300;
    for (int rep = 0; rep < 7; ++rep)
      b = std::min(b, time_seconds([&] {
            for (std::size_t i = 0; i < q.count(); ++i) build_lookup(c, q.row(i), lt);
          }));
    ks.push_back(double(k));
    ts.push_back(b);
  }
  // Least-squares line through the three points; a linear law leaves small residuals.
  const double mk = (ks[0] + ks[1] + ks[2]) / 3, mt = (ts[0] + ts[1] + ts[2]) / 3;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < 3; ++i) sxy += (ks[i] - mk) * (ts[i] - mt), sxx += (ks[i] - mk) * (ks[i] - mk);
  const double slope = sxy / sxx, icpt = mt - slope * mk;
  CHECK(slope > 0);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(ts[i] - (icpt + slope * ks[i])) <= 0.25 * ts[i]);
  CHECK(ts[2] / ts[0] == Catch::Approx(4.0).epsilon(0.5));
}

TEST_CASE("Qa-PQ learns faster than PQ at equal bits", "[eval]") {
  const Dataset train = synth_dataset(20000, 64, ClusteredModel{50, 0.5f}, 10);
  ClusteringConfig cfg;
  cfg.iterations = 10;
  cfg.tolerance = 0;
  const double pq = time_seconds([&] { (void)learn_codec(train, {Method::pq, 8, 256, 0}, cfg); });
  const double qa = time_seconds([&] { (void)learn_codec(train, {Method::qapq, 8, 128, 256}, cfg); });
  CHECK(qa < pq);
}

TEST_CASE("eval reports", "[eval]") {
  EvalReport rep;
  rep.config = {{"method", "qarvq"}, {"bits", "72"}, {"M", "8"}};
  rep.recall = {{1, 0.25}, {10, 0.5}, {100, 0.75}};
  rep.distortion = 1.5;
  rep.times = {{"search", 0.125}};
  std::ostringstream text, table;
  rep.write_text(text);
  rep.write_table(table);
  CHECK(text.str() == "method=qarvq\nbits=72\nM=8\nrecall@1=0.25\nrecall@10=0.5\nrecall@100=0.75\ndistortion=1.5\ntime_search_s=0.125\n");
  CHECK(table.str() == "method\tbits\tR\trecall\nqarvq\t72\t1\t0.25\nqarvq\t72\t10\t0.5\nqarvq\t72\t100\t0.75\n");
}
