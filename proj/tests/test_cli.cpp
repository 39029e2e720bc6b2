#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "oracles.hpp"
#include "qsr/eval.hpp"
#include "qsr/search.hpp"

using namespace qsr;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string out;
};

Run qsr_run(const std::string& args) {
  const auto log = oracle::temp_path("cli_stdout.txt");
  const std::string cmd = std::string(QSR_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, ss.str()};
}

std::string path(const std::string& name) { return oracle::temp_path("cli_" + name).string(); }

std::string read_text(const std::string& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shared inputs: a small clustered set written once.
void ensure_data() {
  static bool done = false;
  if (done) return;
  const auto [base, queries] = oracle::base_and_queries(10000, 50, 16, 40, 0.4f, 5);
  write_vectors(base, path("base.fvecs"), VecFormat::f32);
  write_vectors(queries, path("queries.fvecs"), VecFormat::f32);
  write_vectors(synth_dataset(300, 128, GaussianModel{}, 6), path("d128.fvecs"), VecFormat::f32);
  done = true;
}

}  // namespace

TEST_CASE("train reports the code size", "[cli]") {
  ensure_data();
  auto r = qsr_run("train --train " + path("base.fvecs") + " --method qarvq --m 8 --k 256 --p 256 --iterations 2 --out " + path("qarvq.codec"));
  REQUIRE(r.status == 0);
  CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("bits_per_vector=72"));
  CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("train_distortion="));

  r = qsr_run("train --train " + path("base.fvecs") + " --method pq --m 8 --k 256 --iterations 2 --out " + path("pq.codec"));
  REQUIRE(r.status == 0);
  CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("bits_per_vector=64"));
}

TEST_CASE("invalid parameter combinations are usage errors", "[cli]") {
  ensure_data();
  auto r = qsr_run("train --train " + path("d128.fvecs") + " --method qapq --m 5 --k 256 --out " + path("bad.codec"));
  CHECK(r.status == 2);
  CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("does not divide"));
  CHECK(!fs::exists(path("bad.codec")));
  CHECK(qsr_run("train --train " + path("base.fvecs") + " --method qarvq --p 0 --out " + path("bad.codec")).status == 2);
  CHECK(qsr_run("train --train " + path("base.fvecs") + " --method nope --out " + path("bad.codec")).status == 2);
  CHECK(qsr_run("frobnicate").status == 2);
  CHECK(qsr_run("train --train " + path("missing.fvecs") + " --out " + path("bad.codec")).status == 3);
}

TEST_CASE("flat build, search and eval", "[cli]") {
  ensure_data();
  REQUIRE(qsr_run("train --train " + path("base.fvecs") + " --method pq --m 8 --k 256 --iterations 3 --seed 9 --out " + path("flat.codec")).status == 0);
  auto r = qsr_run("build --codec " + path("flat.codec") + " --base " + path("base.fvecs") + " --out " + path("flat.idx"));
  REQUIRE(r.status == 0);
  CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("N=10000"));
  REQUIRE(qsr_run("build --codec " + path("flat.codec") + " --base " + path("base.fvecs") + " --out " + path("flat2.idx")).status == 0);
  CHECK(oracle::file_bytes(path("flat.idx")) == oracle::file_bytes(path("flat2.idx")));

  CHECK(qsr_run("build --codec " + path("flat.codec") + " --base " + path("d128.fvecs") + " --out " + path("x.idx")).status == 4);

  REQUIRE(qsr_run("search --index " + path("flat.idx") + " --queries " + path("queries.fvecs") + " --r 20 --out " + path("flat.res")).status == 0);
  REQUIRE(qsr_run("search --index " + path("flat.idx") + " --queries " + path("queries.fvecs") + " --r 20 --out " + path("flat2.res")).status == 0);
  const auto res = read_text(path("flat.res"));
  CHECK(res == read_text(path("flat2.res")));
  CHECK_THAT(res, Catch::Matchers::StartsWith("# method=pq\n"));
  CHECK_THAT(res, Catch::Matchers::ContainsSubstring("\n0: "));
  CHECK_THAT(res, Catch::Matchers::ContainsSubstring("\n49: "));

  REQUIRE(qsr_run("gt --base " + path("base.fvecs") + " --queries " + path("queries.fvecs") + " --depth 20 --out " + path("gt.ivecs")).status == 0);
  r = qsr_run("eval --results " + path("flat.res") + " --gt " + path("gt.ivecs") + " --R 1,10,20 --out " + path("rep.txt") + " --table " + path("rep.tsv"));
  REQUIRE(r.status == 0);

  // Cross-check against library-level recall.
  const auto base = read_vectors(path("base.fvecs"), VecFormat::f32);
  const auto queries = read_vectors(path("queries.fvecs"), VecFormat::f32);
  const auto idx = load_flat(path("flat.idx"));
  const auto ids = ids_of(search_flat(idx, queries, 20));
  const auto gt = brute_force_gt(base, queries, Metric::euclidean, 20);
  for (std::size_t R : {1, 10, 20}) {
    std::ostringstream line;
    line << "recall@" << R << '=' << std::setprecision(6) << recall_at(ids, gt, R) << '\n';
    CHECK_THAT(read_text(path("rep.txt")), Catch::Matchers::ContainsSubstring(line.str()));
  }
  CHECK_THAT(read_text(path("rep.tsv")), Catch::Matchers::StartsWith("method\tbits\tR\trecall\npq\t64\t1\t"));

  // R beyond the stored depth.
  CHECK(qsr_run("eval --results " + path("flat.res") + " --gt " + path("gt.ivecs") + " --R 50").status == 4);
}

TEST_CASE("identical results and ground truth give perfect recall", "[cli]") {
  ensure_data();
  REQUIRE(qsr_run("gt --base " + path("base.fvecs") + " --queries " + path("queries.fvecs") + " --depth 10 --out " + path("gt10.ivecs")).status == 0);
  const auto gt = read_ivecs(path("gt10.ivecs"));
  {
    std::ofstream out(path("perfect.res"));
    out << "# method=exact\n";
    for (std::size_t q = 0; q < gt.size(); ++q) {
      out << q << ':';
      for (std::size_t i = 0; i < gt[q].size(); ++i) out << (i ? "," : " ") << gt[q][i] << ":0";
      out << '\n';
    }
  }
  const auto r = qsr_run("eval --results " + path("perfect.res") + " --gt " + path("gt10.ivecs") + " --R 1,5,10");
  REQUIRE(r.status == 0);
  CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("recall@1=1\nrecall@5=1\nrecall@10=1\n"));
}

TEST_CASE("near-lossless codec retrieves queries from the base", "[cli]") {
  ensure_data();
  // 200 vectors, PQ with K = N memorizes them.
  write_vectors(read_vectors(path("base.fvecs"), VecFormat::f32).slice(0, 200), path("small.fvecs"), VecFormat::f32);
  REQUIRE(qsr_run("train --train " + path("small.fvecs") + " --method pq --m 4 --k 200 --out " + path("mem.codec")).status == 0);
  REQUIRE(qsr_run("build --codec " + path("mem.codec") + " --base " + path("small.fvecs") + " --out " + path("mem.idx")).status == 0);
  REQUIRE(qsr_run("search --index " + path("mem.idx") + " --queries " + path("small.fvecs") + " --r 1 --out " + path("mem.res")).status == 0);
  std::istringstream in(read_text(path("mem.res")));
  std::string line;
  std::size_t hits = 0, total = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto qid = line.substr(0, line.find(':'));
    const auto rest = line.substr(line.find(' ') + 1);
    hits += rest.substr(0, rest.find(':')) == qid;
    ++total;
  }
  CHECK(total == 200);
  CHECK(hits == 200);
}

TEST_CASE("IVF build and pruned search", "[cli]") {
  ensure_data();
  const std::string common = "build --train " + path("base.fvecs") + " --base " + path("base.fvecs") +
                             " --kc 32 --method qarvq --m 4 --k 64 --p 64 --iterations 4 --seed 3 --out ";
  auto r = qsr_run(common + path("ivf.idx"));
  REQUIRE(r.status == 0);
  CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("N=10000"));
  CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("list_length_bucket"));
  REQUIRE(qsr_run(common + path("ivf2.idx")).status == 0);
  CHECK(oracle::file_bytes(path("ivf.idx")) == oracle::file_bytes(path("ivf2.idx")));

  r = qsr_run("search --index " + path("ivf.idx") + " --queries " + path("queries.fvecs") + " --wc 8 --wprime 32 --r 10 --out " + path("ivf.res"));
  REQUIRE(r.status == 0);
  CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("query 49 candidates="));
  CHECK_THAT(read_text(path("ivf.res")), Catch::Matchers::ContainsSubstring("# wprime=32\n"));
  CHECK_THAT(read_text(path("ivf.res")), Catch::Matchers::ContainsSubstring("# candidates="));

  REQUIRE(qsr_run("build --train " + path("base.fvecs") + " --base " + path("base.fvecs") +
                  " --kc 8 --method pq --m 4 --k 16 --iterations 2 --out " + path("ivfpq.idx")).status == 0);
  CHECK(qsr_run("search --index " + path("ivfpq.idx") + " --queries " + path("queries.fvecs") + " --wc 2 --wprime 4 --out " + path("x.res")).status == 2);
  CHECK(qsr_run("search --index " + path("ivf.idx") + " --queries " + path("queries.fvecs") + " --wc 64 --out " + path("x.res")).status == 2);
  CHECK(qsr_run("build --base " + path("base.fvecs") + " --kc 8 --out " + path("x.idx")).status == 2);
}

TEST_CASE("synth writes deterministic files", "[cli]") {
  REQUIRE(qsr_run("synth --n 100 --d 8 --clusters 4 --seed 2 --out " + path("s1.fvecs")).status == 0);
  REQUIRE(qsr_run("synth --n 100 --d 8 --clusters 4 --seed 2 --out " + path("s2.fvecs")).status == 0);
  CHECK(oracle::file_bytes(path("s1.fvecs")) == oracle::file_bytes(path("s2.fvecs")));
  CHECK(fs::file_size(path("s1.fvecs")) == 100u * (4 + 4 * 8));
}
