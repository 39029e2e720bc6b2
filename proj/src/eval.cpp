#include "qsr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>

namespace qsr {

namespace {

void check_gt_args(const Dataset& base, const Dataset& queries) {
  if (base.count() > 0 && queries.count() > 0 && base.dim() != queries.dim())
    throw ArgumentError("ground truth: base and query dimensions differ");
}

std::vector<std::uint32_t> exact_neighbors(const Dataset& base, Vec y, Metric metric,
                                           std::size_t depth, const std::vector<double>& inv_norm,
                                           std::vector<std::pair<double, std::uint32_t>>& scratch) {
  scratch.resize(base.count());
  for (std::size_t i = 0; i < base.count(); ++i) {
    const float* x = base.row(i).data();
    // Keyed so that smaller is better in both metrics.
    const double key = metric == Metric::euclidean
                           ? kernels::l2sq_d(y.data(), x, y.size())
                           : -kernels::dot_d(y.data(), x, y.size()) * inv_norm[i];
    scratch[i] = {key, static_cast<std::uint32_t>(i)};
  }
  std::partial_sort(scratch.begin(), scratch.begin() + std::ptrdiff_t(depth), scratch.end());
  std::vector<std::uint32_t> out(depth);
  for (std::size_t i = 0; i < depth; ++i) out[i] = scratch[i].second;
  return out;
}

std::vector<double> inverse_norms(const Dataset& base, Metric metric) {
  std::vector<double> inv(metric == Metric::cosine ? base.count() : 0);
  for (std::size_t i = 0; i < inv.size(); ++i) {
    const double n = std::sqrt(kernels::dot_d(base.row(i).data(), base.row(i).data(), base.dim()));
    inv[i] = n > 0 ? 1.0 / n : 0.0;
  }
  return inv;
}

}  // namespace

GroundTruth brute_force_gt(const Dataset& base, const Dataset& queries, Metric metric,
                           std::size_t depth) {
  check_gt_args(base, queries);
  depth = std::min(depth, base.count());
  const auto inv = inverse_norms(base, metric);
  GroundTruth gt{metric, std::vector<std::vector<std::uint32_t>>(queries.count())};
  const auto n = static_cast<std::int64_t>(queries.count());
#pragma omp parallel
  {
    std::vector<std::pair<double, std::uint32_t>> scratch;
#pragma omp for schedule(dynamic, 4)
    for (std::int64_t q = 0; q < n; ++q)
      gt.lists[q] = exact_neighbors(base, queries.row(std::size_t(q)), metric, depth, inv, scratch);
  }
  return gt;
}

GroundTruth serial::brute_force_gt(const Dataset& base, const Dataset& queries, Metric metric,
                                   std::size_t depth) {
  check_gt_args(base, queries);
  depth = std::min(depth, base.count());
  const auto inv = inverse_norms(base, metric);
  GroundTruth gt{metric, {}};
  std::vector<std::pair<double, std::uint32_t>> scratch;
  for (std::size_t q = 0; q < queries.count(); ++q)
    gt.lists.push_back(exact_neighbors(base, queries.row(q), metric, depth, inv, scratch));
  return gt;
}

std::vector<std::vector<std::int32_t>> to_ivecs(const GroundTruth& gt) {
  std::vector<std::vector<std::int32_t>> rows;
  for (const auto& l : gt.lists) rows.emplace_back(l.begin(), l.end());
  return rows;
}

GroundTruth from_ivecs(const std::vector<std::vector<std::int32_t>>& rows, Metric metric) {
  GroundTruth gt{metric, {}};
  for (const auto& r : rows) {
    auto& l = gt.lists.emplace_back();
    for (auto v : r) {
      if (v < 0) throw FormatError("negative id in ground truth");
      l.push_back(static_cast<std::uint32_t>(v));
    }
  }
  return gt;
}

ResultLists ids_of(const std::vector<std::vector<Neighbor>>& results) {
  ResultLists out;
  out.reserve(results.size());
  for (const auto& r : results) {
    auto& ids = out.emplace_back();
    for (const auto& n : r) ids.push_back(n.id);
  }
  return out;
}

double recall_at(const ResultLists& results, const GroundTruth& gt, std::size_t r) {
  if (results.size() != gt.lists.size())
    throw ArgumentError("recall_at: " + std::to_string(results.size()) + " result lists for " +
                        std::to_string(gt.lists.size()) + " queries");
  if (results.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    if (gt.lists[q].empty()) continue;
    const auto target = gt.lists[q][0];
    const auto& res = results[q];
    const auto end = res.begin() + std::ptrdiff_t(std::min(r, res.size()));
    if (std::find(res.begin(), end, target) != end) ++hits;
  }
  return double(hits) / double(results.size());
}

double distortion(const Dataset& ds, const AnyCodec& codec, const CodeStore& codes) {
  if (ds.count() == 0) return 0.0;
  if (ds.dim() != dim_of(codec)) throw ArgumentError("distortion: dataset dim does not match codec");
  if (codes.size() != ds.count()) throw ArgumentError("distortion: code count mismatch");
  std::vector<double> err(ds.count());
  const auto n = static_cast<std::int64_t>(ds.count());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto rec = decode(codec, codes.get(std::size_t(i)));
    err[i] = kernels::l2sq_d(ds.row(std::size_t(i)).data(), rec.data(), rec.size());
  }
  return std::accumulate(err.begin(), err.end(), 0.0) / double(ds.count());
}

double distortion(const Dataset& ds, const AnyCodec& codec) {
  if (ds.count() == 0) return 0.0;
  return distortion(ds, codec, encode_all(codec, ds));
}

double time_seconds(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double BenchTable::run(const std::string& phase, const std::string& name,
                       const std::function<void()>& fn) {
  const double s = time_seconds(fn);
  add(phase, name, s);
  return s;
}

void BenchTable::add(const std::string& phase, const std::string& name, double seconds) {
  rows_.push_back({phase, name, seconds});
}

std::optional<double> BenchTable::relative(const std::string& phase, const std::string& name,
                                           const std::string& baseline) const {
  std::optional<double> num, den;
  for (const auto& r : rows_) {
    if (r.phase != phase) continue;
    if (r.name == name) num = r.seconds;
    if (r.name == baseline) den = r.seconds;
  }
  if (!num || !den || *den <= 0) return std::nullopt;
  return *num / *den;
}

void BenchTable::write(std::ostream& out, const std::string& baseline) const {
  out << "phase\tmethod\tseconds\trelative_to_" << baseline << '\n';
  for (const auto& r : rows_) {
    out << r.phase << '\t' << r.name << '\t' << std::setprecision(6) << r.seconds << '\t';
    if (auto rel = relative(r.phase, r.name, baseline))
      out << std::setprecision(3) << *rel;
    else
      out << '-';
    out << '\n';
  }
}

std::string EvalReport::config_value(const std::string& key) const {
  for (const auto& [k, v] : config)
    if (k == key) return v;
  return "-";
}

void EvalReport::write_text(std::ostream& out) const {
  for (const auto& [k, v] : config) out << k << '=' << v << '\n';
  for (const auto& [r, v] : recall) out << "recall@" << r << '=' << std::setprecision(6) << v << '\n';
  if (distortion) out << "distortion=" << std::setprecision(8) << *distortion << '\n';
  for (const auto& [phase, s] : times) out << "time_" << phase << "_s=" << std::setprecision(6) << s << '\n';
}

void EvalReport::write_table(std::ostream& out) const {
  out << "method\tbits\tR\trecall\n";
  for (const auto& [r, v] : recall)
    out << config_value("method") << '\t' << config_value("bits") << '\t' << r << '\t'
        << std::setprecision(6) << v << '\n';
}

}  // namespace qsr
