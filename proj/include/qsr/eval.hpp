#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "qsr/codec.hpp"
#include "qsr/topr.hpp"

namespace qsr {

struct GroundTruth {
  Metric metric = Metric::euclidean;
  std::vector<std::vector<std::uint32_t>> lists;  // per query, best first
};

/// Exact top-`depth` neighbors by exhaustive scan (f64 scores, lower id on
/// ties). Cosine ranks by y.x / |x|. Depth is clamped to N.
GroundTruth brute_force_gt(const Dataset& base, const Dataset& queries, Metric metric,
                           std::size_t depth);
namespace serial {
GroundTruth brute_force_gt(const Dataset& base, const Dataset& queries, Metric metric,
                           std::size_t depth);
}

std::vector<std::vector<std::int32_t>> to_ivecs(const GroundTruth& gt);
GroundTruth from_ivecs(const std::vector<std::vector<std::int32_t>>& rows, Metric metric);

using ResultLists = std::vector<std::vector<std::uint32_t>>;
ResultLists ids_of(const std::vector<std::vector<Neighbor>>& results);

/// Fraction of queries whose true nearest neighbor is in their first R results.
double recall_at(const ResultLists& results, const GroundTruth& gt, std::size_t r);

/// (1/N) sum |x - Q(x)|^2
double distortion(const Dataset& ds, const AnyCodec& codec);
/// Same, from already computed codes.
double distortion(const Dataset& ds, const AnyCodec& codec, const CodeStore& codes);

/// Wall-clock seconds of `fn` on the monotonic clock.
double time_seconds(const std::function<void()>& fn);

struct BenchRow {
  std::string phase;
  std::string name;
  double seconds = 0.0;
};

/// Timings grouped by phase, reported absolute and relative to a baseline.
class BenchTable {
 public:
  double run(const std::string& phase, const std::string& name, const std::function<void()>& fn);
  void add(const std::string& phase, const std::string& name, double seconds);
  /// seconds(name) / seconds(baseline) within `phase`; nullopt if missing.
  std::optional<double> relative(const std::string& phase, const std::string& name,
                                 const std::string& baseline) const;
  void write(std::ostream& out, const std::string& baseline) const;
  const std::vector<BenchRow>& rows() const { return rows_; }

 private:
  std::vector<BenchRow> rows_;
};

struct EvalReport {
  std::vector<std::pair<std::string, std::string>> config;  // echoed verbatim
  std::map<std::size_t, double> recall;                     // R -> recall@R
  std::optional<double> distortion;
  std::vector<std::pair<std::string, double>> times;        // phase -> seconds

  /// key=value lines.
  void write_text(std::ostream& out) const;
  /// Tab-separated rows: method bits R recall.
  void write_table(std::ostream& out) const;
  std::string config_value(const std::string& key) const;
};

}  // namespace qsr
