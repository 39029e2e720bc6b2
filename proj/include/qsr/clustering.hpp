#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "qsr/dataset.hpp"

namespace qsr {

enum class CodebookKind : std::uint8_t { euclidean = 0, spherical = 1 };

/// K centers of a common dimension. Spherical centers are unit-norm atoms.
struct Codebook {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<float> centers;  // k x dim, row-major
  CodebookKind kind = CodebookKind::euclidean;

  Vec center(std::size_t i) const { return {centers.data() + i * dim, dim}; }
  MutVec center(std::size_t i) { return {centers.data() + i * dim, dim}; }

  friend bool operator==(const Codebook&, const Codebook&) = default;
};

enum class EmptyPolicy : std::uint8_t { split_largest, reinit_random };

struct ClusteringConfig {
  int iterations = 25;
  std::uint64_t seed = 1234;
  EmptyPolicy empty_policy = EmptyPolicy::split_largest;
  double tolerance = 1e-4;  // relative objective change for early stop
  /// Called once per iteration with the objective evaluated at the
  /// assignment step (distortion for k-means, sum of inner products for
  /// spherical k-means).
  std::function<void(int, double)> on_iteration;
};

Codebook kmeans(const Dataset& points, std::size_t k, const ClusteringConfig& cfg = {});
Codebook spherical_kmeans(const Dataset& points, std::size_t k, const ClusteringConfig& cfg = {});

/// Nearest center (euclidean) or largest inner product (spherical); ties go
/// to the lowest center index.
std::vector<std::uint32_t> assign(const Dataset& points, const Codebook& cb);
std::uint32_t assign_one(Vec x, const Codebook& cb);

/// Index of the largest inner product x.c over all centers, lowest on ties.
std::uint32_t argmax_dot(const float* x, const Codebook& cb);
/// Index of the smallest squared distance, lowest on ties.
std::uint32_t argmin_l2(const float* x, const Codebook& cb);

/// Mean squared distance of each point to its assigned center.
double mean_distortion(const Dataset& points, const Codebook& cb);

namespace serial {
/// Single-threaded reference for `qsr::assign`.
std::vector<std::uint32_t> assign(const Dataset& points, const Codebook& cb);
}  // namespace serial

}  // namespace qsr
