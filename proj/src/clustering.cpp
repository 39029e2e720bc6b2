#include "qsr/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace qsr {

std::uint32_t argmax_dot(const float* x, const Codebook& cb) {
  std::uint32_t best = 0;
  float best_v = kernels::dot(x, cb.centers.data(), cb.dim);
  for (std::size_t k = 1; k < cb.k; ++k) {
    const float v = kernels::dot(x, cb.centers.data() + k * cb.dim, cb.dim);
    if (v > best_v) {
      best_v = v;
      best = static_cast<std::uint32_t>(k);
    }
  }
  return best;
}

std::uint32_t argmin_l2(const float* x, const Codebook& cb) {
  std::uint32_t best = 0;
  float best_v = kernels::l2sq(x, cb.centers.data(), cb.dim);
  for (std::size_t k = 1; k < cb.k; ++k) {
    const float v = kernels::l2sq(x, cb.centers.data() + k * cb.dim, cb.dim);
    if (v < best_v) {
      best_v = v;
      best = static_cast<std::uint32_t>(k);
    }
  }
  return best;
}

std::uint32_t assign_one(Vec x, const Codebook& cb) {
  if (x.size() != cb.dim) throw ArgumentError("assign: dimension mismatch");
  return cb.kind == CodebookKind::spherical ? argmax_dot(x.data(), cb) : argmin_l2(x.data(), cb);
}

namespace {

void check_assign_args(const Dataset& points, const Codebook& cb) {
  if (cb.k == 0) throw ArgumentError("assign: empty codebook");
  if (points.count() > 0 && points.dim() != cb.dim)
    throw ArgumentError("assign: points have dim " + std::to_string(points.dim()) +
                        ", codebook has dim " + std::to_string(cb.dim));
}

// Per-point assignment plus the objective contribution of that point.
void assign_with_objective(const Dataset& points, const Codebook& cb,
                           std::vector<std::uint32_t>& labels, std::vector<float>& score) {
  const auto n = static_cast<std::int64_t>(points.count());
  const bool spherical = cb.kind == CodebookKind::spherical;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const float* x = points.row(std::size_t(i)).data();
    const auto l = spherical ? argmax_dot(x, cb) : argmin_l2(x, cb);
    labels[i] = l;
    score[i] = spherical ? kernels::dot(x, cb.centers.data() + l * cb.dim, cb.dim)
                         : kernels::l2sq(x, cb.centers.data() + l * cb.dim, cb.dim);
  }
}

void normalize(MutVec v) {
  const double n = std::sqrt(kernels::dot_d(v.data(), v.data(), v.size()));
  if (n > 0)
    for (auto& x : v) x = static_cast<float>(double(x) / n);
}

// Replaces dead center `dead` according to the configured policy.
void revive(Codebook& cb, std::size_t dead, std::vector<std::size_t>& counts,
            const Dataset& points, const ClusteringConfig& cfg, std::mt19937_64& rng) {
  if (cfg.empty_policy == EmptyPolicy::reinit_random) {
    std::uniform_int_distribution<std::size_t> pick(0, points.count() - 1);
    auto src = points.row(pick(rng));
    std::copy(src.begin(), src.end(), cb.center(dead).begin());
    if (cb.kind == CodebookKind::spherical) normalize(cb.center(dead));
    return;
  }
  const auto largest = static_cast<std::size_t>(
      std::max_element(counts.begin(), counts.end()) - counts.begin());
  auto src = cb.center(largest);
  auto dst = cb.center(dead);
  std::bernoulli_distribution coin(0.5);
  constexpr float eps = 1.f / 1024.f;
  for (std::size_t j = 0; j < cb.dim; ++j) {
    const float mag = std::abs(src[j]) + 1e-6f;
    dst[j] = src[j] + (coin(rng) ? eps : -eps) * mag;
  }
  if (cb.kind == CodebookKind::spherical) normalize(dst);
  counts[dead] = counts[largest] / 2;
  counts[largest] -= counts[dead];
}

std::vector<std::size_t> sample_distinct(const std::vector<std::size_t>& pool, std::size_t k,
                                         std::mt19937_64& rng) {
  std::vector<std::size_t> idx = pool;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

Codebook lloyd(const Dataset& points, std::size_t k, const ClusteringConfig& cfg,
               CodebookKind kind) {
  const std::size_t n = points.count(), d = points.dim();
  if (k == 0) throw ArgumentError("k must be at least 1");
  if (cfg.iterations < 1) throw ArgumentError("iterations must be at least 1");
  if (k > n)
    throw ArgumentError("k = " + std::to_string(k) + " exceeds the " + std::to_string(n) +
                        " training points");
  const bool spherical = kind == CodebookKind::spherical;

  std::vector<std::size_t> pool;
  pool.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!spherical || kernels::norm_sq(points.row(i).data(), d) > 0.f) pool.push_back(i);
  }
  if (pool.size() < k)
    throw ArgumentError("spherical k-means needs " + std::to_string(k) +
                        " nonzero points, got " + std::to_string(pool.size()));

  std::mt19937_64 rng(cfg.seed);
  Codebook cb{k, d, std::vector<float>(k * d), kind};
  const auto seeds = sample_distinct(pool, k, rng);
  for (std::size_t c = 0; c < k; ++c) {
    auto src = points.row(seeds[c]);
    std::copy(src.begin(), src.end(), cb.center(c).begin());
    if (spherical) normalize(cb.center(c));
  }

  std::vector<std::uint32_t> labels(n);
  std::vector<float> score(n);
  std::vector<double> sums(k * d);
  std::vector<std::size_t> counts(k);
  double prev = 0.0;
  for (int it = 0; it < cfg.iterations; ++it) {
    assign_with_objective(points, cb, labels, score);
    double obj = 0.0;
    for (float s : score) obj += s;
    if (!spherical) obj /= double(n);
    if (cfg.on_iteration) cfg.on_iteration(it, obj);

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const float* x = points.row(i).data();
      double* s = sums.data() + labels[i] * d;
      for (std::size_t j = 0; j < d; ++j) s[j] += x[j];
      ++counts[labels[i]];
    }
    std::vector<std::size_t> dead;
    for (std::size_t c = 0; c < k; ++c) {
      double* s = sums.data() + c * d;
      auto dst = cb.center(c);
      if (spherical) {
        double nn = 0.0;
        for (std::size_t j = 0; j < d; ++j) nn += s[j] * s[j];
        if (counts[c] == 0 || nn == 0.0) {
          dead.push_back(c);
          continue;
        }
        const double inv = 1.0 / std::sqrt(nn);
        for (std::size_t j = 0; j < d; ++j) dst[j] = static_cast<float>(s[j] * inv);
      } else {
        if (counts[c] == 0) {
          dead.push_back(c);
          continue;
        }
        for (std::size_t j = 0; j < d; ++j) dst[j] = static_cast<float>(s[j] / double(counts[c]));
      }
    }
    for (auto c : dead) revive(cb, c, counts, points, cfg, rng);

    if (it > 0 && dead.empty()) {
      const double change = std::abs(obj - prev);
      if (change <= cfg.tolerance * std::abs(prev)) break;
    }
    if (!spherical && obj == 0.0 && dead.empty()) break;
    prev = obj;
  }
  return cb;
}

}  // namespace

Codebook kmeans(const Dataset& points, std::size_t k, const ClusteringConfig& cfg) {
  return lloyd(points, k, cfg, CodebookKind::euclidean);
}

Codebook spherical_kmeans(const Dataset& points, std::size_t k, const ClusteringConfig& cfg) {
  return lloyd(points, k, cfg, CodebookKind::spherical);
}

std::vector<std::uint32_t> assign(const Dataset& points, const Codebook& cb) {
  check_assign_args(points, cb);
  std::vector<std::uint32_t> out(points.count());
  const auto n = static_cast<std::int64_t>(points.count());
  const bool spherical = cb.kind == CodebookKind::spherical;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const float* x = points.row(std::size_t(i)).data();
    out[i] = spherical ? argmax_dot(x, cb) : argmin_l2(x, cb);
  }
  return out;
}

std::vector<std::uint32_t> serial::assign(const Dataset& points, const Codebook& cb) {
  check_assign_args(points, cb);
  std::vector<std::uint32_t> out(points.count());
  for (std::size_t i = 0; i < points.count(); ++i) out[i] = assign_one(points.row(i), cb);
  return out;
}

double mean_distortion(const Dataset& points, const Codebook& cb) {
  check_assign_args(points, cb);
  const auto n = static_cast<std::int64_t>(points.count());
  if (n == 0) return 0.0;
  std::vector<double> err(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const float* x = points.row(std::size_t(i)).data();
    const auto l = argmin_l2(x, cb);
    err[i] = kernels::l2sq_d(x, cb.centers.data() + l * cb.dim, cb.dim);
  }
  const double total = std::accumulate(err.begin(), err.end(), 0.0);
  return total / double(n);
}

}  // namespace qsr
