#include "qsr/baseline.hpp"

#include <algorithm>
#include <string>

namespace qsr {

namespace {

void check_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw ArgumentError(std::string(what) + ": vector has dim " + std::to_string(got) +
                        ", codec expects " + std::to_string(want));
}

void check_code(const BaseCode& code, std::size_t m, std::size_t k, const char* what) {
  if (code.indices.size() != m) throw ArgumentError(std::string(what) + ": code length mismatch");
  for (auto i : code.indices)
    if (i >= k) throw ArgumentError(std::string(what) + ": codeword index out of range");
}

ClusteringConfig layer_config(const ClusteringConfig& cfg, std::size_t j) {
  ClusteringConfig c = cfg;
  c.seed = cfg.seed + j;
  return c;
}

}  // namespace

PQCodec learn_pq(const Dataset& train, std::size_t m, std::size_t k,
                 const ClusteringConfig& cfg) {
  const std::size_t d = train.dim();
  if (m == 0 || d == 0 || d % m != 0)
    throw ArgumentError("PQ needs M to divide D (M = " + std::to_string(m) +
                        ", D = " + std::to_string(d) + ")");
  PQCodec codec{m, k, d, {}};
  const std::size_t ds = d / m;
  for (std::size_t j = 0; j < m; ++j)
    codec.codebooks.push_back(kmeans(train.columns(j * ds, ds), k, layer_config(cfg, j)));
  return codec;
}

BaseCode encode_pq(const PQCodec& codec, Vec x) {
  check_dim(x.size(), codec.dim, "encode_pq");
  const std::size_t ds = codec.sub_dim();
  BaseCode code{std::vector<std::uint32_t>(codec.m)};
  for (std::size_t j = 0; j < codec.m; ++j)
    code.indices[j] = argmin_l2(x.data() + j * ds, codec.codebooks[j]);
  return code;
}

std::vector<float> decode_pq(const PQCodec& codec, const BaseCode& code) {
  check_code(code, codec.m, codec.k, "decode_pq");
  const std::size_t ds = codec.sub_dim();
  std::vector<float> out(codec.dim);
  for (std::size_t j = 0; j < codec.m; ++j) {
    auto c = codec.codebooks[j].center(code.indices[j]);
    std::copy(c.begin(), c.end(), out.begin() + j * ds);
  }
  return out;
}

RVQCodec learn_rvq(const Dataset& train, std::size_t m, std::size_t k,
                   const ClusteringConfig& cfg) {
  if (m == 0) throw ArgumentError("RVQ needs at least one layer");
  RVQCodec codec{m, k, train.dim(), {}};
  Dataset residual = train;
  const auto n = static_cast<std::int64_t>(train.count());
  for (std::size_t j = 0; j < m; ++j) {
    codec.codebooks.push_back(kmeans(residual, k, layer_config(cfg, j)));
    const auto& cb = codec.codebooks.back();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      auto r = residual.row(std::size_t(i));
      const auto l = argmin_l2(r.data(), cb);
      kernels::axpy_sub(r.data(), 1.f, cb.centers.data() + l * cb.dim, cb.dim);
    }
  }
  return codec;
}

BaseCode encode_rvq(const RVQCodec& codec, Vec x) {
  check_dim(x.size(), codec.dim, "encode_rvq");
  std::vector<float> r(x.begin(), x.end());
  BaseCode code{std::vector<std::uint32_t>(codec.m)};
  for (std::size_t j = 0; j < codec.m; ++j) {
    const auto& cb = codec.codebooks[j];
    const auto l = argmin_l2(r.data(), cb);
    code.indices[j] = l;
    kernels::axpy_sub(r.data(), 1.f, cb.centers.data() + l * cb.dim, cb.dim);
  }
  return code;
}

std::vector<float> decode_rvq(const RVQCodec& codec, const BaseCode& code) {
  check_code(code, codec.m, codec.k, "decode_rvq");
  std::vector<float> out(codec.dim, 0.f);
  for (std::size_t j = 0; j < codec.m; ++j) {
    auto c = codec.codebooks[j].center(code.indices[j]);
    for (std::size_t i = 0; i < codec.dim; ++i) out[i] += c[i];
  }
  return out;
}

}  // namespace qsr
