#include "qsr/sparse.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <string>

namespace qsr {

CoefficientCodebook CoefficientCodebook::from(Codebook book) {
  CoefficientCodebook cc{std::move(book), {}};
  cc.sq_norms.resize(cc.book.k);
  for (std::size_t i = 0; i < cc.book.k; ++i)
    cc.sq_norms[i] = static_cast<float>(kernels::dot_d(cc.book.center(i).data(),
                                                       cc.book.center(i).data(), cc.book.dim));
  return cc;
}

PursuitResult pursuit(std::span<const Codebook> dicts, Vec x) {
  PursuitResult res;
  res.residual.assign(x.begin(), x.end());
  res.indices.reserve(dicts.size());
  res.weights.reserve(dicts.size());
  for (const auto& dict : dicts) {
    if (dict.dim != x.size()) throw ArgumentError("pursuit: dictionary/vector dim mismatch");
    const auto k = argmax_dot(res.residual.data(), dict);
    const float* atom = dict.centers.data() + std::size_t(k) * dict.dim;
    const float w = kernels::dot(res.residual.data(), atom, dict.dim);
    kernels::axpy_sub(res.residual.data(), w, atom, dict.dim);
    res.indices.push_back(k);
    res.weights.push_back(w);
  }
  return res;
}

std::vector<float> refit_weights(std::span<const Vec> atoms, Vec x) {
  const auto d = static_cast<Eigen::Index>(x.size());
  const auto m = static_cast<Eigen::Index>(atoms.size());
  if (m == 0) return {};
  if (m > d) throw ArgumentError("refit: more atoms than dimensions");
  Eigen::MatrixXd c(d, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    if (atoms[j].size() != x.size()) throw ArgumentError("refit: atom/vector dim mismatch");
    for (Eigen::Index i = 0; i < d; ++i) c(i, j) = atoms[j][i];
  }
  Eigen::VectorXd rhs(d);
  for (Eigen::Index i = 0; i < d; ++i) rhs(i) = x[i];

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double cutoff = 1e-6 * (s.size() ? s(0) : 0.0);
  Eigen::VectorXd ut = svd.matrixU().transpose() * rhs;
  for (Eigen::Index i = 0; i < s.size(); ++i) ut(i) = s(i) > cutoff ? ut(i) / s(i) : 0.0;
  const Eigen::VectorXd alpha = svd.matrixV() * ut;

  std::vector<float> out(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) out[j] = static_cast<float>(alpha(j));
  return out;
}

CoefficientCodebook learn_coefficients(const Dataset& alphas, std::size_t p,
                                       const ClusteringConfig& cfg) {
  if (p > alphas.count())
    throw ArgumentError("P = " + std::to_string(p) + " exceeds the " +
                        std::to_string(alphas.count()) + " training vectors");
  return CoefficientCodebook::from(kmeans(alphas, p, cfg));
}

namespace {

void check_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw ArgumentError(std::string(what) + ": vector has dim " + std::to_string(got) +
                        ", codec expects " + std::to_string(want));
}

ClusteringConfig with_seed(const ClusteringConfig& cfg, std::uint64_t seed) {
  ClusteringConfig c = cfg;
  c.seed = seed;
  return c;
}

// Selected atoms C(k) as spans.
std::vector<Vec> support(const SparseCodec& codec, std::span<const std::uint32_t> idx) {
  std::vector<Vec> atoms;
  atoms.reserve(codec.m);
  for (std::size_t j = 0; j < codec.m; ++j) atoms.push_back(codec.dictionaries[j].center(idx[j]));
  return atoms;
}

void quantize_weights(const SparseCodec& codec, SparseCode& code, std::vector<float> alpha) {
  if (codec.coeffs) {
    code.coeff = argmin_l2(alpha.data(), codec.coeffs->book);
  } else {
    code.alpha = std::move(alpha);
  }
}

void check_code(const SparseCodec& codec, const SparseCode& code) {
  if (code.indices.size() != codec.m) throw ArgumentError("sparse code length mismatch");
  for (auto i : code.indices)
    if (i >= codec.k) throw ArgumentError("sparse code atom index out of range");
  if (codec.coeffs) {
    if (!code.coeff || *code.coeff >= codec.coeffs->p())
      throw ArgumentError("sparse code lacks a valid coefficient index");
  } else if (code.alpha.size() != codec.m) {
    throw ArgumentError("sparse code lacks raw weights");
  }
}

}  // namespace

std::span<const float> code_weights(const SparseCodec& codec, const SparseCode& code) {
  if (codec.coeffs) return codec.coeffs->codeword(*code.coeff);
  return code.alpha;
}

SparseCodec learn_qarvq(const Dataset& train, std::size_t m, std::size_t k, std::size_t p,
                        const ClusteringConfig& cfg) {
  if (m == 0) throw ArgumentError("need at least one dictionary");
  if (m > train.dim()) throw ArgumentError("M exceeds the vector dimension");
  if (p > train.count())
    throw ArgumentError("P = " + std::to_string(p) + " exceeds the " +
                        std::to_string(train.count()) + " training vectors");
  SparseCodec codec{Layout::residual, m, k, train.dim(), {}, std::nullopt};
  const std::size_t n = train.count(), d = train.dim();
  const auto sn = static_cast<std::int64_t>(n);

  Dataset residual = train;
  std::vector<std::uint32_t> chosen(n * m);
  for (std::size_t j = 0; j < m; ++j) {
    codec.dictionaries.push_back(spherical_kmeans(residual, k, with_seed(cfg, cfg.seed + j)));
    const auto& dict = codec.dictionaries.back();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < sn; ++i) {
      auto r = residual.row(std::size_t(i));
      const auto a = argmax_dot(r.data(), dict);
      const float* atom = dict.centers.data() + std::size_t(a) * d;
      kernels::axpy_sub(r.data(), kernels::dot(r.data(), atom, d), atom, d);
      chosen[std::size_t(i) * m + j] = a;
    }
  }
  if (p == 0) return codec;

  Dataset alphas(m, n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < sn; ++i) {
    const auto atoms = support(codec, {chosen.data() + std::size_t(i) * m, m});
    const auto a = refit_weights(atoms, train.row(std::size_t(i)));
    std::copy(a.begin(), a.end(), alphas.row(std::size_t(i)).begin());
  }
  codec.coeffs = learn_coefficients(alphas, p, with_seed(cfg, cfg.seed + m));
  return codec;
}

SparseCode encode_qarvq(const SparseCodec& codec, Vec x) {
  if (codec.layout != Layout::residual) throw ArgumentError("encode_qarvq: codec is not residual");
  check_dim(x.size(), codec.dim, "encode_qarvq");
  auto pr = pursuit(codec.dictionaries, x);
  SparseCode code;
  code.indices = std::move(pr.indices);
  quantize_weights(codec, code, refit_weights(support(codec, code.indices), x));
  return code;
}

std::vector<float> decode_qarvq(const SparseCodec& codec, const SparseCode& code) {
  if (codec.layout != Layout::residual) throw ArgumentError("decode_qarvq: codec is not residual");
  check_code(codec, code);
  const auto w = code_weights(codec, code);
  std::vector<float> out(codec.dim, 0.f);
  for (std::size_t j = 0; j < codec.m; ++j)
    kernels::axpy_sub(out.data(), -w[j], codec.dictionaries[j].center(code.indices[j]).data(),
                      codec.dim);
  return out;
}

SparseCodec learn_qapq(const Dataset& train, std::size_t m, std::size_t k, std::size_t p,
                       const ClusteringConfig& cfg) {
  const std::size_t d = train.dim(), n = train.count();
  if (m == 0 || d == 0 || d % m != 0)
    throw ArgumentError("product layout needs M to divide D (M = " + std::to_string(m) +
                        ", D = " + std::to_string(d) + ")");
  if (p > n)
    throw ArgumentError("P = " + std::to_string(p) + " exceeds the " + std::to_string(n) +
                        " training vectors");
  const std::size_t ds = d / m;
  SparseCodec codec{Layout::product, m, k, d, {}, std::nullopt};
  Dataset alphas(m, n);
  const auto sn = static_cast<std::int64_t>(n);
  for (std::size_t j = 0; j < m; ++j) {
    const Dataset slice = train.columns(j * ds, ds);
    codec.dictionaries.push_back(spherical_kmeans(slice, k, with_seed(cfg, cfg.seed + j)));
    const auto& dict = codec.dictionaries.back();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < sn; ++i) {
      const float* z = slice.row(std::size_t(i)).data();
      const auto a = argmax_dot(z, dict);
      alphas.row(std::size_t(i))[j] = kernels::dot(z, dict.centers.data() + std::size_t(a) * ds, ds);
    }
  }
  if (p > 0) codec.coeffs = learn_coefficients(alphas, p, with_seed(cfg, cfg.seed + m));
  return codec;
}

SparseCode encode_qapq(const SparseCodec& codec, Vec x) {
  if (codec.layout != Layout::product) throw ArgumentError("encode_qapq: codec is not product");
  check_dim(x.size(), codec.dim, "encode_qapq");
  const std::size_t ds = codec.sub_dim();
  SparseCode code;
  code.indices.resize(codec.m);
  std::vector<float> alpha(codec.m);
  for (std::size_t j = 0; j < codec.m; ++j) {
    const float* z = x.data() + j * ds;
    const auto& dict = codec.dictionaries[j];
    const auto a = argmax_dot(z, dict);
    code.indices[j] = a;
    alpha[j] = kernels::dot(z, dict.centers.data() + std::size_t(a) * ds, ds);
  }
  quantize_weights(codec, code, std::move(alpha));
  return code;
}

std::vector<float> decode_qapq(const SparseCodec& codec, const SparseCode& code) {
  if (codec.layout != Layout::product) throw ArgumentError("decode_qapq: codec is not product");
  check_code(codec, code);
  const auto w = code_weights(codec, code);
  const std::size_t ds = codec.sub_dim();
  std::vector<float> out(codec.dim);
  for (std::size_t j = 0; j < codec.m; ++j) {
    auto atom = codec.dictionaries[j].center(code.indices[j]);
    for (std::size_t i = 0; i < ds; ++i) out[j * ds + i] = w[j] * atom[i];
  }
  return out;
}

std::size_t code_size_bits(const SparseCodec& codec, bool norm_byte) {
  return codec.m * bits_for(codec.k) + bits_for(codec.p()) + (norm_byte ? 8 : 0);
}

}  // namespace qsr
