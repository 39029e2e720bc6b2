#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace qsr {

// Error taxonomy. The CLI maps each family to its own exit status.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};
struct UnsupportedError : std::logic_error {
  using std::logic_error::logic_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Vec = std::span<const float>;
using MutVec = std::span<float>;

enum class Metric : std::uint8_t { euclidean = 0, cosine = 1 };

const char* to_string(Metric m);
Metric parse_metric(const std::string& s);

namespace kernels {

inline float dot(const float* a, const float* b, std::size_t d) {
  float s = 0.f;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < d; ++i) s += a[i] * b[i];
  return s;
}

inline float l2sq(const float* a, const float* b, std::size_t d) {
  float s = 0.f;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < d; ++i) {
    const float t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

inline float norm_sq(const float* a, std::size_t d) { return dot(a, a, d); }

// y -= w * c
inline void axpy_sub(float* y, float w, const float* c, std::size_t d) {
#pragma omp simd
  for (std::size_t i = 0; i < d; ++i) y[i] -= w * c[i];
}

inline double dot_d(const float* a, const float* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) s += double(a[i]) * double(b[i]);
  return s;
}

inline double l2sq_d(const float* a, const float* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double t = double(a[i]) - double(b[i]);
    s += t * t;
  }
  return s;
}

}  // namespace kernels

// Whole bits needed to address `n` values (0 for n <= 1).
inline unsigned bits_for(std::size_t n) {
  unsigned b = 0;
  while ((std::size_t{1} << b) < n) ++b;
  return b;
}

inline std::size_t bytes_for_bits(std::size_t bits) { return (bits + 7) / 8; }

}  // namespace qsr
