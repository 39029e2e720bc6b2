#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qsr/common.hpp"

namespace qsr {

/// Dense N x D row-major float matrix. Row ids are implicit (0..N-1).
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t dim, std::size_t count)
      : dim_(dim), data_(dim * count, 0.f) {}
  Dataset(std::size_t dim, std::vector<float> data);

  std::size_t dim() const { return dim_; }
  std::size_t count() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  bool empty() const { return data_.empty(); }

  Vec row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  MutVec row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  void append(Vec v);

  /// Rows [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;
  /// Columns [col, col + width) of every row.
  Dataset columns(std::size_t col, std::size_t width) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

enum class VecFormat { f32, u8, i32 };

VecFormat parse_format(const std::string& s);
/// Guess from the extension: .fvecs, .bvecs, .ivecs.
VecFormat format_from_path(const std::filesystem::path& p);

Dataset read_vectors(const std::filesystem::path& path, VecFormat fmt);
void write_vectors(const Dataset& ds, const std::filesystem::path& path, VecFormat fmt);

/// Integer rows (ground-truth lists) in the i32 layout.
std::vector<std::vector<std::int32_t>> read_ivecs(const std::filesystem::path& path);
void write_ivecs(const std::vector<std::vector<std::int32_t>>& rows,
                 const std::filesystem::path& path);

struct NormalizeResult {
  Dataset data;
  std::size_t skipped = 0;  // all-zero rows left untouched
};
NormalizeResult l2_normalize(const Dataset& ds);

struct GaussianModel {};
struct ClusteredModel {
  std::size_t clusters = 10;
  float spread = 0.05f;
};

/// Gaussian: i.i.d. N(0,1) components. Clustered: `clusters` centers drawn
/// N(0,1), each point = random center + spread * N(0,1) noise.
Dataset synth_dataset(std::size_t n, std::size_t d, const GaussianModel&, std::uint64_t seed);
Dataset synth_dataset(std::size_t n, std::size_t d, const ClusteredModel&, std::uint64_t seed);

}  // namespace qsr
