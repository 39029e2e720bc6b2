#include "qsr/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <random>

#include "qsr/io.hpp"

namespace qsr {

const char* to_string(Metric m) { return m == Metric::cosine ? "cosine" : "euclidean"; }

Metric parse_metric(const std::string& s) {
  if (s == "euclidean" || s == "l2") return Metric::euclidean;
  if (s == "cosine" || s == "cs") return Metric::cosine;
  throw ArgumentError("unknown metric '" + s + "'");
}

Dataset::Dataset(std::size_t dim, std::vector<float> data) : dim_(dim), data_(std::move(data)) {
  if (dim_ == 0 && !data_.empty()) throw ArgumentError("dataset with data must have dim > 0");
  if (dim_ != 0 && data_.size() % dim_ != 0)
    throw ArgumentError("dataset payload is not a multiple of dim");
}

void Dataset::append(Vec v) {
  if (v.size() != dim_) throw ArgumentError("append: dimension mismatch");
  data_.insert(data_.end(), v.begin(), v.end());
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, count());
  begin = std::min(begin, end);
  return Dataset(dim_, std::vector<float>(data_.begin() + begin * dim_, data_.begin() + end * dim_));
}

Dataset Dataset::columns(std::size_t col, std::size_t width) const {
  if (col + width > dim_) throw ArgumentError("columns: range exceeds dimension");
  Dataset out(width, count());
  for (std::size_t i = 0; i < count(); ++i)
    std::copy_n(data_.begin() + i * dim_ + col, width, out.data_.begin() + i * width);
  return out;
}

VecFormat parse_format(const std::string& s) {
  if (s == "f32" || s == "fvecs") return VecFormat::f32;
  if (s == "u8" || s == "bvecs") return VecFormat::u8;
  if (s == "i32" || s == "ivecs") return VecFormat::i32;
  throw ArgumentError("unknown vector format '" + s + "'");
}

VecFormat format_from_path(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".bvecs") return VecFormat::u8;
  if (ext == ".ivecs") return VecFormat::i32;
  return VecFormat::f32;
}

namespace {

std::size_t component_size(VecFormat fmt) { return fmt == VecFormat::u8 ? 1 : 4; }

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<char> buf(size);
  if (size && !in.read(buf.data(), static_cast<std::streamsize>(size)))
    throw IoError("short read on '" + path.string() + "'");
  return buf;
}

// Walks the record stream, validating framing, and hands each payload to `fn`.
template <class Fn>
std::size_t walk_records(const std::vector<char>& buf, VecFormat fmt, Fn&& fn) {
  const std::size_t csize = component_size(fmt);
  std::size_t off = 0, rec = 0;
  std::int32_t dim = -1;
  while (off < buf.size()) {
    if (buf.size() - off < 4)
      throw FormatError("truncated record header at byte offset " + std::to_string(off));
    const auto d = io::load_le<std::int32_t>(buf.data() + off);
    if (d <= 0)
      throw FormatError("non-positive dimension " + std::to_string(d) + " at byte offset " +
                        std::to_string(off));
    if (dim < 0) dim = d;
    if (d != dim)
      throw FormatError("record " + std::to_string(rec) + " has dimension " + std::to_string(d) +
                        ", expected " + std::to_string(dim));
    const std::size_t payload = std::size_t(d) * csize;
    if (buf.size() - off - 4 < payload)
      throw FormatError("truncated record payload at byte offset " + std::to_string(off + 4));
    fn(buf.data() + off + 4, std::size_t(d));
    off += 4 + payload;
    ++rec;
  }
  return dim < 0 ? 0 : std::size_t(dim);
}

}  // namespace

Dataset read_vectors(const std::filesystem::path& path, VecFormat fmt) {
  const auto buf = slurp(path);
  std::vector<float> data;
  const std::size_t dim = walk_records(buf, fmt, [&](const char* p, std::size_t d) {
    for (std::size_t i = 0; i < d; ++i) {
      switch (fmt) {
        case VecFormat::f32: data.push_back(io::load_le<float>(p + 4 * i)); break;
        case VecFormat::u8: data.push_back(float(static_cast<unsigned char>(p[i]))); break;
        case VecFormat::i32: data.push_back(float(io::load_le<std::int32_t>(p + 4 * i))); break;
      }
    }
  });
  return Dataset(dim, std::move(data));
}

void write_vectors(const Dataset& ds, const std::filesystem::path& path, VecFormat fmt) {
  if (fmt != VecFormat::f32) {
    const float lo = fmt == VecFormat::u8 ? 0.f : -2147483648.f;
    const float hi = fmt == VecFormat::u8 ? 255.f : 2147483520.f;
    for (std::size_t i = 0; i < ds.data().size(); ++i) {
      const float v = ds.data()[i];
      if (!(v >= lo && v <= hi) || std::trunc(v) != v)
        throw ValidationError("component " + std::to_string(i % ds.dim()) + " of row " +
                              std::to_string(i / ds.dim()) + " is not representable in " +
                              (fmt == VecFormat::u8 ? "u8" : "i32"));
    }
  }
  io::write_atomically(path, [&](std::ostream& out) {
    const auto d = static_cast<std::int32_t>(ds.dim());
    for (std::size_t r = 0; r < ds.count(); ++r) {
      io::put_le(out, d);
      for (float v : ds.row(r)) {
        switch (fmt) {
          case VecFormat::f32: io::put_le(out, v); break;
          case VecFormat::u8: out.put(static_cast<char>(static_cast<unsigned char>(v))); break;
          case VecFormat::i32: io::put_le(out, static_cast<std::int32_t>(v)); break;
        }
      }
    }
  });
}

std::vector<std::vector<std::int32_t>> read_ivecs(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  std::vector<std::vector<std::int32_t>> rows;
  walk_records(buf, VecFormat::i32, [&](const char* p, std::size_t d) {
    auto& row = rows.emplace_back(d);
    for (std::size_t i = 0; i < d; ++i) row[i] = io::load_le<std::int32_t>(p + 4 * i);
  });
  return rows;
}

void write_ivecs(const std::vector<std::vector<std::int32_t>>& rows,
                 const std::filesystem::path& path) {
  io::write_atomically(path, [&](std::ostream& out) {
    for (const auto& row : rows) {
      io::put_le(out, static_cast<std::int32_t>(row.size()));
      for (auto v : row) io::put_le(out, v);
    }
  });
}

NormalizeResult l2_normalize(const Dataset& ds) {
  NormalizeResult res{ds, 0};
  for (std::size_t i = 0; i < ds.count(); ++i) {
    auto row = res.data.row(i);
    const double n = std::sqrt(kernels::dot_d(row.data(), row.data(), row.size()));
    if (n == 0.0) {
      ++res.skipped;
      continue;
    }
    for (auto& v : row) v = static_cast<float>(double(v) / n);
  }
  return res;
}

Dataset synth_dataset(std::size_t n, std::size_t d, const GaussianModel&, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.f, 1.f);
  Dataset out(d, n);
  for (auto& v : out.data()) v = g(rng);
  return out;
}

Dataset synth_dataset(std::size_t n, std::size_t d, const ClusteredModel& model,
                      std::uint64_t seed) {
  if (model.clusters == 0) throw ArgumentError("clustered model needs at least one cluster");
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.f, 1.f);
  std::vector<float> centers(model.clusters * d);
  for (auto& v : centers) v = g(rng);
  std::uniform_int_distribution<std::size_t> pick(0, model.clusters - 1);
  Dataset out(d, n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* c = centers.data() + pick(rng) * d;
    auto row = out.row(i);
    for (std::size_t j = 0; j < d; ++j) row[j] = c[j] + model.spread * g(rng);
  }
  return out;
}

}  // namespace qsr
