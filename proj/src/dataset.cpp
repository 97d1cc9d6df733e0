#include "nsfold/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>

#include "nsfold/rng.hpp"

namespace nsfold {

namespace fs = std::filesystem;

Shape Dataset::sample_shape() const {
  if (images.rank() < 2) return {};
  return Shape(images.shape().begin() + 1, images.shape().end());
}

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) |
         (std::uint32_t(b[at + 2]) << 8) | std::uint32_t(b[at + 3]);
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(std::uint8_t(v >> 24));
  b.push_back(std::uint8_t(v >> 16));
  b.push_back(std::uint8_t(v >> 8));
  b.push_back(std::uint8_t(v));
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

void require_length(const fs::path& path, std::size_t expected, std::size_t actual) {
  if (actual < expected) {
    throw FormatError(path.string() + ": truncated, expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(actual));
  }
}

std::uint8_t to_byte(double x) {
  const double v = std::round(x * 255.0);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

void check_labels(const Dataset& ds, const std::string& where) {
  for (std::size_t i = 0; i < ds.labels.size(); ++i)
    if (ds.labels[i] >= 10)
      throw DataError(where + ": label " + std::to_string(ds.labels[i]) + " at record " +
                      std::to_string(i) + " is not a class in 0..9");
}

}  // namespace

Dataset load_mnist(const fs::path& images, const fs::path& labels) {
  const std::vector<std::uint8_t> ib = read_file(images);
  const std::vector<std::uint8_t> lb = read_file(labels);
  require_length(images, 16, ib.size());
  require_length(labels, 8, lb.size());
  const std::uint32_t im = read_be32(ib, 0), lm = read_be32(lb, 0);
  if (im != kIdxImageMagic)
    throw FormatError(images.string() + ": magic " + hex(im) + ", expected " + hex(kIdxImageMagic));
  if (lm != kIdxLabelMagic)
    throw FormatError(labels.string() + ": magic " + hex(lm) + ", expected " + hex(kIdxLabelMagic));
  const std::size_t count = read_be32(ib, 4), rows = read_be32(ib, 8), cols = read_be32(ib, 12);
  const std::size_t label_count = read_be32(lb, 4);
  if (count != label_count) {
    throw DataError("MNIST files disagree: " + std::to_string(count) + " images vs " +
                    std::to_string(label_count) + " labels");
  }
  if (rows == 0 || cols == 0 || count == 0) throw FormatError(images.string() + ": empty image set");
  const std::size_t pixels = rows * cols;
  require_length(images, 16 + count * pixels, ib.size());
  require_length(labels, 8 + count, lb.size());

  Dataset ds;
  ds.name = "mnist";
  ds.images = Tensor({count, 1, rows, cols});
  double* dst = ds.images.data();
  for (std::size_t i = 0; i < count * pixels; ++i) dst[i] = ib[16 + i] / 255.0;
  ds.labels.assign(lb.begin() + 8, lb.begin() + 8 + static_cast<std::ptrdiff_t>(count));
  check_labels(ds, labels.string());
  return ds;
}

void save_mnist(const Dataset& ds, const fs::path& images, const fs::path& labels) {
  const Shape s = ds.sample_shape();
  if (s.size() != 3 || s[0] != 1) throw DimensionError("save_mnist needs count x 1 x h x w images");
  std::vector<std::uint8_t> ib, lb;
  put_be32(ib, kIdxImageMagic);
  put_be32(ib, static_cast<std::uint32_t>(ds.size()));
  put_be32(ib, static_cast<std::uint32_t>(s[1]));
  put_be32(ib, static_cast<std::uint32_t>(s[2]));
  for (double x : ds.images.values()) ib.push_back(to_byte(x));
  put_be32(lb, kIdxLabelMagic);
  put_be32(lb, static_cast<std::uint32_t>(ds.size()));
  lb.insert(lb.end(), ds.labels.begin(), ds.labels.end());
  write_file(images, ib);
  write_file(labels, lb);
}

Dataset load_cifar10(const std::vector<fs::path>& batches) {
  std::vector<std::vector<std::uint8_t>> files;
  std::size_t count = 0;
  for (const fs::path& p : batches) {
    files.push_back(read_file(p));
    const std::size_t n = files.back().size();
    if (n == 0 || n % kCifarRecord != 0) {
      throw FormatError(p.string() + ": " + std::to_string(n) + " bytes is not a whole number of " +
                        std::to_string(kCifarRecord) + "-byte records");
    }
    count += n / kCifarRecord;
  }
  if (count == 0) throw FormatError("no CIFAR-10 batches given");
  Dataset ds;
  ds.name = "cifar10";
  ds.images = Tensor({count, 3, 32, 32});
  ds.labels.reserve(count);
  double* dst = ds.images.data();
  for (std::size_t f = 0; f < files.size(); ++f) {
    const std::vector<std::uint8_t>& b = files[f];
    for (std::size_t r = 0; r < b.size() / kCifarRecord; ++r) {
      const std::uint8_t* rec = b.data() + r * kCifarRecord;
      if (rec[0] >= 10) {
        throw DataError(batches[f].string() + ": label " + std::to_string(rec[0]) +
                        " at record " + std::to_string(r) + " is not a class in 0..9");
      }
      ds.labels.push_back(rec[0]);
      for (std::size_t i = 0; i < kCifarRecord - 1; ++i) *dst++ = rec[1 + i] / 255.0;
    }
  }
  return ds;
}

void save_cifar10(const Dataset& ds, const fs::path& path) {
  if (ds.sample_shape() != Shape{3, 32, 32}) throw DimensionError("save_cifar10 needs count x 3 x 32 x 32 images");
  std::vector<std::uint8_t> b;
  b.reserve(ds.size() * kCifarRecord);
  const double* src = ds.images.data();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    b.push_back(ds.labels[i]);
    for (std::size_t k = 0; k < kCifarRecord - 1; ++k) b.push_back(to_byte(*src++));
  }
  write_file(path, b);
}

Dataset load_mnist_split(const fs::path& root, bool train) {
  const fs::path dir = root / "mnist";
  const std::string stem = train ? "train" : "t10k";
  return load_mnist(dir / (stem + "-images-idx3-ubyte"), dir / (stem + "-labels-idx1-ubyte"));
}

Dataset load_cifar10_split(const fs::path& root, bool train) {
  const fs::path dir = root / "cifar-10-batches-bin";
  std::vector<fs::path> files;
  if (train) {
    for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    files.push_back(dir / "test_batch.bin");
  }
  return load_cifar10(files);
}

Dataset gather(const Dataset& ds, const std::vector<std::size_t>& indices) {
  const Shape s = ds.sample_shape();
  const std::size_t per = shape_numel(s);
  Dataset out;
  out.name = ds.name;
  Shape shape{indices.size()};
  shape.insert(shape.end(), s.begin(), s.end());
  if (indices.empty()) {
    out.images = Tensor();
    return out;
  }
  out.images = Tensor(shape);
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t k = indices[i];
    if (k >= ds.size()) throw DimensionError("gather: index " + std::to_string(k) + " out of range");
    std::copy(ds.images.data() + k * per, ds.images.data() + (k + 1) * per, out.images.data() + i * per);
    out.labels.push_back(ds.labels[k]);
  }
  return out;
}

Dataset subset(const Dataset& ds, std::size_t count) {
  if (count == 0 || count >= ds.size()) return ds;
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  return gather(ds, idx);
}

Split split_validation(const Dataset& ds, const SplitSpec& spec) {
  if (spec.count >= ds.size() && spec.count > 0) {
    throw ConfigError("validation count " + std::to_string(spec.count) + " must be below the " +
                      std::to_string(ds.size()) + " training images");
  }
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(spec.seed);
  rng.shuffle(std::span<std::size_t>(idx));
  Split out;
  out.validation_indices.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(spec.count));
  out.train_indices.assign(idx.begin() + static_cast<std::ptrdiff_t>(spec.count), idx.end());
  if (spec.count == 0) {
    std::iota(out.train_indices.begin(), out.train_indices.end(), 0);
    out.train = ds;
  } else {
    out.train = gather(ds, out.train_indices);
  }
  out.validation = gather(ds, out.validation_indices);
  return out;
}

ChannelStats channel_stats(const Dataset& train) {
  const Shape s = train.sample_shape();
  if (s.size() != 3) throw DimensionError("channel_stats needs count x c x h x w images");
  const std::size_t c = s[0], px = s[1] * s[2], n = train.size();
  ChannelStats st;
  st.mean.assign(c, 0.0);
  st.stddev.assign(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = train.images.data() + (i * c + ch) * px;
      for (std::size_t q = 0; q < px; ++q) sum += p[q];
    }
    const double mean = sum / static_cast<double>(n * px);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = train.images.data() + (i * c + ch) * px;
      for (std::size_t q = 0; q < px; ++q) sq += (p[q] - mean) * (p[q] - mean);
    }
    double sd = std::sqrt(sq / static_cast<double>(n * px));
    if (sd == 0.0) {
      sd = 1.0;
      ++st.clamped;
      std::fprintf(stderr, "warning: channel %zu has zero variance; std clamped to 1\n", ch);
    }
    st.mean[ch] = mean;
    st.stddev[ch] = sd;
  }
  return st;
}

Dataset normalize(const Dataset& ds, Normalization scheme, const ChannelStats& stats) {
  if (scheme == Normalization::Unit) return ds;
  const Shape s = ds.sample_shape();
  if (s.size() != 3 || stats.mean.size() != s[0]) {
    throw DimensionError("normalize: statistics for " + std::to_string(stats.mean.size()) +
                         " channels, images " + shape_string(s));
  }
  Dataset out = ds;
  const std::size_t c = s[0], px = s[1] * s[2];
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* p = out.images.data() + (i * c + ch) * px;
      for (std::size_t q = 0; q < px; ++q) p[q] = (p[q] - stats.mean[ch]) / stats.stddev[ch];
    }
  return out;
}

std::string to_string(Normalization scheme) {
  return scheme == Normalization::Unit ? "unit" : "per_channel_standard";
}

Normalization normalization_from_string(const std::string& name) {
  if (name == "unit") return Normalization::Unit;
  if (name == "per_channel_standard") return Normalization::PerChannelStandard;
  throw ConfigError("unknown normalization '" + name + "'");
}

}  // namespace nsfold
