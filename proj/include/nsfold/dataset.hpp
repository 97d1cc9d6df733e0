#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nsfold/error.hpp"
#include "nsfold/tensor.hpp"

namespace nsfold {

/// Image set with class labels. images is count x c x h x w.
struct Dataset {
  std::string name;
  Tensor images;
  std::vector<std::uint8_t> labels;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  /// c x h x w of one image.
  [[nodiscard]] Shape sample_shape() const;
};

/// Raised when a file's bytes do not describe a valid dataset.
class DataError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::size_t kCifarRecord = 3073;

/// Big-endian IDX image and label files; pixels scaled by 1/255.
/// Wrong magic -> FormatError naming it, short file -> FormatError with the
/// expected and actual length, differing counts -> DataError.
Dataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels);
/// Writes IDX files. Pixels are rounded back to bytes (x * 255).
void save_mnist(const Dataset& ds, const std::filesystem::path& images,
                const std::filesystem::path& labels);

/// CIFAR-10 binary batches: records of one label byte then 3 x 32 x 32 bytes.
Dataset load_cifar10(const std::vector<std::filesystem::path>& batches);
void save_cifar10(const Dataset& ds, const std::filesystem::path& path);

/// The standard file names below a data root:
///   <root>/mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte
///   <root>/cifar-10-batches-bin/{data_batch_1..5,test_batch}.bin
Dataset load_mnist_split(const std::filesystem::path& root, bool train);
Dataset load_cifar10_split(const std::filesystem::path& root, bool train);

struct SplitSpec {
  std::size_t count = 10000;
  std::uint64_t seed = 0;
  /// The caller trains on the full set after tuning on the held-out part.
  bool recombine = false;
};

struct Split {
  Dataset train;
  Dataset validation;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> validation_indices;
};

/// Seeded shuffle of the indices; the first `count` become validation.
Split split_validation(const Dataset& ds, const SplitSpec& spec);

/// Rows `indices` of ds, in that order.
Dataset gather(const Dataset& ds, const std::vector<std::size_t>& indices);
/// First `count` images (all when count is 0 or larger than the set).
Dataset subset(const Dataset& ds, std::size_t count);

enum class Normalization { Unit, PerChannelStandard };

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population std, clamped to 1 when zero
  std::size_t clamped = 0;     // channels whose std was zero
};

ChannelStats channel_stats(const Dataset& train);
/// Unit leaves the /255 pixels alone; PerChannelStandard applies
/// (x - mean_c) / std_c using statistics of the training split.
Dataset normalize(const Dataset& ds, Normalization scheme, const ChannelStats& train_stats);

std::string to_string(Normalization scheme);
Normalization normalization_from_string(const std::string& name);

}  // namespace nsfold
