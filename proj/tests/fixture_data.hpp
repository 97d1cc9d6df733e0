#pragma once

#include <cmath>
#include <filesystem>

#include "nsfold/dataset.hpp"
#include "nsfold/rng.hpp"

namespace nsfold::fixture {

// Class k lights up a 6 x 4 patch whose position depends on k, over noise.
inline Dataset patches(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.name = "fixture";
  ds.images = Tensor({count, 1, 28, 28});
  ds.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = i % 10;
    ds.labels[i] = static_cast<std::uint8_t>(k);
    double* img = ds.images.data() + i * 784;
    for (std::size_t p = 0; p < 784; ++p) img[p] = std::round(rng.uniform() * 60.0) / 255.0;
    const std::size_t y0 = 2 + (k / 5) * 12, x0 = 2 + (k % 5) * 5;
    for (std::size_t y = y0; y < y0 + 6; ++y)
      for (std::size_t x = x0; x < x0 + 4; ++x) img[y * 28 + x] = 1.0;
  }
  return ds;
}

/// 300 training and 100 test images in the standard MNIST layout below `root`.
inline void write_mnist_fixture(const std::filesystem::path& root) {
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root / "mnist");
  save_mnist(patches(300, 1), root / "mnist/train-images-idx3-ubyte", root / "mnist/train-labels-idx1-ubyte");
  save_mnist(patches(100, 2), root / "mnist/t10k-images-idx3-ubyte", root / "mnist/t10k-labels-idx1-ubyte");
}

}  // namespace nsfold::fixture
