#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "nsfold/config.hpp"
#include "nsfold/error.hpp"
#include "nsfold/model.hpp"

namespace nsfold {

// A checkpoint is two files. The binary holds the magic "NSFC", a u32 format
// version, a u64 value count and then every parameter (trainable or not, NS
// coefficients included) as little-endian f64, layer by layer in manifest
// order. The JSON sidecar <path>.json carries the same format version, the
// input shape, the layer manifest (kind, constructor attributes, parameter
// names and shapes), and optionally the config and seed of the run.

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// The file was written by a different format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// The manifest does not describe a model whose shapes fit together.
class ShapeError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// The payload holds more or fewer values than the manifest needs.
class LengthError : public FormatError {
 public:
  using FormatError::FormatError;
};

struct Checkpoint {
  Model model;
  std::optional<NetworkConfig> config;
  std::uint64_t seed = 0;
};

std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// Throws IoError when either file cannot be written.
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const NetworkConfig* config = nullptr, std::uint64_t seed = 0);

/// Rebuilds the model from the manifest and fills in the payload. Missing
/// files raise IoError; a bad magic or malformed sidecar FormatError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nsfold
