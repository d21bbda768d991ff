#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>

#include "mgnet/model.hpp"

namespace mgnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Metadata stored with the weights.
struct CheckpointInfo {
  ModelConfig model;
  int epoch = -1;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  std::string rng_state;  // textual std::mt19937_64 state
  std::string dtype;      // "float32" or "float64"; filled in by save
  std::uint32_t version = kCheckpointVersion;
};

std::string model_config_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

/// Single file: magic, version, JSON metadata with a tensor index, then raw
/// little-endian arrays in the model's native scalar type.
template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, MgNet<Scalar>& model, CheckpointInfo info);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Rebuilds the model from the stored config and loads every tensor. Arrays
/// saved in another precision are converted.
template <typename Scalar>
MgNet<Scalar> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

}  // namespace mgnet
