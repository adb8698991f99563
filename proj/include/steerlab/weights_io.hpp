#pragma once

// STWB weight files:
//   "STWB" | u32 version (=1) | u64 json_len | json ModelConfig
//   then per tensor, canonical order:
//   u16 name_len | name | u32 rows | u32 cols | rows*cols f64
// All integers and floats little-endian, no padding.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "steerlab/model.hpp"

namespace steerlab {

inline constexpr std::uint32_t kWeightFileVersion = 1;

std::string config_to_json(const ModelConfig& config);
/// Throws FormatError on missing or mistyped fields, UsageError on invalid values.
ModelConfig config_from_json(const std::string& text);

std::vector<std::uint8_t> encode_weights(const ModelConfig& config, const TensorStore& weights);
std::pair<ModelConfig, TensorStore> decode_weights(std::span<const std::uint8_t> bytes);

void save_weights(const ModelConfig& config, const TensorStore& weights,
                  const std::filesystem::path& path);
std::pair<ModelConfig, TensorStore> load_weights(const std::filesystem::path& path);

/// FNV-1a over the encoded weight file.
std::string model_fingerprint(const ModelConfig& config, const TensorStore& weights);

}  // namespace steerlab
