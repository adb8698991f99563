#pragma once

// STVS steering-vector files:
//   "STVS" | u32 version (=1) | u64 json_len | json metadata
//   then n_layers * d_model f64, layer-major. Little-endian throughout.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "steerlab/caa.hpp"

namespace steerlab {

inline constexpr std::uint32_t kSteeringFileVersion = 1;

std::vector<std::uint8_t> encode_steering_vectors(const SteeringVectorSet& set);
SteeringVectorSet decode_steering_vectors(std::span<const std::uint8_t> bytes);

void save_steering_vectors(const SteeringVectorSet& set, const std::filesystem::path& path);
SteeringVectorSet load_steering_vectors(const std::filesystem::path& path);

/// Human-readable per-layer norms written next to the binary file.
std::string steering_sidecar_json(const SteeringVectorSet& set);

}  // namespace steerlab
