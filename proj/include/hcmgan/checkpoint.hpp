#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hcmgan/networks.hpp"
#include "hcmgan/tensor.hpp"

namespace hcmgan::gan {

// Flat binary parameter blob, little-endian:
//   "HCMGCKPT" | u32 version | u32 profile (0 mlp, 1 conv) | u32 count
//   count × (u32 rank | rank × u64 dims)
//   float64 values of every tensor, in order
std::vector<std::uint8_t> save_parameters(Profile profile, std::span<const Tensor> params);

// Overwrites `params` in place; shapes and profile must match the blob.
void load_parameters(std::span<const std::uint8_t> blob, Profile profile, std::span<const Tensor> params);

void write_blob(const std::filesystem::path& path, std::span<const std::uint8_t> blob);
std::vector<std::uint8_t> read_blob(const std::filesystem::path& path);

}  // namespace hcmgan::gan
