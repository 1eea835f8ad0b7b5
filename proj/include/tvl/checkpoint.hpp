#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tvl/network.hpp"

namespace tvl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, all integers and doubles little-endian:
//   "TVLCKPT\0"  u32 version
//   u8 kind  u8 activation  u64 depth  u64 n_in  u64 n_hidden  u64 n_out
//   f64 gamma  u64 steps  steps x (u64 tau_id, f64 tau)
//   per layer l: W^l row-major f64, then b^l (l < depth - 1)
std::vector<std::uint8_t> encode_checkpoint(const NetworkParams& params);
NetworkParams decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_checkpoint(const std::filesystem::path& path);

}  // namespace tvl
