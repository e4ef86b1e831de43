#pragma once

// Versioned binary checkpoint: the network configuration followed by every
// named tensor as little-endian float32.
//
//   "BPSEGCKP" u32 version
//   i32 base_channels, depth, in_channels, out_channels, attention_reduction
//   u64 seed, u32 tensor_count
//   per tensor: u32 name_len, name, u8 trainable, u32 rank, i32 dims[rank],
//               f32 values[prod(dims)]

#include <filesystem>

#include "bpseg/image_io.hpp"
#include "bpseg/network.hpp"

namespace bpseg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

Bytes encode_checkpoint(const ModelParams<float>& params);
/// Throws ParseError on a malformed container or when the tensors do not
/// match the architecture described by the stored configuration.
ModelParams<float> decode_checkpoint(const Bytes& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace bpseg
