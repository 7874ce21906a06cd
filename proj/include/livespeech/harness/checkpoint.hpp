#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>

#include "livespeech/harness/config.hpp"
#include "livespeech/model/config.hpp"

namespace livespeech::harness {

struct AdamState {
  model::Parameters<float> m;
  model::Parameters<float> v;
  std::size_t step = 0;  // completed optimizer steps

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct Checkpoint {
  RunConfig config;
  model::Parameters<float> params;
  AdamState adam;  // moments may be empty for inference-only files
};

// LSPC layout, little-endian:
//   "LSPC" u32 version
//   u32 config_len, config text, u32 crc32(config text)
//   u64 step, u32 tensor_count
//   per tensor: u32 name_len, name, u8 dtype (1 = f32), u32 rank,
//               u32 extents[rank], u64 payload_bytes, payload,
//               u32 crc32(payload)
//   "END!"
// Tensors are written sorted by name; Adam moments use the prefixes
// "adam.m/" and "adam.v/".
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws ValidationError naming the first architecture field that differs
/// ("group_of" covers both G and explicit assignments).
void check_model_compatible(const model::ModelConfig& expected, const model::ModelConfig& found);

}  // namespace livespeech::harness
