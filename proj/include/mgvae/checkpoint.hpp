#pragma once

#include "mgvae/params.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace mgvae {

// Checkpoint file layout (all integers u32 little-endian):
//   "MGCKPT", version, kind (length + bytes), config JSON (length + bytes),
//   tensor count, then per tensor: name (length + bytes), rows, cols, and
//   rows*cols row-major f32 values.
// A file holds one parameter group; values are stored at 32-bit precision.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;
  std::string config_json;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const std::string& kind, const std::string& config_json,
                     const ParameterSet& params, std::span<const std::string> prefixes);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies every tensor into the parameter of the same name. Throws FormatError
// for unknown names or shape mismatches, and when a parameter under
// `required_prefixes` is not covered by the checkpoint.
void apply_checkpoint(const Checkpoint& ckpt, ParameterSet& params, std::span<const std::string> required_prefixes = {});

}  // namespace mgvae
