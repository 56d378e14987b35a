#pragma once

#include <cstdint>
#include <string>

#include "pdanet/model.hpp"

namespace pdanet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container: `PDCK` | u32 version | u32 scalar bytes | u32 config
/// length | config text | u32 tensor count | per tensor: u32 name length,
/// name, u32 C, H, W, raw little-endian values. Parameters are stored at the
/// model's own precision, so reloading is bit-exact.
template <typename T>
void save_checkpoint(PdanetModel<T>& model, const std::string& path);

/// Rebuilds the model from the embedded config and restores every tensor.
/// Throws on a missing file, bad magic, version or precision mismatch,
/// truncation, or a tensor that does not match the rebuilt architecture.
template <typename T>
PdanetModel<T> load_checkpoint(const std::string& path);

/// Copies every parameter value from `src` into `dst` (same architecture).
template <typename T>
void copy_parameters(PdanetModel<T>& src, PdanetModel<T>& dst);

}  // namespace pdanet
