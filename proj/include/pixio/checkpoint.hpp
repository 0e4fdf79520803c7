#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pixio/kvconfig.hpp"
#include "pixio/model.hpp"
#include "pixio/optim.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume a run bit-exactly.
///
/// File layout (little-endian):
///   "PIXIOCKP" | u32 version | u32 scalar bytes | u64 step | u64 optimizer updates
///   | u32 len + config text | u32 len + rng state text | u32 tensor count
///   | per tensor: u32 len + name, u32 rank, u64 dims[rank], u64 element offset
///   | contiguous tensor data.
/// Tensor names are prefixed "param/", "adam_m/" or "adam_v/".
struct Checkpoint {
  KeyValues config;
  std::uint64_t step = 0;
  std::uint64_t optimizer_updates = 0;
  std::string rng_state;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Appends params (and optimizer moments when `optim` is non-null) to `ckpt`.
void pack_state(Checkpoint& ckpt, const ParamStore& params, const AdamW* optim);
/// Copies stored values into `params` (and `optim`); every name and shape
/// must match or FormatError is thrown.
void unpack_state(const Checkpoint& ckpt, ParamStore& params, AdamW* optim);

/// Rebuilds a model from a checkpoint's `model.*` config and parameters.
PixioModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace pixio::inline PIXIO_PRECISION_NS
