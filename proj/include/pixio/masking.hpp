#pragma once

#include <cstddef>
#include <vector>

#include "pixio/graph.hpp"
#include "pixio/rng.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

enum class TokenLayout { Full, VisibleOnly, DecoderFull };

/// Class tokens and patch tokens of a batch, kept apart so routing never
/// touches the class tokens.
struct TokenStates {
  Var cls;      // [B, C, D]
  Var patches;  // [B, M, D]
  TokenLayout layout = TokenLayout::Full;

  std::size_t batch() const { return patches.shape()[0]; }
  std::size_t class_tokens() const { return cls ? cls.shape()[1] : 0; }
  std::size_t patch_tokens() const { return patches.shape()[1]; }
  std::size_t width() const { return patches.shape()[2]; }
};

struct MaskConfig {
  double ratio = 0.75;
  std::size_t granularity = 4;  // block edge, in patches
  std::size_t grid_h = 8;
  std::size_t grid_w = 8;

  void validate() const;
  std::size_t blocks_h() const { return grid_h / granularity; }
  std::size_t blocks_w() const { return grid_w / granularity; }
  std::size_t total_blocks() const { return blocks_h() * blocks_w(); }
  /// round(ratio * total_blocks), halves rounded up.
  std::size_t masked_blocks() const;
  std::size_t masked_patches() const { return masked_blocks() * granularity * granularity; }
};

struct MaskPlan {
  std::vector<bool> mask;                // true = masked, one per patch
  std::vector<std::size_t> ids_shuffle;  // visible patch ids first, then masked
  std::vector<std::size_t> ids_restore;  // inverse of ids_shuffle
  std::size_t n_visible = 0;
  double ratio = 0.0;
  std::size_t granularity = 1;

  std::size_t size() const { return mask.size(); }
  std::size_t n_masked() const { return mask.size() - n_visible; }
  std::vector<std::size_t> visible_ids() const {
    return {ids_shuffle.begin(), ids_shuffle.begin() + static_cast<std::ptrdiff_t>(n_visible)};
  }
};

/// Masks round(ratio * blocks) of the g x g blocks, chosen uniformly without
/// replacement.
MaskPlan sample_block_mask(const MaskConfig& cfg, Rng& rng);
/// Plan for an explicit mask; any pattern is accepted, including none or all.
MaskPlan plan_from_mask(const std::vector<bool>& mask);
std::vector<MaskPlan> sample_batch_masks(const MaskConfig& cfg, std::size_t batch, Rng& rng);

/// Keeps only visible patch tokens, in shuffle order. Class tokens pass through.
TokenStates gather_visible(Graph& g, const TokenStates& tokens, const std::vector<MaskPlan>& plans);
/// Re-expands visible tokens to full length in original order; masked slots
/// receive `mask_token` ([D]).
TokenStates scatter_restore(Graph& g, const TokenStates& visible, const std::vector<MaskPlan>& plans,
                            const Var& mask_token);

}  // namespace pixio::inline PIXIO_PRECISION_NS
