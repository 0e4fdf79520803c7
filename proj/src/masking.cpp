#include "pixio/masking.hpp"

#include <cmath>
#include <numeric>

#include "pixio/ops.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

void MaskConfig::validate() const {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("mask ratio must lie in (0, 1)");
  if (granularity == 0) throw ConfigError("mask granularity must be positive");
  if (grid_h == 0 || grid_w == 0) throw ConfigError("mask grid must be non-empty");
  if (grid_h % granularity != 0 || grid_w % granularity != 0) {
    throw ConfigError("patch grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                      " is not divisible by mask granularity " + std::to_string(granularity));
  }
  const std::size_t m = masked_blocks();
  if (m == 0 || m == total_blocks()) {
    throw ConfigError("mask ratio " + std::to_string(ratio) + " masks " + std::to_string(m) + " of " +
                      std::to_string(total_blocks()) + " blocks; the task is degenerate");
  }
}

std::size_t MaskConfig::masked_blocks() const {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(total_blocks()) + 0.5));
}

MaskPlan plan_from_mask(const std::vector<bool>& mask) {
  MaskPlan plan;
  plan.mask = mask;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) plan.ids_shuffle.push_back(i);
  }
  plan.n_visible = plan.ids_shuffle.size();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) plan.ids_shuffle.push_back(i);
  }
  plan.ids_restore.resize(mask.size());
  for (std::size_t i = 0; i < plan.ids_shuffle.size(); ++i) plan.ids_restore[plan.ids_shuffle[i]] = i;
  plan.ratio = mask.empty() ? 0.0 : static_cast<double>(plan.n_masked()) / static_cast<double>(mask.size());
  return plan;
}

MaskPlan sample_block_mask(const MaskConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<std::size_t> blocks(cfg.total_blocks());
  std::iota(blocks.begin(), blocks.end(), std::size_t{0});
  const std::size_t m = cfg.masked_blocks();
  // partial Fisher-Yates: the first m entries are a uniform m-subset
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(blocks.size() - i));
    std::swap(blocks[i], blocks[j]);
  }
  std::vector<bool> mask(cfg.grid_h * cfg.grid_w, false);
  const std::size_t g = cfg.granularity;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t by = blocks[i] / cfg.blocks_w();
    const std::size_t bx = blocks[i] % cfg.blocks_w();
    for (std::size_t dy = 0; dy < g; ++dy) {
      for (std::size_t dx = 0; dx < g; ++dx) mask[(by * g + dy) * cfg.grid_w + bx * g + dx] = true;
    }
  }
  MaskPlan plan = plan_from_mask(mask);
  plan.ratio = cfg.ratio;
  plan.granularity = g;
  return plan;
}

std::vector<MaskPlan> sample_batch_masks(const MaskConfig& cfg, std::size_t batch, Rng& rng) {
  std::vector<MaskPlan> plans;
  plans.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) plans.push_back(sample_block_mask(cfg, rng));
  return plans;
}

namespace {

void check_plans(const std::vector<MaskPlan>& plans, std::size_t batch, std::size_t n, const char* op) {
  if (plans.size() != batch) throw ContractError(std::string(op) + ": one plan per sample required");
  for (const auto& p : plans) {
    if (p.size() != n) {
      throw ContractError(std::string(op) + ": plan covers " + std::to_string(p.size()) + " patches, tokens have " +
                          std::to_string(n));
    }
    if (p.n_visible != plans.front().n_visible) throw ContractError(std::string(op) + ": plans differ in visible count");
  }
}

}  // namespace

TokenStates gather_visible(Graph& g, const TokenStates& tokens, const std::vector<MaskPlan>& plans) {
  if (tokens.layout != TokenLayout::Full) throw ContractError("gather_visible: tokens must be full-length");
  check_plans(plans, tokens.batch(), tokens.patch_tokens(), "gather_visible");
  std::vector<std::vector<std::size_t>> index;
  index.reserve(plans.size());
  for (const auto& p : plans) index.push_back(p.visible_ids());
  return TokenStates{tokens.cls, gather_tokens(g, tokens.patches, index), TokenLayout::VisibleOnly};
}

TokenStates scatter_restore(Graph& g, const TokenStates& visible, const std::vector<MaskPlan>& plans,
                            const Var& mask_token) {
  if (visible.layout != TokenLayout::VisibleOnly) throw ContractError("scatter_restore: tokens must be visible-only");
  if (plans.size() != visible.batch()) throw ContractError("scatter_restore: one plan per sample required");
  std::vector<std::vector<std::size_t>> index;
  index.reserve(plans.size());
  for (const auto& p : plans) {
    if (p.n_visible != visible.patch_tokens()) {
      throw ContractError("scatter_restore: " + std::to_string(visible.patch_tokens()) +
                          " visible tokens, plan expects " + std::to_string(p.n_visible));
    }
    index.push_back(p.visible_ids());
  }
  const std::size_t total = plans.empty() ? 0 : plans.front().size();
  return TokenStates{visible.cls, scatter_tokens(g, visible.patches, index, mask_token, total),
                     TokenLayout::DecoderFull};
}

}  // namespace pixio::inline PIXIO_PRECISION_NS
