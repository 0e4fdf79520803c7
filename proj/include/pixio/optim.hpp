#pragma once

#include <cstdint>
#include <vector>

#include "pixio/kvconfig.hpp"
#include "pixio/model.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

struct OptimConfig {
  double peak_lr = 8e-4;
  std::size_t warmup_steps = 1000;
  std::size_t total_steps = 10000;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  std::size_t batch_size = 128;
  double clip_grad_norm = 0.0;  // 0 disables clipping

  /// Desk-scale defaults with warmup at 10% of `total_steps`.
  static OptimConfig desk(std::size_t total_steps, std::size_t batch_size);
  void validate() const;
  void write(KeyValues& kv, const std::string& prefix = "optim.") const;
  static OptimConfig read(const KeyValues& kv, const std::string& prefix = "optim.");
};

/// Linear warmup from 0 to the peak, then cosine decay to 0 at total_steps.
double lr_schedule(std::size_t step, const OptimConfig& cfg);

/// AdamW with decoupled weight decay, applied per ParamStore entry. Entries
/// flagged without decay (norms, biases, tokens, positional tables) skip it;
/// entries without a gradient are left untouched.
class AdamW {
 public:
  AdamW(const ParamStore& params, const OptimConfig& cfg);

  /// Applies one update with lr = lr_schedule(step). Throws NumericError and
  /// leaves everything unchanged when any gradient is non-finite.
  double step(ParamStore& params, std::size_t step);

  const OptimConfig& config() const { return cfg_; }
  std::uint64_t updates() const { return t_; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void set_updates(std::uint64_t t) { t_ = t; }

 private:
  OptimConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::uint64_t t_ = 0;
};

/// L2 norm over every populated gradient.
double grad_norm(const ParamStore& params);

}  // namespace pixio::inline PIXIO_PRECISION_NS
