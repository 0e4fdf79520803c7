#include "pixio/optim.hpp"

#include <cmath>
#include <numbers>

namespace pixio::inline PIXIO_PRECISION_NS {

OptimConfig OptimConfig::desk(std::size_t total_steps, std::size_t batch_size) {
  OptimConfig c;
  c.total_steps = total_steps;
  c.warmup_steps = total_steps / 10;
  c.batch_size = batch_size;
  return c;
}

void OptimConfig::validate() const {
  if (total_steps == 0) throw ConfigError("total_steps must be positive");
  if (warmup_steps >= total_steps) throw ConfigError("warmup_steps must be smaller than total_steps");
  if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1)) throw ConfigError("betas must lie in (0, 1)");
  if (!(peak_lr >= 0)) throw ConfigError("peak_lr must be non-negative");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(eps > 0)) throw ConfigError("eps must be positive");
}

void OptimConfig::write(KeyValues& kv, const std::string& prefix) const {
  kv.set(prefix + "peak_lr", peak_lr);
  kv.set(prefix + "warmup_steps", warmup_steps);
  kv.set(prefix + "total_steps", total_steps);
  kv.set(prefix + "weight_decay", weight_decay);
  kv.set(prefix + "beta1", beta1);
  kv.set(prefix + "beta2", beta2);
  kv.set(prefix + "eps", eps);
  kv.set(prefix + "batch_size", batch_size);
  kv.set(prefix + "clip_grad_norm", clip_grad_norm);
}

OptimConfig OptimConfig::read(const KeyValues& kv, const std::string& prefix) {
  OptimConfig c;
  c.total_steps = kv.get_size(prefix + "total_steps", c.total_steps);
  c.warmup_steps = kv.get_size(prefix + "warmup_steps", c.total_steps / 10);
  c.peak_lr = kv.get_double(prefix + "peak_lr", c.peak_lr);
  c.weight_decay = kv.get_double(prefix + "weight_decay", c.weight_decay);
  c.beta1 = kv.get_double(prefix + "beta1", c.beta1);
  c.beta2 = kv.get_double(prefix + "beta2", c.beta2);
  c.eps = kv.get_double(prefix + "eps", c.eps);
  c.batch_size = kv.get_size(prefix + "batch_size", c.batch_size);
  c.clip_grad_norm = kv.get_double(prefix + "clip_grad_norm", c.clip_grad_norm);
  return c;
}

double lr_schedule(std::size_t step, const OptimConfig& cfg) {
  if (step >= cfg.total_steps) return 0.0;
  if (step < cfg.warmup_steps) {
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const double progress =
      static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(const ParamStore& params, const OptimConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  for (const auto& e : params.entries()) {
    m_.emplace_back(e.var.shape());
    v_.emplace_back(e.var.shape());
  }
}

double grad_norm(const ParamStore& params) {
  double acc = 0.0;
  for (const auto& e : params.entries()) {
    if (!e.var.has_grad()) continue;
    for (real g : e.var.grad().values()) acc += static_cast<double>(g) * g;
  }
  return std::sqrt(acc);
}

double AdamW::step(ParamStore& params, std::size_t step) {
  if (params.size() != m_.size()) throw ContractError("AdamW: parameter store changed since construction");
  for (const auto& e : params.entries()) {
    if (e.var.has_grad() && !e.var.grad().all_finite()) {
      throw NumericError("non-finite gradient in " + e.name + "; step " + std::to_string(step) + " aborted");
    }
  }
  double clip = 1.0;
  if (cfg_.clip_grad_norm > 0) {
    const double norm = grad_norm(params);
    if (norm > cfg_.clip_grad_norm) clip = cfg_.clip_grad_norm / norm;
  }
  const double lr = lr_schedule(step, cfg_);
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = params.entries()[i];
    if (!e.var.has_grad()) continue;
    Var p = e.var;
    real* w = p.mutable_value().data();
    const real* g = p.grad().data();
    real* m = m_[i].data();
    real* v = v_[i].data();
    const double decay = e.decay ? cfg_.weight_decay : 0.0;
    for (std::size_t j = 0; j < m_[i].numel(); ++j) {
      const double gj = static_cast<double>(g[j]) * clip;
      const double mj = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      const double vj = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      m[j] = static_cast<real>(mj);
      v[j] = static_cast<real>(vj);
      const double update = (mj / bc1) / (std::sqrt(vj / bc2) + cfg_.eps) + decay * w[j];
      w[j] = static_cast<real>(w[j] - lr * update);
    }
  }
  return lr;
}

}  // namespace pixio::inline PIXIO_PRECISION_NS
