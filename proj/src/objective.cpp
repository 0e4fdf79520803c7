#include "pixio/objective.hpp"

#include <algorithm>
#include <cmath>

namespace pixio::inline PIXIO_PRECISION_NS {

LossReport masked_pixel_loss(Graph& g, const Var& pred, const PatchGrid& target, const std::vector<MaskPlan>& plans) {
  const Tensor& t = target.tokens;
  if (!pred || pred.shape() != t.shape() || t.rank() != 3) {
    throw ContractError("masked_pixel_loss: prediction " + (pred ? shape_str(pred.shape()) : std::string("null")) +
                        " does not match target " + shape_str(t.shape()));
  }
  const std::size_t batch = t.dim(0);
  const std::size_t n = t.dim(1);
  const std::size_t k = t.dim(2);
  if (plans.size() != batch) throw ContractError("masked_pixel_loss: one plan per sample required");
  LossReport report;
  report.per_sample.resize(batch);
  std::vector<double> weight(batch);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (plans[b].size() != n) throw ContractError("masked_pixel_loss: plan does not cover every patch");
    const std::size_t masked = plans[b].n_masked();
    if (masked == 0) throw ContractError("masked_pixel_loss: sample without masked patches");
    report.n_masked_tokens += masked;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!plans[b].mask[i]) continue;
      const real* p = pred.value().data() + (b * n + i) * k;
      const real* q = t.data() + (b * n + i) * k;
      for (std::size_t j = 0; j < k; ++j) {
        const double e = static_cast<double>(p[j]) - q[j];
        acc += e * e;
      }
    }
    weight[b] = 1.0 / static_cast<double>(masked * k);
    const double sample = acc * weight[b];
    report.per_sample[b] = static_cast<real>(sample);
    total += sample;
  }
  total /= static_cast<double>(batch);
  const bool tracked = g.tracks({&pred});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [pred, t, plans, weight = std::move(weight), batch, n, k](const Tensor& dy) mutable {
      real* dp = pred.grad_buffer().data();
      for (std::size_t b = 0; b < batch; ++b) {
        const double coef = 2.0 * weight[b] / static_cast<double>(batch) * dy[0];
        for (std::size_t i = 0; i < n; ++i) {
          if (!plans[b].mask[i]) continue;
          const std::size_t base = (b * n + i) * k;
          for (std::size_t j = 0; j < k; ++j) {
            dp[base + j] += static_cast<real>(coef * (static_cast<double>(pred.value()[base + j]) - t[base + j]));
          }
        }
      }
    };
  }
  report.total = g.record("masked_pixel_loss", Tensor::scalar(static_cast<real>(total)), tracked, std::move(fn));
  return report;
}

Var cosine_distance(Graph& g, const Var& a, const Var& b) {
  if (!a || !b || a.shape() != b.shape()) {
    throw ContractError("cosine_distance: shapes differ " + (a ? shape_str(a.shape()) : std::string()) + " vs " +
                        (b ? shape_str(b.shape()) : std::string()));
  }
  const std::size_t d = a.value().cols();
  const std::size_t rows = a.value().rows();
  if (rows == 0 || d == 0) throw ContractError("cosine_distance: empty input");
  constexpr double kTiny = 1e-12;
  std::vector<double> na(rows), nb(rows), cosv(rows);
  double acc = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const real* x = a.value().data() + r * d;
    const real* y = b.value().data() + r * d;
    double xx = 0, yy = 0, xy = 0;
    for (std::size_t i = 0; i < d; ++i) {
      xx += static_cast<double>(x[i]) * x[i];
      yy += static_cast<double>(y[i]) * y[i];
      xy += static_cast<double>(x[i]) * y[i];
    }
    na[r] = std::max(std::sqrt(xx), kTiny);
    nb[r] = std::max(std::sqrt(yy), kTiny);
    cosv[r] = std::clamp(xy / (na[r] * nb[r]), -1.0, 1.0);
    acc += 1.0 - cosv[r];
  }
  const bool tracked = g.tracks({&a, &b});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [a, b, na = std::move(na), nb = std::move(nb), cosv = std::move(cosv), rows, d](const Tensor& dy) mutable {
      const double scale = -static_cast<double>(dy[0]) / static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const real* x = a.value().data() + r * d;
        const real* y = b.value().data() + r * d;
        const double inv = 1.0 / (na[r] * nb[r]);
        if (a.requires_grad()) {
          real* dx = a.grad_buffer().data() + r * d;
          for (std::size_t i = 0; i < d; ++i) {
            dx[i] += static_cast<real>(scale * (y[i] * inv - cosv[r] * x[i] / (na[r] * na[r])));
          }
        }
        if (b.requires_grad()) {
          real* dyv = b.grad_buffer().data() + r * d;
          for (std::size_t i = 0; i < d; ++i) {
            dyv[i] += static_cast<real>(scale * (x[i] * inv - cosv[r] * y[i] / (nb[r] * nb[r])));
          }
        }
      }
    };
  }
  return g.record("cosine_distance", Tensor::scalar(static_cast<real>(acc / static_cast<double>(rows))), tracked,
                  std::move(fn));
}

ProjectionHead ProjectionHead::create(ParamStore& store, const std::string& prefix, std::size_t student_dim,
                                      std::size_t teacher_dim, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, {0x9e4d});
  init_linear(store, prefix + ".fc1", student_dim, teacher_dim, rng);
  init_linear(store, prefix + ".fc2", teacher_dim, teacher_dim, rng);
  // Equal widths use a residual head whose MLP branch starts at zero.
  if (student_dim == teacher_dim) {
    Var w = store.get(prefix + ".fc2.weight");
    w.mutable_value().fill(0);
  }
  return bind(store, prefix);
}

ProjectionHead ProjectionHead::bind(const ParamStore& store, const std::string& prefix) {
  return ProjectionHead{store.get(prefix + ".fc1.weight"), store.get(prefix + ".fc1.bias"),
                        store.get(prefix + ".fc2.weight"), store.get(prefix + ".fc2.bias")};
}

Var ProjectionHead::apply(Graph& g, const Var& x) const {
  Var y = linear(g, gelu(g, linear(g, x, fc1_w, fc1_b)), fc2_w, fc2_b);
  return residual() ? add(g, x, y) : y;
}

Var distill_loss(Graph& g, const TokenStates& teacher, const TokenStates& student, const ProjectionHead& head,
                 const std::vector<MaskPlan>* student_plans) {
  if (teacher.layout != TokenLayout::Full) throw ContractError("distill_loss: teacher must see the full image");
  if (teacher.class_tokens() != student.class_tokens()) {
    throw ContractError("distill_loss: teacher has " + std::to_string(teacher.class_tokens()) +
                        " class tokens, student has " + std::to_string(student.class_tokens()));
  }
  if (head.output_dim() != teacher.width()) {
    throw ContractError("distill_loss: projection width " + std::to_string(head.output_dim()) +
                        " does not match teacher width " + std::to_string(teacher.width()));
  }
  Var t_patches = teacher.patches;
  if (student_plans) {
    if (student.layout != TokenLayout::VisibleOnly) throw ContractError("distill_loss: masked student must be visible-only");
    t_patches = gather_visible(g, teacher, *student_plans).patches;
  } else if (student.layout != TokenLayout::Full) {
    throw ContractError("distill_loss: unmasked student must be full-length");
  }
  Var s_patch = head.apply(g, student.patches);
  Var s_cls = head.apply(g, student.cls);
  Var patch_term = cosine_distance(g, s_patch, t_patches);
  Var cls_term = cosine_distance(g, s_cls, teacher.cls);
  return scale(g, add(g, patch_term, cls_term), real(0.5));
}

}  // namespace pixio::inline PIXIO_PRECISION_NS
