#pragma once

#include <vector>

#include "pixio/data.hpp"
#include "pixio/masking.hpp"
#include "pixio/model.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

struct LossReport {
  Var total;                   // scalar, mean of per_sample
  std::vector<real> per_sample;
  std::size_t n_masked_tokens = 0;
};

/// Mean squared error over masked patch pixels only. Each sample's loss is
/// the mean over its own masked tokens; the total is the mean over samples.
LossReport masked_pixel_loss(Graph& g, const Var& pred, const PatchGrid& target, const std::vector<MaskPlan>& plans);

/// mean over rows of (1 - cos(a_r, b_r)) for [..., D] inputs of equal shape.
Var cosine_distance(Graph& g, const Var& a, const Var& b);

/// Two-layer GELU MLP mapping student width to teacher width. With equal
/// widths it is residual, x + mlp(x), and starts as the identity.
struct ProjectionHead {
  Var fc1_w, fc1_b, fc2_w, fc2_b;

  static ProjectionHead create(ParamStore& store, const std::string& prefix, std::size_t student_dim,
                               std::size_t teacher_dim, std::uint64_t seed);
  static ProjectionHead bind(const ParamStore& store, const std::string& prefix);
  Var apply(Graph& g, const Var& x) const;
  std::size_t output_dim() const { return fc2_w.shape()[1]; }
  bool residual() const { return fc1_w.shape()[0] == fc2_w.shape()[1]; }
};

/// 0.5 * (1 - mean patch cosine) + 0.5 * (1 - mean class cosine). The student
/// is projected by `head`; when `student_plans` is given the student saw only
/// its visible patches and is compared to the teacher at those positions.
Var distill_loss(Graph& g, const TokenStates& teacher, const TokenStates& student, const ProjectionHead& head,
                 const std::vector<MaskPlan>* student_plans = nullptr);

}  // namespace pixio::inline PIXIO_PRECISION_NS
