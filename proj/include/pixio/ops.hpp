#pragma once

#include <cstddef>
#include <vector>

#include "pixio/graph.hpp"
#include "pixio/rng.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

inline constexpr real kNormEps = real(1e-6);

// Dense ops. Tensors of rank >= 2 are treated as rows over the last axis
// unless an op says otherwise. Token ops expect [B, T, D].

/// y = x * w + b, x: [..., Din], w: [Din, Dout], b: [Dout] (may be empty).
Var linear(Graph& g, const Var& x, const Var& w, const Var& b);
Var layer_norm(Graph& g, const Var& x, const Var& gamma, const Var& beta, real eps = kNormEps);
/// Exact erf form.
Var gelu(Graph& g, const Var& x);
Var add(Graph& g, const Var& a, const Var& b);
/// x: [B, N, D] plus table: [N, D] broadcast over the batch axis.
Var add_broadcast(Graph& g, const Var& x, const Var& table);
Var scale(Graph& g, const Var& x, real factor);
Var sum(Graph& g, const Var& x);
Var mean(Graph& g, const Var& x);
/// Softmax over the last axis.
Var softmax(Graph& g, const Var& x);

/// Scaled dot-product attention over packed projections.
/// qkv: [B, T, 3D] laid out as [q | k | v]; returns [B, T, D].
/// When `probs` is non-null it receives the attention weights [B, H, T, T].
Var attention(Graph& g, const Var& qkv, std::size_t heads, Tensor* probs = nullptr);

struct AttentionWeights {
  Var qkv_w, qkv_b, proj_w, proj_b;
};

/// Bidirectional multi-head self-attention with input and output projections.
Var multi_head_self_attention(Graph& g, const Var& x, const AttentionWeights& w, std::size_t heads,
                              Tensor* probs = nullptr);

/// Stochastic depth over the leading (sample) axis. Identity when `training`
/// is false or `rate` is zero.
Var drop_path(Graph& g, const Var& x, real rate, Rng& rng, bool training);

/// [C, D] (shared) or [B, C, D] prefix prepended to x: [B, M, D].
Var prepend_tokens(Graph& g, const Var& prefix, const Var& x);
/// Tokens [start, start + count) of x: [B, T, D].
Var slice_tokens(Graph& g, const Var& x, std::size_t start, std::size_t count);
/// out[b, j] = x[b, index[b][j]].
Var gather_tokens(Graph& g, const Var& x, const std::vector<std::vector<std::size_t>>& index);
/// Inverse routing: out has `total` tokens, out[b, index[b][j]] = x[b, j] and
/// every other slot is `fill` ([D]).
Var scatter_tokens(Graph& g, const Var& x, const std::vector<std::vector<std::size_t>>& index,
                   const Var& fill, std::size_t total);
/// Mean over tokens [start, start + count): [B, T, D] -> [B, D].
Var mean_tokens(Graph& g, const Var& x, std::size_t start, std::size_t count);
/// Concatenate [B, D1] and [B, D2] along the feature axis.
Var concat_features(Graph& g, const Var& a, const Var& b);

}  // namespace pixio::inline PIXIO_PRECISION_NS
