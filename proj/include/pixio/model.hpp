#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "pixio/data.hpp"
#include "pixio/kvconfig.hpp"
#include "pixio/masking.hpp"
#include "pixio/ops.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

struct ModelConfig {
  std::size_t input_size = 64;
  std::size_t patch = 8;
  std::size_t enc_dim = 192;
  std::size_t enc_depth = 12;
  std::size_t enc_heads = 3;
  std::size_t dec_dim = 96;
  std::size_t dec_depth = 8;
  std::size_t dec_heads = 3;
  std::size_t n_cls = 8;
  std::size_t mlp_ratio = 4;
  double drop_path_rate = 0.4;
  bool cls_in_decoder = true;

  /// Desk-scale reference configuration.
  static ModelConfig pixio_tiny();

  /// `allow_decoder_stub` admits dec_depth = 0 (tests only).
  void validate(bool allow_decoder_stub = false) const;
  std::size_t grid() const { return input_size / patch; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch * patch * 3; }

  void write(KeyValues& kv, const std::string& prefix = "model.") const;
  static ModelConfig read(const KeyValues& kv, const std::string& prefix = "model.");
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Flat, ordered, uniquely named parameter store.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Var var;
    bool decay = false;  // subject to weight decay
  };

  Var add(const std::string& name, Tensor value, bool decay);
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t numel() const;
  void zero_grad();
  /// Deep copy with independent storage.
  ParamStore clone() const;
  /// Copies values from `other`; names and shapes must match.
  void assign(const ParamStore& other);
  /// FNV-1a over names, shapes and raw value bytes.
  std::uint64_t fingerprint() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct BlockWeights {
  Var norm1_w, norm1_b;
  AttentionWeights attn;
  Var norm2_w, norm2_b;
  Var fc1_w, fc1_b, fc2_w, fc2_b;
};

/// Pre-norm transformer block: x + drop(attn(ln(x))) then x + drop(mlp(ln(x))).
Var transformer_block(Graph& g, const Var& x, const BlockWeights& w, std::size_t heads, real drop_rate, Rng* rng,
                      bool training);

struct ForwardMode {
  bool training = false;
  Rng* rng = nullptr;  // required when training with drop path
};

/// Encoder with multiple class tokens, deep decoder with mask tokens and a
/// per-patch pixel head.
class PixioModel {
 public:
  struct AllowDecoderStub {};

  PixioModel(const ModelConfig& cfg, std::uint64_t seed);
  /// Test-only: permits a decoder with zero blocks, which is then affine.
  PixioModel(const ModelConfig& cfg, std::uint64_t seed, AllowDecoderStub);
  /// Adopts existing parameters (e.g. from a checkpoint); names and shapes are checked.
  PixioModel(const ModelConfig& cfg, const ParamStore& params);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Patch-embeds, adds positional embeddings, keeps visible tokens when
  /// `plans` is given, prepends class tokens and runs the encoder stack.
  TokenStates encode(Graph& g, const ImageBatch& batch, const std::vector<MaskPlan>* plans,
                     const ForwardMode& mode = {}) const;
  /// Pixel predictions [B, N, p*p*3] for every patch position.
  Var decode(Graph& g, const TokenStates& latent, const std::vector<MaskPlan>& plans,
             const ForwardMode& mode = {}) const;
  /// Unmasked eval forward, normed states after encoder block `block_index` (1-based).
  TokenStates forward_features(Graph& g, const ImageBatch& batch, std::size_t block_index) const;

  /// Sequence length entering the encoder blocks on the last encode call.
  std::size_t last_encoder_tokens() const { return last_encoder_tokens_; }
  /// Drop-path rate applied in encoder block `i` (0-based).
  real block_drop_rate(std::size_t i) const;

 private:
  Var embed_patches(Graph& g, const ImageBatch& batch) const;
  TokenStates run_encoder(Graph& g, const ImageBatch& batch, const std::vector<MaskPlan>* plans,
                          std::size_t depth, const ForwardMode& mode) const;
  void bind();

  ModelConfig cfg_;
  ParamStore params_;
  Var patch_w_, patch_b_, cls_, enc_pos_, enc_norm_w_, enc_norm_b_;
  Var dec_embed_w_, dec_embed_b_, mask_token_, dec_pos_, dec_norm_w_, dec_norm_b_, head_w_, head_b_;
  std::vector<BlockWeights> enc_blocks_, dec_blocks_;
  mutable std::size_t last_encoder_tokens_ = 0;
};

/// Mean over the class tokens: [B, D].
Var global_embedding(Graph& g, const TokenStates& tokens);

void init_linear(ParamStore& store, const std::string& prefix, std::size_t din, std::size_t dout, Rng& rng);
void init_block(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t hidden, Rng& rng);
BlockWeights bind_block(const ParamStore& store, const std::string& prefix);

}  // namespace pixio::inline PIXIO_PRECISION_NS
