#include "pixio/model.hpp"

#include <array>
#include <cmath>
#include <cstring>

namespace pixio::inline PIXIO_PRECISION_NS {

namespace {

// Per-channel input standardization applied before the patch embedding.
constexpr std::array<double, 3> kPixelMean{0.485, 0.456, 0.406};
constexpr std::array<double, 3> kPixelStd{0.229, 0.224, 0.225};

Tensor truncated_normal(Shape shape, double std, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<real>(rng.truncated_normal(std));
  return t;
}

Tensor xavier_uniform(std::size_t din, std::size_t dout, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(din + dout));
  Tensor t(Shape{din, dout});
  for (auto& v : t.values()) v = static_cast<real>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace

ModelConfig ModelConfig::pixio_tiny() { return ModelConfig{}; }

void ModelConfig::validate(bool allow_decoder_stub) const {
  if (patch == 0 || input_size == 0 || input_size % patch != 0) {
    throw ConfigError("input size " + std::to_string(input_size) + " must be a multiple of patch size " +
                      std::to_string(patch));
  }
  if (enc_heads == 0 || enc_dim % enc_heads != 0) throw ConfigError("encoder dim must be divisible by encoder heads");
  if (dec_heads == 0 || dec_dim % dec_heads != 0) throw ConfigError("decoder dim must be divisible by decoder heads");
  if (enc_depth == 0) throw ConfigError("encoder depth must be at least 1");
  if (dec_depth == 0 && !allow_decoder_stub) throw ConfigError("decoder depth must be at least 1");
  if (n_cls == 0) throw ConfigError("at least one class token is required");
  if (mlp_ratio == 0) throw ConfigError("mlp ratio must be positive");
  if (!(drop_path_rate >= 0.0 && drop_path_rate < 1.0)) throw ConfigError("drop path rate must lie in [0, 1)");
}

void ModelConfig::write(KeyValues& kv, const std::string& prefix) const {
  kv.set(prefix + "input_size", input_size);
  kv.set(prefix + "patch", patch);
  kv.set(prefix + "enc_dim", enc_dim);
  kv.set(prefix + "enc_depth", enc_depth);
  kv.set(prefix + "enc_heads", enc_heads);
  kv.set(prefix + "dec_dim", dec_dim);
  kv.set(prefix + "dec_depth", dec_depth);
  kv.set(prefix + "dec_heads", dec_heads);
  kv.set(prefix + "n_cls", n_cls);
  kv.set(prefix + "mlp_ratio", mlp_ratio);
  kv.set(prefix + "drop_path_rate", drop_path_rate);
  kv.set(prefix + "cls_in_decoder", cls_in_decoder);
}

ModelConfig ModelConfig::read(const KeyValues& kv, const std::string& prefix) {
  ModelConfig c;
  c.input_size = kv.get_size(prefix + "input_size", c.input_size);
  c.patch = kv.get_size(prefix + "patch", c.patch);
  c.enc_dim = kv.get_size(prefix + "enc_dim", c.enc_dim);
  c.enc_depth = kv.get_size(prefix + "enc_depth", c.enc_depth);
  c.enc_heads = kv.get_size(prefix + "enc_heads", c.enc_heads);
  c.dec_dim = kv.get_size(prefix + "dec_dim", c.dec_dim);
  c.dec_depth = kv.get_size(prefix + "dec_depth", c.dec_depth);
  c.dec_heads = kv.get_size(prefix + "dec_heads", c.dec_heads);
  c.n_cls = kv.get_size(prefix + "n_cls", c.n_cls);
  c.mlp_ratio = kv.get_size(prefix + "mlp_ratio", c.mlp_ratio);
  c.drop_path_rate = kv.get_double(prefix + "drop_path_rate", c.drop_path_rate);
  c.cls_in_decoder = kv.get_bool(prefix + "cls_in_decoder", c.cls_in_decoder);
  return c;
}

Var ParamStore::add(const std::string& name, Tensor value, bool decay) {
  if (index_.count(name)) throw ContractError("duplicate parameter name " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{name, Var::parameter(std::move(value)), decay});
  return entries_.back().var;
}

const Var& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return entries_[it->second].var;
}

std::size_t ParamStore::numel() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.var.value().numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& e : entries_) out.add(e.name, e.var.value(), e.decay);
  return out;
}

void ParamStore::assign(const ParamStore& other) {
  if (other.size() != size()) throw ContractError("parameter stores differ in size");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& src = other.entries_[i];
    auto& dst = entries_[i];
    if (src.name != dst.name || !src.var.value().same_shape(dst.var.value())) {
      throw ContractError("parameter mismatch at " + dst.name);
    }
    dst.var.mutable_value() = src.var.value();
  }
}

std::uint64_t ParamStore::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& e : entries_) {
    mix(e.name.data(), e.name.size());
    for (auto d : e.var.shape()) mix(&d, sizeof(d));
    mix(e.var.value().data(), e.var.value().numel() * sizeof(real));
  }
  return h;
}

void init_linear(ParamStore& store, const std::string& prefix, std::size_t din, std::size_t dout, Rng& rng) {
  store.add(prefix + ".weight", xavier_uniform(din, dout, rng), true);
  store.add(prefix + ".bias", Tensor(Shape{dout}), false);
}

void init_block(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t hidden, Rng& rng) {
  store.add(prefix + ".norm1.weight", Tensor(Shape{dim}, real(1)), false);
  store.add(prefix + ".norm1.bias", Tensor(Shape{dim}), false);
  init_linear(store, prefix + ".attn.qkv", dim, 3 * dim, rng);
  init_linear(store, prefix + ".attn.proj", dim, dim, rng);
  store.add(prefix + ".norm2.weight", Tensor(Shape{dim}, real(1)), false);
  store.add(prefix + ".norm2.bias", Tensor(Shape{dim}), false);
  init_linear(store, prefix + ".mlp.fc1", dim, hidden, rng);
  init_linear(store, prefix + ".mlp.fc2", hidden, dim, rng);
}

BlockWeights bind_block(const ParamStore& store, const std::string& prefix) {
  BlockWeights w;
  w.norm1_w = store.get(prefix + ".norm1.weight");
  w.norm1_b = store.get(prefix + ".norm1.bias");
  w.attn = {store.get(prefix + ".attn.qkv.weight"), store.get(prefix + ".attn.qkv.bias"),
            store.get(prefix + ".attn.proj.weight"), store.get(prefix + ".attn.proj.bias")};
  w.norm2_w = store.get(prefix + ".norm2.weight");
  w.norm2_b = store.get(prefix + ".norm2.bias");
  w.fc1_w = store.get(prefix + ".mlp.fc1.weight");
  w.fc1_b = store.get(prefix + ".mlp.fc1.bias");
  w.fc2_w = store.get(prefix + ".mlp.fc2.weight");
  w.fc2_b = store.get(prefix + ".mlp.fc2.bias");
  return w;
}

Var transformer_block(Graph& g, const Var& x, const BlockWeights& w, std::size_t heads, real drop_rate, Rng* rng,
                      bool training) {
  const bool stochastic = training && drop_rate > 0;
  if (stochastic && !rng) throw ContractError("transformer_block: drop path in training needs an rng");
  Rng unused(0);
  Rng& r = rng ? *rng : unused;
  Var h = layer_norm(g, x, w.norm1_w, w.norm1_b);
  h = multi_head_self_attention(g, h, w.attn, heads);
  Var y = add(g, x, drop_path(g, h, drop_rate, r, stochastic));
  Var m = layer_norm(g, y, w.norm2_w, w.norm2_b);
  m = linear(g, gelu(g, linear(g, m, w.fc1_w, w.fc1_b)), w.fc2_w, w.fc2_b);
  return add(g, y, drop_path(g, m, drop_rate, r, stochastic));
}

PixioModel::PixioModel(const ModelConfig& cfg, std::uint64_t seed) : PixioModel(cfg, seed, AllowDecoderStub{}) {
  cfg_.validate();
}

PixioModel::PixioModel(const ModelConfig& cfg, std::uint64_t seed, AllowDecoderStub) : cfg_(cfg) {
  cfg_.validate(true);
  Rng rng = Rng::derive(seed, {0x1417});
  const std::size_t d = cfg_.enc_dim;
  const std::size_t dd = cfg_.dec_dim;
  const std::size_t n = cfg_.num_patches();
  init_linear(params_, "patch_embed", cfg_.patch_dim(), d, rng);
  params_.add("cls_tokens", truncated_normal(Shape{cfg_.n_cls, d}, 0.02, rng), false);
  params_.add("encoder.pos_embed", truncated_normal(Shape{n, d}, 0.02, rng), false);
  for (std::size_t i = 0; i < cfg_.enc_depth; ++i) {
    init_block(params_, "encoder.blocks." + std::to_string(i), d, d * cfg_.mlp_ratio, rng);
  }
  params_.add("encoder.norm.weight", Tensor(Shape{d}, real(1)), false);
  params_.add("encoder.norm.bias", Tensor(Shape{d}), false);
  init_linear(params_, "decoder.embed", d, dd, rng);
  params_.add("decoder.mask_token", truncated_normal(Shape{dd}, 0.02, rng), false);
  params_.add("decoder.pos_embed", truncated_normal(Shape{n, dd}, 0.02, rng), false);
  for (std::size_t i = 0; i < cfg_.dec_depth; ++i) {
    init_block(params_, "decoder.blocks." + std::to_string(i), dd, dd * cfg_.mlp_ratio, rng);
  }
  params_.add("decoder.norm.weight", Tensor(Shape{dd}, real(1)), false);
  params_.add("decoder.norm.bias", Tensor(Shape{dd}), false);
  init_linear(params_, "decoder.head", dd, cfg_.patch_dim(), rng);
  bind();
}

PixioModel::PixioModel(const ModelConfig& cfg, const ParamStore& params) : PixioModel(cfg, 0) {
  params_.assign(params);
}

void PixioModel::bind() {
  patch_w_ = params_.get("patch_embed.weight");
  patch_b_ = params_.get("patch_embed.bias");
  cls_ = params_.get("cls_tokens");
  enc_pos_ = params_.get("encoder.pos_embed");
  enc_norm_w_ = params_.get("encoder.norm.weight");
  enc_norm_b_ = params_.get("encoder.norm.bias");
  dec_embed_w_ = params_.get("decoder.embed.weight");
  dec_embed_b_ = params_.get("decoder.embed.bias");
  mask_token_ = params_.get("decoder.mask_token");
  dec_pos_ = params_.get("decoder.pos_embed");
  dec_norm_w_ = params_.get("decoder.norm.weight");
  dec_norm_b_ = params_.get("decoder.norm.bias");
  head_w_ = params_.get("decoder.head.weight");
  head_b_ = params_.get("decoder.head.bias");
  enc_blocks_.clear();
  dec_blocks_.clear();
  for (std::size_t i = 0; i < cfg_.enc_depth; ++i) enc_blocks_.push_back(bind_block(params_, "encoder.blocks." + std::to_string(i)));
  for (std::size_t i = 0; i < cfg_.dec_depth; ++i) dec_blocks_.push_back(bind_block(params_, "decoder.blocks." + std::to_string(i)));
}

real PixioModel::block_drop_rate(std::size_t i) const {
  if (cfg_.enc_depth <= 1) return static_cast<real>(cfg_.drop_path_rate);
  return static_cast<real>(cfg_.drop_path_rate * static_cast<double>(i) / static_cast<double>(cfg_.enc_depth - 1));
}

Var PixioModel::embed_patches(Graph& g, const ImageBatch& batch) const {
  if (batch.data.rank() != 4 || batch.data.dim(2) != cfg_.input_size || batch.data.dim(3) != cfg_.input_size) {
    throw ContractError("encode: batch " + shape_str(batch.data.shape()) + " does not match input size " +
                        std::to_string(cfg_.input_size));
  }
  PatchGrid grid = patchify(batch, cfg_.patch);
  real* v = grid.tokens.data();
  const std::size_t pixels = grid.tokens.numel() / 3;
  for (std::size_t i = 0; i < pixels; ++i) {
    for (std::size_t c = 0; c < 3; ++c, ++v) *v = static_cast<real>((*v - kPixelMean[c]) / kPixelStd[c]);
  }
  Var x = linear(g, Var::constant(std::move(grid.tokens)), patch_w_, patch_b_);
  return add_broadcast(g, x, enc_pos_);
}

TokenStates PixioModel::run_encoder(Graph& g, const ImageBatch& batch, const std::vector<MaskPlan>* plans,
                                    std::size_t depth, const ForwardMode& mode) const {
  TokenStates tokens{Var(), embed_patches(g, batch), TokenLayout::Full};
  if (plans) {
    tokens = gather_visible(g, tokens, *plans);
  }
  const std::size_t c = cfg_.n_cls;
  Var x = prepend_tokens(g, cls_, tokens.patches);
  last_encoder_tokens_ = x.shape()[1];
  for (std::size_t i = 0; i < depth; ++i) {
    x = transformer_block(g, x, enc_blocks_[i], cfg_.enc_heads, block_drop_rate(i), mode.rng, mode.training);
  }
  x = layer_norm(g, x, enc_norm_w_, enc_norm_b_);
  const std::size_t m = x.shape()[1] - c;
  return TokenStates{slice_tokens(g, x, 0, c), slice_tokens(g, x, c, m), tokens.layout};
}

TokenStates PixioModel::encode(Graph& g, const ImageBatch& batch, const std::vector<MaskPlan>* plans,
                               const ForwardMode& mode) const {
  return run_encoder(g, batch, plans, cfg_.enc_depth, mode);
}

TokenStates PixioModel::forward_features(Graph& g, const ImageBatch& batch, std::size_t block_index) const {
  if (block_index < 1 || block_index > cfg_.enc_depth) {
    throw ContractError("forward_features: block index " + std::to_string(block_index) + " outside [1, " +
                        std::to_string(cfg_.enc_depth) + "]");
  }
  return run_encoder(g, batch, nullptr, block_index, ForwardMode{});
}

Var PixioModel::decode(Graph& g, const TokenStates& latent, const std::vector<MaskPlan>& plans,
                       const ForwardMode& mode) const {
  (void)mode;  // the decoder has no stochastic layers
  if (latent.layout != TokenLayout::VisibleOnly) throw ContractError("decode: latent must be visible-only");
  const std::size_t n = cfg_.num_patches();
  TokenStates projected{linear(g, latent.cls, dec_embed_w_, dec_embed_b_),
                        linear(g, latent.patches, dec_embed_w_, dec_embed_b_), TokenLayout::VisibleOnly};
  TokenStates full = scatter_restore(g, projected, plans, mask_token_);
  if (full.patch_tokens() != n) throw ContractError("decode: plan size does not match the patch grid");
  Var x = add_broadcast(g, full.patches, dec_pos_);
  std::size_t offset = 0;
  if (cfg_.cls_in_decoder) {
    x = prepend_tokens(g, full.cls, x);
    offset = full.class_tokens();
  }
  for (const auto& block : dec_blocks_) x = transformer_block(g, x, block, cfg_.dec_heads, real(0), nullptr, false);
  // a decoder without blocks is a pure affine map (test stub); the final norm belongs to the block stack
  if (!dec_blocks_.empty()) x = layer_norm(g, x, dec_norm_w_, dec_norm_b_);
  Var pred = linear(g, x, head_w_, head_b_);
  return offset ? slice_tokens(g, pred, offset, n) : pred;
}

Var global_embedding(Graph& g, const TokenStates& tokens) {
  if (!tokens.cls || tokens.class_tokens() == 0) throw ContractError("global_embedding: no class tokens");
  return mean_tokens(g, tokens.cls, 0, tokens.class_tokens());
}

}  // namespace pixio::inline PIXIO_PRECISION_NS
