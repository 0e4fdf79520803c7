#include "pixio/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

#include "pixio/data.hpp"
#include "pixio/masking.hpp"
#include "pixio/model.hpp"
#include "pixio/objective.hpp"
#include "pixio/ops.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

namespace {

#if defined(PIXIO_USE_F64)
constexpr double kStep = 1e-4;
constexpr double kFloor = 1e-6;
constexpr double kTolerance = 1e-4;
#else
constexpr double kStep = 2e-2;
constexpr double kFloor = 1e-3;
constexpr double kTolerance = 1e-2;
#endif

using Build = std::function<Var(Graph&)>;

struct Coord {
  std::size_t input;
  std::size_t index;
};

// sum(w * x), accumulated in double
Var weighted_sum(Graph& g, const Var& x, const Tensor& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.numel(); ++i) acc += static_cast<double>(w[i]) * static_cast<double>(x.value()[i]);
  const bool tracked = g.tracks({&x});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [x, w](const Tensor& dy) {
      Tensor& gx = x.grad_buffer();
      for (std::size_t i = 0; i < w.numel(); ++i) gx[i] += w[i] * dy.item();
    };
  }
  return g.record("weighted_sum", Tensor::scalar(static_cast<real>(acc)), tracked, std::move(fn));
}

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<real>(rng.uniform(-scale, scale));
  return t;
}

Var random_param(Shape shape, Rng& rng, double scale = 1.0) { return Var::parameter(random_tensor(std::move(shape), rng, scale)); }

double evaluate(const Build& build, const Tensor& weights) {
  Graph g(false);
  const Var out = build(g);
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.numel(); ++i) {
    acc += static_cast<double>(weights[i]) * static_cast<double>(out.value()[i]);
  }
  return acc;
}

GradcheckCase check(const std::string& name, std::vector<Var> inputs, const std::vector<Coord>& coords,
                    const Build& build, Rng& rng) {
  Tensor weights;
  {
    Graph probe(false);
    const Var out = build(probe);
    const double scale = 1.0 / std::sqrt(static_cast<double>(out.value().numel()));
    weights = random_tensor(out.shape(), rng, scale);
  }
  for (auto& v : inputs) v.zero_grad();
  {
    Graph g;
    Var loss = weighted_sum(g, build(g), weights);
    g.backward(loss);
  }

  GradcheckCase result;
  result.name = name;
  for (const auto& c : coords) {
    Var& x = inputs[c.input];
    real& slot = x.mutable_value()[c.index];
    const real original = slot;
    const double h = kStep * std::max(1.0, std::abs(static_cast<double>(original)));
    // central difference over the values actually stored after rounding
    const auto central = [&](double step) {
      slot = static_cast<real>(static_cast<double>(original) + step);
      const real up = slot;
      const double plus = evaluate(build, weights);
      slot = static_cast<real>(static_cast<double>(original) - step);
      const real down = slot;
      const double minus = evaluate(build, weights);
      slot = original;
      return (plus - minus) / (static_cast<double>(up) - static_cast<double>(down));
    };
    // Richardson extrapolation cancels the h^2 truncation term
    const double numeric = (4.0 * central(h / 2) - central(h)) / 3.0;
    const double analytic = x.has_grad() ? static_cast<double>(x.grad()[c.index]) : 0.0;
    const double abs_err = std::abs(analytic - numeric);
    const double rel_err = abs_err / std::max({std::abs(analytic), std::abs(numeric), kFloor});
    result.max_abs_err = std::max(result.max_abs_err, abs_err);
    result.max_rel_err = std::max(result.max_rel_err, rel_err);
    ++result.checked;
  }
  result.passed = result.checked > 0 && result.max_rel_err < kTolerance;
  return result;
}

std::vector<Coord> sample_coords(const std::vector<Var>& inputs, std::size_t per_input, Rng& rng) {
  std::vector<Coord> out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    const std::size_t n = inputs[i].value().numel();
    std::vector<std::size_t> idx(n);
    for (std::size_t k = 0; k < n; ++k) idx[k] = k;
    rng.shuffle(idx);
    for (std::size_t k = 0; k < std::min(n, per_input); ++k) out.push_back({i, idx[k]});
  }
  return out;
}

GradcheckCase check_op(const std::string& name, const std::vector<Var>& inputs, const Build& build,
                       const GradcheckOptions& opt, Rng& rng) {
  return check(name, inputs, sample_coords(inputs, opt.coords_per_input, rng), build, rng);
}

AttentionWeights random_attention(std::size_t d, Rng& rng) {
  return AttentionWeights{random_param({d, 3 * d}, rng, 0.5), random_param({3 * d}, rng, 0.1),
                          random_param({d, d}, rng, 0.5), random_param({d}, rng, 0.1)};
}

std::vector<Var> attention_vars(const AttentionWeights& w) { return {w.qkv_w, w.qkv_b, w.proj_w, w.proj_b}; }

GradcheckCase check_model(const std::string& name, const ModelConfig& cfg, const GradcheckOptions& opt, Rng& rng) {
  PixioModel model(cfg, opt.seed);
  Corpus corpus = synthetic_corpus(opt.seed, 2, cfg.input_size);
  std::vector<Tensor> crops;
  for (const auto& img : corpus.images) crops.push_back(center_crop_resize(img, cfg.input_size));
  const ImageBatch batch = stack_images(crops, corpus.source_ids);
  const PatchGrid target = normalize_target(patchify(batch, cfg.patch));
  Rng mask_rng = Rng::derive(opt.seed, {0x3a5c});
  const auto plans = sample_batch_masks(MaskConfig{0.75, 2, cfg.grid(), cfg.grid()}, batch.batch(), mask_rng);

  std::vector<Var> inputs;
  for (const auto& e : model.params().entries()) inputs.push_back(e.var);
  // learned tokens start near zero and feed a norm directly; lift them to unit scale
  for (const auto& e : model.params().entries()) {
    if (e.name.find("cls_tokens") == std::string::npos && e.name.find("mask_token") == std::string::npos) continue;
    Var v = e.var;
    for (auto& val : v.mutable_value().storage()) val += static_cast<real>(rng.uniform(-1.0, 1.0));
  }
  std::vector<Coord> coords;
  for (std::size_t k = 0; k < opt.model_coords; ++k) {
    const std::size_t entry = rng.below(inputs.size());
    coords.push_back({entry, rng.below(inputs[entry].value().numel())});
  }
  const std::uint64_t drop_seed = opt.seed ^ 0xd509;
  const Build build = [&](Graph& g) {
    Rng drop(drop_seed);
    const ForwardMode mode{true, &drop};
    TokenStates latent = model.encode(g, batch, &plans, mode);
    Var pred = model.decode(g, latent, plans, mode);
    return masked_pixel_loss(g, pred, target, plans).total;
  };
  return check(name, inputs, coords, build, rng);
}

}  // namespace

}  // namespace pixio::inline PIXIO_PRECISION_NS

namespace pixio::PIXIO_PRECISION_NS {

GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  GradcheckReport report;
  report.precision = precision_name();
  report.step = kStep;
  report.floor = kFloor;
  report.tolerance = kTolerance;
  Rng rng = Rng::derive(opt.seed, {0x96adc});
  auto& cases = report.cases;
  const std::size_t b = 2, t = 5, d = 8, heads = 2;

  {
    Var x = random_param({b, t, d}, rng), w = random_param({d, 6}, rng), bias = random_param({6}, rng);
    cases.push_back(check_op("linear", {x, w, bias}, [=](Graph& g) { return linear(g, x, w, bias); }, opt, rng));
  }
  {
    Var x = random_param({b, t, d}, rng), gamma = random_param({d}, rng), beta = random_param({d}, rng);
    cases.push_back(
        check_op("layer_norm", {x, gamma, beta}, [=](Graph& g) { return layer_norm(g, x, gamma, beta); }, opt, rng));
  }
  {
    Var x = random_param({b, t, d}, rng, 2.0);
    cases.push_back(check_op("gelu", {x}, [=](Graph& g) { return gelu(g, x); }, opt, rng));
  }
  {
    Var x = random_param({b, t, d}, rng), y = random_param({b, t, d}, rng);
    cases.push_back(check_op("add", {x, y}, [=](Graph& g) { return add(g, x, y); }, opt, rng));
  }
  {
    Var x = random_param({b, t, d}, rng), table = random_param({t, d}, rng);
    cases.push_back(
        check_op("add_broadcast", {x, table}, [=](Graph& g) { return add_broadcast(g, x, table); }, opt, rng));
  }
  {
    Var x = random_param({b, t, d}, rng);
    cases.push_back(check_op("scale", {x}, [=](Graph& g) { return scale(g, x, real(-1.7)); }, opt, rng));
    cases.push_back(check_op("sum", {x}, [=](Graph& g) { return sum(g, x); }, opt, rng));
    cases.push_back(check_op("mean", {x}, [=](Graph& g) { return mean(g, x); }, opt, rng));
  }
  {
    Var x = random_param({b, t, d}, rng, 3.0);
    cases.push_back(check_op("softmax", {x}, [=](Graph& g) { return softmax(g, x); }, opt, rng));
  }
  {
    Var qkv = random_param({b, t, 3 * d}, rng, 1.5);
    cases.push_back(check_op("attention", {qkv}, [=](Graph& g) { return attention(g, qkv, heads); }, opt, rng));
  }
  {
    Var x = random_param({b, t, d}, rng);
    const AttentionWeights w = random_attention(d, rng);
    auto vars = attention_vars(w);
    vars.insert(vars.begin(), x);
    cases.push_back(check_op("multi_head_self_attention", vars,
                             [=](Graph& g) { return multi_head_self_attention(g, x, w, heads); }, opt, rng));
  }
  {
    Var x = random_param({4, t, d}, rng);
    const std::uint64_t seed = rng.next_u64();
    cases.push_back(check_op("drop_path", {x},
                             [=](Graph& g) {
                               Rng r(seed);
                               return drop_path(g, x, real(0.5), r, true);
                             },
                             opt, rng));
  }
  {
    Var prefix = random_param({3, d}, rng), x = random_param({b, t, d}, rng);
    cases.push_back(
        check_op("prepend_tokens", {prefix, x}, [=](Graph& g) { return prepend_tokens(g, prefix, x); }, opt, rng));
    cases.push_back(check_op("slice_tokens", {x}, [=](Graph& g) { return slice_tokens(g, x, 1, 3); }, opt, rng));
    cases.push_back(check_op("mean_tokens", {x}, [=](Graph& g) { return mean_tokens(g, x, 1, 4); }, opt, rng));
    const std::vector<std::vector<std::size_t>> index = {{4, 0, 2}, {1, 3, 0}};
    cases.push_back(
        check_op("gather_tokens", {x}, [=](Graph& g) { return gather_tokens(g, x, index); }, opt, rng));
    Var fill = random_param({d}, rng);
    cases.push_back(check_op("scatter_tokens", {x, fill},
                             [=](Graph& g) {
                               return scatter_tokens(g, x, {{6, 0, 2, 4, 1}, {3, 5, 7, 0, 2}}, fill, 8);
                             },
                             opt, rng));
  }
  {
    Var a = random_param({b, d}, rng), c = random_param({b, 3}, rng);
    cases.push_back(
        check_op("concat_features", {a, c}, [=](Graph& g) { return concat_features(g, a, c); }, opt, rng));
  }
  {
    ParamStore store;
    Rng init = Rng::derive(opt.seed, {0xb10c});
    init_block(store, "blk", d, 2 * d, init);
    // perturb the deterministic init so norms and biases are not trivially 1 and 0
    for (const auto& e : store.entries()) {
      Var v = e.var;
      for (auto& val : v.mutable_value().storage()) val += static_cast<real>(rng.uniform(-0.2, 0.2));
    }
    const BlockWeights w = bind_block(store, "blk");
    Var x = random_param({b, t, d}, rng);
    std::vector<Var> vars{x};
    for (const auto& e : store.entries()) vars.push_back(e.var);
    const std::uint64_t seed = rng.next_u64();
    cases.push_back(check_op("transformer_block", vars,
                             [=](Graph& g) {
                               Rng r(seed);
                               return transformer_block(g, x, w, heads, real(0.25), &r, true);
                             },
                             opt, rng));
  }
  {
    const std::size_t n = 4, p = 6;
    Var pred = random_param({b, n, p}, rng);
    PatchGrid target;
    target.tokens = random_tensor({b, n, p}, rng);
    target.grid_h = 2;
    target.grid_w = 2;
    target.patch = 1;
    const std::vector<MaskPlan> plans = {plan_from_mask({true, false, true, true}),
                                         plan_from_mask({false, true, false, true})};
    cases.push_back(check_op("masked_pixel_loss", {pred},
                             [=](Graph& g) { return masked_pixel_loss(g, pred, target, plans).total; }, opt, rng));
  }
  {
    Var a = random_param({b, t, d}, rng), c = random_param({b, t, d}, rng);
    cases.push_back(
        check_op("cosine_distance", {a, c}, [=](Graph& g) { return cosine_distance(g, a, c); }, opt, rng));
  }
  {
    ParamStore store;
    const ProjectionHead head = ProjectionHead::create(store, "head", d, 6, opt.seed);
    for (const auto& e : store.entries()) {
      Var v = e.var;
      for (auto& val : v.mutable_value().storage()) val += static_cast<real>(rng.uniform(-0.2, 0.2));
    }
    Var s_cls = random_param({b, 2, d}, rng), s_patch = random_param({b, 4, d}, rng);
    const Var t_cls = Var::constant(random_tensor({b, 2, 6}, rng));
    const Var t_patch = Var::constant(random_tensor({b, 4, 6}, rng));
    std::vector<Var> vars{s_cls, s_patch};
    for (const auto& e : store.entries()) vars.push_back(e.var);
    cases.push_back(check_op("distill_loss", vars,
                             [=](Graph& g) {
                               TokenStates teacher{t_cls, t_patch, TokenLayout::Full};
                               TokenStates student{s_cls, s_patch, TokenLayout::Full};
                               return distill_loss(g, teacher, student, head);
                             },
                             opt, rng));
  }
  if (opt.include_model) {
    ModelConfig small;
    small.input_size = 16;
    small.patch = 4;
    small.enc_dim = 16;
    small.enc_depth = 2;
    small.enc_heads = 2;
    small.dec_dim = 16;
    small.dec_depth = 1;
    small.dec_heads = 2;
    small.n_cls = 2;
    cases.push_back(check_model("vit-2x16 masked pixel loss", small, opt, rng));
    cases.push_back(check_model("pixio-tiny masked pixel loss", ModelConfig{}, opt, rng));
  }

  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace pixio::PIXIO_PRECISION_NS
