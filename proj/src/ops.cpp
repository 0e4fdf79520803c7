#include "pixio/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pixio::inline PIXIO_PRECISION_NS {

namespace {

using RowMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::Matrix<real, 1, Eigen::Dynamic>>;
using ConstVecMap = Eigen::Map<const Eigen::Matrix<real, 1, Eigen::Dynamic>>;
using Strided = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStrided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

void require_tokens(const Var& x, const char* op) {
  require(x && x.value().rank() == 3, std::string(op) + ": expected [B, T, D], got " +
                                          (x ? shape_str(x.shape()) : std::string("null")));
}

void accumulate(const Var& v, const Tensor& delta) {
  if (!v.requires_grad()) return;
  Tensor& g = v.grad_buffer();
  real* dst = g.data();
  const real* src = delta.data();
  for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
}

}  // namespace

Var linear(Graph& g, const Var& x, const Var& w, const Var& b) {
  require(x && w && w.value().rank() == 2, "linear: weight must be [Din, Dout]");
  const std::size_t din = w.shape()[0];
  const std::size_t dout = w.shape()[1];
  require(x.value().rank() >= 1 && x.value().cols() == din,
          "linear: input " + shape_str(x.shape()) + " does not match weight " + shape_str(w.shape()));
  const bool has_bias = static_cast<bool>(b);
  if (has_bias) require(b.value().rank() == 1 && b.shape()[0] == dout, "linear: bias must be [Dout]");
  const std::size_t rows = x.value().rows();

  Shape out_shape = x.shape();
  out_shape.back() = dout;
  Tensor y(out_shape);
  auto ym = as_matrix(y, rows, dout);
  ym.noalias() = as_matrix(x.value(), rows, din) * as_matrix(w.value(), din, dout);
  if (has_bias) ym.rowwise() += ConstVecMap(b.value().data(), static_cast<Eigen::Index>(dout));

  const bool tracked = g.tracks({&x, &w, &b});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [x, w, b, rows, din, dout, has_bias](const Tensor& dy) mutable {
      auto dym = as_matrix(dy, rows, dout);
      if (x.requires_grad()) {
        as_matrix(x.grad_buffer(), rows, din).noalias() += dym * as_matrix(w.value(), din, dout).transpose();
      }
      if (w.requires_grad()) {
        as_matrix(w.grad_buffer(), din, dout).noalias() += as_matrix(x.value(), rows, din).transpose() * dym;
      }
      if (has_bias && b.requires_grad()) {
        VecMap(b.grad_buffer().data(), static_cast<Eigen::Index>(dout)) += dym.colwise().sum();
      }
    };
  }
  return g.record("linear", std::move(y), tracked, std::move(fn));
}

Var layer_norm(Graph& g, const Var& x, const Var& gamma, const Var& beta, real eps) {
  require(x && gamma && beta, "layer_norm: null input");
  require(eps > 0, "layer_norm: eps must be positive");
  const std::size_t d = x.value().cols();
  require(d >= 1, "layer_norm: empty feature axis");
  require(gamma.value().numel() == d && beta.value().numel() == d, "layer_norm: affine params must be [D]");
  const std::size_t rows = x.value().rows();
  const real* xs = x.value().data();
  const real* gs = gamma.value().data();
  const real* bs = beta.value().data();

  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<real> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const real* row = xs + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double c = row[i] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    rstd[r] = static_cast<real>(inv);
    real* xh = xhat.data() + r * d;
    real* out = y.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      xh[i] = static_cast<real>((row[i] - mu) * inv);
      out[i] = xh[i] * gs[i] + bs[i];
    }
  }

  const bool tracked = g.tracks({&x, &gamma, &beta});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), rows, d](const Tensor& dy) mutable {
      const real* gs = gamma.value().data();
      real* dgamma = gamma.requires_grad() ? gamma.grad_buffer().data() : nullptr;
      real* dbeta = beta.requires_grad() ? beta.grad_buffer().data() : nullptr;
      real* dx = x.requires_grad() ? x.grad_buffer().data() : nullptr;
      for (std::size_t r = 0; r < rows; ++r) {
        const real* dyr = dy.data() + r * d;
        const real* xh = xhat.data() + r * d;
        double mean_dxh = 0.0;
        double mean_dxh_xh = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          const double dxh = static_cast<double>(dyr[i]) * gs[i];
          mean_dxh += dxh;
          mean_dxh_xh += dxh * xh[i];
          if (dgamma) dgamma[i] += dyr[i] * xh[i];
          if (dbeta) dbeta[i] += dyr[i];
        }
        mean_dxh /= static_cast<double>(d);
        mean_dxh_xh /= static_cast<double>(d);
        if (dx) {
          real* dxr = dx + r * d;
          for (std::size_t i = 0; i < d; ++i) {
            const double dxh = static_cast<double>(dyr[i]) * gs[i];
            dxr[i] += static_cast<real>(rstd[r] * (dxh - mean_dxh - xh[i] * mean_dxh_xh));
          }
        }
      }
    };
  }
  return g.record("layer_norm", std::move(y), tracked, std::move(fn));
}

Var gelu(Graph& g, const Var& x) {
  require(static_cast<bool>(x), "gelu: null input");
  const real inv_sqrt2 = static_cast<real>(1.0 / std::numbers::sqrt2);
  Tensor y(x.shape());
  const real* xs = x.value().data();
  for (std::size_t i = 0; i < y.numel(); ++i) {
    y[i] = real(0.5) * xs[i] * (real(1) + std::erf(xs[i] * inv_sqrt2));
  }
  const bool tracked = g.tracks({&x});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [x, inv_sqrt2](const Tensor& dy) mutable {
      const real inv_sqrt_2pi = static_cast<real>(1.0 / std::sqrt(2.0 * std::numbers::pi));
      const real* xs = x.value().data();
      real* dx = x.grad_buffer().data();
      for (std::size_t i = 0; i < dy.numel(); ++i) {
        const real cdf = real(0.5) * (real(1) + std::erf(xs[i] * inv_sqrt2));
        const real pdf = inv_sqrt_2pi * std::exp(real(-0.5) * xs[i] * xs[i]);
        dx[i] += dy[i] * (cdf + xs[i] * pdf);
      }
    };
  }
  return g.record("gelu", std::move(y), tracked, std::move(fn));
}

Var add(Graph& g, const Var& a, const Var& b) {
  require(a && b && a.value().same_shape(b.value()),
          "add: shape mismatch " + (a ? shape_str(a.shape()) : "") + " vs " + (b ? shape_str(b.shape()) : ""));
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += b.value()[i];
  const bool tracked = g.tracks({&a, &b});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [a, b](const Tensor& dy) {
      accumulate(a, dy);
      accumulate(b, dy);
    };
  }
  return g.record("add", std::move(y), tracked, std::move(fn));
}

Var add_broadcast(Graph& g, const Var& x, const Var& table) {
  require_tokens(x, "add_broadcast");
  const std::size_t batch = x.shape()[0];
  const std::size_t per = x.shape()[1] * x.shape()[2];
  require(table && table.value().rank() == 2 && table.shape()[0] == x.shape()[1] && table.shape()[1] == x.shape()[2],
          "add_broadcast: table " + (table ? shape_str(table.shape()) : "") + " does not match " + shape_str(x.shape()));
  Tensor y = x.value();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < per; ++i) y[b * per + i] += table.value()[i];
  }
  const bool tracked = g.tracks({&x, &table});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [x, table, batch, per](const Tensor& dy) mutable {
      accumulate(x, dy);
      if (table.requires_grad()) {
        real* dt = table.grad_buffer().data();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t i = 0; i < per; ++i) dt[i] += dy[b * per + i];
        }
      }
    };
  }
  return g.record("add_broadcast", std::move(y), tracked, std::move(fn));
}

Var scale(Graph& g, const Var& x, real factor) {
  require(static_cast<bool>(x), "scale: null input");
  Tensor y = x.value();
  for (auto& v : y.values()) v *= factor;
  const bool tracked = g.tracks({&x});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [x, factor](const Tensor& dy) mutable {
      real* dx = x.grad_buffer().data();
      for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] += factor * dy[i];
    };
  }
  return g.record("scale", std::move(y), tracked, std::move(fn));
}

Var sum(Graph& g, const Var& x) {
  require(static_cast<bool>(x), "sum: null input");
  double acc = 0.0;
  for (real v : x.value().values()) acc += v;
  const bool tracked = g.tracks({&x});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [x](const Tensor& dy) mutable {
      for (auto& v : x.grad_buffer().values()) v += dy[0];
    };
  }
  return g.record("sum", Tensor::scalar(static_cast<real>(acc)), tracked, std::move(fn));
}

Var mean(Graph& g, const Var& x) {
  require(x && x.value().numel() > 0, "mean: empty input");
  return scale(g, sum(g, x), real(1) / static_cast<real>(x.value().numel()));
}

Var softmax(Graph& g, const Var& x) {
  require(x && x.value().cols() > 0, "softmax: empty feature axis");
  const std::size_t rows = x.value().rows();
  const std::size_t d = x.value().cols();
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const real* in = x.value().data() + r * d;
    real* out = y.data() + r * d;
    const real mx = *std::max_element(in, in + d);
    double z = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      out[i] = std::exp(in[i] - mx);
      z += out[i];
    }
    for (std::size_t i = 0; i < d; ++i) out[i] = static_cast<real>(out[i] / z);
  }
  const bool tracked = g.tracks({&x});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [x, probs = y, rows, d](const Tensor& dy) mutable {
      real* dx = x.grad_buffer().data();
      for (std::size_t r = 0; r < rows; ++r) {
        const real* p = probs.data() + r * d;
        const real* gy = dy.data() + r * d;
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += static_cast<double>(p[i]) * gy[i];
        for (std::size_t i = 0; i < d; ++i) dx[r * d + i] += static_cast<real>(p[i] * (gy[i] - dot));
      }
    };
  }
  return g.record("softmax", std::move(y), tracked, std::move(fn));
}

Var attention(Graph& g, const Var& qkv, std::size_t heads, Tensor* probs_out) {
  require_tokens(qkv, "attention");
  const std::size_t batch = qkv.shape()[0];
  const std::size_t tokens = qkv.shape()[1];
  require(qkv.shape()[2] % 3 == 0, "attention: packed width must be 3D");
  const std::size_t dim = qkv.shape()[2] / 3;
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention: width " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  const std::size_t hd = dim / heads;
  const real scale_factor = static_cast<real>(1.0 / std::sqrt(static_cast<double>(hd)));
  const auto T = static_cast<Eigen::Index>(tokens);
  const auto HD = static_cast<Eigen::Index>(hd);
  const Eigen::OuterStride<> in_stride(static_cast<Eigen::Index>(3 * dim));
  const Eigen::OuterStride<> out_stride(static_cast<Eigen::Index>(dim));

  Tensor out(Shape{batch, tokens, dim});
  Tensor probs(Shape{batch, heads, tokens, tokens});
  for (std::size_t b = 0; b < batch; ++b) {
    const real* base = qkv.value().data() + b * tokens * 3 * dim;
    for (std::size_t h = 0; h < heads; ++h) {
      ConstStrided q(base + h * hd, T, HD, in_stride);
      ConstStrided k(base + dim + h * hd, T, HD, in_stride);
      ConstStrided v(base + 2 * dim + h * hd, T, HD, in_stride);
      MatMap p(probs.data() + (b * heads + h) * tokens * tokens, T, T);
      p.noalias() = (q * k.transpose()) * scale_factor;
      for (Eigen::Index r = 0; r < T; ++r) {
        auto row = p.row(r);
        row.array() = (row.array() - row.maxCoeff()).exp();
        row /= row.sum();
      }
      Strided o(out.data() + b * tokens * dim + h * hd, T, HD, out_stride);
      o.noalias() = p * v;
    }
  }
  if (probs_out) *probs_out = probs;

  const bool tracked = g.tracks({&qkv});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [qkv, probs = std::move(probs), batch, heads, tokens, dim, hd, scale_factor](const Tensor& dy) mutable {
      const auto T = static_cast<Eigen::Index>(tokens);
      const auto HD = static_cast<Eigen::Index>(hd);
      const Eigen::OuterStride<> in_stride(static_cast<Eigen::Index>(3 * dim));
      const Eigen::OuterStride<> out_stride(static_cast<Eigen::Index>(dim));
      Tensor& dqkv = qkv.grad_buffer();
      RowMat dp(T, T);
      RowMat ds(T, T);
      for (std::size_t b = 0; b < batch; ++b) {
        const real* base = qkv.value().data() + b * tokens * 3 * dim;
        real* gbase = dqkv.data() + b * tokens * 3 * dim;
        for (std::size_t h = 0; h < heads; ++h) {
          ConstStrided q(base + h * hd, T, HD, in_stride);
          ConstStrided k(base + dim + h * hd, T, HD, in_stride);
          ConstStrided v(base + 2 * dim + h * hd, T, HD, in_stride);
          Strided dq(gbase + h * hd, T, HD, in_stride);
          Strided dk(gbase + dim + h * hd, T, HD, in_stride);
          Strided dv(gbase + 2 * dim + h * hd, T, HD, in_stride);
          ConstMatMap p(probs.data() + (b * heads + h) * tokens * tokens, T, T);
          ConstStrided dout(dy.data() + b * tokens * dim + h * hd, T, HD, out_stride);
          dv.noalias() += p.transpose() * dout;
          dp.noalias() = dout * v.transpose();
          for (Eigen::Index r = 0; r < T; ++r) {
            const real dot = p.row(r).dot(dp.row(r));
            ds.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
          }
          dq.noalias() += (ds * k) * scale_factor;
          dk.noalias() += (ds.transpose() * q) * scale_factor;
        }
      }
    };
  }
  return g.record("attention", std::move(out), tracked, std::move(fn));
}

Var multi_head_self_attention(Graph& g, const Var& x, const AttentionWeights& w, std::size_t heads, Tensor* probs) {
  require_tokens(x, "multi_head_self_attention");
  const std::size_t dim = x.shape()[2];
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention: dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  Var qkv = linear(g, x, w.qkv_w, w.qkv_b);
  Var mixed = attention(g, qkv, heads, probs);
  return linear(g, mixed, w.proj_w, w.proj_b);
}

Var drop_path(Graph& g, const Var& x, real rate, Rng& rng, bool training) {
  require(static_cast<bool>(x), "drop_path: null input");
  if (!(rate >= 0) || rate >= 1) throw ConfigError("drop_path: rate must be in [0, 1)");
  if (!training || rate == 0) return x;
  const std::size_t batch = x.shape().empty() ? 1 : x.shape()[0];
  const std::size_t per = x.value().numel() / std::max<std::size_t>(batch, 1);
  std::vector<real> factor(batch);
  const real keep_scale = real(1) / (real(1) - rate);
  for (auto& f : factor) f = rng.uniform() < static_cast<double>(rate) ? real(0) : keep_scale;
  Tensor y = x.value();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < per; ++i) y[b * per + i] *= factor[b];
  }
  const bool tracked = g.tracks({&x});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [x, factor = std::move(factor), per](const Tensor& dy) mutable {
      real* dx = x.grad_buffer().data();
      for (std::size_t b = 0; b < factor.size(); ++b) {
        for (std::size_t i = 0; i < per; ++i) dx[b * per + i] += factor[b] * dy[b * per + i];
      }
    };
  }
  return g.record("drop_path", std::move(y), tracked, std::move(fn));
}

Var prepend_tokens(Graph& g, const Var& prefix, const Var& x) {
  require_tokens(x, "prepend_tokens");
  require(static_cast<bool>(prefix), "prepend_tokens: null prefix");
  const std::size_t batch = x.shape()[0];
  const std::size_t m = x.shape()[1];
  const std::size_t d = x.shape()[2];
  const bool shared = prefix.value().rank() == 2;
  require((shared && prefix.shape()[1] == d) ||
              (prefix.value().rank() == 3 && prefix.shape()[0] == batch && prefix.shape()[2] == d),
          "prepend_tokens: prefix " + shape_str(prefix.shape()) + " incompatible with " + shape_str(x.shape()));
  const std::size_t c = shared ? prefix.shape()[0] : prefix.shape()[1];
  Tensor y(Shape{batch, c + m, d});
  for (std::size_t b = 0; b < batch; ++b) {
    const real* pre = prefix.value().data() + (shared ? 0 : b * c * d);
    std::copy(pre, pre + c * d, y.data() + b * (c + m) * d);
    const real* src = x.value().data() + b * m * d;
    std::copy(src, src + m * d, y.data() + (b * (c + m) + c) * d);
  }
  const bool tracked = g.tracks({&prefix, &x});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [prefix, x, shared, batch, c, m, d](const Tensor& dy) mutable {
      if (prefix.requires_grad()) {
        real* dp = prefix.grad_buffer().data();
        for (std::size_t b = 0; b < batch; ++b) {
          const real* src = dy.data() + b * (c + m) * d;
          real* dst = dp + (shared ? 0 : b * c * d);
          for (std::size_t i = 0; i < c * d; ++i) dst[i] += src[i];
        }
      }
      if (x.requires_grad()) {
        real* dx = x.grad_buffer().data();
        for (std::size_t b = 0; b < batch; ++b) {
          const real* src = dy.data() + (b * (c + m) + c) * d;
          real* dst = dx + b * m * d;
          for (std::size_t i = 0; i < m * d; ++i) dst[i] += src[i];
        }
      }
    };
  }
  return g.record("prepend_tokens", std::move(y), tracked, std::move(fn));
}

Var slice_tokens(Graph& g, const Var& x, std::size_t start, std::size_t count) {
  require_tokens(x, "slice_tokens");
  const std::size_t batch = x.shape()[0];
  const std::size_t t = x.shape()[1];
  const std::size_t d = x.shape()[2];
  require(start + count <= t, "slice_tokens: range exceeds token count");
  Tensor y(Shape{batch, count, d});
  for (std::size_t b = 0; b < batch; ++b) {
    const real* src = x.value().data() + (b * t + start) * d;
    std::copy(src, src + count * d, y.data() + b * count * d);
  }
  const bool tracked = g.tracks({&x});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [x, batch, t, d, start, count](const Tensor& dy) mutable {
      real* dx = x.grad_buffer().data();
      for (std::size_t b = 0; b < batch; ++b) {
        real* dst = dx + (b * t + start) * d;
        const real* src = dy.data() + b * count * d;
        for (std::size_t i = 0; i < count * d; ++i) dst[i] += src[i];
      }
    };
  }
  return g.record("slice_tokens", std::move(y), tracked, std::move(fn));
}

Var gather_tokens(Graph& g, const Var& x, const std::vector<std::vector<std::size_t>>& index) {
  require_tokens(x, "gather_tokens");
  const std::size_t batch = x.shape()[0];
  const std::size_t t = x.shape()[1];
  const std::size_t d = x.shape()[2];
  require(index.size() == batch, "gather_tokens: one index list per sample required");
  const std::size_t m = batch ? index[0].size() : 0;
  for (const auto& row : index) {
    require(row.size() == m, "gather_tokens: ragged index lists");
    for (auto i : row) require(i < t, "gather_tokens: index out of range");
  }
  Tensor y(Shape{batch, m, d});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < m; ++j) {
      const real* src = x.value().data() + (b * t + index[b][j]) * d;
      std::copy(src, src + d, y.data() + (b * m + j) * d);
    }
  }
  const bool tracked = g.tracks({&x});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [x, index, t, m, d](const Tensor& dy) mutable {
      real* dx = x.grad_buffer().data();
      for (std::size_t b = 0; b < index.size(); ++b) {
        for (std::size_t j = 0; j < m; ++j) {
          real* dst = dx + (b * t + index[b][j]) * d;
          const real* src = dy.data() + (b * m + j) * d;
          for (std::size_t i = 0; i < d; ++i) dst[i] += src[i];
        }
      }
    };
  }
  return g.record("gather_tokens", std::move(y), tracked, std::move(fn));
}

Var scatter_tokens(Graph& g, const Var& x, const std::vector<std::vector<std::size_t>>& index, const Var& fill,
                   std::size_t total) {
  require_tokens(x, "scatter_tokens");
  const std::size_t batch = x.shape()[0];
  const std::size_t m = x.shape()[1];
  const std::size_t d = x.shape()[2];
  require(index.size() == batch, "scatter_tokens: one index list per sample required");
  require(fill && fill.value().numel() == d, "scatter_tokens: fill token must be [D]");
  std::vector<std::vector<char>> filled(batch, std::vector<char>(total, 1));
  for (std::size_t b = 0; b < batch; ++b) {
    require(index[b].size() == m, "scatter_tokens: index length does not match visible tokens");
    for (auto i : index[b]) {
      require(i < total, "scatter_tokens: index out of range");
      require(filled[b][i] == 1, "scatter_tokens: duplicate index");
      filled[b][i] = 0;
    }
  }
  Tensor y(Shape{batch, total, d});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t s = 0; s < total; ++s) {
      if (filled[b][s]) std::copy(fill.value().data(), fill.value().data() + d, y.data() + (b * total + s) * d);
    }
    for (std::size_t j = 0; j < m; ++j) {
      const real* src = x.value().data() + (b * m + j) * d;
      std::copy(src, src + d, y.data() + (b * total + index[b][j]) * d);
    }
  }
  const bool tracked = g.tracks({&x, &fill});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [x, fill, index, filled = std::move(filled), total, m, d](const Tensor& dy) mutable {
      if (x.requires_grad()) {
        real* dx = x.grad_buffer().data();
        for (std::size_t b = 0; b < index.size(); ++b) {
          for (std::size_t j = 0; j < m; ++j) {
            const real* src = dy.data() + (b * total + index[b][j]) * d;
            real* dst = dx + (b * m + j) * d;
            for (std::size_t i = 0; i < d; ++i) dst[i] += src[i];
          }
        }
      }
      if (fill.requires_grad()) {
        real* df = fill.grad_buffer().data();
        for (std::size_t b = 0; b < filled.size(); ++b) {
          for (std::size_t s = 0; s < total; ++s) {
            if (!filled[b][s]) continue;
            const real* src = dy.data() + (b * total + s) * d;
            for (std::size_t i = 0; i < d; ++i) df[i] += src[i];
          }
        }
      }
    };
  }
  return g.record("scatter_tokens", std::move(y), tracked, std::move(fn));
}

Var mean_tokens(Graph& g, const Var& x, std::size_t start, std::size_t count) {
  require_tokens(x, "mean_tokens");
  require(count > 0, "mean_tokens: empty range");
  const std::size_t batch = x.shape()[0];
  const std::size_t t = x.shape()[1];
  const std::size_t d = x.shape()[2];
  require(start + count <= t, "mean_tokens: range exceeds token count");
  Tensor y(Shape{batch, d});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t d0 = 0; d0 < d; ++d0) {
      double acc = 0.0;
      for (std::size_t j = start; j < start + count; ++j) acc += x.value()[(b * t + j) * d + d0];
      y[b * d + d0] = static_cast<real>(acc / static_cast<double>(count));
    }
  }
  const bool tracked = g.tracks({&x});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [x, batch, t, d, start, count](const Tensor& dy) mutable {
      real* dx = x.grad_buffer().data();
      const real inv = real(1) / static_cast<real>(count);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = start; j < start + count; ++j) {
          for (std::size_t d0 = 0; d0 < d; ++d0) dx[(b * t + j) * d + d0] += dy[b * d + d0] * inv;
        }
      }
    };
  }
  return g.record("mean_tokens", std::move(y), tracked, std::move(fn));
}

Var concat_features(Graph& g, const Var& a, const Var& b) {
  require(a && b && a.value().rank() == 2 && b.value().rank() == 2 && a.shape()[0] == b.shape()[0],
          "concat_features: expected [B, D1] and [B, D2]");
  const std::size_t batch = a.shape()[0];
  const std::size_t da = a.shape()[1];
  const std::size_t db = b.shape()[1];
  Tensor y(Shape{batch, da + db});
  for (std::size_t r = 0; r < batch; ++r) {
    std::copy(a.value().data() + r * da, a.value().data() + (r + 1) * da, y.data() + r * (da + db));
    std::copy(b.value().data() + r * db, b.value().data() + (r + 1) * db, y.data() + r * (da + db) + da);
  }
  const bool tracked = g.tracks({&a, &b});
  Graph::BackwardFn fn;
  if (tracked) {
    fn = [a, b, batch, da, db](const Tensor& dy) mutable {
      for (std::size_t r = 0; r < batch; ++r) {
        if (a.requires_grad()) {
          for (std::size_t i = 0; i < da; ++i) a.grad_buffer()[r * da + i] += dy[r * (da + db) + i];
        }
        if (b.requires_grad()) {
          for (std::size_t i = 0; i < db; ++i) b.grad_buffer()[r * db + i] += dy[r * (da + db) + da + i];
        }
      }
    };
  }
  return g.record("concat_features", std::move(y), tracked, std::move(fn));
}

}  // namespace pixio::inline PIXIO_PRECISION_NS
