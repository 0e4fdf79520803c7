#include <cmath>

#include "pixio/data.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

PatchGrid patchify(const ImageBatch& batch, std::size_t patch) {
  const Tensor& x = batch.data;
  if (x.rank() != 4 || x.dim(1) != 3) throw ContractError("patchify: expected [B, 3, H, W]");
  const std::size_t b_count = x.dim(0);
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw ConfigError("patchify: resolution " + std::to_string(h) + "x" + std::to_string(w) +
                      " not divisible by patch size " + std::to_string(patch));
  }
  PatchGrid grid;
  grid.grid_h = h / patch;
  grid.grid_w = w / patch;
  grid.patch = patch;
  const std::size_t n = grid.count();
  const std::size_t k = patch * patch * 3;
  grid.tokens = Tensor(Shape{b_count, n, k});
  for (std::size_t b = 0; b < b_count; ++b) {
    for (std::size_t gy = 0; gy < grid.grid_h; ++gy) {
      for (std::size_t gx = 0; gx < grid.grid_w; ++gx) {
        real* dst = grid.tokens.data() + (b * n + gy * grid.grid_w + gx) * k;
        for (std::size_t py = 0; py < patch; ++py) {
          for (std::size_t px = 0; px < patch; ++px) {
            for (std::size_t c = 0; c < 3; ++c) {
              *dst++ = x[((b * 3 + c) * h + gy * patch + py) * w + gx * patch + px];
            }
          }
        }
      }
    }
  }
  return grid;
}

Tensor unpatchify(const PatchGrid& grid) {
  const Tensor& t = grid.tokens;
  const std::size_t p = grid.patch;
  if (t.rank() != 3 || t.dim(1) != grid.count() || t.dim(2) != p * p * 3) {
    throw ContractError("unpatchify: tokens " + shape_str(t.shape()) + " inconsistent with grid");
  }
  const std::size_t b_count = t.dim(0);
  const std::size_t h = grid.grid_h * p;
  const std::size_t w = grid.grid_w * p;
  const std::size_t n = grid.count();
  const std::size_t k = p * p * 3;
  Tensor x(Shape{b_count, 3, h, w});
  for (std::size_t b = 0; b < b_count; ++b) {
    for (std::size_t gy = 0; gy < grid.grid_h; ++gy) {
      for (std::size_t gx = 0; gx < grid.grid_w; ++gx) {
        const real* src = t.data() + (b * n + gy * grid.grid_w + gx) * k;
        for (std::size_t py = 0; py < p; ++py) {
          for (std::size_t px = 0; px < p; ++px) {
            for (std::size_t c = 0; c < 3; ++c) x[((b * 3 + c) * h + gy * p + py) * w + gx * p + px] = *src++;
          }
        }
      }
    }
  }
  return x;
}

PatchGrid normalize_target(const PatchGrid& patches, PatchStats* stats) {
  PatchGrid out = patches;
  const std::size_t k = patches.tokens.cols();
  const std::size_t rows = patches.tokens.rows();
  if (stats) {
    stats->mean.assign(rows, real(0));
    stats->std.assign(rows, real(0));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    real* v = out.tokens.data() + r * k;
    double mu = 0.0;
    for (std::size_t i = 0; i < k; ++i) mu += v[i];
    mu /= static_cast<double>(k);
    double var = 0.0;
    for (std::size_t i = 0; i < k; ++i) var += (v[i] - mu) * (v[i] - mu);
    var /= static_cast<double>(k);
    const double sd = std::sqrt(var + 1e-6);
    for (std::size_t i = 0; i < k; ++i) v[i] = static_cast<real>((v[i] - mu) / sd);
    if (stats) {
      stats->mean[r] = static_cast<real>(mu);
      stats->std[r] = static_cast<real>(sd);
    }
  }
  return out;
}

}  // namespace pixio::inline PIXIO_PRECISION_NS
