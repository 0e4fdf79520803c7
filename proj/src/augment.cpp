#include <algorithm>
#include <cmath>

#include "pixio/data.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

namespace {
constexpr int kCropAttempts = 10;
}

Tensor image_to_tensor(const Image& image) {
  Tensor t(Shape{3, image.height, image.width});
  const std::size_t plane = image.height * image.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) t[c * plane + i] = static_cast<real>(image.rgb[i * 3 + c]) / real(255);
  }
  return t;
}

Image tensor_to_image(const Tensor& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) throw ContractError("tensor_to_image: expected [3, H, W]");
  Image img(chw.dim(1), chw.dim(2));
  const std::size_t plane = img.height * img.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(static_cast<double>(chw[c * plane + i]), 0.0, 1.0);
      img.rgb[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return img;
}

Tensor resize_bilinear(const Tensor& chw, double top, double left, double height, double width, std::size_t out_h,
                       std::size_t out_w) {
  if (chw.rank() != 3) throw ContractError("resize_bilinear: expected [C, H, W]");
  const std::size_t channels = chw.dim(0);
  const std::size_t in_h = chw.dim(1);
  const std::size_t in_w = chw.dim(2);
  Tensor out(Shape{channels, out_h, out_w});
  const double sy = height / static_cast<double>(out_h);
  const double sx = width / static_cast<double>(out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp(top + (static_cast<double>(oy) + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, in_h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double fx =
          std::clamp(left + (static_cast<double>(ox) + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, in_w - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < channels; ++c) {
        const real* p = chw.data() + c * in_h * in_w;
        const double top_row = p[y0 * in_w + x0] * (1.0 - wx) + p[y0 * in_w + x1] * wx;
        const double bottom_row = p[y1 * in_w + x0] * (1.0 - wx) + p[y1 * in_w + x1] * wx;
        out[(c * out_h + oy) * out_w + ox] = static_cast<real>(top_row * (1.0 - wy) + bottom_row * wy);
      }
    }
  }
  return out;
}

void AugmentConfig::validate() const {
  if (!(scale_lo > 0 && scale_lo <= scale_hi && scale_hi <= 1)) throw ConfigError("crop scale must satisfy 0 < lo <= hi <= 1");
  if (!(ratio_lo > 0 && ratio_lo <= ratio_hi)) throw ConfigError("crop ratio must satisfy 0 < lo <= hi");
  if (output_size == 0) throw ConfigError("crop output size must be positive");
}

CropBox sample_crop(std::size_t height, std::size_t width, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  if (height == 0 || width == 0) throw ContractError("sample_crop: empty image");
  const double area = static_cast<double>(height * width);
  const double log_lo = std::log(cfg.ratio_lo);
  const double log_hi = std::log(cfg.ratio_hi);
  CropBox box;
  for (int attempt = 0; attempt < kCropAttempts; ++attempt) {
    const double target = area * rng.uniform(cfg.scale_lo, cfg.scale_hi);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    const auto w = static_cast<long>(std::lround(std::sqrt(target * aspect)));
    const auto h = static_cast<long>(std::lround(std::sqrt(target / aspect)));
    if (w > 0 && h > 0 && static_cast<std::size_t>(w) <= width && static_cast<std::size_t>(h) <= height) {
      box.height = static_cast<std::size_t>(h);
      box.width = static_cast<std::size_t>(w);
      box.top = static_cast<std::size_t>(rng.below(height - box.height + 1));
      box.left = static_cast<std::size_t>(rng.below(width - box.width + 1));
      return box;
    }
  }
  const double in_ratio = static_cast<double>(width) / static_cast<double>(height);
  box.width = width;
  box.height = height;
  if (in_ratio < cfg.ratio_lo) {
    box.height = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(width / cfg.ratio_lo)), 1, height);
  } else if (in_ratio > cfg.ratio_hi) {
    box.width = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(height * cfg.ratio_hi)), 1, width);
  }
  box.top = (height - box.height) / 2;
  box.left = (width - box.width) / 2;
  box.fallback = true;
  return box;
}

Tensor random_resized_crop(const Image& image, const AugmentConfig& cfg, Rng& rng, CropBox* box_out) {
  CropBox box = sample_crop(image.height, image.width, cfg, rng);
  if (cfg.hflip) box.flipped = rng.bernoulli(0.5);
  Tensor out = resize_bilinear(image_to_tensor(image), static_cast<double>(box.top), static_cast<double>(box.left),
                               static_cast<double>(box.height), static_cast<double>(box.width), cfg.output_size,
                               cfg.output_size);
  if (box.flipped) {
    const std::size_t s = cfg.output_size;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < s; ++y) {
        real* row = out.data() + (c * s + y) * s;
        std::reverse(row, row + s);
      }
    }
  }
  if (box_out) *box_out = box;
  return out;
}

Tensor center_crop_resize(const Image& image, std::size_t size) {
  const std::size_t side = std::min(image.height, image.width);
  const double top = static_cast<double>((image.height - side) / 2);
  const double left = static_cast<double>((image.width - side) / 2);
  return resize_bilinear(image_to_tensor(image), top, left, static_cast<double>(side), static_cast<double>(side), size,
                         size);
}

ImageBatch stack_images(const std::vector<Tensor>& chw, std::vector<std::string> source_ids) {
  if (chw.empty()) throw ContractError("stack_images: empty batch");
  const Shape& s = chw.front().shape();
  if (s.size() != 3 || s[0] != 3 || s[1] != s[2]) throw ContractError("stack_images: images must be square [3, S, S]");
  ImageBatch batch;
  batch.data = Tensor(Shape{chw.size(), 3, s[1], s[2]});
  const std::size_t per = chw.front().numel();
  for (std::size_t i = 0; i < chw.size(); ++i) {
    if (chw[i].shape() != s) throw ContractError("stack_images: mixed resolutions");
    std::copy(chw[i].data(), chw[i].data() + per, batch.data.data() + i * per);
  }
  batch.source_ids = std::move(source_ids);
  batch.source_ids.resize(chw.size());
  return batch;
}

}  // namespace pixio::inline PIXIO_PRECISION_NS
