#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pixio/rng.hpp"
#include "pixio/tensor.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

/// 8-bit RGB image, interleaved, row-major.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t h, std::size_t w) : height(h), width(w), rgb(h * w * 3, 0) {}
  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return rgb[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }
  friend bool operator==(const Image&, const Image&) = default;
};

enum class CorpusFormat { ImageDirectory, PackedBinary, Auto };

struct Corpus {
  std::vector<Image> images;
  std::vector<std::string> source_ids;
  std::vector<std::string> warnings;
  std::size_t size() const { return images.size(); }
};

/// Reads every decodable image under `path` in sorted path order (directory)
/// or every record of a packed file. Unreadable items are skipped with a
/// warning; an empty result throws FormatError.
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format = CorpusFormat::Auto);

// Packed layout: "PXPK", u32 version, u32 height, u32 width, u32 count, then
// count * height * width * 3 bytes. Integers little-endian.
inline constexpr std::uint32_t kPackedVersion = 1;
void write_packed_corpus(const std::filesystem::path& path, const std::vector<Image>& images);

/// One `path<TAB>index` line per item.
void write_corpus_manifest(const std::filesystem::path& path, const Corpus& corpus);
std::vector<std::pair<std::string, std::size_t>> read_corpus_manifest(const std::filesystem::path& path);

std::optional<Image> read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

/// [3, H, W] tensor with values in [0, 1].
Tensor image_to_tensor(const Image& image);
Image tensor_to_image(const Tensor& chw);

/// Bilinear resize of a [3, H, W] region with half-pixel centres.
/// The source region is (top, left, height, width) in pixels.
Tensor resize_bilinear(const Tensor& chw, double top, double left, double height, double width, std::size_t out_h,
                       std::size_t out_w);

struct AugmentConfig {
  double scale_lo = 0.2;
  double scale_hi = 1.0;
  double ratio_lo = 0.75;
  double ratio_hi = 4.0 / 3.0;
  std::size_t output_size = 64;
  bool hflip = false;
  void validate() const;
};

struct CropBox {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  bool fallback = false;
  bool flipped = false;
};

/// Proposes up to ten crops with area fraction in the scale range and aspect
/// ratio in the ratio range; falls back to a ratio-clamped centre crop.
CropBox sample_crop(std::size_t height, std::size_t width, const AugmentConfig& cfg, Rng& rng);
Tensor random_resized_crop(const Image& image, const AugmentConfig& cfg, Rng& rng, CropBox* box = nullptr);
/// Eval transform: centre square crop resized to `size`.
Tensor center_crop_resize(const Image& image, std::size_t size);

struct ImageBatch {
  Tensor data;  // [B, 3, H, W] in [0, 1]
  std::vector<std::string> source_ids;
  std::size_t batch() const { return data.empty() ? 0 : data.dim(0); }
  std::size_t resolution() const { return data.empty() ? 0 : data.dim(2); }
};

ImageBatch stack_images(const std::vector<Tensor>& chw, std::vector<std::string> source_ids);

struct PatchGrid {
  Tensor tokens;  // [B, N, p * p * 3], patch vector ordered (row, col, channel)
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t patch = 0;
  std::size_t count() const { return grid_h * grid_w; }
};

PatchGrid patchify(const ImageBatch& batch, std::size_t patch);
Tensor unpatchify(const PatchGrid& grid);

/// Per-patch mean and standard deviation recorded by normalize_target.
struct PatchStats {
  std::vector<real> mean;  // [B * N]
  std::vector<real> std;   // [B * N]
};

/// Standardizes each patch to zero mean and unit (biased) variance with an
/// eps-guarded denominator.
PatchGrid normalize_target(const PatchGrid& patches, PatchStats* stats = nullptr);

// Procedural scenes: sky, textured ground plane, and a few same-type objects.
// They provide the labelled classification and depth data used by the probes.
enum class SceneClass : int { Discs = 0, Boxes = 1, Triangles = 2, Bars = 3 };
inline constexpr int kSceneClasses = 4;

struct Scene {
  Image image;
  int label = 0;
  std::vector<real> depth;  // per pixel, strictly positive
};

Scene render_scene(std::uint64_t seed, std::size_t size);
Scene render_scene(std::uint64_t seed, std::size_t size, int label);
Image flat_image(std::size_t size, std::uint8_t r, std::uint8_t g, std::uint8_t b);
Image noise_image(std::uint64_t seed, std::size_t size);

/// Corpus of `count` procedural scenes with ids "scene-<i>".
Corpus synthetic_corpus(std::uint64_t seed, std::size_t count, std::size_t size);

}  // namespace pixio::inline PIXIO_PRECISION_NS
