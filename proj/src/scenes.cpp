#include <algorithm>
#include <array>
#include <cmath>

#include "pixio/data.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

namespace {

constexpr double kSkyDepth = 12.0;
constexpr double kMinDepth = 1.0;

using Rgb = std::array<double, 3>;

Rgb random_color(Rng& rng, double lo, double hi) { return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)}; }

Rgb mix(const Rgb& a, const Rgb& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

struct Canvas {
  std::size_t size;
  std::vector<Rgb> color;
  std::vector<double> depth;
  explicit Canvas(std::size_t s) : size(s), color(s * s), depth(s * s, kSkyDepth) {}
};

bool inside(SceneClass kind, double dx, double dy, double r) {
  // dx, dy relative to the object's centre; r is the half extent.
  switch (kind) {
    case SceneClass::Discs:
      return dx * dx + dy * dy <= r * r;
    case SceneClass::Boxes:
      return std::abs(dx) <= r && std::abs(dy) <= r;
    case SceneClass::Triangles:
      // apex up, base at dy = r
      return dy <= r && dy >= -r && std::abs(dx) <= (dy + r) * 0.5;
    case SceneClass::Bars:
      return std::abs(dx) <= r && std::abs(dy) <= r * 1.2 && static_cast<int>(std::floor((dx + r) / (r * 0.4))) % 2 == 0;
  }
  return false;
}

}  // namespace

Scene render_scene(std::uint64_t seed, std::size_t size) {
  Rng pick = Rng::derive(seed, {0x5ce7e});
  return render_scene(seed, size, static_cast<int>(pick.below(kSceneClasses)));
}

Scene render_scene(std::uint64_t seed, std::size_t size, int label) {
  if (size < 8) throw ContractError("render_scene: size must be at least 8");
  if (label < 0 || label >= kSceneClasses) throw ContractError("render_scene: label out of range");
  Rng rng = Rng::derive(seed, {0x5ce7e, static_cast<std::uint64_t>(label) + 1});
  const double s = static_cast<double>(size);
  Canvas canvas(size);

  const double horizon = s * rng.uniform(0.3, 0.55);
  const Rgb sky_top = random_color(rng, 0.3, 0.9);
  const Rgb sky_bottom = random_color(rng, 0.5, 1.0);
  const Rgb ground_a = random_color(rng, 0.1, 0.7);
  const Rgb ground_b = mix(ground_a, random_color(rng, 0.0, 1.0), 0.5);
  const double tile = rng.uniform(0.3, 0.9);

  for (std::size_t y = 0; y < size; ++y) {
    const double yc = static_cast<double>(y) + 0.5;
    for (std::size_t x = 0; x < size; ++x) {
      const std::size_t i = y * size + x;
      if (yc <= horizon) {
        canvas.color[i] = mix(sky_top, sky_bottom, yc / horizon);
        canvas.depth[i] = kSkyDepth;
        continue;
      }
      const double z = std::clamp(0.5 * s / (yc - horizon), kMinDepth, kSkyDepth - 1.0);
      const double world_x = (static_cast<double>(x) + 0.5 - s / 2) * z / s * 4.0;
      const bool check = (static_cast<long>(std::floor(world_x / tile)) + static_cast<long>(std::floor(z / tile))) % 2 == 0;
      const double fog = (z - kMinDepth) / (kSkyDepth - kMinDepth);
      canvas.color[i] = mix(check ? ground_a : ground_b, sky_bottom, 0.6 * fog);
      canvas.depth[i] = z;
    }
  }

  const auto kind = static_cast<SceneClass>(label);
  const int objects = 1 + static_cast<int>(rng.below(4));
  struct Placement {
    double cx, base, z, r;
    Rgb color;
  };
  std::vector<Placement> placed;
  for (int k = 0; k < objects; ++k) {
    const double base = rng.uniform(horizon + 2.0, s);
    const double z = std::clamp(0.5 * s / (base - horizon), kMinDepth, kSkyDepth - 1.0);
    const double r = std::clamp(s * 0.22 / z * rng.uniform(0.8, 1.3), 2.0, s * 0.3);
    placed.push_back({rng.uniform(0.0, s), base, z, r, random_color(rng, 0.0, 1.0)});
  }
  // painter's order: far objects first
  std::sort(placed.begin(), placed.end(), [](const Placement& a, const Placement& b) { return a.z > b.z; });
  for (const auto& obj : placed) {
    const double cy = obj.base - obj.r;
    const Rgb shade_lo = mix(obj.color, Rgb{0, 0, 0}, 0.45);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - obj.cx;
        const double dy = static_cast<double>(y) + 0.5 - cy;
        if (!inside(kind, dx, dy, obj.r)) continue;
        const std::size_t i = y * size + x;
        canvas.color[i] = mix(obj.color, shade_lo, std::clamp((dy + obj.r) / (2 * obj.r), 0.0, 1.0));
        canvas.depth[i] = obj.z;
      }
    }
  }

  Scene scene;
  scene.label = label;
  scene.image = Image(size, size);
  scene.depth.resize(size * size);
  for (std::size_t i = 0; i < size * size; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = canvas.color[i][c] * 255.0 + rng.uniform(-3.0, 3.0);
      scene.image.rgb[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
    scene.depth[i] = static_cast<real>(canvas.depth[i]);
  }
  return scene;
}

Image flat_image(std::size_t size, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Image img(size, size);
  for (std::size_t i = 0; i < size * size; ++i) {
    img.rgb[i * 3] = r;
    img.rgb[i * 3 + 1] = g;
    img.rgb[i * 3 + 2] = b;
  }
  return img;
}

Image noise_image(std::uint64_t seed, std::size_t size) {
  Rng rng = Rng::derive(seed, {0x4015e});
  Image img(size, size);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

Corpus synthetic_corpus(std::uint64_t seed, std::size_t count, std::size_t size) {
  Corpus corpus;
  corpus.images.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    corpus.images.push_back(render_scene(hash_string("scene") ^ (seed * 1000003ULL + i), size).image);
    corpus.source_ids.push_back("scene-" + std::to_string(i));
  }
  return corpus;
}

}  // namespace pixio::inline PIXIO_PRECISION_NS
