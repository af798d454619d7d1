// SPDX-License-Identifier: Apache-2.0
#include "gesture/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "gesture/error.hpp"
#include "gesture/png_io.hpp"
#include "gesture/rng.hpp"

namespace gesture::dataset {

namespace {

using Rgb = std::array<double, 3>;

// Chroma of every colour here, with noise, stays outside Cb [77,127] x Cr [133,173].
constexpr Rgb kBackgrounds[] = {
    {70, 100, 170},  // blue
    {70, 150, 80},   // green
    {90, 90, 110},   // slate
    {110, 60, 140},  // purple
    {30, 90, 100},   // teal
};
constexpr Rgb kSkinLight{224, 172, 140};
constexpr Rgb kSkinDark{170, 120, 90};

struct Capsule {
  double ax, ay, bx, by, radius;

  bool contains(double x, double y) const {
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((x - ax) * dx + (y - ay) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double px = ax + t * dx - x, py = ay + t * dy - y;
    return px * px + py * py <= radius * radius;
  }
};

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0)); }

}  // namespace

std::vector<std::string> gesture_class_names(int n) {
  static const char* kNames[] = {"zero", "one", "two", "three", "four", "five"};
  if (n < 1 || n > 6) throw ContractViolation("gesture classes must be in [1, 6], got " + std::to_string(n));
  return {kNames, kNames + n};
}

SyntheticSample gen_synthetic(const SyntheticGestureSpec& spec, std::uint64_t seed) {
  if (spec.finger_count < 0 || spec.finger_count > 5)
    throw ContractViolation("finger_count must be in [0, 5], got " + std::to_string(spec.finger_count));
  if (spec.canvas_w < 32 || spec.canvas_h < 32)
    throw ContractViolation("canvas must be at least 32x32");
  const int style = static_cast<int>(spec.background);
  if (style < 0 || style >= kBackgroundStyles) throw ContractViolation("unknown background style");

  Rng rng(seed);
  const int W = spec.canvas_w, H = spec.canvas_h;
  const double base = std::min(W, H) / 96.0;
  const double scale = base * (1.0 + rng.uniform(-spec.scale_frac, spec.scale_frac));
  const double theta = rng.uniform(-spec.rotation_deg, spec.rotation_deg) * std::numbers::pi / 180.0;
  const double pcx = W * 0.5 + rng.uniform(-spec.translation_frac, spec.translation_frac) * W;
  const double pcy = H * 0.6 + rng.uniform(-spec.translation_frac, spec.translation_frac) * H;

  // Hand geometry in an upright frame centred on the palm.
  const double palm_a = 14.0 * scale, palm_b = 16.0 * scale;
  std::vector<Capsule> fingers;
  const int k = spec.finger_count;
  for (int i = 0; i < k; ++i) {
    const double spread = k == 1 ? 0.0 : -48.0 + 96.0 * i / (k - 1);
    const double ang = spread * std::numbers::pi / 180.0;
    const double length = (19.0 - 4.0 * std::abs(spread) / 48.0) * scale;
    const double dx = std::sin(ang), dy = -std::cos(ang);
    const double start = 0.5 * palm_b, end = palm_b + length;
    fingers.push_back({dx * start, dy * start, dx * end, dy * end, 3.6 * scale});
  }

  const double tone = rng.uniform();
  const double brightness = rng.uniform(0.88, 1.08);
  Rgb skin;
  for (int c = 0; c < 3; ++c) skin[c] = (kSkinLight[c] * (1 - tone) + kSkinDark[c] * tone) * brightness;

  const Rgb bg0 = kBackgrounds[rng.below(std::size(kBackgrounds))];
  const Rgb bg1 = kBackgrounds[rng.below(std::size(kBackgrounds))];

  SyntheticSample out;
  out.image = imaging::ImageU8(W, H, 3);
  out.truth = imaging::BitMask(W, H);

  const double ct = std::cos(theta), st = std::sin(theta);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      // Rotate the pixel centre into the upright hand frame.
      const double rx = x + 0.5 - pcx, ry = y + 0.5 - pcy;
      const double ux = ct * rx + st * ry, uy = -st * rx + ct * ry;
      bool hand = (ux * ux) / (palm_a * palm_a) + (uy * uy) / (palm_b * palm_b) <= 1.0;
      for (const auto& f : fingers) hand = hand || f.contains(ux, uy);

      Rgb px;
      if (hand) {
        out.truth.set(x, y);
        for (int c = 0; c < 3; ++c) px[c] = skin[c] + rng.uniform(-6.0, 6.0);
      } else {
        const double t = style == static_cast<int>(BackgroundStyle::gradient) ? static_cast<double>(y) / (H - 1) : 0.0;
        for (int c = 0; c < 3; ++c) px[c] = bg0[c] * (1 - t) + bg1[c] * t + rng.uniform(-8.0, 8.0);
      }
      for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = to_u8(px[c]);
    }
  }

  // Clutter is painted outside the hand only; the truth mask stays the hand.
  auto paint_skin = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= W || y >= H || out.truth.get(x, y)) return;
    for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = to_u8(skin[c]);
  };
  if (spec.background == BackgroundStyle::speckled) {
    const int n = 12 + static_cast<int>(rng.below(12));
    for (int i = 0; i < n; ++i) paint_skin(static_cast<int>(rng.below(W)), static_cast<int>(rng.below(H)));
  } else if (spec.background == BackgroundStyle::distractor) {
    // A 3x3 blob in a corner quadrant away from the palm.
    const int bx = pcx > W / 2.0 ? 4 + static_cast<int>(rng.below(6)) : W - 8 - static_cast<int>(rng.below(6));
    const int by = 4 + static_cast<int>(rng.below(6));
    for (int dy = 0; dy < 3; ++dy)
      for (int dx = 0; dx < 3; ++dx) paint_skin(bx + dx, by + dy);
  }

  imaging::PixelBox all{W, H, -1, -1};
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (out.truth.get(x, y)) {
        all.x_min = std::min(all.x_min, x);
        all.y_min = std::min(all.y_min, y);
        all.x_max = std::max(all.x_max, x);
        all.y_max = std::max(all.y_max, y);
      }
  out.box = all;
  out.annotation = voc_to_yolo(all, k, W, H);
  return out;
}

std::uint64_t sample_seed(std::uint64_t seed, int finger_count, int index) {
  std::uint64_t x = seed;
  const std::uint64_t a = splitmix64(x);
  x = a ^ (static_cast<std::uint64_t>(finger_count) << 32) ^ static_cast<std::uint64_t>(index);
  return splitmix64(x);
}

std::vector<SyntheticSample> gen_synthetic_class(int finger_count, int count, std::uint64_t seed, int canvas) {
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    SyntheticGestureSpec spec;
    spec.finger_count = finger_count;
    spec.canvas_w = spec.canvas_h = canvas;
    spec.background = static_cast<BackgroundStyle>(i % kBackgroundStyles);
    out.push_back(gen_synthetic(spec, sample_seed(seed, finger_count, i)));
  }
  return out;
}

DatasetManifest write_synthetic_dataset(const std::filesystem::path& out, const SyntheticDatasetSpec& spec) {
  namespace fs = std::filesystem;
  const auto names = gesture_class_names(spec.classes);
  if (spec.per_class < 1) throw ContractViolation("per_class must be >= 1");
  fs::create_directories(out);

  Rng ids(spec.seed);
  DatasetManifest manifest;
  manifest.seed = spec.seed;
  for (int c = 0; c < spec.classes; ++c) {
    const fs::path dir = out / names[static_cast<std::size_t>(c)];
    fs::create_directories(dir);
    const auto samples = gen_synthetic_class(c, spec.per_class, spec.seed, spec.canvas);
    for (const auto& s : samples) {
      const std::string id = unique_image_id(ids);
      const fs::path png = dir / (id + ".png");
      write_png(png, s.image);
      write_yolo_file(dir / (id + ".txt"), std::span(&s.annotation, 1));
      manifest.items.push_back({names[static_cast<std::size_t>(c)] + "/" + id, png, names[static_cast<std::size_t>(c)],
                                Split::unassigned});
    }
  }
  write_label_map_file(out / "label_map.pbtxt", build_label_map(names));
  save_manifest(out / "manifest.tsv", manifest);
  return manifest;
}

}  // namespace gesture::dataset
