// SPDX-License-Identifier: Apache-2.0
/**
 * @file synthetic.hpp
 * @brief Seeded renderer of hand-gesture images with exact ground truth.
 *
 * A gesture is an elliptical palm plus `finger_count` capsule-shaped fingers
 * fanned above it, painted in a skin tone that falls inside the default
 * YCbCr skin ranges, over a background whose chroma never does. Pose jitter
 * (rotation, translation, scale) and colour noise are drawn from the seed, so
 * equal (spec, seed) pairs produce byte-identical output.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gesture/annotation.hpp"
#include "gesture/dataset.hpp"
#include "gesture/imaging.hpp"

namespace gesture::dataset {

enum class BackgroundStyle : int {
  solid = 0,
  gradient = 1,
  speckled = 2,   // isolated skin-coloured pixels that morphology must remove
  distractor = 3  // one small skin-coloured blob away from the hand
};
inline constexpr int kBackgroundStyles = 4;

struct SyntheticGestureSpec {
  int finger_count = 0;  // 0..5
  int canvas_w = 96;
  int canvas_h = 96;
  double rotation_deg = 15.0;       // uniform in [-r, r]
  double translation_frac = 0.06;   // of canvas size, per axis
  double scale_frac = 0.10;         // relative
  BackgroundStyle background = BackgroundStyle::solid;
};

struct SyntheticSample {
  imaging::ImageU8 image;       // RGB
  YoloAnnotation annotation;    // class_id = finger_count
  imaging::BitMask truth;       // exactly the painted hand pixels
  imaging::PixelBox box;        // tight box of `truth`
};

/// Throws ContractViolation for finger_count outside [0, 5] or a canvas under 32x32.
SyntheticSample gen_synthetic(const SyntheticGestureSpec& spec, std::uint64_t seed);

/// "zero", "one", ... for finger counts 0..n-1 (n <= 6).
std::vector<std::string> gesture_class_names(int n);

/// Seed of the `index`-th sample of class `finger_count` in a dataset seeded
/// with `seed`.
std::uint64_t sample_seed(std::uint64_t seed, int finger_count, int index);

/// `count` samples of one class; background styles cycle through all four.
std::vector<SyntheticSample> gen_synthetic_class(int finger_count, int count, std::uint64_t seed, int canvas = 96);

struct SyntheticDatasetSpec {
  int classes = 6;
  int per_class = 20;
  int canvas = 96;
  std::uint64_t seed = 42;
};

/// Writes <out>/<class>/<id>.png with a YOLO sidecar <id>.txt for every
/// sample, <out>/label_map.pbtxt and an unsplit <out>/manifest.tsv.
DatasetManifest write_synthetic_dataset(const std::filesystem::path& out, const SyntheticDatasetSpec& spec);

}  // namespace gesture::dataset
