// SPDX-License-Identifier: Apache-2.0
/**
 * @file imaging.hpp
 * @brief Colour conversion, skin segmentation, binary morphology, connected
 *        components and shape moments for hand images.
 */
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace gesture::imaging {

/// 8-bit image, row-major, channels interleaved (1 = gray, 3 = RGB).
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  ImageU8() = default;
  ImageU8(int w, int h, int c, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  friend bool operator==(const ImageU8&, const ImageU8&) = default;
};

struct BitMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1

  BitMask() = default;
  BitMask(int w, int h, bool fill = false);

  bool get(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;

  friend bool operator==(const BitMask&, const BitMask&) = default;
};

/// Inclusive pixel rectangle.
struct PixelBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const { return x_max - x_min + 1; }
  int height() const { return y_max - y_min + 1; }
  long area() const { return static_cast<long>(width()) * height(); }

  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

struct Hsv {
  double hue = 0.0;         // degrees [0, 360)
  double saturation = 0.0;  // [0, 1]
  double value = 0.0;       // [0, 1]
};

struct HueGaussian {
  double mean_hue = 0.0;
  double variance = 0.0;
};

/// Closed interval of 8-bit chroma values.
struct ChromaRange {
  int min = 0;
  int max = 255;
};

/// Literature-standard skin chroma bounds. Configurable; not ground truth.
inline constexpr ChromaRange kDefaultCb{77, 127};
inline constexpr ChromaRange kDefaultCr{133, 173};

/// BT.601 full-range RGB -> YCbCr, rounded half-up and clamped. Bit-exact
/// (integer arithmetic on coefficients scaled by 1e6).
ImageU8 rgb_to_ycbcr(const ImageU8& rgb);
std::array<std::uint8_t, 3> rgb_to_ycbcr(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Hexcone conversion; hue of achromatic pixels is 0.
Hsv rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);
std::vector<Hsv> rgb_to_hsv(const ImageU8& rgb);

BitMask skin_mask_ycbcr(const ImageU8& rgb, ChromaRange cb = kDefaultCb, ChromaRange cr = kDefaultCr);
/// Same membership test on an image that is already YCbCr.
BitMask skin_mask_from_ycbcr(const ImageU8& ycbcr, ChromaRange cb = kDefaultCb, ChromaRange cr = kDefaultCr);

/// Mean and population variance of hue samples, treated linearly (no
/// wrap-around at 360; skin hues sit far from it).
HueGaussian fit_hue_gaussian(std::span<const double> hues);

/// Minimum saturation for a pixel's hue to count.
inline constexpr double kMinSaturation = 0.15;

/// Pixel set iff saturation >= kMinSaturation and |hue - mean| <= k * stddev.
BitMask skin_mask_gaussian(const ImageU8& rgb, const HueGaussian& model, double k);

// 3x3 square structuring element. Dilation treats pixels outside the image
// as background; erosion ignores them (the element is clipped to the image),
// which makes erosion and dilation an adjunction on the image domain.
BitMask erode(const BitMask& mask);
BitMask dilate(const BitMask& mask);
BitMask morph_open(const BitMask& mask);
BitMask morph_close(const BitMask& mask);

struct Component {
  BitMask mask;  // same size as the source, only this component set
  PixelBox box;
  std::size_t area = 0;
};

/// Largest 4-connected component; equal sizes resolved by smallest
/// (y_min, x_min) of the bounding box. Throws NoHandRegion on an empty mask.
Component largest_component(const BitMask& mask);
PixelBox largest_component_bbox(const BitMask& mask);

/// Principal-axis angle in degrees, [-90, 90), from second central moments.
/// Returns 0 for exactly symmetric shapes.
double orientation(const BitMask& mask);

/// The seven Hu invariants of the set pixels.
std::array<double, 7> hu_moments(const BitMask& mask);

enum class ResizeMode { nearest, bilinear };

ImageU8 resize(const ImageU8& img, int new_w, int new_h, ResizeMode mode);
BitMask resize(const BitMask& mask, int new_w, int new_h);  // nearest

/// ITU-R BT.601 luma, integer arithmetic.
ImageU8 to_gray(const ImageU8& img);
ImageU8 crop(const ImageU8& img, const PixelBox& box);
BitMask crop(const BitMask& mask, const PixelBox& box);

/// Enhancement stage placeholder; returns the input unchanged.
ImageU8 enhance(const ImageU8& img);

ImageU8 mask_to_image(const BitMask& mask);  // 0/255 gray
BitMask image_to_mask(const ImageU8& gray);  // nonzero -> set

}  // namespace gesture::imaging
