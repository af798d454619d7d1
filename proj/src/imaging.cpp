// SPDX-License-Identifier: Apache-2.0
#include "gesture/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <string>

#include "gesture/error.hpp"

namespace gesture::imaging {

ImageU8::ImageU8(int w, int h, int c, std::uint8_t fill) : width(w), height(h), channels(c) {
  if (w <= 0 || h <= 0 || (c != 1 && c != 3))
    throw ContractViolation("image must be positive-sized with 1 or 3 channels, got " + std::to_string(w) + "x" +
                            std::to_string(h) + "x" + std::to_string(c));
  data.assign(static_cast<std::size_t>(w) * h * c, fill);
}

BitMask::BitMask(int w, int h, bool fill) : width(w), height(h) {
  if (w <= 0 || h <= 0)
    throw ContractViolation("mask must be positive-sized, got " + std::to_string(w) + "x" + std::to_string(h));
  bits.assign(static_cast<std::size_t>(w) * h, fill ? 1 : 0);
}

std::size_t BitMask::count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

namespace {

void require_rgb(const ImageU8& img, const char* op) {
  if (img.channels != 3)
    throw ContractViolation(std::string(op) + ": expected 3 channels, got " + std::to_string(img.channels));
}

// Half-up rounding of num / 1e6 with the result clamped to 8 bits.
std::uint8_t round_scaled(long long num) {
  constexpr long long kScale = 1'000'000;
  long long shifted = num + kScale / 2;
  long long q = shifted / kScale;
  if (shifted % kScale != 0 && shifted < 0) --q;  // floor division
  return static_cast<std::uint8_t>(std::clamp<long long>(q, 0, 255));
}

void require_range(ChromaRange r, const char* which) {
  if (r.min < 0 || r.max > 255 || r.min > r.max)
    throw ContractViolation(std::string("skin_mask_ycbcr: invalid ") + which + " range [" + std::to_string(r.min) +
                            ", " + std::to_string(r.max) + "]");
}

}  // namespace

std::array<std::uint8_t, 3> rgb_to_ycbcr(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const long long R = r, G = g, B = b;
  const long long y = 299'000 * R + 587'000 * G + 114'000 * B;
  const long long cb = 128'000'000 - 168'736 * R - 331'264 * G + 500'000 * B;
  const long long cr = 128'000'000 + 500'000 * R - 418'688 * G - 81'312 * B;
  return {round_scaled(y), round_scaled(cb), round_scaled(cr)};
}

ImageU8 rgb_to_ycbcr(const ImageU8& rgb) {
  require_rgb(rgb, "rgb_to_ycbcr");
  ImageU8 out(rgb.width, rgb.height, 3);
  for (std::size_t i = 0; i < rgb.data.size(); i += 3) {
    const auto p = rgb_to_ycbcr(rgb.data[i], rgb.data[i + 1], rgb.data[i + 2]);
    std::copy(p.begin(), p.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i));
  }
  return out;
}

Hsv rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  const double hi = std::max({r, g, b});
  const double lo = std::min({r, g, b});
  const double delta = hi - lo;
  Hsv out;
  out.value = hi;
  out.saturation = hi > 0.0 ? delta / hi : 0.0;
  if (delta == 0.0) return out;
  double h;
  if (hi == r)
    h = 60.0 * std::fmod((g - b) / delta, 6.0);
  else if (hi == g)
    h = 60.0 * ((b - r) / delta + 2.0);
  else
    h = 60.0 * ((r - g) / delta + 4.0);
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  out.hue = h;
  return out;
}

std::vector<Hsv> rgb_to_hsv(const ImageU8& rgb) {
  require_rgb(rgb, "rgb_to_hsv");
  std::vector<Hsv> out;
  out.reserve(static_cast<std::size_t>(rgb.width) * rgb.height);
  for (std::size_t i = 0; i < rgb.data.size(); i += 3)
    out.push_back(rgb_to_hsv(rgb.data[i], rgb.data[i + 1], rgb.data[i + 2]));
  return out;
}

BitMask skin_mask_from_ycbcr(const ImageU8& ycbcr, ChromaRange cb, ChromaRange cr) {
  require_rgb(ycbcr, "skin_mask_ycbcr");
  require_range(cb, "Cb");
  require_range(cr, "Cr");
  BitMask mask(ycbcr.width, ycbcr.height);
  for (std::size_t p = 0; p < mask.bits.size(); ++p) {
    const int vb = ycbcr.data[3 * p + 1];
    const int vr = ycbcr.data[3 * p + 2];
    mask.bits[p] = (vb >= cb.min && vb <= cb.max && vr >= cr.min && vr <= cr.max) ? 1 : 0;
  }
  return mask;
}

BitMask skin_mask_ycbcr(const ImageU8& rgb, ChromaRange cb, ChromaRange cr) {
  require_rgb(rgb, "skin_mask_ycbcr");
  return skin_mask_from_ycbcr(rgb_to_ycbcr(rgb), cb, cr);
}

HueGaussian fit_hue_gaussian(std::span<const double> hues) {
  if (hues.empty()) throw ContractViolation("fit_hue_gaussian: no samples");
  double mean = 0.0;
  for (double h : hues) mean += h;
  mean /= static_cast<double>(hues.size());
  double var = 0.0;
  for (double h : hues) var += (h - mean) * (h - mean);
  var /= static_cast<double>(hues.size());
  return {mean, var};
}

BitMask skin_mask_gaussian(const ImageU8& rgb, const HueGaussian& model, double k) {
  require_rgb(rgb, "skin_mask_gaussian");
  if (!(k > 0.0)) throw ContractViolation("skin_mask_gaussian: k must be > 0");
  if (model.variance < 0.0) throw ContractViolation("skin_mask_gaussian: negative variance");
  const double limit = k * std::sqrt(model.variance);
  BitMask mask(rgb.width, rgb.height);
  for (std::size_t p = 0; p < mask.bits.size(); ++p) {
    const Hsv hsv = rgb_to_hsv(rgb.data[3 * p], rgb.data[3 * p + 1], rgb.data[3 * p + 2]);
    mask.bits[p] = (hsv.saturation >= kMinSaturation && std::abs(hsv.hue - model.mean_hue) <= limit) ? 1 : 0;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Morphology

BitMask erode(const BitMask& mask) {
  BitMask out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      bool keep = mask.get(x, y);
      for (int dy = -1; keep && dy <= 1; ++dy)
        for (int dx = -1; keep && dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) continue;
          keep = mask.get(nx, ny);
        }
      out.set(x, y, keep);
    }
  return out;
}

BitMask dilate(const BitMask& mask) {
  BitMask out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      bool any = false;
      for (int dy = -1; !any && dy <= 1; ++dy)
        for (int dx = -1; !any && dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) continue;
          any = mask.get(nx, ny);
        }
      out.set(x, y, any);
    }
  return out;
}

BitMask morph_open(const BitMask& mask) { return dilate(erode(mask)); }
BitMask morph_close(const BitMask& mask) { return erode(dilate(mask)); }

// ---------------------------------------------------------------------------
// Components and moments

Component largest_component(const BitMask& mask) {
  std::vector<int> label(mask.bits.size(), -1);
  Component best;
  bool found = false;
  int best_label = -1;
  int next_label = 0;
  std::deque<std::pair<int, int>> queue;

  for (int y0 = 0; y0 < mask.height; ++y0)
    for (int x0 = 0; x0 < mask.width; ++x0) {
      const std::size_t i0 = static_cast<std::size_t>(y0) * mask.width + x0;
      if (!mask.bits[i0] || label[i0] >= 0) continue;
      const int id = next_label++;
      PixelBox box{x0, y0, x0, y0};
      std::size_t area = 0;
      label[i0] = id;
      queue.emplace_back(x0, y0);
      while (!queue.empty()) {
        auto [x, y] = queue.front();
        queue.pop_front();
        ++area;
        box.x_min = std::min(box.x_min, x);
        box.x_max = std::max(box.x_max, x);
        box.y_min = std::min(box.y_min, y);
        box.y_max = std::max(box.y_max, y);
        constexpr int kDx[4] = {1, -1, 0, 0};
        constexpr int kDy[4] = {0, 0, 1, -1};
        for (int n = 0; n < 4; ++n) {
          const int nx = x + kDx[n], ny = y + kDy[n];
          if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) continue;
          const std::size_t ni = static_cast<std::size_t>(ny) * mask.width + nx;
          if (mask.bits[ni] && label[ni] < 0) {
            label[ni] = id;
            queue.emplace_back(nx, ny);
          }
        }
      }
      const bool better = !found || area > best.area ||
                          (area == best.area && std::pair(box.y_min, box.x_min) <
                                                    std::pair(best.box.y_min, best.box.x_min));
      if (better) {
        found = true;
        best.area = area;
        best.box = box;
        best_label = id;
      }
    }

  if (!found) throw NoHandRegion();
  best.mask = BitMask(mask.width, mask.height);
  for (std::size_t i = 0; i < label.size(); ++i) best.mask.bits[i] = label[i] == best_label ? 1 : 0;
  return best;
}

PixelBox largest_component_bbox(const BitMask& mask) { return largest_component(mask).box; }

double orientation(const BitMask& mask) {
  // Integer raw moments keep the symmetric case exact.
  __int128 m00 = 0, m10 = 0, m01 = 0, m20 = 0, m02 = 0, m11 = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.get(x, y)) continue;
      ++m00;
      m10 += x;
      m01 += y;
      m20 += static_cast<__int128>(x) * x;
      m02 += static_cast<__int128>(y) * y;
      m11 += static_cast<__int128>(x) * y;
    }
  if (m00 < 2) throw ContractViolation("orientation: need at least 2 set pixels");
  // Central moments scaled by m00.
  const __int128 c11 = m00 * m11 - m10 * m01;
  const __int128 c20 = m00 * m20 - m10 * m10;
  const __int128 c02 = m00 * m02 - m01 * m01;
  if (c11 == 0 && c20 == c02) return 0.0;
  double deg = 0.5 * std::atan2(2.0 * static_cast<double>(c11), static_cast<double>(c20 - c02)) * 180.0 /
               std::numbers::pi;
  if (deg >= 90.0) deg -= 180.0;
  if (deg < -90.0) deg += 180.0;
  return deg;
}

std::array<double, 7> hu_moments(const BitMask& mask) {
  // Coordinates relative to the bounding-box corner so translated masks give
  // bit-identical sums.
  int x0 = mask.width, y0 = mask.height;
  std::size_t n = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.get(x, y)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        ++n;
      }
  if (n == 0) throw ContractViolation("hu_moments: empty mask");

  double sx = 0.0, sy = 0.0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.get(x, y)) {
        sx += x - x0;
        sy += y - y0;
      }
  const double m00 = static_cast<double>(n);
  const double cx = sx / m00, cy = sy / m00;

  double mu[4][4] = {};
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.get(x, y)) continue;
      const double dx = (x - x0) - cx, dy = (y - y0) - cy;
      const double dx2 = dx * dx, dy2 = dy * dy;
      mu[2][0] += dx2;
      mu[0][2] += dy2;
      mu[1][1] += dx * dy;
      mu[3][0] += dx2 * dx;
      mu[0][3] += dy2 * dy;
      mu[2][1] += dx2 * dy;
      mu[1][2] += dx * dy2;
    }
  auto eta = [&](int p, int q) { return mu[p][q] / std::pow(m00, 1.0 + (p + q) / 2.0); };
  const double n20 = eta(2, 0), n02 = eta(0, 2), n11 = eta(1, 1);
  const double n30 = eta(3, 0), n03 = eta(0, 3), n21 = eta(2, 1), n12 = eta(1, 2);

  const double a = n30 + n12, b = n21 + n03;
  const double c = n30 - 3 * n12, d = 3 * n21 - n03;
  std::array<double, 7> h{};
  h[0] = n20 + n02;
  h[1] = (n20 - n02) * (n20 - n02) + 4 * n11 * n11;
  h[2] = c * c + d * d;
  h[3] = a * a + b * b;
  h[4] = c * a * (a * a - 3 * b * b) + d * b * (3 * a * a - b * b);
  h[5] = (n20 - n02) * (a * a - b * b) + 4 * n11 * a * b;
  h[6] = d * a * (a * a - 3 * b * b) - c * b * (3 * a * a - b * b);
  return h;
}

// ---------------------------------------------------------------------------
// Geometry helpers

ImageU8 resize(const ImageU8& img, int new_w, int new_h, ResizeMode mode) {
  if (new_w < 1 || new_h < 1) throw ContractViolation("resize: target dimensions must be >= 1");
  ImageU8 out(new_w, new_h, img.channels);
  if (mode == ResizeMode::nearest) {
    for (int y = 0; y < new_h; ++y) {
      const int sy = static_cast<int>(static_cast<long long>(y) * img.height / new_h);
      for (int x = 0; x < new_w; ++x) {
        const int sx = static_cast<int>(static_cast<long long>(x) * img.width / new_w);
        for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
      }
    }
    return out;
  }
  const double scale_x = static_cast<double>(img.width) / new_w;
  const double scale_y = static_cast<double>(img.height) / new_h;
  for (int y = 0; y < new_h; ++y) {
    const double fy = std::clamp((y + 0.5) * scale_y - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < new_w; ++x) {
      const double fx = std::clamp((x + 0.5) * scale_x - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(x0, y0, c) * (1.0 - wx) + img.at(x1, y0, c) * wx;
        const double bottom = img.at(x0, y1, c) * (1.0 - wx) + img.at(x1, y1, c) * wx;
        const double v = top * (1.0 - wy) + bottom * wy;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

BitMask resize(const BitMask& mask, int new_w, int new_h) {
  if (new_w < 1 || new_h < 1) throw ContractViolation("resize: target dimensions must be >= 1");
  BitMask out(new_w, new_h);
  for (int y = 0; y < new_h; ++y)
    for (int x = 0; x < new_w; ++x)
      out.set(x, y,
              mask.get(static_cast<int>(static_cast<long long>(x) * mask.width / new_w),
                       static_cast<int>(static_cast<long long>(y) * mask.height / new_h)));
  return out;
}

ImageU8 to_gray(const ImageU8& img) {
  if (img.channels == 1) return img;
  require_rgb(img, "to_gray");
  ImageU8 out(img.width, img.height, 1);
  for (std::size_t p = 0; p < out.data.size(); ++p)
    out.data[p] = rgb_to_ycbcr(img.data[3 * p], img.data[3 * p + 1], img.data[3 * p + 2])[0];
  return out;
}

namespace {
void require_inside(const PixelBox& box, int w, int h) {
  if (box.x_min < 0 || box.y_min < 0 || box.x_max >= w || box.y_max >= h || box.x_min > box.x_max ||
      box.y_min > box.y_max)
    throw ContractViolation("crop: box outside image");
}
}  // namespace

ImageU8 crop(const ImageU8& img, const PixelBox& box) {
  require_inside(box, img.width, img.height);
  ImageU8 out(box.width(), box.height(), img.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(box.x_min + x, box.y_min + y, c);
  return out;
}

BitMask crop(const BitMask& mask, const PixelBox& box) {
  require_inside(box, mask.width, mask.height);
  BitMask out(box.width(), box.height());
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.set(x, y, mask.get(box.x_min + x, box.y_min + y));
  return out;
}

ImageU8 enhance(const ImageU8& img) { return img; }

ImageU8 mask_to_image(const BitMask& mask) {
  ImageU8 out(mask.width, mask.height, 1);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) out.data[i] = mask.bits[i] ? 255 : 0;
  return out;
}

BitMask image_to_mask(const ImageU8& gray) {
  if (gray.channels != 1) throw ContractViolation("image_to_mask: expected a gray image");
  BitMask out(gray.width, gray.height);
  for (std::size_t i = 0; i < gray.data.size(); ++i) out.bits[i] = gray.data[i] ? 1 : 0;
  return out;
}

}  // namespace gesture::imaging
