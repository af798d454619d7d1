// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "gesture/imaging.hpp"

namespace gesture::imaging {

/// Decodes an 8-bit gray or RGB PNG (alpha is dropped, palette expanded).
/// Throws DataError on unreadable or invalid files.
ImageU8 read_png(const std::filesystem::path& path);
ImageU8 decode_png(std::span<const std::uint8_t> bytes);

void write_png(const std::filesystem::path& path, const ImageU8& img);
std::vector<std::uint8_t> encode_png(const ImageU8& img);

/// Width and height from the IHDR chunk without decoding pixels.
std::pair<int, int> png_dimensions(const std::filesystem::path& path);

void write_mask_png(const std::filesystem::path& path, const BitMask& mask);
BitMask read_mask_png(const std::filesystem::path& path);

}  // namespace gesture::imaging
