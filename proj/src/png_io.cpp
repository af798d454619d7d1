// SPDX-License-Identifier: Apache-2.0
#include "gesture/png_io.hpp"

#include <png.h>

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gesture/error.hpp"

namespace gesture::imaging {

namespace {

ImageU8 finish_read(png_image& image, const std::string& source) {
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw DataError(source + ": empty PNG");
  }
  ImageU8 img(static_cast<int>(image.width), static_cast<int>(image.height), color ? 3 : 1);
  if (!png_image_finish_read(&image, nullptr, img.data.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw DataError(source + ": " + msg);
  }
  return img;
}

png_image describe(const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3) throw ContractViolation("write_png: channels must be 1 or 3");
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  return image;
}

}  // namespace

ImageU8 read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    std::string msg = image.message;
    png_image_free(&image);
    throw DataError(path.string() + ": " + msg);
  }
  return finish_read(image, path.string());
}

ImageU8 decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    std::string msg = image.message;
    png_image_free(&image);
    throw DataError("PNG decode: " + msg);
  }
  return finish_read(image, "PNG decode");
}

void write_png(const std::filesystem::path& path, const ImageU8& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write " + path.string());
}

std::vector<std::uint8_t> encode_png(const ImageU8& img) {
  png_image image = describe(img);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.data.data(), 0, nullptr))
    throw DataError(std::string("PNG encode: ") + image.message);
  std::vector<std::uint8_t> bytes(size);
  if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, img.data.data(), 0, nullptr))
    throw DataError(std::string("PNG encode: ") + image.message);
  bytes.resize(size);
  return bytes;
}

std::pair<int, int> png_dimensions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::array<unsigned char, 24> head{};
  if (!in.read(reinterpret_cast<char*>(head.data()), head.size()))
    throw DataError(path.string() + ": too short for a PNG header");
  static constexpr unsigned char kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (std::memcmp(head.data(), kSig, 8) != 0 || std::memcmp(head.data() + 12, "IHDR", 4) != 0)
    throw DataError(path.string() + ": not a PNG file");
  auto be32 = [&](std::size_t off) {
    return static_cast<int>((static_cast<unsigned>(head[off]) << 24) | (head[off + 1] << 16) | (head[off + 2] << 8) |
                            head[off + 3]);
  };
  return {be32(16), be32(20)};
}

void write_mask_png(const std::filesystem::path& path, const BitMask& mask) { write_png(path, mask_to_image(mask)); }

BitMask read_mask_png(const std::filesystem::path& path) {
  ImageU8 img = read_png(path);
  if (img.channels != 1) throw DataError(path.string() + ": mask PNG must be grayscale");
  return image_to_mask(img);
}

}  // namespace gesture::imaging
