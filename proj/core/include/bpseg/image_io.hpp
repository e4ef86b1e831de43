#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bpseg/data_model.hpp"

namespace bpseg {

using Bytes = std::vector<std::uint8_t>;

// PNG codec. Encoding is deterministic: fixed compression level, no filters,
// no timestamps or text chunks, so equal rasters produce equal bytes.

Bytes encode_png(const GrayImage& image);
Bytes encode_png(const RgbImage& image);
/// Masks are written as 0/255 for viewing.
Bytes encode_png(const BinaryMask& mask);

/// Any PNG color type; color is reduced to luminance (ITU-R BT.601 weights).
GrayImage decode_png_gray(const Bytes& bytes);
/// Nonzero pixels become label 1 (covers both 0/1 and 0/255 conventions).
BinaryMask decode_png_mask(const Bytes& bytes);
RgbImage decode_png_rgb(const Bytes& bytes);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Bytes& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

inline GrayImage read_png_gray(const std::filesystem::path& p) { return decode_png_gray(read_file(p)); }
inline BinaryMask read_png_mask(const std::filesystem::path& p) { return decode_png_mask(read_file(p)); }
inline RgbImage read_png_rgb(const std::filesystem::path& p) { return decode_png_rgb(read_file(p)); }

template <typename Raster>
void write_png(const std::filesystem::path& path, const Raster& raster) {
  write_file(path, encode_png(raster));
}

}  // namespace bpseg
