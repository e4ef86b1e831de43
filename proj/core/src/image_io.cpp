#include "bpseg/image_io.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>

namespace bpseg {
namespace {

struct WriteSink {
  Bytes* out;
};

void write_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* sink = static_cast<WriteSink*>(png_get_io_ptr(png));
  sink->out->insert(sink->out->end(), data, data + length);
}

void flush_callback(png_structp) {}

struct ReadSource {
  const Bytes* in;
  std::size_t pos;
};

void read_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* src = static_cast<ReadSource*>(png_get_io_ptr(png));
  if (src->pos + length > src->in->size()) {
    png_error(png, "truncated PNG stream");
  }
  std::memcpy(data, src->in->data() + src->pos, length);
  src->pos += length;
}

[[noreturn]] void error_callback(png_structp, png_const_charp msg) {
  throw Error(ErrorCode::kIoError, std::string("libpng: ") + msg);
}

void warning_callback(png_structp, png_const_charp) {}

Bytes encode_rows(int width, int height, int color_type, int channels, const std::uint8_t* pixels) {
  Bytes out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback, warning_callback);
  if (png == nullptr) fail(ErrorCode::kIoError, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorCode::kIoError, "png_create_info_struct failed");
  }
  WriteSink sink{&out};
  try {
    png_set_write_fn(png, &sink, write_callback, flush_callback);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
    for (int y = 0; y < height; ++y) {
      png_write_row(png, const_cast<png_bytep>(pixels + static_cast<std::size_t>(y) * stride));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

struct Decoded {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 gray, 3 rgb (alpha is stripped)
  std::vector<std::uint8_t> pixels;
};

Decoded decode(const Bytes& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    fail(ErrorCode::kIoError, "not a PNG stream");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback, warning_callback);
  if (png == nullptr) fail(ErrorCode::kIoError, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorCode::kIoError, "png_create_info_struct failed");
  }
  ReadSource src{&bytes, 0};
  Decoded d;
  try {
    png_set_read_fn(png, &src, read_callback);
    png_read_info(png, info);
    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    d.width = static_cast<int>(png_get_image_width(png, info));
    d.height = static_cast<int>(png_get_image_height(png, info));
    d.channels = png_get_channels(png, info);
    if (d.channels != 1 && d.channels != 3) fail(ErrorCode::kIoError, "unsupported PNG channel layout");
    const std::size_t stride = png_get_rowbytes(png, info);
    d.pixels.resize(stride * static_cast<std::size_t>(d.height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(d.height));
    for (int y = 0; y < d.height; ++y) rows[static_cast<std::size_t>(y)] = d.pixels.data() + stride * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return d;
}

std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return static_cast<std::uint8_t>((299u * r + 587u * g + 114u * b + 500u) / 1000u);
}

std::vector<std::uint8_t> to_gray(const Decoded& d) {
  if (d.channels == 1) return d.pixels;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(d.width) * static_cast<std::size_t>(d.height));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = luminance(d.pixels[3 * i], d.pixels[3 * i + 1], d.pixels[3 * i + 2]);
  }
  return out;
}

}  // namespace

Bytes encode_png(const GrayImage& image) {
  return encode_rows(image.width(), image.height(), PNG_COLOR_TYPE_GRAY, 1, image.data().data());
}

Bytes encode_png(const BinaryMask& mask) {
  std::vector<std::uint8_t> scaled(mask.size());
  const auto labels = mask.data();
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = labels[i] != 0 ? 255 : 0;
  return encode_rows(mask.width(), mask.height(), PNG_COLOR_TYPE_GRAY, 1, scaled.data());
}

Bytes encode_png(const RgbImage& image) {
  std::vector<std::uint8_t> packed(image.size() * 3);
  const auto px = image.data();
  for (std::size_t i = 0; i < px.size(); ++i) {
    packed[3 * i] = px[i].r;
    packed[3 * i + 1] = px[i].g;
    packed[3 * i + 2] = px[i].b;
  }
  return encode_rows(image.width(), image.height(), PNG_COLOR_TYPE_RGB, 3, packed.data());
}

GrayImage decode_png_gray(const Bytes& bytes) {
  Decoded d = decode(bytes);
  return GrayImage(d.width, d.height, to_gray(d));
}

BinaryMask decode_png_mask(const Bytes& bytes) {
  Decoded d = decode(bytes);
  auto gray = to_gray(d);
  for (auto& v : gray) v = v != 0 ? 1 : 0;
  return BinaryMask(d.width, d.height, std::move(gray));
}

RgbImage decode_png_rgb(const Bytes& bytes) {
  Decoded d = decode(bytes);
  std::vector<Rgb> px(static_cast<std::size_t>(d.width) * static_cast<std::size_t>(d.height));
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (d.channels == 1) {
      px[i] = {d.pixels[i], d.pixels[i], d.pixels[i]};
    } else {
      px[i] = {d.pixels[3 * i], d.pixels[3 * i + 1], d.pixels[3 * i + 2]};
    }
  }
  return RgbImage(d.width, d.height, std::move(px));
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIoError, "short write to " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, Bytes(text.begin(), text.end()));
}

std::string read_text(const std::filesystem::path& path) {
  Bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

}  // namespace bpseg
