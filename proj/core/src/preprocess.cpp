#include "bpseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

namespace bpseg {

DeviceCropProfile crop_profile(Device device) noexcept {
  switch (device) {
    case Device::kYgy: return {Device::kYgy, 87, 47, 510, 356};
    case Device::kBk3000If1: return {Device::kBk3000If1, 278, 174, 553, 492};
    case Device::kBk3000If2: return {Device::kBk3000If2, 165, 172, 595, 529};
    case Device::kSynthetic: return {Device::kSynthetic, 87, 47, 510, 356};
  }
  return {};
}

namespace {

template <typename Raster>
Raster crop_impl(const Raster& src, const DeviceCropProfile& p) {
  if (p.crop_width <= 0 || p.crop_height <= 0 || p.origin_x < 0 || p.origin_y < 0) {
    fail(ErrorCode::kInvalidArgument, "crop profile must have non-negative origin and positive size");
  }
  if (p.origin_x + p.crop_width > src.width() || p.origin_y + p.crop_height > src.height()) {
    fail(ErrorCode::kImageTooSmall, "ROI " + std::to_string(p.origin_x) + "," + std::to_string(p.origin_y) + " " +
                                        std::to_string(p.crop_width) + "x" + std::to_string(p.crop_height) +
                                        " exceeds " + std::to_string(src.width()) + "x" +
                                        std::to_string(src.height()) + " frame");
  }
  Raster out(p.crop_width, p.crop_height);
  for (int y = 0; y < p.crop_height; ++y) {
    const auto* row = &src.at(p.origin_x, p.origin_y + y);
    std::copy(row, row + p.crop_width, &out.at(0, y));
  }
  return out;
}

template <typename Raster>
Raster flip_impl(const Raster& src) {
  Raster out(src.width(), src.height());
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) out.at(src.width() - 1 - x, y) = src.at(x, y);
  }
  return out;
}

struct Tap {
  int i0;
  int i1;
  double w;
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * in / out - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, s - i0};
  }
  return taps;
}

void check_target(int w, int h) {
  if (w <= 0 || h <= 0) fail(ErrorCode::kInvalidArgument, "resize target must be positive");
}

}  // namespace

GrayImage crop_roi(const GrayImage& image, const DeviceCropProfile& profile) { return crop_impl(image, profile); }
BinaryMask crop_roi(const BinaryMask& mask, const DeviceCropProfile& profile) { return crop_impl(mask, profile); }

GrayImage resize(const GrayImage& image, int target_w, int target_h) {
  check_target(target_w, target_h);
  if (target_w == image.width() && target_h == image.height()) return image;
  const auto tx = bilinear_taps(image.width(), target_w);
  const auto ty = bilinear_taps(image.height(), target_h);
  GrayImage out(target_w, target_h);
  for (int y = 0; y < target_h; ++y) {
    const Tap& vy = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < target_w; ++x) {
      const Tap& vx = tx[static_cast<std::size_t>(x)];
      const double top = (1.0 - vx.w) * image.at(vx.i0, vy.i0) + vx.w * image.at(vx.i1, vy.i0);
      const double bottom = (1.0 - vx.w) * image.at(vx.i0, vy.i1) + vx.w * image.at(vx.i1, vy.i1);
      const double v = (1.0 - vy.w) * top + vy.w * bottom;
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  }
  return out;
}

BinaryMask resize(const BinaryMask& mask, int target_w, int target_h) {
  check_target(target_w, target_h);
  if (target_w == mask.width() && target_h == mask.height()) return mask;
  auto nearest = [](int o, int in, int out) {
    const auto s = static_cast<int>(std::floor((o + 0.5) * in / out));
    return std::clamp(s, 0, in - 1);
  };
  BinaryMask out(target_w, target_h);
  for (int y = 0; y < target_h; ++y) {
    const int sy = nearest(y, mask.height(), target_h);
    for (int x = 0; x < target_w; ++x) out.at(x, y) = mask.at(nearest(x, mask.width(), target_w), sy);
  }
  return out;
}

GrayImage horizontal_flip(const GrayImage& image) { return flip_impl(image); }
BinaryMask horizontal_flip(const BinaryMask& mask) { return flip_impl(mask); }

BinaryMask rasterize_polygons(std::span<const Polygon> polygons, int width, int height) {
  if (width <= 0 || height <= 0) fail(ErrorCode::kInvalidArgument, "canvas dimensions must be positive");
  for (const auto& poly : polygons) {
    std::set<std::pair<double, double>> distinct;
    for (const auto& v : poly.vertices) {
      if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
        fail(ErrorCode::kDegeneratePolygon, "polygon vertex is not finite");
      }
      distinct.emplace(v.x, v.y);
    }
    if (distinct.size() < 3) fail(ErrorCode::kDegeneratePolygon, "polygon has fewer than 3 distinct vertices");
  }

  BinaryMask mask(width, height, 0);
  std::vector<double> crossings;
  for (const auto& poly : polygons) {
    const auto& v = poly.vertices;
    const std::size_t n = v.size();
    for (int y = 0; y < height; ++y) {
      const double yc = y + 0.5;
      crossings.clear();
      // Edge (i, j = i - 1); the crossing abscissa uses the classic
      // point-in-polygon expression so results match it bit for bit.
      for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        if ((v[i].y > yc) != (v[j].y > yc)) {
          crossings.push_back((v[j].x - v[i].x) * (yc - v[i].y) / (v[j].y - v[i].y) + v[i].x);
        }
      }
      if (crossings.empty()) continue;
      std::sort(crossings.begin(), crossings.end());
      for (int x = 0; x < width; ++x) {
        const double xc = x + 0.5;
        const auto right = crossings.end() - std::upper_bound(crossings.begin(), crossings.end(), xc);
        if (right % 2 == 1) mask.at(x, y) = 1;
      }
    }
  }
  return mask;
}

std::vector<Polygon> parse_trunk_polygons(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, std::string("annotation: ") + e.what());
  }
  const nlohmann::json* shapes = &doc;
  if (doc.is_object()) {
    if (!doc.contains("shapes")) fail(ErrorCode::kParseError, "annotation object lacks a \"shapes\" array");
    shapes = &doc["shapes"];
  }
  if (!shapes->is_array()) fail(ErrorCode::kParseError, "annotation shapes must be an array");

  std::vector<Polygon> out;
  try {
    for (const auto& shape : *shapes) {
      const auto label = shape.at("label").get<std::string>();
      if (label.rfind("BP", 0) != 0) continue;
      Polygon poly;
      for (const auto& pt : shape.at("points")) {
        if (!pt.is_array() || pt.size() != 2) fail(ErrorCode::kParseError, "point must be [x, y]");
        poly.vertices.push_back({pt[0].get<double>(), pt[1].get<double>()});
      }
      out.push_back(std::move(poly));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, std::string("annotation: ") + e.what());
  }
  return out;
}

CropResult random_crop(const GrayImage& image, const BinaryMask& mask, int size, Rng& rng) {
  if (!image.same_shape(mask)) fail(ErrorCode::kShapeMismatch, "image and mask differ in size");
  if (size <= 0) fail(ErrorCode::kInvalidArgument, "crop size must be positive");
  if (size > image.width() || size > image.height()) {
    fail(ErrorCode::kCropTooLarge, "crop " + std::to_string(size) + " exceeds " + std::to_string(image.width()) +
                                       "x" + std::to_string(image.height()));
  }
  const int ox = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(image.width() - size + 1)));
  const int oy = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(image.height() - size + 1)));
  const DeviceCropProfile window{Device::kSynthetic, ox, oy, size, size};
  return {crop_roi(image, window), crop_roi(mask, window), ox, oy};
}

void AugmentConfig::validate() const {
  if (!(pre_crop_size > final_size && final_size > 0)) {
    fail(ErrorCode::kInvalidConfig, "augmentation requires pre_crop_size > final_size > 0");
  }
  if (crops_per_image < 0) fail(ErrorCode::kInvalidConfig, "crops_per_image must be >= 0");
}

std::vector<ImageMaskPair> augment_sixfold(const GrayImage& image, const BinaryMask& mask,
                                           const AugmentConfig& cfg) {
  cfg.validate();
  if (!image.same_shape(mask)) fail(ErrorCode::kShapeMismatch, "image and mask differ in size");
  Rng rng(cfg.seed);
  const int f = cfg.final_size;
  const int pre = cfg.pre_crop_size;

  std::vector<ImageMaskPair> out;
  out.reserve(static_cast<std::size_t>(2 * (1 + cfg.crops_per_image)));
  // Flipped branch mirrors the already-resized rasters, so element n+1 is
  // exactly the flip of element 0.
  ImageMaskPair base{resize(image, f, f), resize(mask, f, f)};
  ImageMaskPair big{resize(image, pre, pre), resize(mask, pre, pre)};
  auto emit_branch = [&](const ImageMaskPair& scaled, const ImageMaskPair& source) {
    out.push_back(scaled);
    for (int c = 0; c < cfg.crops_per_image; ++c) {
      CropResult crop = random_crop(source.image, source.mask, f, rng);
      out.push_back({std::move(crop.image), std::move(crop.mask)});
    }
  };
  emit_branch(base, big);
  emit_branch({horizontal_flip(base.image), horizontal_flip(base.mask)},
              {horizontal_flip(big.image), horizontal_flip(big.mask)});
  return out;
}

}  // namespace bpseg
