#pragma once

// Device ROI cropping, resizing, polygon rasterization and the six-fold
// training augmentation.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "bpseg/data_model.hpp"
#include "bpseg/rng.hpp"

namespace bpseg {

struct DeviceCropProfile {
  Device device = Device::kYgy;
  int origin_x = 0;
  int origin_y = 0;
  int crop_width = 0;
  int crop_height = 0;

  bool operator==(const DeviceCropProfile&) const = default;
};

/// Built-in ROI for each device. SYNTHETIC phantom frames reuse the YGY layout.
DeviceCropProfile crop_profile(Device device) noexcept;

/// Throws ImageTooSmall when the ROI leaves the frame.
GrayImage crop_roi(const GrayImage& image, const DeviceCropProfile& profile);
BinaryMask crop_roi(const BinaryMask& mask, const DeviceCropProfile& profile);

/// Bilinear, half-pixel-centre sampling, rounded half-up.
GrayImage resize(const GrayImage& image, int target_w, int target_h);
/// Nearest-neighbour; labels stay binary.
BinaryMask resize(const BinaryMask& mask, int target_w, int target_h);

GrayImage horizontal_flip(const GrayImage& image);
BinaryMask horizontal_flip(const BinaryMask& mask);

struct Point2d {
  double x = 0.0;
  double y = 0.0;
};

struct Polygon {
  std::vector<Point2d> vertices;
};

/// Pixel (x, y) is set iff its centre (x + 0.5, y + 0.5) is inside some polygon
/// under the even-odd rule. Throws DegeneratePolygon for < 3 distinct vertices
/// or non-finite coordinates.
BinaryMask rasterize_polygons(std::span<const Polygon> polygons, int width, int height);

/// Trunk polygons from a labelling JSON document: either a bare array of
/// {"label", "points"} objects or a Labelme-style object with a "shapes" array.
/// Only labels starting with "BP" are kept.
std::vector<Polygon> parse_trunk_polygons(std::string_view json_text);

struct CropResult {
  GrayImage image;
  BinaryMask mask;
  int offset_x = 0;
  int offset_y = 0;
};

/// Same uniformly drawn offset for image and mask. Throws CropTooLarge.
CropResult random_crop(const GrayImage& image, const BinaryMask& mask, int size, Rng& rng);

struct AugmentConfig {
  int pre_crop_size = 256;
  int final_size = 224;
  int crops_per_image = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ImageMaskPair {
  GrayImage image;
  BinaryMask mask;
};

/// [original, crop x n, flipped, flipped-crop x n], every output final_size
/// square. With the default two crops per image this is six pairs.
std::vector<ImageMaskPair> augment_sixfold(const GrayImage& image, const BinaryMask& mask,
                                           const AugmentConfig& cfg);

}  // namespace bpseg
