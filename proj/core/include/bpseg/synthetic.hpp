#pragma once

// Ultrasound-like phantoms with known trunk geometry, and simulated raters.

#include <vector>

#include "bpseg/data_model.hpp"
#include "bpseg/preprocess.hpp"
#include "bpseg/rng.hpp"

namespace bpseg {

struct PhantomConfig {
  int count = 100;
  /// Frame size; the trunks are placed inside the SYNTHETIC crop profile.
  int frame_width = 700;
  int frame_height = 600;
  /// Fast path: generate directly at network_size x network_size, no device frame.
  bool network_scale = false;
  int network_size = 224;
  int trunks_min = 1;
  int trunks_max = 3;
  /// Semi-axis range in pixels after the ROI is resized to network_size.
  double radius_min = 8.0;
  double radius_max = 24.0;
  /// Dark rounded structures without a rim (vessel look-alikes), not labelled.
  int distractors_max = 1;
  /// 0 = no speckle, 1 = full Rayleigh multiplicative field.
  double speckle_scale = 0.6;
  double background_level = 45.0;
  double trunk_level = 15.0;
  double rim_brightness = 170.0;
  /// Rim thickness relative to the semi-axes.
  double rim_fraction = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Rotated ellipse in image pixel coordinates (pixel centres at +0.5).
struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double ax = 0.0;
  double ay = 0.0;
  double angle = 0.0;

  /// Membership of point (px, py).
  bool contains(double px, double py) const noexcept;
};

struct Phantom {
  AnnotatedSample sample;
  std::vector<Ellipse> trunks;
};

/// Deterministic under cfg.seed; sample i depends only on (seed, i).
/// Throws ConfigError on an invalid configuration.
std::vector<Phantom> generate_phantoms(const PhantomConfig& cfg);
Phantom generate_phantom(const PhantomConfig& cfg, int index);

/// Union of ellipse interiors at pixel centres.
BinaryMask ellipse_mask(std::span<const Ellipse> ellipses, int width, int height);

/// Inscribed polygon outlines, e.g. for writing labelling files.
std::vector<Polygon> ellipse_polygons(std::span<const Ellipse> ellipses, int vertices = 48);

struct RaterSimConfig {
  /// Positive dilates, negative erodes, by a disk of this radius.
  int dilate_or_erode = 0;
  /// Standard deviation in pixels of a smooth boundary displacement field.
  double boundary_jitter_sd = 0.0;
  double drop_probability = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Dilation/erosion, then boundary jitter, then dropping whole 8-connected
/// components with drop_probability.
BinaryMask simulate_rater(const BinaryMask& consensus, const RaterSimConfig& cfg);

/// Exact Euclidean distance from every pixel to the nearest pixel whose label
/// equals `target` (infinity when there is none). Pixels outside the grid are
/// treated as label 0.
std::vector<double> distance_to_label(const BinaryMask& mask, std::uint8_t target);

}  // namespace bpseg
