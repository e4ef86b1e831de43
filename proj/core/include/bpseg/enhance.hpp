#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bpseg/data_model.hpp"

namespace bpseg {

struct EnhanceConfig {
  double clip_limit = 1.0;
  int tiles_x = 8;
  int tiles_y = 8;
  int bins = 256;

  void validate() const;
};

using IntensityMap = std::array<std::uint8_t, 256>;

/// Per-tile lookup tables of a CLAHE pass, row-major over the tile grid.
struct ClaheTiles {
  int tiles_x = 0;
  int tiles_y = 0;
  int tile_w = 0;
  int tile_h = 0;
  std::vector<IntensityMap> maps;

  const IntensityMap& map(int tx, int ty) const { return maps[static_cast<std::size_t>(ty * tiles_x + tx)]; }
};

/// Histogram clip height for a tile: max(1, floor(clip_limit * tile_area / bins)).
int clahe_clip_threshold(int tile_area, const EnhanceConfig& cfg);

/// Tile lookup tables. The image is conceptually padded on the right and bottom
/// by edge replication until both dimensions divide by the tile grid.
ClaheTiles clahe_mappings(const GrayImage& image, const EnhanceConfig& cfg);

/// Contrast limited adaptive histogram equalization.
///
/// Each tile histogram is clipped at clahe_clip_threshold(); the clipped excess
/// is spread evenly over all bins with the remainder going one count per bin
/// from bin 0 upward. The tile mapping is the CDF scaled to [0, 255] and rounded
/// half-up. Output pixels bilinearly blend the mappings of the four nearest tile
/// centres (border pixels clamp to the outermost tiles). The blend is carried
/// out in exact integer arithmetic, so results are reproducible bit for bit.
///
/// Throws TileTooSmall if the image is narrower or shorter than the tile grid.
GrayImage clahe(const GrayImage& image, const EnhanceConfig& cfg = {});

struct HistogramReport {
  std::array<std::uint64_t, 256> bins{};
  std::string source_tag;

  std::uint64_t total() const noexcept;
  /// Smallest intensity v with cumulative mass >= q * total.
  int percentile(double q) const;
};

/// Throws EmptyInput on an empty list.
HistogramReport dataset_histogram(std::span<const GrayImage> images, const std::string& tag);

/// "bin,count" CSV with header.
std::string histogram_csv(const HistogramReport& report);
/// Whitespace-separated two-column text for gnuplot.
std::string histogram_gnuplot(const HistogramReport& report);

}  // namespace bpseg
