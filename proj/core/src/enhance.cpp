#include "bpseg/enhance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bpseg {

void EnhanceConfig::validate() const {
  if (!(clip_limit > 0.0) || !std::isfinite(clip_limit)) fail(ErrorCode::kInvalidConfig, "clip_limit must be > 0");
  if (tiles_x < 1 || tiles_y < 1) fail(ErrorCode::kInvalidConfig, "tile grid must be at least 1x1");
  if (bins != 256) fail(ErrorCode::kInvalidConfig, "only 256-bin histograms are supported");
}

int clahe_clip_threshold(int tile_area, const EnhanceConfig& cfg) {
  const double raw = std::floor(cfg.clip_limit * tile_area / cfg.bins);
  return std::max(1, static_cast<int>(raw));
}

namespace {

// floor(a / b) for b > 0.
std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && (a < 0)) --q;
  return q;
}

struct Axis {
  int lo;
  int hi;
  std::int64_t frac;  // weight of `hi`, in units of 1/den
  std::int64_t den;
};

// Tile-centre neighbours for every coordinate along one axis.
std::vector<Axis> axis_weights(int length, int tile, int tiles) {
  std::vector<Axis> out(static_cast<std::size_t>(length));
  const std::int64_t den = 2LL * tile;
  for (int p = 0; p < length; ++p) {
    const std::int64_t num = 2LL * p + 1 - tile;
    std::int64_t lo = floor_div(num, den);
    const std::int64_t frac = num - lo * den;
    std::int64_t hi = lo + 1;
    if (lo < 0) {
      lo = 0;
      hi = 0;
    }
    if (hi > tiles - 1) hi = tiles - 1;
    out[static_cast<std::size_t>(p)] = {static_cast<int>(lo), static_cast<int>(hi), frac, den};
  }
  return out;
}

}  // namespace

ClaheTiles clahe_mappings(const GrayImage& image, const EnhanceConfig& cfg) {
  cfg.validate();
  const int w = image.width();
  const int h = image.height();
  if (w < cfg.tiles_x || h < cfg.tiles_y) {
    fail(ErrorCode::kTileTooSmall, "image " + std::to_string(w) + "x" + std::to_string(h) +
                                       " is smaller than the tile grid");
  }
  ClaheTiles t;
  t.tiles_x = cfg.tiles_x;
  t.tiles_y = cfg.tiles_y;
  t.tile_w = (w + cfg.tiles_x - 1) / cfg.tiles_x;
  t.tile_h = (h + cfg.tiles_y - 1) / cfg.tiles_y;
  const int area = t.tile_w * t.tile_h;
  const int clip = clahe_clip_threshold(area, cfg);
  t.maps.resize(static_cast<std::size_t>(cfg.tiles_x * cfg.tiles_y));

  std::array<std::int64_t, 256> hist{};
  for (int ty = 0; ty < cfg.tiles_y; ++ty) {
    for (int tx = 0; tx < cfg.tiles_x; ++tx) {
      hist.fill(0);
      for (int y = ty * t.tile_h; y < (ty + 1) * t.tile_h; ++y) {
        const int sy = std::min(y, h - 1);
        for (int x = tx * t.tile_w; x < (tx + 1) * t.tile_w; ++x) {
          ++hist[image.at(std::min(x, w - 1), sy)];
        }
      }
      std::int64_t excess = 0;
      for (auto& c : hist) {
        if (c > clip) {
          excess += c - clip;
          c = clip;
        }
      }
      const std::int64_t share = excess / 256;
      const std::int64_t remainder = excess % 256;
      for (int b = 0; b < 256; ++b) hist[static_cast<std::size_t>(b)] += share + (b < remainder ? 1 : 0);

      IntensityMap& map = t.maps[static_cast<std::size_t>(ty * cfg.tiles_x + tx)];
      std::int64_t cdf = 0;
      for (int b = 0; b < 256; ++b) {
        cdf += hist[static_cast<std::size_t>(b)];
        map[static_cast<std::size_t>(b)] = static_cast<std::uint8_t>((2 * 255 * cdf + area) / (2LL * area));
      }
    }
  }
  return t;
}

GrayImage clahe(const GrayImage& image, const EnhanceConfig& cfg) {
  const ClaheTiles t = clahe_mappings(image, cfg);
  const auto ax = axis_weights(image.width(), t.tile_w, t.tiles_x);
  const auto ay = axis_weights(image.height(), t.tile_h, t.tiles_y);
  GrayImage out(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y) {
    const Axis& vy = ay[static_cast<std::size_t>(y)];
    for (int x = 0; x < image.width(); ++x) {
      const Axis& vx = ax[static_cast<std::size_t>(x)];
      const std::size_t v = image.at(x, y);
      const std::int64_t m00 = t.map(vx.lo, vy.lo)[v];
      const std::int64_t m01 = t.map(vx.hi, vy.lo)[v];
      const std::int64_t m10 = t.map(vx.lo, vy.hi)[v];
      const std::int64_t m11 = t.map(vx.hi, vy.hi)[v];
      const std::int64_t top = (vx.den - vx.frac) * m00 + vx.frac * m01;
      const std::int64_t bottom = (vx.den - vx.frac) * m10 + vx.frac * m11;
      const std::int64_t sum = (vy.den - vy.frac) * top + vy.frac * bottom;
      const std::int64_t den = vx.den * vy.den;
      const std::int64_t value = (2 * sum + den) / (2 * den);
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp<std::int64_t>(value, 0, 255));
    }
  }
  return out;
}

std::uint64_t HistogramReport::total() const noexcept {
  std::uint64_t s = 0;
  for (auto c : bins) s += c;
  return s;
}

int HistogramReport::percentile(double q) const {
  const std::uint64_t n = total();
  if (n == 0) fail(ErrorCode::kEmptyInput, "percentile of an empty histogram");
  const double target = q * static_cast<double>(n);
  std::uint64_t cum = 0;
  for (int b = 0; b < 256; ++b) {
    cum += bins[static_cast<std::size_t>(b)];
    if (static_cast<double>(cum) >= target) return b;
  }
  return 255;
}

HistogramReport dataset_histogram(std::span<const GrayImage> images, const std::string& tag) {
  if (images.empty()) fail(ErrorCode::kEmptyInput, "histogram needs at least one image");
  HistogramReport r;
  r.source_tag = tag;
  for (const auto& img : images) {
    for (std::uint8_t v : img.data()) ++r.bins[v];
  }
  return r;
}

std::string histogram_csv(const HistogramReport& report) {
  std::ostringstream os;
  os << "bin,count\n";
  for (int b = 0; b < 256; ++b) os << b << ',' << report.bins[static_cast<std::size_t>(b)] << '\n';
  return os.str();
}

std::string histogram_gnuplot(const HistogramReport& report) {
  std::ostringstream os;
  os << "# " << report.source_tag << "\n# intensity count\n";
  for (int b = 0; b < 256; ++b) os << b << ' ' << report.bins[static_cast<std::size_t>(b)] << '\n';
  return os.str();
}

}  // namespace bpseg
