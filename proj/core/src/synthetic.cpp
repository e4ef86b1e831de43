#include "bpseg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "bpseg/preprocess.hpp"

namespace bpseg {

namespace {

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

// Rayleigh with unit mean.
double rayleigh(Rng& rng) {
  const double sigma = 1.0 / std::sqrt(std::numbers::pi / 2.0);
  return sigma * std::sqrt(-2.0 * std::log1p(-uniform01(rng)));
}

double gaussian(Rng& rng) {
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double normalized_radius(const Ellipse& e, double px, double py) {
  const double dx = px - e.cx;
  const double dy = py - e.cy;
  const double c = std::cos(e.angle);
  const double s = std::sin(e.angle);
  const double u = (dx * c + dy * s) / e.ax;
  const double v = (-dx * s + dy * c) / e.ay;
  return std::sqrt(u * u + v * v);
}

}  // namespace

void PhantomConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorCode::kConfigError, m); };
  if (count < 1) bad("count must be >= 1");
  if (trunks_min < 0 || trunks_max < trunks_min) bad("trunk count range is invalid");
  if (!(radius_min > 0.0) || radius_max < radius_min) bad("radius range must be positive");
  if (distractors_max < 0) bad("distractors_max must be >= 0");
  if (speckle_scale < 0.0 || speckle_scale > 1.0) bad("speckle_scale must be in [0, 1]");
  for (double v : {background_level, trunk_level, rim_brightness}) {
    if (v < 0.0 || v > 255.0) bad("intensity levels must be in [0, 255]");
  }
  if (rim_fraction < 0.0) bad("rim_fraction must be >= 0");
  if (network_scale) {
    if (network_size < 16) bad("network_size must be >= 16");
  } else {
    const auto p = crop_profile(Device::kSynthetic);
    if (frame_width < p.origin_x + p.crop_width || frame_height < p.origin_y + p.crop_height) {
      bad("frame is smaller than the synthetic crop profile");
    }
  }
  if (2.0 * radius_max * (1.0 + rim_fraction) + 4.0 >= network_size) bad("radius_max too large for network_size");
}

bool Ellipse::contains(double px, double py) const noexcept {
  const double dx = px - cx;
  const double dy = py - cy;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double u = (dx * c + dy * s) / ax;
  const double v = (-dx * s + dy * c) / ay;
  return u * u + v * v <= 1.0;
}

BinaryMask ellipse_mask(std::span<const Ellipse> ellipses, int width, int height) {
  BinaryMask m(width, height);
  for (const auto& e : ellipses) {
    const double r = std::max(e.ax, e.ay);
    const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - r - 1)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(e.cx + r + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - r - 1)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(e.cy + r + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (e.contains(x + 0.5, y + 0.5)) m.at(x, y) = 1;
      }
    }
  }
  return m;
}

std::vector<Polygon> ellipse_polygons(std::span<const Ellipse> ellipses, int vertices) {
  if (vertices < 3) fail(ErrorCode::kInvalidArgument, "an outline needs at least 3 vertices");
  std::vector<Polygon> out;
  for (const auto& e : ellipses) {
    Polygon p;
    const double c = std::cos(e.angle);
    const double s = std::sin(e.angle);
    for (int i = 0; i < vertices; ++i) {
      const double t = 2.0 * std::numbers::pi * i / vertices;
      const double u = e.ax * std::cos(t);
      const double v = e.ay * std::sin(t);
      // Pixel-centre convention: polygon coordinates are continuous image space.
      p.vertices.push_back({e.cx + u * c - v * s, e.cy + u * s + v * c});
    }
    out.push_back(std::move(p));
  }
  return out;
}

Phantom generate_phantom(const PhantomConfig& cfg, int index) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(index)));
  const double n = cfg.network_size;

  // Layout in network coordinates.
  struct Blob {
    Ellipse e;
    bool trunk;
  };
  std::vector<Blob> blobs;
  const int trunks = uniform_int(rng, cfg.trunks_min, cfg.trunks_max);
  const int distractors = uniform_int(rng, 0, cfg.distractors_max);
  for (int b = 0; b < trunks + distractors; ++b) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      Ellipse e;
      e.ax = uniform(rng, cfg.radius_min, cfg.radius_max);
      e.ay = std::clamp(e.ax * uniform(rng, 0.7, 1.3), cfg.radius_min, cfg.radius_max);
      const double reach = std::max(e.ax, e.ay) * (1.0 + cfg.rim_fraction) + 2.0;
      e.cx = uniform(rng, reach, n - reach);
      e.cy = uniform(rng, reach, n - reach);
      bool clear = true;
      for (const auto& o : blobs) {
        const double other = std::max(o.e.ax, o.e.ay) * (1.0 + cfg.rim_fraction) + 2.0;
        if (std::hypot(e.cx - o.e.cx, e.cy - o.e.cy) < reach + other) {
          clear = false;
          break;
        }
      }
      if (clear) {
        blobs.push_back({e, b < trunks});
        break;
      }
    }
  }

  // Map to frame coordinates.
  int width = cfg.network_size;
  int height = cfg.network_size;
  double ox = 0.0, oy = 0.0, sx = 1.0, sy = 1.0;
  DeviceCropProfile roi{Device::kSynthetic, 0, 0, width, height};
  if (!cfg.network_scale) {
    roi = crop_profile(Device::kSynthetic);
    width = cfg.frame_width;
    height = cfg.frame_height;
    ox = roi.origin_x;
    oy = roi.origin_y;
    sx = roi.crop_width / n;
    sy = roi.crop_height / n;
  }
  for (auto& b : blobs) {
    b.e.cx = ox + b.e.cx * sx;
    b.e.cy = oy + b.e.cy * sy;
    b.e.ax *= sx;
    b.e.ay *= sy;
  }

  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double period = uniform(rng, 0.3, 0.6) * roi.crop_height;
  GrayImage image(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const bool inside_roi = x >= roi.origin_x && x < roi.origin_x + roi.crop_width && y >= roi.origin_y &&
                              y < roi.origin_y + roi.crop_height;
      if (!inside_roi) {
        image.at(x, y) = (y < 20 && x > width / 3 && x < 2 * width / 3) ? 90 : 0;
        continue;
      }
      const double px = x + 0.5;
      const double py = y + 0.5;
      double v = cfg.background_level * (1.0 + 0.2 * std::sin(2.0 * std::numbers::pi * py / period + phase));
      for (const auto& b : blobs) {
        const double rho = normalized_radius(b.e, px, py);
        if (rho <= 1.0) {
          v = b.trunk ? cfg.trunk_level : 0.8 * cfg.trunk_level;
        } else if (b.trunk && cfg.rim_fraction > 0.0 && rho <= 1.0 + cfg.rim_fraction) {
          v = std::max(v, cfg.rim_brightness * (1.0 - 0.5 * (rho - 1.0) / cfg.rim_fraction));
        }
      }
      if (cfg.speckle_scale > 0.0) v *= 1.0 + cfg.speckle_scale * (rayleigh(rng) - 1.0);
      image.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }

  Phantom out;
  for (const auto& b : blobs) {
    if (b.trunk) out.trunks.push_back(b.e);
  }
  char id[32];
  std::snprintf(id, sizeof(id), "phantom_%04d", index);
  out.sample.id = id;
  out.sample.device = Device::kSynthetic;
  out.sample.image = std::move(image);
  out.sample.consensus = ellipse_mask(out.trunks, width, height);
  return out;
}

std::vector<Phantom> generate_phantoms(const PhantomConfig& cfg) {
  cfg.validate();
  std::vector<Phantom> out;
  out.reserve(static_cast<std::size_t>(cfg.count));
  for (int i = 0; i < cfg.count; ++i) out.push_back(generate_phantom(cfg, i));
  return out;
}

void RaterSimConfig::validate() const {
  if (!(drop_probability >= 0.0 && drop_probability <= 1.0)) {
    fail(ErrorCode::kConfigError, "drop_probability must be in [0, 1]");
  }
  if (boundary_jitter_sd < 0.0) fail(ErrorCode::kConfigError, "boundary_jitter_sd must be >= 0");
}

namespace {

// Felzenszwalb-Huttenlocher 1-D squared distance transform.
void edt_1d(const double* f, int n, double* d, std::vector<int>& v, std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n) + 1, 0.0);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s;
    for (;;) {
      const int p = v[static_cast<std::size_t>(k)];
      s = ((f[q] + q * 1.0 * q) - (f[p] + p * 1.0 * p)) / (2.0 * (q - p));
      if (s <= z[static_cast<std::size_t>(k)] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    if (s <= z[static_cast<std::size_t>(k)]) {
      // k == 0 and the new parabola dominates everywhere.
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = inf;
  }
  if (k < 0) {
    std::fill(d, d + n, inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j) + 1] < q) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    d[q] = (q - p) * 1.0 * (q - p) + f[p];
  }
}

}  // namespace

std::vector<double> distance_to_label(const BinaryMask& mask, std::uint8_t target) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  // One pixel of label-0 padding on every side.
  const int w = mask.width() + 2;
  const int h = mask.height() + 2;
  std::vector<double> g(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool inside = x > 0 && y > 0 && x < w - 1 && y < h - 1;
      const std::uint8_t label = inside ? mask.at(x - 1, y - 1) : 0;
      g[static_cast<std::size_t>(y) * w + x] = label == target ? 0.0 : inf;
    }
  }
  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> col(static_cast<std::size_t>(h)), out(static_cast<std::size_t>(std::max(w, h)));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col[static_cast<std::size_t>(y)] = g[static_cast<std::size_t>(y) * w + x];
    edt_1d(col.data(), h, out.data(), v, z);
    for (int y = 0; y < h; ++y) g[static_cast<std::size_t>(y) * w + x] = out[static_cast<std::size_t>(y)];
  }
  for (int y = 0; y < h; ++y) {
    double* row = g.data() + static_cast<std::size_t>(y) * w;
    edt_1d(row, w, out.data(), v, z);
    std::copy(out.begin(), out.begin() + w, row);
  }
  std::vector<double> d(mask.size());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      d[static_cast<std::size_t>(y) * mask.width() + x] = std::sqrt(g[static_cast<std::size_t>(y + 1) * w + x + 1]);
    }
  }
  return d;
}

BinaryMask simulate_rater(const BinaryMask& consensus, const RaterSimConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int w = consensus.width();
  const int h = consensus.height();
  BinaryMask m = consensus;

  if (cfg.dilate_or_erode > 0) {
    const auto d = distance_to_label(m, 1);
    const double r = cfg.dilate_or_erode;
    for (std::size_t i = 0; i < d.size(); ++i) m.storage()[i] = d[i] <= r ? 1 : 0;
  } else if (cfg.dilate_or_erode < 0) {
    const auto d = distance_to_label(m, 0);
    const double r = -cfg.dilate_or_erode;
    for (std::size_t i = 0; i < d.size(); ++i) m.storage()[i] = (m.storage()[i] != 0 && d[i] > r) ? 1 : 0;
  }

  if (cfg.boundary_jitter_sd > 0.0) {
    // Smooth displacement: Gaussian values on an 8-pixel lattice, bilinearly interpolated.
    constexpr int cell = 8;
    const int gw = w / cell + 2;
    const int gh = h / cell + 2;
    std::vector<double> lattice(static_cast<std::size_t>(gw) * static_cast<std::size_t>(gh));
    for (auto& v : lattice) v = cfg.boundary_jitter_sd * gaussian(rng);
    const auto to_bg = distance_to_label(m, 0);
    const auto to_fg = distance_to_label(m, 1);
    BinaryMask out(w, h);
    for (int y = 0; y < h; ++y) {
      const double gy = static_cast<double>(y) / cell;
      const int y0 = static_cast<int>(gy);
      const double fy = gy - y0;
      for (int x = 0; x < w; ++x) {
        const double gx = static_cast<double>(x) / cell;
        const int x0 = static_cast<int>(gx);
        const double fx = gx - x0;
        auto L = [&](int i, int j) { return lattice[static_cast<std::size_t>(j) * gw + i]; };
        const double shift = (1 - fy) * ((1 - fx) * L(x0, y0) + fx * L(x0 + 1, y0)) +
                             fy * ((1 - fx) * L(x0, y0 + 1) + fx * L(x0 + 1, y0 + 1));
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const double signed_dist = m.storage()[i] != 0 ? to_bg[i] - 0.5 : -(to_fg[i] - 0.5);
        out.storage()[i] = signed_dist + shift > 0.0 ? 1 : 0;
      }
    }
    m = std::move(out);
  }

  if (cfg.drop_probability > 0.0) {
    std::vector<int> label(m.size(), -1);
    std::vector<std::size_t> stack;
    int components = 0;
    std::vector<bool> drop;
    for (std::size_t start = 0; start < m.size(); ++start) {
      if (m.storage()[start] == 0 || label[start] >= 0) continue;
      const bool dropped = uniform01(rng) < cfg.drop_probability;
      drop.push_back(dropped);
      label[start] = components;
      stack.push_back(start);
      while (!stack.empty()) {
        const std::size_t p = stack.back();
        stack.pop_back();
        const int px = static_cast<int>(p % static_cast<std::size_t>(w));
        const int py = static_cast<int>(p / static_cast<std::size_t>(w));
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = px + dx, ny = py + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
            if (m.storage()[q] != 0 && label[q] < 0) {
              label[q] = components;
              stack.push_back(q);
            }
          }
        }
      }
      ++components;
    }
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (label[i] >= 0 && drop[static_cast<std::size_t>(label[i])]) m.storage()[i] = 0;
    }
  }
  return m;
}

}  // namespace bpseg
