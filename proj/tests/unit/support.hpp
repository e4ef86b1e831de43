#pragma once

#include <initializer_list>
#include <string>
#include <vector>

#include "bpseg/data_model.hpp"
#include "bpseg/rng.hpp"

namespace bpseg::test {

// Rows of '#' (1) and '.' (0).
inline BinaryMask mask_from(std::initializer_list<const char*> rows) {
  std::vector<std::string> r(rows.begin(), rows.end());
  BinaryMask m(static_cast<int>(r[0].size()), static_cast<int>(r.size()));
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) m.at(x, y) = r[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] == '#';
  }
  return m;
}

inline GrayImage random_image(int w, int h, std::uint64_t seed, int lo = 0, int hi = 255) {
  Rng rng(seed);
  GrayImage img(w, h);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(lo + static_cast<int>(uniform_below(rng, hi - lo + 1)));
  return img;
}

inline BinaryMask random_mask(int w, int h, std::uint64_t seed, int percent = 50) {
  Rng rng(seed);
  BinaryMask m(w, h);
  for (auto& v : m.data()) v = uniform_below(rng, 100) < static_cast<std::uint64_t>(percent) ? 1 : 0;
  return m;
}

inline BinaryMask disk(int w, int h, double cx, double cy, double r) {
  BinaryMask m(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      m.at(x, y) = dx * dx + dy * dy <= r * r;
    }
  }
  return m;
}

inline AnnotatedSample sample_with(const std::string& id, const BinaryMask& consensus) {
  AnnotatedSample s;
  s.id = id;
  s.image = GrayImage(consensus.width(), consensus.height(), 40);
  s.consensus = consensus;
  return s;
}

}  // namespace bpseg::test
