#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bpseg/error.hpp"

namespace bpseg {

/// Dense NCHW activation tensor.
template <typename T>
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T{}) { reset(n_, c_, h_, w_, fill); }

  void reset(int n_, int c_, int h_, int w_, T fill = T{}) {
    n = n_;
    c = c_;
    h = h_;
    w = w_;
    data.assign(size(), fill);
  }

  /// Reshape without clearing when the element count is unchanged.
  void ensure(int n_, int c_, int h_, int w_) {
    if (n_ != n || c_ != c || h_ != h || w_ != w) reset(n_, c_, h_, w_);
  }

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  std::size_t image_stride() const noexcept { return static_cast<std::size_t>(c) * plane(); }

  T* image(int i) noexcept { return data.data() + static_cast<std::size_t>(i) * image_stride(); }
  const T* image(int i) const noexcept { return data.data() + static_cast<std::size_t>(i) * image_stride(); }
  T* channel(int i, int ch) noexcept { return image(i) + static_cast<std::size_t>(ch) * plane(); }
  const T* channel(int i, int ch) const noexcept { return image(i) + static_cast<std::size_t>(ch) * plane(); }

  bool same_shape(const Tensor& o) const noexcept { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

}  // namespace bpseg
