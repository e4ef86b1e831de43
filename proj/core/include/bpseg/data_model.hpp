#pragma once

// Shared domain types: rasters, annotated samples, fold plans and experiment arms.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bpseg/error.hpp"

namespace bpseg {

/// Row-major 2-D raster. The tag parameter keeps images, masks and score maps
/// from being mixed up at compile time even when they share a value type.
template <typename T, typename Tag>
class Grid {
 public:
  using value_type = T;

  Grid() = default;

  Grid(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) {
      fail(ErrorCode::kInvalidArgument, "grid dimensions must be positive");
    }
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  Grid(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width <= 0 || height <= 0) {
      fail(ErrorCode::kInvalidArgument, "grid dimensions must be positive");
    }
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      fail(ErrorCode::kShapeMismatch, "grid data length does not equal width x height");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& at(int x, int y) { return data_[index(x, y)]; }
  const T& at(int x, int y) const { return data_[index(x, y)]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  template <typename U, typename OtherTag>
  bool same_shape(const Grid<U, OtherTag>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  bool operator==(const Grid& other) const = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

struct GrayTag {};
struct MaskTag {};
struct ScoreTag {};
struct RgbTag {};

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const Rgb&) const = default;
};

using GrayImage = Grid<std::uint8_t, GrayTag>;
/// Labels are 0 (background) or 1 (nerve trunk); other values are invalid data.
using BinaryMask = Grid<std::uint8_t, MaskTag>;
/// Per-pixel logits.
using ScoreMap = Grid<double, ScoreTag>;
using RgbImage = Grid<Rgb, RgbTag>;

enum class Device { kYgy, kBk3000If1, kBk3000If2, kSynthetic };

std::string_view to_string(Device device) noexcept;
Device parse_device(std::string_view name);
std::vector<Device> all_devices();

struct AnnotatedSample {
  std::string id;
  Device device = Device::kSynthetic;
  GrayImage image;
  BinaryMask consensus;
  std::map<std::string, BinaryMask> rater_masks;
  std::map<std::string, BinaryMask> second_pass_masks;
};

/// Returns one description per violated invariant; empty means valid.
/// Never throws on a well-typed sample.
std::vector<std::string> validate_sample(const AnnotatedSample& sample);

/// Sample-level checks plus id uniqueness across the dataset.
std::vector<std::string> validate_dataset(std::span<const AnnotatedSample> samples);

struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::map<std::string, int> assignments;
  /// Ids removed so the remainder divides evenly by k.
  std::vector<std::string> dropped;

  std::vector<std::string> test_ids(int fold) const;
  std::vector<std::string> train_ids(int fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

std::string fold_plan_to_json(const FoldPlan& plan);
FoldPlan fold_plan_from_json(std::string_view text);

enum class ArmName { kOriginal, kModifiedLoss, kEnhanced, kMixedOptimization };

struct ExperimentArm {
  ArmName name = ArmName::kOriginal;
  bool use_clahe = false;
  bool use_lovasz = false;

  static ExperimentArm make(ArmName name) noexcept;
  bool operator==(const ExperimentArm&) const = default;
};

/// The four arms in table column order.
std::vector<ExperimentArm> all_arms();
/// Lower-case snake identifier, e.g. "mixed_optimization".
std::string_view arm_key(ArmName name) noexcept;
/// Column heading used in rendered tables.
std::string_view arm_title(ArmName name) noexcept;
ArmName parse_arm(std::string_view key);
bool arm_is_consistent(const ExperimentArm& arm) noexcept;

}  // namespace bpseg
