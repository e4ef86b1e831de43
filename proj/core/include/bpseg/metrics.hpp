#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "bpseg/data_model.hpp"

namespace bpseg {

/// pixel = 1 iff score >= threshold (a zero logit counts as foreground).
BinaryMask binarize(const ScoreMap& scores, double threshold = 0.0);

/// Running pixel counts for aggregate IoU (sum of overlaps over sum of unions).
struct IoUAccumulator {
  std::int64_t intersection_sum = 0;
  std::int64_t union_sum = 0;

  /// Accumulators merge associatively and commutatively.
  IoUAccumulator& merge(const IoUAccumulator& other) noexcept;
  bool operator==(const IoUAccumulator&) const = default;
};

/// Throws ShapeMismatch.
IoUAccumulator iou_accumulate(IoUAccumulator acc, const BinaryMask& pred, const BinaryMask& truth);

/// intersection / union, or 1.0 for an empty union.
double iou_value(const IoUAccumulator& acc) noexcept;

/// Single-pair IoU.
double iou(const BinaryMask& pred, const BinaryMask& truth);

struct DispersionStats {
  double mean = 0.0;
  double population_variance = 0.0;
  double sample_variance = 0.0;
  double mean_abs_deviation = 0.0;
  std::size_t count = 0;
};

/// Throws EmptyInput. Sample variance is 0 for a single value.
DispersionStats dispersion(std::span<const double> values);

/// 100 * (after - before) / before. Throws NonPositiveBaseline.
double improvement_percent(double before, double after);

/// Fixed-point rendering with the given number of decimals.
std::string format_fixed(double value, int decimals);

}  // namespace bpseg
