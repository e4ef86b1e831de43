#include "bpseg/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace bpseg {

BinaryMask binarize(const ScoreMap& scores, double threshold) {
  BinaryMask out(scores.width(), scores.height(), 0);
  const auto s = scores.data();
  auto m = out.data();
  for (std::size_t i = 0; i < s.size(); ++i) m[i] = s[i] >= threshold ? 1 : 0;
  return out;
}

IoUAccumulator& IoUAccumulator::merge(const IoUAccumulator& other) noexcept {
  intersection_sum += other.intersection_sum;
  union_sum += other.union_sum;
  return *this;
}

IoUAccumulator iou_accumulate(IoUAccumulator acc, const BinaryMask& pred, const BinaryMask& truth) {
  if (!pred.same_shape(truth)) fail(ErrorCode::kShapeMismatch, "prediction and truth differ in size");
  const auto p = pred.data();
  const auto t = truth.data();
  std::int64_t inter = 0;
  std::int64_t uni = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool a = p[i] != 0;
    const bool b = t[i] != 0;
    inter += (a && b) ? 1 : 0;
    uni += (a || b) ? 1 : 0;
  }
  acc.intersection_sum += inter;
  acc.union_sum += uni;
  return acc;
}

double iou_value(const IoUAccumulator& acc) noexcept {
  if (acc.union_sum == 0) return 1.0;
  return static_cast<double>(acc.intersection_sum) / static_cast<double>(acc.union_sum);
}

double iou(const BinaryMask& pred, const BinaryMask& truth) { return iou_value(iou_accumulate({}, pred, truth)); }

DispersionStats dispersion(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::kEmptyInput, "dispersion of an empty list");
  DispersionStats d;
  d.count = values.size();
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  d.mean = sum / n;
  double sq = 0.0;
  double abs_dev = 0.0;
  for (double v : values) {
    sq += (v - d.mean) * (v - d.mean);
    abs_dev += std::abs(v - d.mean);
  }
  d.population_variance = sq / n;
  d.sample_variance = values.size() > 1 ? sq / (n - 1.0) : 0.0;
  d.mean_abs_deviation = abs_dev / n;
  return d;
}

double improvement_percent(double before, double after) {
  if (!(before > 0.0)) fail(ErrorCode::kNonPositiveBaseline, "improvement baseline must be > 0");
  return 100.0 * (after - before) / before;
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  std::string s(buf);
  if (s == "-0" || s.rfind("-0.", 0) == 0) {
    // Avoid "-0.0000" for tiny negatives.
    bool all_zero = true;
    for (char c : s.substr(1)) all_zero = all_zero && (c == '0' || c == '.');
    if (all_zero) s = s.substr(1);
  }
  return s;
}

}  // namespace bpseg
