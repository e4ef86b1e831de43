#include "bpseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bpseg {
namespace {

void check_pair(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  if (scores.size() != truth.size()) fail(ErrorCode::kShapeMismatch, "scores and truth differ in length");
  if (scores.empty()) fail(ErrorCode::kEmptyInput, "loss over zero pixels");
}

void check_pair(const ScoreMap& scores, const BinaryMask& truth) {
  if (!scores.same_shape(truth)) fail(ErrorCode::kShapeMismatch, "score map and mask differ in size");
}

double sigmoid(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

}  // namespace

void LossConfig::validate() const {
  if (!(lovasz_weight >= 0.0) || !(ce_weight >= 0.0)) fail(ErrorCode::kInvalidConfig, "loss weights must be >= 0");
}

LossValue ce_loss(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  check_pair(scores, truth);
  const double n = static_cast<double>(scores.size());
  LossValue out;
  out.gradient.resize(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    const double y = truth[i] != 0 ? 1.0 : 0.0;
    sum += std::max(s, 0.0) - s * y + std::log1p(std::exp(-std::abs(s)));
    out.gradient[i] = (sigmoid(s) - y) / n;
  }
  out.value = sum / n;
  return out;
}

LossValue ce_loss(const ScoreMap& scores, const BinaryMask& truth) {
  check_pair(scores, truth);
  return ce_loss(scores.data(), truth.data());
}

std::vector<double> lovasz_grad_coefficients(std::span<const std::uint8_t> sorted_truth) {
  if (sorted_truth.empty()) fail(ErrorCode::kEmptyInput, "Lovász coefficients of an empty ordering");
  const std::size_t n = sorted_truth.size();
  double positives = 0.0;
  for (auto y : sorted_truth) positives += (y != 0) ? 1.0 : 0.0;

  std::vector<double> g(n);
  double cum_pos = 0.0;
  double cum_neg = 0.0;
  double prev = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (sorted_truth[k] != 0) {
      cum_pos += 1.0;
    } else {
      cum_neg += 1.0;
    }
    const double intersection = positives - cum_pos;
    const double uni = positives + cum_neg;
    const double jacc = 1.0 - intersection / uni;
    g[k] = (k == 0) ? jacc : jacc - prev;
    prev = jacc;
  }
  return g;
}

LossValue lovasz_hinge(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  check_pair(scores, truth);
  const std::size_t n = scores.size();
  std::vector<double> errors(n);
  std::vector<double> signs(n);
  for (std::size_t i = 0; i < n; ++i) {
    signs[i] = truth[i] != 0 ? 1.0 : -1.0;
    errors[i] = std::max(0.0, 1.0 - scores[i] * signs[i]);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return errors[a] > errors[b]; });

  std::vector<std::uint8_t> sorted_truth(n);
  for (std::size_t k = 0; k < n; ++k) sorted_truth[k] = truth[order[k]] != 0 ? 1 : 0;
  const std::vector<double> g = lovasz_grad_coefficients(sorted_truth);

  LossValue out;
  out.gradient.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k];
    if (errors[i] <= 0.0) break;  // sorted descending: the rest are zero too
    out.value += errors[i] * g[k];
    out.gradient[i] = -signs[i] * g[k];
  }
  return out;
}

LossValue lovasz_hinge(const ScoreMap& scores, const BinaryMask& truth) {
  check_pair(scores, truth);
  return lovasz_hinge(scores.data(), truth.data());
}

LossValue combined_loss(std::span<const double> scores, std::span<const std::uint8_t> truth,
                        const LossConfig& cfg) {
  cfg.validate();
  LossValue ce = ce_loss(scores, truth);
  LossValue out;
  out.value = cfg.ce_weight * ce.value;
  out.gradient = std::move(ce.gradient);
  for (auto& g : out.gradient) g *= cfg.ce_weight;
  if (cfg.use_lovasz) {
    const LossValue lv = lovasz_hinge(scores, truth);
    out.value += cfg.lovasz_weight * lv.value;
    for (std::size_t i = 0; i < out.gradient.size(); ++i) out.gradient[i] += cfg.lovasz_weight * lv.gradient[i];
  }
  return out;
}

LossValue combined_loss(const ScoreMap& scores, const BinaryMask& truth, const LossConfig& cfg) {
  check_pair(scores, truth);
  return combined_loss(scores.data(), truth.data(), cfg);
}

BatchLoss combined_loss_batch(std::span<const ScoreMap> scores, std::span<const BinaryMask> truth,
                              const LossConfig& cfg) {
  if (scores.size() != truth.size()) fail(ErrorCode::kShapeMismatch, "batch sizes differ");
  if (scores.empty()) fail(ErrorCode::kEmptyInput, "empty batch");
  const double b = static_cast<double>(scores.size());
  BatchLoss out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    LossValue lv = combined_loss(scores[i], truth[i], cfg);
    out.value += lv.value / b;
    for (auto& g : lv.gradient) g /= b;
    out.gradients.push_back(std::move(lv.gradient));
  }
  return out;
}

}  // namespace bpseg
