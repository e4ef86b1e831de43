#pragma once

// Binary segmentation losses on single-logit score maps.

#include <cstdint>
#include <span>
#include <vector>

#include "bpseg/data_model.hpp"

namespace bpseg {

struct LossValue {
  double value = 0.0;
  /// d value / d score, one entry per pixel.
  std::vector<double> gradient;
};

struct LossConfig {
  double lovasz_weight = 0.02;
  double ce_weight = 1.0;
  bool use_lovasz = true;

  void validate() const;
};

/// Mean sigmoid cross-entropy, evaluated in the overflow-free form
/// max(s, 0) - s*y + log1p(exp(-|s|)).
LossValue ce_loss(std::span<const double> scores, std::span<const std::uint8_t> truth);
LossValue ce_loss(const ScoreMap& scores, const BinaryMask& truth);

/// Gradient of the Lovász extension of the Jaccard loss, given ground truth
/// already ordered by decreasing error. Throws EmptyInput.
std::vector<double> lovasz_grad_coefficients(std::span<const std::uint8_t> sorted_truth);

/// Lovász hinge for one image. Hinge errors are sorted with a stable
/// permutation (ties keep pixel order); the returned gradient is the
/// subgradient for that fixed ordering.
LossValue lovasz_hinge(std::span<const double> scores, std::span<const std::uint8_t> truth);
LossValue lovasz_hinge(const ScoreMap& scores, const BinaryMask& truth);

/// ce_weight * CE + (use_lovasz ? lovasz_weight * Lovász : 0).
LossValue combined_loss(std::span<const double> scores, std::span<const std::uint8_t> truth,
                        const LossConfig& cfg);
LossValue combined_loss(const ScoreMap& scores, const BinaryMask& truth, const LossConfig& cfg);

struct BatchLoss {
  double value = 0.0;
  /// Per-image gradients, already divided by the batch size.
  std::vector<std::vector<double>> gradients;
};

/// Per-image combined loss averaged over the batch.
BatchLoss combined_loss_batch(std::span<const ScoreMap> scores, std::span<const BinaryMask> truth,
                              const LossConfig& cfg);

}  // namespace bpseg
