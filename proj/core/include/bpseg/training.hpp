#pragma once

// Fold construction, SGD, learning-rate schedules and the per-fold training
// loop with best-validation-IoU retention.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bpseg/data_model.hpp"
#include "bpseg/losses.hpp"
#include "bpseg/metrics.hpp"
#include "bpseg/network.hpp"

namespace bpseg {

enum class LrSchedule {
  /// max(floor, lr0 - iteration * decrement)
  kLinear,
  /// max(floor, lr0 * (1 - iteration / total)^power)
  kPolynomial,
};

std::string_view to_string(LrSchedule s) noexcept;
LrSchedule parse_lr_schedule(std::string_view name);

struct TrainConfig {
  int batch_size = 4;
  double lr_initial = 0.01;
  double lr_decrement = 1e-5;
  double lr_floor = 1e-5;
  double momentum = 0.0;
  int epochs = 60;
  std::uint64_t seed = 0;
  ExperimentArm arm = ExperimentArm::make(ArmName::kMixedOptimization);
  LrSchedule schedule = LrSchedule::kLinear;
  double poly_power = 0.9;
  /// Iterations over which the polynomial schedule decays; required for kPolynomial.
  std::int64_t poly_iterations = 0;
  double ce_weight = 1.0;
  double lovasz_weight = 0.02;

  void validate() const;
  /// Loss weights with use_lovasz taken from the arm.
  LossConfig loss() const;
};

/// Non-increasing in iteration.
double lr_at(const TrainConfig& cfg, std::int64_t iteration);

/// Seeded shuffle followed by round-robin assignment. With trim_to_divisible,
/// |ids| mod k randomly chosen ids are removed first and listed in `dropped`.
/// Throws TooFewSamples when |ids| < k and InvalidArgument on k < 2 or
/// duplicate ids.
FoldPlan make_folds(std::span<const std::string> ids, int k, std::uint64_t seed, bool trim_to_divisible = false);

/// Momentum buffers, one per parameter tensor.
template <typename T>
struct SgdState {
  std::vector<std::vector<T>> velocity;
};

/// v = momentum * v + g; w = w - lr * v, using the gradients stored in params.
/// Non-trainable entries are skipped. Throws ShapeMismatch when the state was
/// built for a different layout and NonFiniteGradient before touching any
/// weight if a gradient is NaN or infinite.
template <typename T>
void sgd_step(ModelParams<T>& params, double lr, double momentum, SgdState<T>& state);

/// Network-ready example: square image at input resolution and its mask.
/// Augmented copies keep the id of their source sample.
struct TrainSample {
  std::string id;
  GrayImage image;
  BinaryMask mask;
};

/// Batch of images scaled to [0, 1].
Tensor<float> to_input(std::span<const TrainSample* const> batch);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_iou = 0.0;
  /// Learning rate of the epoch's last step.
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  /// 1-based; earliest epoch attaining best_iou.
  int best_epoch = 0;
  double best_iou = -1.0;
};

/// "epoch,loss,val_iou,lr" lines.
std::string history_csv(const TrainHistory& history);

struct TrainResult {
  ModelParams<float> best;
  TrainHistory history;
};

struct TrainOptions {
  /// Reject runs in which any validation id also appears in the training set.
  bool require_disjoint = true;
  std::function<void(const EpochRecord&)> on_epoch;
  /// Early stop after the epoch for which this returns true.
  std::function<bool(const EpochRecord&)> stop_when;
};

/// Epochs of ceil(N / batch) SGD steps over a per-epoch shuffle, validation
/// after every epoch in inference mode at logit threshold 0. Returns the
/// parameters of the best-IoU epoch (earliest on ties).
TrainResult train_fold(std::span<const TrainSample> train, std::span<const TrainSample> val,
                       const NetworkConfig& net_cfg, const TrainConfig& train_cfg, const TrainOptions& options = {});

struct EvalResult {
  IoUAccumulator aggregate;
  std::vector<double> per_image;
  std::vector<BinaryMask> predictions;
};

/// Inference-mode predictions; predictions are kept only when keep_masks is set.
EvalResult evaluate(const ModelParams<float>& params, std::span<const TrainSample> samples, int batch_size = 4,
                    bool keep_masks = false);

}  // namespace bpseg
