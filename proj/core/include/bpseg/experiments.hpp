#pragma once

// Study orchestration: arm-wise k-fold cross-validation, rater comparison,
// assisted-relabel contrast, overlays and table rendering.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bpseg/enhance.hpp"
#include "bpseg/preprocess.hpp"
#include "bpseg/training.hpp"

namespace bpseg {

struct PrepConfig {
  int input_size = 224;
  /// final_size must equal input_size.
  AugmentConfig augment;
  EnhanceConfig enhance;
  bool augment_train = true;

  void validate() const;
};

/// Crops image, consensus and every rater mask to the profile.
AnnotatedSample crop_sample(const AnnotatedSample& sample, const DeviceCropProfile& profile);

/// Test-side preparation: resize to input_size, then CLAHE if the arm uses it.
std::vector<TrainSample> prepare_eval_set(std::span<const AnnotatedSample> samples, const ExperimentArm& arm,
                                          const PrepConfig& prep);

/// Training-side preparation: six-fold augmentation (or a plain resize when
/// augment_train is off), then CLAHE on every output if the arm uses it.
/// Augmentation of a sample is seeded by (prep.augment.seed, sample id).
std::vector<TrainSample> prepare_train_set(std::span<const AnnotatedSample> samples, const ExperimentArm& arm,
                                           const PrepConfig& prep);

struct ArmReport {
  ExperimentArm arm;
  /// Aggregate IoU (sum of intersections over sum of unions) per test fold.
  std::vector<double> per_fold_iou;
  /// Mean of per-image IoUs per test fold.
  std::vector<double> per_fold_image_mean;
  double average = 0.0;
  DispersionStats dispersion;
  std::vector<TrainHistory> histories;
};

struct FoldOutcome {
  int fold = 0;
  const TrainResult* result = nullptr;
  const EvalResult* eval = nullptr;
  std::vector<std::string> test_ids;
};

struct CrossvalOptions {
  PrepConfig prep;
  /// Folds trained concurrently.
  int workers = 1;
  /// Called from worker threads; must be thread-safe when workers > 1.
  std::function<void(int fold, const EpochRecord&)> on_epoch;
  /// Called in fold order after all folds finish.
  std::function<void(const FoldOutcome&)> on_fold;
};

/// Seeds of fold f: network derive_seed(net.seed, f), shuffling
/// derive_seed(train.seed, f).
NetworkConfig fold_network_config(const NetworkConfig& net_cfg, int fold);
TrainConfig fold_train_config(const TrainConfig& train_cfg, const ExperimentArm& arm, int fold);

/// Throws InvalidArgument unless every planned id exists in the dataset and
/// every dataset id is either assigned or dropped.
void check_plan_covers(std::span<const AnnotatedSample> dataset, const FoldPlan& plan);

ArmReport run_crossval(std::span<const AnnotatedSample> dataset, const ExperimentArm& arm, const NetworkConfig& net_cfg,
                       const TrainConfig& train_cfg, const FoldPlan& plan, const CrossvalOptions& options = {});

struct RaterRow {
  std::string name;
  std::vector<double> per_fold_iou;
  double average = 0.0;
};

struct RaterReport {
  int k = 0;
  std::vector<RaterRow> raters;
  std::optional<RaterRow> system;
  /// Pooled over every (rater, fold) value.
  DispersionStats rater_dispersion;
  /// Across the rater averages.
  DispersionStats rater_average_dispersion;
  std::optional<DispersionStats> system_dispersion;
};

/// Per rater and fold, aggregate IoU of the rater masks against consensus on
/// that fold's test samples. No model is evaluated. rater_ids defaults to the
/// raters of the first sample. Throws MissingRaterMask.
RaterReport compare_raters(std::span<const AnnotatedSample> dataset, const FoldPlan& plan,
                           std::vector<std::string> rater_ids = {}, const ArmReport* system = nullptr);

struct ContrastReport {
  std::string dataset_tag;
  int fold = 0;
  std::string rater;
  double original_iou = 0.0;
  double second_iou = 0.0;
  /// improvement_percent(original_iou, second_iou)
  double improvement = 0.0;
};

/// Throws MissingRaterMask when a test sample of the fold lacks either pass.
ContrastReport assisted_relabel_report(std::span<const AnnotatedSample> dataset, const std::string& rater_id, int fold,
                                       const FoldPlan& plan, const std::string& dataset_tag);

struct OverlayPalette {
  Rgb truth_boundary{0, 255, 0};
  Rgb prediction{255, 64, 0};
  /// Prediction blend weight in 1/256 units.
  int alpha = 102;
};

/// Grayscale base, prediction alpha-blended, then truth boundary pixels (truth
/// pixels with a 4-neighbour inside the frame that is background) painted.
RgbImage render_overlay(const GrayImage& image, const BinaryMask& pred, const BinaryMask& truth,
                        const OverlayPalette& palette = {});

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// Free text printed below the Markdown table.
  std::vector<std::string> notes;

  std::string csv() const;
  std::string markdown() const;
};

/// One arm: fold rows then "Average value"; columns fold, IoU, per-image mean.
Table arm_table(const ArmReport& report);
/// Several arms side by side in the layout of the per-dataset result tables.
Table arms_table(std::span<const ArmReport> reports);
/// Per-fold IoU of every rater and the system.
Table rater_fold_table(const RaterReport& report);
/// One row per dataset: rater averages, system average, rater and system
/// dispersion. Each dispersion cell lists population variance / sample
/// variance / mean absolute deviation.
Table rater_summary_table(std::span<const std::pair<std::string, RaterReport>> reports);
Table contrast_table(std::span<const ContrastReport> reports);

}  // namespace bpseg
