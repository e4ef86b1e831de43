#include "bpseg/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "bpseg/rng.hpp"

namespace bpseg {

void PrepConfig::validate() const {
  if (input_size < 1) fail(ErrorCode::kInvalidConfig, "input_size must be >= 1");
  augment.validate();
  enhance.validate();
  if (augment.final_size != input_size) {
    fail(ErrorCode::kInvalidConfig, "augment final_size must equal input_size");
  }
}

AnnotatedSample crop_sample(const AnnotatedSample& sample, const DeviceCropProfile& profile) {
  AnnotatedSample out;
  out.id = sample.id;
  out.device = sample.device;
  out.image = crop_roi(sample.image, profile);
  out.consensus = crop_roi(sample.consensus, profile);
  for (const auto& [k, m] : sample.rater_masks) out.rater_masks.emplace(k, crop_roi(m, profile));
  for (const auto& [k, m] : sample.second_pass_masks) out.second_pass_masks.emplace(k, crop_roi(m, profile));
  return out;
}

std::vector<TrainSample> prepare_eval_set(std::span<const AnnotatedSample> samples, const ExperimentArm& arm,
                                          const PrepConfig& prep) {
  prep.validate();
  std::vector<TrainSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    TrainSample t{s.id, resize(s.image, prep.input_size, prep.input_size),
                  resize(s.consensus, prep.input_size, prep.input_size)};
    if (arm.use_clahe) t.image = clahe(t.image, prep.enhance);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<TrainSample> prepare_train_set(std::span<const AnnotatedSample> samples, const ExperimentArm& arm,
                                           const PrepConfig& prep) {
  if (!prep.augment_train) return prepare_eval_set(samples, arm, prep);
  prep.validate();
  std::vector<TrainSample> out;
  out.reserve(samples.size() * static_cast<std::size_t>(2 + 2 * prep.augment.crops_per_image));
  for (const auto& s : samples) {
    AugmentConfig a = prep.augment;
    a.seed = derive_seed(prep.augment.seed, s.id);
    for (auto& pair : augment_sixfold(s.image, s.consensus, a)) {
      TrainSample t{s.id, std::move(pair.image), std::move(pair.mask)};
      if (arm.use_clahe) t.image = clahe(t.image, prep.enhance);
      out.push_back(std::move(t));
    }
  }
  return out;
}

NetworkConfig fold_network_config(const NetworkConfig& net_cfg, int fold) {
  NetworkConfig c = net_cfg;
  c.seed = derive_seed(net_cfg.seed, static_cast<std::uint64_t>(fold));
  return c;
}

TrainConfig fold_train_config(const TrainConfig& train_cfg, const ExperimentArm& arm, int fold) {
  TrainConfig c = train_cfg;
  c.arm = arm;
  c.seed = derive_seed(train_cfg.seed, static_cast<std::uint64_t>(fold));
  return c;
}

void check_plan_covers(std::span<const AnnotatedSample> dataset, const FoldPlan& plan) {
  std::set<std::string> ids;
  for (const auto& s : dataset) ids.insert(s.id);
  for (const auto& [id, fold] : plan.assignments) {
    if (ids.count(id) == 0) fail(ErrorCode::kInvalidArgument, "fold plan names unknown sample " + id);
    if (fold < 0 || fold >= plan.k) fail(ErrorCode::kInvalidArgument, "fold index out of range for " + id);
  }
  const std::set<std::string> dropped(plan.dropped.begin(), plan.dropped.end());
  for (const auto& id : ids) {
    if (plan.assignments.count(id) == 0 && dropped.count(id) == 0) {
      fail(ErrorCode::kInvalidArgument, "sample " + id + " is not covered by the fold plan");
    }
  }
}

namespace {

std::vector<AnnotatedSample> select(std::span<const AnnotatedSample> dataset, const std::vector<std::string>& ids) {
  std::map<std::string, const AnnotatedSample*> by_id;
  for (const auto& s : dataset) by_id[s.id] = &s;
  std::vector<AnnotatedSample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(*by_id.at(id));
  return out;
}

}  // namespace

ArmReport run_crossval(std::span<const AnnotatedSample> dataset, const ExperimentArm& arm, const NetworkConfig& net_cfg,
                       const TrainConfig& train_cfg, const FoldPlan& plan, const CrossvalOptions& options) {
  if (!arm_is_consistent(arm)) fail(ErrorCode::kInvalidConfig, "arm flags do not match the arm name");
  check_plan_covers(dataset, plan);
  options.prep.validate();
  const int k = plan.k;

  // Test sets must be pairwise disjoint and cover the assigned ids.
  std::set<std::string> seen;
  for (int f = 0; f < k; ++f) {
    for (const auto& id : plan.test_ids(f)) {
      if (!seen.insert(id).second) fail(ErrorCode::kInvalidArgument, "sample " + id + " is in two test folds");
    }
  }

  std::vector<TrainResult> results(static_cast<std::size_t>(k));
  std::vector<EvalResult> evals(static_cast<std::size_t>(k));
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;

  auto work = [&] {
    for (;;) {
      const int f = next.fetch_add(1);
      if (f >= k) return;
      try {
        const auto train_raw = select(dataset, plan.train_ids(f));
        const auto test_raw = select(dataset, plan.test_ids(f));
        const auto train = prepare_train_set(train_raw, arm, options.prep);
        const auto test = prepare_eval_set(test_raw, arm, options.prep);
        TrainOptions topt;
        if (options.on_epoch) topt.on_epoch = [&options, f](const EpochRecord& r) { options.on_epoch(f, r); };
        auto& r = results[static_cast<std::size_t>(f)];
        r = train_fold(train, test, fold_network_config(net_cfg, f), fold_train_config(train_cfg, arm, f), topt);
        evals[static_cast<std::size_t>(f)] = evaluate(r.best, test, train_cfg.batch_size, true);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(k);
        return;
      }
    }
  };

  const int workers = std::clamp(options.workers, 1, k);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  ArmReport report;
  report.arm = arm;
  for (int f = 0; f < k; ++f) {
    const auto& ev = evals[static_cast<std::size_t>(f)];
    report.per_fold_iou.push_back(iou_value(ev.aggregate));
    double sum = 0.0;
    for (double v : ev.per_image) sum += v;
    report.per_fold_image_mean.push_back(ev.per_image.empty() ? 0.0 : sum / static_cast<double>(ev.per_image.size()));
    report.histories.push_back(results[static_cast<std::size_t>(f)].history);
    if (options.on_fold) {
      options.on_fold(FoldOutcome{f, &results[static_cast<std::size_t>(f)], &ev, plan.test_ids(f)});
    }
  }
  report.dispersion = dispersion(report.per_fold_iou);
  report.average = report.dispersion.mean;
  return report;
}

RaterReport compare_raters(std::span<const AnnotatedSample> dataset, const FoldPlan& plan,
                           std::vector<std::string> rater_ids, const ArmReport* system) {
  check_plan_covers(dataset, plan);
  if (rater_ids.empty()) {
    if (dataset.empty()) fail(ErrorCode::kEmptyInput, "dataset is empty");
    for (const auto& [id, m] : dataset.front().rater_masks) rater_ids.push_back(id);
    if (rater_ids.empty()) fail(ErrorCode::kMissingRaterMask, "dataset carries no rater masks");
  }
  std::map<std::string, const AnnotatedSample*> by_id;
  for (const auto& s : dataset) by_id[s.id] = &s;

  RaterReport report;
  report.k = plan.k;
  std::vector<double> pooled;
  std::vector<double> averages;
  for (const auto& rater : rater_ids) {
    RaterRow row;
    row.name = rater;
    for (int f = 0; f < plan.k; ++f) {
      IoUAccumulator acc;
      for (const auto& id : plan.test_ids(f)) {
        const AnnotatedSample& s = *by_id.at(id);
        const auto it = s.rater_masks.find(rater);
        if (it == s.rater_masks.end()) {
          fail(ErrorCode::kMissingRaterMask, "sample " + id + " has no mask from rater " + rater);
        }
        acc = iou_accumulate(acc, it->second, s.consensus);
      }
      row.per_fold_iou.push_back(iou_value(acc));
    }
    const auto d = dispersion(row.per_fold_iou);
    row.average = d.mean;
    pooled.insert(pooled.end(), row.per_fold_iou.begin(), row.per_fold_iou.end());
    averages.push_back(row.average);
    report.raters.push_back(std::move(row));
  }
  report.rater_dispersion = dispersion(pooled);
  report.rater_average_dispersion = dispersion(averages);
  if (system != nullptr) {
    if (system->per_fold_iou.size() != static_cast<std::size_t>(plan.k)) {
      fail(ErrorCode::kShapeMismatch, "system report has a different fold count");
    }
    report.system = RaterRow{"BPSegSys", system->per_fold_iou, system->average};
    report.system_dispersion = dispersion(system->per_fold_iou);
  }
  return report;
}

ContrastReport assisted_relabel_report(std::span<const AnnotatedSample> dataset, const std::string& rater_id, int fold,
                                       const FoldPlan& plan, const std::string& dataset_tag) {
  check_plan_covers(dataset, plan);
  if (fold < 0 || fold >= plan.k) fail(ErrorCode::kInvalidArgument, "fold index out of range");
  std::map<std::string, const AnnotatedSample*> by_id;
  for (const auto& s : dataset) by_id[s.id] = &s;
  IoUAccumulator first, second;
  for (const auto& id : plan.test_ids(fold)) {
    const AnnotatedSample& s = *by_id.at(id);
    const auto a = s.rater_masks.find(rater_id);
    const auto b = s.second_pass_masks.find(rater_id);
    if (a == s.rater_masks.end() || b == s.second_pass_masks.end()) {
      fail(ErrorCode::kMissingRaterMask, "sample " + id + " lacks first or second pass of rater " + rater_id);
    }
    first = iou_accumulate(first, a->second, s.consensus);
    second = iou_accumulate(second, b->second, s.consensus);
  }
  ContrastReport r;
  r.dataset_tag = dataset_tag;
  r.fold = fold;
  r.rater = rater_id;
  r.original_iou = iou_value(first);
  r.second_iou = iou_value(second);
  r.improvement = improvement_percent(r.original_iou, r.second_iou);
  return r;
}

RgbImage render_overlay(const GrayImage& image, const BinaryMask& pred, const BinaryMask& truth,
                        const OverlayPalette& palette) {
  if (!image.same_shape(pred) || !image.same_shape(truth)) {
    fail(ErrorCode::kShapeMismatch, "overlay inputs differ in size");
  }
  const int w = image.width();
  const int h = image.height();
  const int a = std::clamp(palette.alpha, 0, 256);
  auto blend = [a](std::uint8_t base, std::uint8_t c) {
    return static_cast<std::uint8_t>((base * (256 - a) + c * a + 128) >> 8);
  };
  RgbImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t v = image.at(x, y);
      Rgb px{v, v, v};
      if (pred.at(x, y) != 0) {
        px = {blend(v, palette.prediction.r), blend(v, palette.prediction.g), blend(v, palette.prediction.b)};
      }
      if (truth.at(x, y) != 0) {
        const bool edge = (x > 0 && truth.at(x - 1, y) == 0) || (x + 1 < w && truth.at(x + 1, y) == 0) ||
                          (y > 0 && truth.at(x, y - 1) == 0) || (y + 1 < h && truth.at(x, y + 1) == 0);
        if (edge) px = palette.truth_boundary;
      }
      out.at(x, y) = px;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string f4(double v) { return format_fixed(v, 4); }

std::string dispersion_cell(const DispersionStats& d) {
  return format_fixed(d.population_variance, 5) + " / " + format_fixed(d.sample_variance, 5) + " / " +
         format_fixed(d.mean_abs_deviation, 5);
}

std::string dispersion_note(const DispersionStats& d) {
  return "Dispersion over folds: population variance " + format_fixed(d.population_variance, 5) +
         ", sample variance " + format_fixed(d.sample_variance, 5) + ", mean absolute deviation " +
         format_fixed(d.mean_abs_deviation, 5) + ".";
}

}  // namespace

std::string Table::csv() const {
  std::ostringstream os;
  auto line = [&os](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << csv_cell(cells[i]);
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return os.str();
}

std::string Table::markdown() const {
  std::ostringstream os;
  auto line = [&os](const std::vector<std::string>& cells) {
    os << '|';
    for (const auto& c : cells) os << ' ' << c << " |";
    os << '\n';
  };
  line(header);
  os << '|';
  for (std::size_t i = 0; i < header.size(); ++i) os << (i == 0 ? " --- |" : " ---: |");
  os << '\n';
  for (const auto& r : rows) line(r);
  if (!notes.empty()) {
    os << '\n';
    for (const auto& n : notes) os << n << '\n';
  }
  return os.str();
}

Table arm_table(const ArmReport& report) {
  Table t;
  t.header = {"Fold", std::string(arm_title(report.arm.name)), "Per-image mean"};
  for (std::size_t f = 0; f < report.per_fold_iou.size(); ++f) {
    t.rows.push_back({"Fold " + std::to_string(f), f4(report.per_fold_iou[f]), f4(report.per_fold_image_mean[f])});
  }
  double img_mean = 0.0;
  for (double v : report.per_fold_image_mean) img_mean += v;
  if (!report.per_fold_image_mean.empty()) img_mean /= static_cast<double>(report.per_fold_image_mean.size());
  t.rows.push_back({"Average value", f4(report.average), f4(img_mean)});
  t.notes.push_back(dispersion_note(report.dispersion));
  return t;
}

Table arms_table(std::span<const ArmReport> reports) {
  Table t;
  t.header = {"Optimization method"};
  std::size_t k = 0;
  for (const auto& r : reports) {
    t.header.emplace_back(arm_title(r.arm.name));
    k = std::max(k, r.per_fold_iou.size());
  }
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::string> row{"Fold " + std::to_string(f)};
    for (const auto& r : reports) row.push_back(f < r.per_fold_iou.size() ? f4(r.per_fold_iou[f]) : "");
    t.rows.push_back(std::move(row));
  }
  std::vector<std::string> avg{"Average value"};
  for (const auto& r : reports) avg.push_back(f4(r.average));
  t.rows.push_back(std::move(avg));
  return t;
}

Table rater_fold_table(const RaterReport& report) {
  Table t;
  t.header = {"Fold"};
  for (const auto& r : report.raters) t.header.push_back("Rater " + r.name);
  if (report.system) t.header.push_back(report.system->name);
  for (int f = 0; f < report.k; ++f) {
    std::vector<std::string> row{"Fold " + std::to_string(f)};
    for (const auto& r : report.raters) row.push_back(f4(r.per_fold_iou[static_cast<std::size_t>(f)]));
    if (report.system) row.push_back(f4(report.system->per_fold_iou[static_cast<std::size_t>(f)]));
    t.rows.push_back(std::move(row));
  }
  std::vector<std::string> avg{"Average value"};
  for (const auto& r : report.raters) avg.push_back(f4(r.average));
  if (report.system) avg.push_back(f4(report.system->average));
  t.rows.push_back(std::move(avg));
  return t;
}

Table rater_summary_table(std::span<const std::pair<std::string, RaterReport>> reports) {
  Table t;
  t.header = {"Dataset"};
  if (!reports.empty()) {
    for (const auto& r : reports.front().second.raters) t.header.push_back("Rater " + r.name);
  }
  t.header.push_back("BPSegSys");
  t.header.push_back("Raters dispersion");
  t.header.push_back("BPSegSys dispersion");
  for (const auto& [tag, rep] : reports) {
    std::vector<std::string> row{tag};
    for (const auto& r : rep.raters) row.push_back(f4(r.average));
    row.push_back(rep.system ? f4(rep.system->average) : "");
    row.push_back(dispersion_cell(rep.rater_dispersion));
    row.push_back(rep.system_dispersion ? dispersion_cell(*rep.system_dispersion) : "");
    t.rows.push_back(std::move(row));
  }
  t.notes.push_back(
      "Dispersion cells: population variance / sample variance / mean absolute deviation. "
      "Rater dispersion pools every rater and fold.");
  return t;
}

Table contrast_table(std::span<const ContrastReport> reports) {
  Table t;
  t.header = {"Dataset", "Fold", "Original result", "Second result", "Percentage of improvement"};
  for (const auto& r : reports) {
    t.rows.push_back({r.dataset_tag, "Fold " + std::to_string(r.fold), f4(r.original_iou), f4(r.second_iou),
                      format_fixed(r.improvement, 2) + "%"});
  }
  return t;
}

}  // namespace bpseg
