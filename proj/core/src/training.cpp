#include "bpseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "bpseg/rng.hpp"

namespace bpseg {

std::string_view to_string(LrSchedule s) noexcept {
  return s == LrSchedule::kLinear ? "linear" : "polynomial";
}

LrSchedule parse_lr_schedule(std::string_view name) {
  if (name == "linear") return LrSchedule::kLinear;
  if (name == "polynomial" || name == "poly") return LrSchedule::kPolynomial;
  fail(ErrorCode::kInvalidConfig, "unknown learning-rate schedule '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) fail(ErrorCode::kInvalidConfig, "batch_size must be >= 1");
  if (!(lr_initial > 0.0)) fail(ErrorCode::kInvalidConfig, "lr_initial must be > 0");
  if (lr_decrement < 0.0 || lr_floor < 0.0) fail(ErrorCode::kInvalidConfig, "lr_decrement and lr_floor must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) fail(ErrorCode::kInvalidConfig, "momentum must be in [0, 1)");
  if (epochs < 1) fail(ErrorCode::kInvalidConfig, "epochs must be >= 1");
  if (schedule == LrSchedule::kPolynomial && (poly_iterations < 1 || !(poly_power > 0.0))) {
    fail(ErrorCode::kInvalidConfig, "polynomial schedule needs poly_iterations >= 1 and poly_power > 0");
  }
  if (!arm_is_consistent(arm)) fail(ErrorCode::kInvalidConfig, "arm flags do not match the arm name");
  loss().validate();
}

LossConfig TrainConfig::loss() const {
  LossConfig l;
  l.ce_weight = ce_weight;
  l.lovasz_weight = lovasz_weight;
  l.use_lovasz = arm.use_lovasz;
  return l;
}

double lr_at(const TrainConfig& cfg, std::int64_t iteration) {
  if (iteration < 0) fail(ErrorCode::kInvalidArgument, "iteration must be >= 0");
  double lr;
  if (cfg.schedule == LrSchedule::kLinear) {
    lr = cfg.lr_initial - static_cast<double>(iteration) * cfg.lr_decrement;
  } else {
    const double t = std::min(1.0, static_cast<double>(iteration) / static_cast<double>(cfg.poly_iterations));
    lr = cfg.lr_initial * std::pow(1.0 - t, cfg.poly_power);
  }
  return std::max(cfg.lr_floor, lr);
}

FoldPlan make_folds(std::span<const std::string> ids, int k, std::uint64_t seed, bool trim_to_divisible) {
  if (k < 2) fail(ErrorCode::kInvalidArgument, "k must be >= 2");
  if (ids.size() < static_cast<std::size_t>(k)) {
    fail(ErrorCode::kTooFewSamples, std::to_string(ids.size()) + " ids cannot fill " + std::to_string(k) + " folds");
  }
  std::vector<std::string> order(ids.begin(), ids.end());
  std::sort(order.begin(), order.end());
  if (std::adjacent_find(order.begin(), order.end()) != order.end()) {
    fail(ErrorCode::kInvalidArgument, "duplicate sample id");
  }
  Rng rng(seed);
  portable_shuffle(order, rng);

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  std::size_t start = 0;
  if (trim_to_divisible) {
    start = order.size() % static_cast<std::size_t>(k);
    plan.dropped.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(start));
    std::sort(plan.dropped.begin(), plan.dropped.end());
  }
  for (std::size_t i = start; i < order.size(); ++i) {
    plan.assignments[order[i]] = static_cast<int>((i - start) % static_cast<std::size_t>(k));
  }
  return plan;
}

template <typename T>
void sgd_step(ModelParams<T>& params, double lr, double momentum, SgdState<T>& state) {
  if (state.velocity.empty()) {
    state.velocity.resize(params.entries.size());
    for (std::size_t i = 0; i < params.entries.size(); ++i) {
      state.velocity[i].assign(params.entries[i].value.size(), T{});
    }
  }
  if (state.velocity.size() != params.entries.size()) fail(ErrorCode::kShapeMismatch, "optimizer state layout differs");
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    const auto& p = params.entries[i];
    if (state.velocity[i].size() != p.value.size() || p.grad.size() != p.value.size()) {
      fail(ErrorCode::kShapeMismatch, "optimizer state shape differs for " + p.name);
    }
    if (!p.trainable) continue;
    for (T g : p.grad) {
      if (!std::isfinite(g)) fail(ErrorCode::kNonFiniteGradient, "non-finite gradient in " + p.name);
    }
  }
  const T m = static_cast<T>(momentum);
  const T step = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    auto& p = params.entries[i];
    if (!p.trainable) continue;
    auto& v = state.velocity[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      v[j] = m * v[j] + p.grad[j];
      p.value[j] -= step * v[j];
    }
  }
}

template void sgd_step<float>(ModelParams<float>&, double, double, SgdState<float>&);
template void sgd_step<double>(ModelParams<double>&, double, double, SgdState<double>&);

Tensor<float> to_input(std::span<const TrainSample* const> batch) {
  if (batch.empty()) fail(ErrorCode::kEmptyInput, "empty batch");
  const int w = batch.front()->image.width();
  const int h = batch.front()->image.height();
  Tensor<float> t(static_cast<int>(batch.size()), 1, h, w);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& img = batch[i]->image;
    if (img.width() != w || img.height() != h) fail(ErrorCode::kShapeMismatch, "batch images differ in size");
    float* dst = t.image(static_cast<int>(i));
    const auto src = img.data();
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<float>(src[k]) / 255.0f;
  }
  return t;
}

std::string history_csv(const TrainHistory& history) {
  std::ostringstream os;
  os << "epoch,loss,val_iou,lr\n";
  for (const auto& r : history.epochs) {
    os << r.epoch << ',' << format_fixed(r.train_loss, 6) << ',' << format_fixed(r.val_iou, 6) << ','
       << format_fixed(r.lr, 8) << '\n';
  }
  return os.str();
}

namespace {

ScoreMap score_plane(const Tensor<float>& logits, int i) {
  const float* p = logits.image(i);
  std::vector<double> v(p, p + logits.plane());
  return ScoreMap(logits.w, logits.h, std::move(v));
}

BinaryMask predict_plane(const Tensor<float>& logits, int i) {
  const float* p = logits.image(i);
  BinaryMask m(logits.w, logits.h);
  auto out = m.data();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = p[k] >= 0.0f ? 1 : 0;
  return m;
}

EvalResult evaluate_with(Network<float>& net, std::span<const TrainSample> samples, int batch_size, bool keep) {
  EvalResult r;
  std::vector<const TrainSample*> batch;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    batch.clear();
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    for (std::size_t i = start; i < end; ++i) batch.push_back(&samples[i]);
    const Tensor<float>& logits = net.forward(to_input(batch), Mode::kInference);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      BinaryMask pred = predict_plane(logits, static_cast<int>(i));
      const IoUAccumulator one = iou_accumulate({}, pred, batch[i]->mask);
      r.aggregate.merge(one);
      r.per_image.push_back(iou_value(one));
      if (keep) r.predictions.push_back(std::move(pred));
    }
  }
  return r;
}

}  // namespace

EvalResult evaluate(const ModelParams<float>& params, std::span<const TrainSample> samples, int batch_size,
                    bool keep_masks) {
  if (batch_size < 1) fail(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  ModelParams<float> copy = params;
  Network<float> net(copy);
  return evaluate_with(net, samples, batch_size, keep_masks);
}

TrainResult train_fold(std::span<const TrainSample> train, std::span<const TrainSample> val,
                       const NetworkConfig& net_cfg, const TrainConfig& train_cfg, const TrainOptions& options) {
  net_cfg.validate();
  train_cfg.validate();
  if (train.empty() || val.empty()) fail(ErrorCode::kEmptyInput, "training and validation sets must be nonempty");
  const LossConfig loss_cfg = train_cfg.loss();

  std::set<std::string> val_ids;
  for (const auto& s : val) val_ids.insert(s.id);

  ModelParams<float> params = build_model<float>(net_cfg);
  Network<float> net(params);
  SgdState<float> opt;
  TrainResult result;
  result.best = params;
  Rng rng(train_cfg.seed);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto bs = static_cast<std::size_t>(train_cfg.batch_size);
  std::int64_t iteration = 0;
  std::vector<const TrainSample*> batch;
  std::vector<ScoreMap> scores;
  std::vector<BinaryMask> truths;

  for (int epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    portable_shuffle(order, rng);
    if (options.require_disjoint) {
      for (const auto& s : train) {
        if (val_ids.count(s.id) != 0) {
          fail(ErrorCode::kInvalidArgument, "validation sample " + s.id + " is also in the training set");
        }
      }
    }
    double loss_sum = 0.0;
    std::size_t steps = 0;
    double lr = lr_at(train_cfg, iteration);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + bs);
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train[order[i]]);
      const Tensor<float>& logits = net.forward(to_input(batch), Mode::kTrain);
      scores.clear();
      truths.clear();
      for (std::size_t i = 0; i < batch.size(); ++i) {
        scores.push_back(score_plane(logits, static_cast<int>(i)));
        truths.push_back(batch[i]->mask);
      }
      const BatchLoss loss = combined_loss_batch(scores, truths, loss_cfg);
      Tensor<float> grad(logits.n, logits.c, logits.h, logits.w);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        float* g = grad.image(static_cast<int>(i));
        const auto& src = loss.gradients[i];
        for (std::size_t k = 0; k < src.size(); ++k) g[k] = static_cast<float>(src[k]);
      }
      params.zero_grad();
      net.backward(grad);
      lr = lr_at(train_cfg, iteration);
      sgd_step(params, lr, train_cfg.momentum, opt);
      ++iteration;
      loss_sum += loss.value;
      ++steps;
    }

    const EvalResult ev = evaluate_with(net, val, train_cfg.batch_size, false);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(steps), iou_value(ev.aggregate), lr};
    result.history.epochs.push_back(rec);
    if (rec.val_iou > result.history.best_iou) {
      result.history.best_iou = rec.val_iou;
      result.history.best_epoch = epoch;
      result.best = params;
    }
    if (options.on_epoch) options.on_epoch(rec);
    if (options.stop_when && options.stop_when(rec)) break;
  }
  for (auto& p : result.best.entries) std::fill(p.grad.begin(), p.grad.end(), 0.0f);
  return result;
}

}  // namespace bpseg
