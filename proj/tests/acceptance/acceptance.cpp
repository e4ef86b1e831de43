// Acceptance suite. Each criterion prints one PASS/FAIL line; pass criterion
// numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bpseg/enhance.hpp"
#include "bpseg/experiments.hpp"
#include "bpseg/image_io.hpp"
#include "bpseg/losses.hpp"
#include "bpseg/metrics.hpp"
#include "bpseg/network.hpp"
#include "bpseg/synthetic.hpp"

using namespace bpseg;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Check {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    pass_ = pass_ && ok;
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
  Outcome done() const {
    std::string d = notes_;
    for (const auto& f : failures_) d += (d.empty() ? "" : "; ") + std::string("FAILED ") + f;
    return {pass_, d};
  }

 private:
  bool pass_ = true;
  std::vector<std::string> failures_;
  std::string notes_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome lovasz_corner_points() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  long cases = 0;
  std::vector<double> s;
  std::vector<std::uint8_t> y, pred;
  for (int n = 1; n <= 10; ++n) {
    s.resize(static_cast<std::size_t>(n));
    y.resize(s.size());
    pred.resize(s.size());
    for (int ym = 0; ym < (1 << n); ++ym) {
      for (int am = 0; am < (1 << n); ++am) {
        int inter = 0, uni = 0;
        for (int i = 0; i < n; ++i) {
          const auto k = static_cast<std::size_t>(i);
          y[k] = (ym >> i) & 1;
          const bool wrong = (am >> i) & 1;
          pred[k] = wrong ? !y[k] : y[k];
          // Hinge error 1 on A, 0 elsewhere.
          s[k] = wrong ? 0.0 : (y[k] ? 1.0 : -1.0);
          inter += y[k] && pred[k];
          uni += y[k] || pred[k];
        }
        const double expect = uni == 0 ? 0.0 : 1.0 - static_cast<double>(inter) / uni;
        worst = std::max(worst, std::abs(lovasz_hinge(s, y).value - expect));
        ++cases;
      }
    }
  }
  const double t = seconds_since(t0);
  c.require(worst <= 1e-9, "max error " + fmt("%.3g", worst));
  c.require(t < 60.0, "runtime " + fmt("%.1f s", t));
  c.note(std::to_string(cases) + " cases, max error " + fmt("%.3g", worst) + ", " + fmt("%.1f s", t));
  return c.done();
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

Outcome gradient_audit() {
  Check c;
  LossConfig cfg;
  cfg.ce_weight = 1.0;
  cfg.lovasz_weight = 0.02;
  Rng rng(404);
  auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  double worst_loss = 0.0;
  int instances = 0;
  while (instances < 50) {
    std::vector<double> s(64);
    std::vector<std::uint8_t> y(64);
    std::vector<double> err(64);
    for (std::size_t i = 0; i < 64; ++i) {
      y[i] = unit() < 0.4;
      s[i] = 6.0 * unit() - 3.0;
      err[i] = 1.0 - s[i] * (y[i] ? 1.0 : -1.0);
    }
    // Kink-free: hinge errors away from 0 and pairwise separated.
    auto sorted = err;
    std::sort(sorted.begin(), sorted.end());
    bool ok = true;
    for (std::size_t i = 0; i < 64; ++i) {
      ok = ok && std::abs(err[i]) > 1e-3;
      if (i) ok = ok && sorted[i] - sorted[i - 1] > 1e-4;
    }
    if (!ok) continue;
    ++instances;
    const LossValue l = combined_loss(s, y, cfg);
    for (std::size_t i = 0; i < 64; ++i) {
      auto p = s, m = s;
      p[i] += 1e-6;
      m[i] -= 1e-6;
      const double fd = (combined_loss(p, y, cfg).value - combined_loss(m, y, cfg).value) / 2e-6;
      worst_loss = std::max(worst_loss, rel_err(l.gradient[i], fd));
    }
  }
  c.require(worst_loss < 1e-4, "loss gradient rel error " + fmt("%.3g", worst_loss));
  c.note("loss: 50 instances, max rel error " + fmt("%.2e", worst_loss));

  // Wide enough that pixels with every final ReLU dead (which tie at the head
  // bias, a Lovasz kink) are rare; instances with tied logits are redrawn.
  NetworkConfig nc;
  nc.base_channels = 16;
  nc.depth = 3;
  nc.seed = 77;
  ModelParams<double> params;
  Tensor<double> input(2, 1, 32, 32);
  for (int redraws = 0;; ++redraws, ++nc.seed) {
    params = build_model<double>(nc);
    for (auto& v : input.data) v = unit();
    auto logits = forward(params, input, Mode::kTrain);
    std::sort(logits.data.begin(), logits.data.end());
    if (std::adjacent_find(logits.data.begin(), logits.data.end()) == logits.data.end()) break;
    if (redraws == 20) {
      c.require(false, "no tie-free network instance");
      return c.done();
    }
  }
  std::vector<BinaryMask> truth;
  for (int i = 0; i < 2; ++i) {
    BinaryMask m(32, 32);
    for (int yy = 0; yy < 32; ++yy) {
      for (int xx = 0; xx < 32; ++xx) m.at(xx, yy) = std::hypot(xx - 12.0 - 6 * i, yy - 16.0) < 7.0;
    }
    truth.push_back(m);
  }
  auto scores_of = [](const Tensor<double>& logits) {
    std::vector<ScoreMap> out;
    for (int i = 0; i < logits.n; ++i) {
      out.emplace_back(logits.w, logits.h,
                       std::vector<double>(logits.image(i), logits.image(i) + logits.image_stride()));
    }
    return out;
  };
  auto loss_at = [&](ModelParams<double>& p) {
    Network<double> net(p);
    return combined_loss_batch(scores_of(net.forward(input, Mode::kTrain)), truth, cfg).value;
  };
  {
    Network<double> net(params);
    const Tensor<double>& logits = net.forward(input, Mode::kTrain);
    const BatchLoss bl = combined_loss_batch(scores_of(logits), truth, cfg);
    Tensor<double> g(logits.n, logits.c, logits.h, logits.w);
    for (int i = 0; i < logits.n; ++i) std::copy(bl.gradients[static_cast<std::size_t>(i)].begin(), bl.gradients[static_cast<std::size_t>(i)].end(), g.image(i));
    params.zero_grad();
    net.backward(g);
  }
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  std::vector<std::size_t> trainable;
  for (std::size_t e = 0; e < params.entries.size(); ++e) {
    if (params.entries[e].trainable) trainable.push_back(e);
  }
  for (int round = 0; round < 2; ++round) {
    for (std::size_t e : trainable) {
      picks.emplace_back(e, static_cast<std::size_t>(uniform_below(rng, params.entries[e].numel())));
    }
  }
  double worst_net = 0.0;
  std::string worst_name;
  int skipped = 0;
  const double base = loss_at(params);
  for (const auto& [e, k] : picks) {
    auto p = params;
    const double h = 1e-5;
    p.entries[e].value[k] += h;
    const double up = loss_at(p);
    p.entries[e].value[k] -= 2 * h;
    const double down = loss_at(p);
    // A ReLU or sort-order kink inside [-h, h] shows up as one-sided slopes
    // that disagree by more than the tolerance.
    const double fwd = (up - base) / h, bwd = (base - down) / h;
    if (rel_err(fwd, bwd) > 1e-4) {
      ++skipped;
      continue;
    }
    const double r = rel_err(params.entries[e].grad[k], (up - down) / (2 * h));
    if (r > worst_net) {
      worst_net = r;
      worst_name = params.entries[e].name;
    }
  }
  const std::size_t checked = picks.size() - static_cast<std::size_t>(skipped);
  c.require(checked >= 20, "only " + std::to_string(checked) + " parameters checked");
  c.require(worst_net < 1e-4, "network gradient rel error " + fmt("%.3g", worst_net) + " at " + worst_name);
  c.note("network: " + std::to_string(checked) + " parameters (" + std::to_string(skipped) + " at kinks), max rel error " + fmt("%.2e", worst_net));
  return c.done();
}

Outcome table_arithmetic() {
  Check c;
  const std::vector<double> ygy{0.4376, 0.6159, 0.5030, 0.5488, 0.5216, 0.5130, 0.5253, 0.5091, 0.5441, 0.5196};
  const std::vector<double> bk{0.5533, 0.4743, 0.4688, 0.3829, 0.5206, 0.4604, 0.5169, 0.3735, 0.5017, 0.4621};
  const std::vector<double> mixed{0.5216, 0.5136, 0.4541, 0.4891, 0.4856, 0.4743, 0.4868, 0.5588, 0.5488, 0.4966};
  const std::pair<const std::vector<double>*, double> tables[] = {{&ygy, 0.5238}, {&bk, 0.4715}, {&mixed, 0.5029}};
  std::string means;
  for (const auto& [values, printed] : tables) {
    const double m = dispersion(*values).mean;
    c.require(std::abs(m - printed) <= 1e-4, "mean " + fmt("%.5f", m) + " vs " + fmt("%.4f", printed));
    means += fmt(" %.5f", m);
  }
  const double a = improvement_percent(0.3728, 0.4735);
  const double b = improvement_percent(0.3973, 0.4128);
  c.require(std::abs(a - 27.0) <= 0.05, "improvement " + fmt("%.3f", a));
  c.require(std::abs(b - 3.90) <= 0.05, "improvement " + fmt("%.3f", b));
  c.note("means" + means + ", improvements " + fmt("%.3f%%", a) + " " + fmt("%.3f%%", b));
  return c.done();
}

Outcome crop_geometry() {
  Check c;
  for (Device d : {Device::kYgy, Device::kBk3000If1, Device::kBk3000If2}) {
    const DeviceCropProfile p = crop_profile(d);
    const std::string name(to_string(d));
    GrayImage frame(p.origin_x + p.crop_width + 5, p.origin_y + p.crop_height + 5, 20);
    const int x0 = p.origin_x, y0 = p.origin_y, x1 = p.origin_x + p.crop_width - 1, y1 = p.origin_y + p.crop_height - 1;
    frame.at(x0, y0) = 101;
    frame.at(x1, y0) = 102;
    frame.at(x0, y1) = 103;
    frame.at(x1, y1) = 104;
    frame.at(x0 - 1, y0) = 250;
    frame.at(x0, y0 - 1) = 250;
    frame.at(x1 + 1, y1) = 250;
    frame.at(x1, y1 + 1) = 250;
    const GrayImage roi = crop_roi(frame, p);
    c.require(roi.width() == p.crop_width && roi.height() == p.crop_height, name + " size");
    c.require(roi.at(0, 0) == 101 && roi.at(p.crop_width - 1, 0) == 102 && roi.at(0, p.crop_height - 1) == 103 &&
                  roi.at(p.crop_width - 1, p.crop_height - 1) == 104,
              name + " corner markers");
    int stray = 0;
    for (auto v : roi.data()) stray += v == 250;
    c.require(stray == 0, name + " outside pixels leaked");
    BinaryMask m(frame.width(), frame.height());
    m.at(x1, y1) = 1;
    const BinaryMask mroi = crop_roi(m, p);
    c.require(mroi.at(p.crop_width - 1, p.crop_height - 1) == 1, name + " mask marker");
    const GrayImage net = resize(roi, 224, 224);
    c.require(net.width() == 224 && net.height() == 224, name + " resize");
    c.note(name + " (" + std::to_string(p.origin_x) + "," + std::to_string(p.origin_y) + "," +
           std::to_string(p.crop_width) + "x" + std::to_string(p.crop_height) + ")");
  }
  return c.done();
}

Outcome augmentation_law() {
  Check c;
  std::vector<AnnotatedSample> ds;
  const std::pair<int, int> sizes[] = {{510, 356}, {553, 492}, {595, 529}, {300, 300}, {240, 260}};
  for (int i = 0; i < 5; ++i) {
    AnnotatedSample s;
    s.id = "s" + std::to_string(i);
    Rng rng(static_cast<std::uint64_t>(i));
    s.image = GrayImage(sizes[i].first, sizes[i].second);
    for (auto& v : s.image.data()) v = static_cast<std::uint8_t>(uniform_below(rng, 256));
    s.consensus = BinaryMask(sizes[i].first, sizes[i].second);
    for (auto& v : s.consensus.data()) v = uniform_below(rng, 3) == 0;
    ds.push_back(s);
  }
  PrepConfig prep;
  prep.augment.seed = 31;
  const auto out = prepare_train_set(ds, ExperimentArm::make(ArmName::kOriginal), prep);
  c.require(out.size() == 6 * ds.size(), "expected 6N outputs, got " + std::to_string(out.size()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    c.require(out[i].image.width() == 224 && out[i].image.height() == 224 && out[i].mask.same_shape(out[i].image),
              "output " + std::to_string(i) + " not 224x224");
  }
  // [resized, crop, crop, flipped resized, flipped crop, flipped crop]
  auto is_window = [](const GrayImage& big, const GrayImage& crop) {
    for (int oy = 0; oy + crop.height() <= big.height(); ++oy) {
      for (int ox = 0; ox + crop.width() <= big.width(); ++ox) {
        bool same = true;
        for (int y = 0; y < crop.height() && same; ++y) {
          for (int x = 0; x < crop.width() && same; ++x) same = big.at(ox + x, oy + y) == crop.at(x, y);
        }
        if (same) return true;
      }
    }
    return false;
  };
  for (std::size_t s = 0; s < ds.size() && out.size() == 6 * ds.size(); ++s) {
    const TrainSample* o = &out[6 * s];
    const GrayImage big = resize(ds[s].image, 256, 256);
    c.require(o[0].image == resize(ds[s].image, 224, 224) && o[0].mask == resize(ds[s].consensus, 224, 224),
              "first output is not the resized original");
    c.require(o[3].image == horizontal_flip(o[0].image) && o[3].mask == horizontal_flip(o[0].mask),
              "fourth output is not the flip of the first");
    c.require(is_window(big, o[1].image) && is_window(big, o[2].image), "crops are not windows of the rescaled image");
    const GrayImage fbig = horizontal_flip(big);
    c.require(is_window(fbig, o[4].image) && is_window(fbig, o[5].image), "flipped crops are not windows");
    for (const auto* img : {&o[0].image, &o[1].image, &o[4].image}) {
      c.require(horizontal_flip(horizontal_flip(*img)) == *img, "flip is not an involution");
    }
    c.require(horizontal_flip(horizontal_flip(o[2].mask)) == o[2].mask, "mask flip is not an involution");
  }
  c.note(std::to_string(ds.size()) + " samples -> " + std::to_string(out.size()) + " training pairs");
  return c.done();
}

Outcome clahe_suite() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  for (int v : {0, 1, 64, 200, 255}) {
    for (auto [w, h] : {std::pair{224, 224}, std::pair{97, 61}}) {
      const GrayImage out = clahe(GrayImage(w, h, static_cast<std::uint8_t>(v)));
      c.require(std::all_of(out.data().begin(), out.data().end(), [&](auto p) { return p == out.at(0, 0); }),
                "constant image " + std::to_string(v) + " not constant");
    }
  }
  int lo = 255, hi = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const int w = 64 + static_cast<int>(uniform_below(rng, 100));
    const int h = 64 + static_cast<int>(uniform_below(rng, 100));
    const int top = 1 + static_cast<int>(uniform_below(rng, 255));
    GrayImage img(w, h);
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(uniform_below(rng, static_cast<std::uint64_t>(top) + 1));
    const ClaheTiles t = clahe_mappings(img, {});
    for (const auto& m : t.maps) {
      for (int b = 1; b < 256; ++b) {
        if (m[static_cast<std::size_t>(b)] < m[static_cast<std::size_t>(b - 1)]) {
          c.require(false, "mapping not monotone for image " + std::to_string(seed));
          b = 256;
        }
      }
    }
    const GrayImage out = clahe(img);
    for (auto v : out.data()) {
      lo = std::min<int>(lo, v);
      hi = std::max<int>(hi, v);
    }
  }
  c.require(lo >= 0 && hi <= 255, "output out of range");

  PhantomConfig pc;
  pc.count = 20;
  pc.network_scale = true;
  pc.seed = 606;
  int widened = 0;
  for (const auto& p : generate_phantoms(pc)) {
    const std::vector<GrayImage> before{p.sample.image};
    const std::vector<GrayImage> after{clahe(p.sample.image)};
    const HistogramReport hb = dataset_histogram(before, "before");
    const HistogramReport ha = dataset_histogram(after, "after");
    const int rb = hb.percentile(0.95) - hb.percentile(0.05);
    const int ra = ha.percentile(0.95) - ha.percentile(0.05);
    c.require(ra >= rb, p.sample.id + " range shrank " + std::to_string(rb) + " -> " + std::to_string(ra));
    widened += ra > rb;
  }
  const std::string dir = BPSEG_FIXTURE_DIR;
  const GrayImage fixture = read_png_gray(dir + "/clahe_input.png");
  const GrayImage out = clahe(fixture);
  std::ostringstream pgm;
  pgm << "P5\n" << out.width() << ' ' << out.height() << "\n255\n";
  pgm.write(reinterpret_cast<const char*>(out.data().data()), static_cast<std::streamsize>(out.size()));
  c.require(pgm.str() == read_text(dir + "/clahe_golden.pgm"), "golden mismatch");
  const double t = seconds_since(t0);
  c.require(t < 30.0, "runtime " + fmt("%.1f s", t));
  c.note("20 dark phantoms, " + std::to_string(widened) + " strictly widened; golden ok; " + fmt("%.1f s", t));
  return c.done();
}

Outcome fold_laws() {
  Check c;
  auto ids = [](int n) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) v.push_back("id" + std::to_string(i));
    return v;
  };
  auto sizes_of = [](const FoldPlan& p) {
    auto s = p.fold_sizes();
    std::sort(s.begin(), s.end());
    return s;
  };
  const auto a = ids(180);
  const FoldPlan p180 = make_folds(a, 10, 1);
  c.require(sizes_of(p180) == std::vector<std::size_t>(10, 18), "180 ids not 10x18");
  const auto b = ids(135);
  const FoldPlan p135 = make_folds(b, 10, 1);
  std::vector<std::size_t> expect(5, 13);
  expect.insert(expect.end(), 5, 14);
  c.require(sizes_of(p135) == expect, "135 ids not 5x14 + 5x13");
  for (int n : {10, 37, 135, 180, 185}) {
    for (int k : {2, 5, 10}) {
      const auto v = ids(n);
      for (std::uint64_t seed : {0ULL, 7ULL, 123456789ULL}) {
        const FoldPlan p = make_folds(v, k, seed);
        std::set<std::string> seen;
        bool disjoint = true;
        for (int f = 0; f < k; ++f) {
          for (const auto& id : p.test_ids(f)) disjoint = seen.insert(id).second && disjoint;
        }
        c.require(disjoint, "folds overlap");
        c.require(seen.size() == v.size(), "folds do not cover");
        const auto s = p.fold_sizes();
        c.require(*std::max_element(s.begin(), s.end()) - *std::min_element(s.begin(), s.end()) <= 1, "unequal folds");
        c.require(make_folds(v, k, seed).assignments == p.assignments, "not deterministic");
      }
    }
  }
  c.note("180 -> 10x18, 135 -> 5x14 + 5x13; disjoint, covering, deterministic");
  return c.done();
}

std::vector<AnnotatedSample> roi_phantoms(int count, std::uint64_t seed) {
  PhantomConfig pc;
  pc.count = count;
  pc.seed = seed;
  std::vector<AnnotatedSample> out;
  for (const auto& p : generate_phantoms(pc)) out.push_back(crop_sample(p.sample, crop_profile(p.sample.device)));
  return out;
}

Outcome desk_learning() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto roi = roi_phantoms(100, 2024);
  const std::vector<AnnotatedSample> train_raw(roi.begin(), roi.begin() + 80);
  const std::vector<AnnotatedSample> test_raw(roi.begin() + 80, roi.end());
  const ExperimentArm arm = ExperimentArm::make(ArmName::kMixedOptimization);
  PrepConfig prep;
  prep.augment.seed = 5;
  const auto train = prepare_train_set(train_raw, arm, prep);
  const auto test = prepare_eval_set(test_raw, arm, prep);
  NetworkConfig nc;
  nc.base_channels = 16;
  nc.seed = 1;
  TrainConfig tc;
  tc.batch_size = 4;
  tc.lr_initial = 0.01;
  tc.epochs = 40;
  tc.arm = arm;
  tc.seed = 9;
  TrainOptions opts;
  opts.on_epoch = [&](const EpochRecord& r) {
    std::printf("  epoch %d loss %.4f test IoU %.4f (%.0f s)\n", r.epoch, r.train_loss, r.val_iou, seconds_since(t0));
    std::fflush(stdout);
  };
  opts.stop_when = [](const EpochRecord& r) { return r.val_iou >= 0.60; };
  const TrainResult res = train_fold(train, test, nc, tc, opts);
  const double t = seconds_since(t0);
  c.require(res.history.best_iou >= 0.60, "best test IoU " + fmt("%.4f", res.history.best_iou));
  c.require(t < 45 * 60.0, "runtime " + fmt("%.0f s", t));
  c.note("test IoU " + fmt("%.4f", res.history.best_iou) + " at epoch " + std::to_string(res.history.best_epoch) +
         ", " + fmt("%.0f s", t));

  const auto t1 = std::chrono::steady_clock::now();
  const std::vector<AnnotatedSample> eight(roi.begin(), roi.begin() + 8);
  PrepConfig plain = prep;
  plain.augment_train = false;
  const auto small = prepare_eval_set(eight, arm, plain);
  // Eight samples give two steps per epoch; momentum keeps the run short.
  TrainConfig oc = tc;
  oc.momentum = 0.9;
  oc.epochs = 200;
  TrainOptions oo;
  oo.require_disjoint = false;
  oo.stop_when = [](const EpochRecord& r) { return r.val_iou >= 0.9; };
  const TrainResult over = train_fold(small, small, nc, oc, oo);
  c.require(over.history.best_iou >= 0.9, "overfit IoU " + fmt("%.4f", over.history.best_iou));
  c.note("overfit IoU " + fmt("%.4f", over.history.best_iou) + " at epoch " + std::to_string(over.history.best_epoch) +
         ", " + fmt("%.0f s", seconds_since(t1)));
  return c.done();
}

Outcome crossval_arms() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  PhantomConfig pc;
  pc.count = 40;
  pc.network_scale = true;
  pc.network_size = 64;
  pc.radius_min = 4;
  pc.radius_max = 9;
  NetworkConfig nc;
  nc.base_channels = 8;
  nc.depth = 4;
  TrainConfig tc;
  tc.epochs = 8;
  CrossvalOptions opts;
  opts.prep.input_size = 64;
  opts.prep.augment.final_size = 64;
  opts.prep.augment.pre_crop_size = 72;
  double mixed_sum = 0.0, original_sum = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    pc.seed = 100 + seed;
    std::vector<AnnotatedSample> ds;
    std::vector<std::string> ids;
    for (const auto& p : generate_phantoms(pc)) {
      ds.push_back(p.sample);
      ids.push_back(p.sample.id);
    }
    const FoldPlan plan = make_folds(ids, 5, seed);
    nc.seed = seed;
    tc.seed = seed;
    opts.prep.augment.seed = seed;
    std::vector<ArmReport> reports;
    for (const auto& arm : all_arms()) {
      reports.push_back(run_crossval(ds, arm, nc, tc, plan, opts));
      std::printf("  seed %llu %-24s average %.4f (%.0f s)\n", static_cast<unsigned long long>(seed),
                  std::string(arm_key(arm.name)).c_str(), reports.back().average, seconds_since(t0));
      std::fflush(stdout);
    }
    const Table t = arms_table(reports);
    c.require(t.header.size() == 5 && t.header[0] == "Optimization method", "table header");
    c.require(t.rows.size() == 6 && t.rows.back()[0] == "Average value", "table rows");
    for (const auto& row : t.rows) {
      for (std::size_t i = 1; i < row.size(); ++i) {
        c.require(row[i].size() == 6 && row[i][1] == '.', "cell '" + row[i] + "' is not 4-decimal");
      }
    }
    if (seed == 1) std::printf("%s", t.markdown().c_str());
    original_sum += reports.front().average;
    mixed_sum += reports.back().average;
    per_seed += fmt(" %.4f", reports.front().average) + "/" + fmt("%.4f", reports.back().average);
  }
  const double orig = original_sum / 3.0, mixed = mixed_sum / 3.0;
  c.require(mixed >= orig - 0.02, "mixed " + fmt("%.4f", mixed) + " < original " + fmt("%.4f", orig) + " - 0.02");
  c.note("original/mixed per seed" + per_seed + "; mean " + fmt("%.4f", orig) + "/" + fmt("%.4f", mixed) + ", " +
         fmt("%.0f s", seconds_since(t0)));
  return c.done();
}

Outcome rater_comparison() {
  Check c;
  PhantomConfig pc;
  pc.count = 30;
  pc.network_scale = true;
  pc.network_size = 128;
  pc.radius_min = 8;
  pc.radius_max = 20;
  pc.seed = 808;
  std::vector<AnnotatedSample> ds;
  std::vector<std::string> ids;
  const RaterSimConfig profiles[] = {{0, 0.5, 0.0, 0}, {-2, 1.5, 0.0, 0}, {3, 2.5, 0.1, 0}};
  const char* names[] = {"A", "B", "C"};
  for (const auto& p : generate_phantoms(pc)) {
    AnnotatedSample s = p.sample;
    for (int r = 0; r < 3; ++r) {
      RaterSimConfig rc = profiles[r];
      rc.seed = derive_seed(pc.seed, s.id + names[r]);
      s.rater_masks[names[r]] = simulate_rater(s.consensus, rc);
    }
    RaterSimConfig second{0, 0.25, 0.0, derive_seed(pc.seed, s.id + "second")};
    s.second_pass_masks["A"] = simulate_rater(s.consensus, second);
    ids.push_back(s.id);
    ds.push_back(std::move(s));
  }
  const FoldPlan plan = make_folds(ids, 5, 3);
  const auto before = forward_pass_count();
  const RaterReport rep = compare_raters(ds, plan);
  c.require(forward_pass_count() == before, "model evaluated during rater comparison");
  for (const auto& row : rep.raters) {
    for (int f = 0; f < plan.k; ++f) {
      std::int64_t inter = 0, uni = 0;
      for (const auto& s : ds) {
        if (plan.assignments.at(s.id) != f) continue;
        const BinaryMask& m = s.rater_masks.at(row.name);
        for (std::size_t k = 0; k < m.size(); ++k) {
          inter += m.data()[k] & s.consensus.data()[k];
          uni += m.data()[k] | s.consensus.data()[k];
        }
      }
      c.require(row.per_fold_iou[static_cast<std::size_t>(f)] == static_cast<double>(inter) / static_cast<double>(uni),
                "rater " + row.name + " fold " + std::to_string(f) + " recount differs");
    }
  }
  c.require(rep.raters.size() == 3 && rep.raters[0].average > rep.raters[1].average &&
                rep.raters[1].average > rep.raters[2].average,
            "rater ordering does not follow perturbation ordering");

  // Dyadic counts so the expected improvements are exact.
  auto one = [](const char* id, const char* truth, const char* first, const char* second) {
    AnnotatedSample s;
    s.id = id;
    const int w = static_cast<int>(std::string(truth).size());
    s.image = GrayImage(w, 1, 50);
    auto row = [w](const char* r) {
      BinaryMask m(w, 1);
      for (int x = 0; x < w; ++x) m.at(x, 0) = r[x] == '#';
      return m;
    };
    s.consensus = row(truth);
    s.rater_masks["A"] = row(first);
    s.second_pass_masks["A"] = row(second);
    return s;
  };
  const std::vector<AnnotatedSample> toy{
      one("a", "####....", "#.......", "##......"),  // fold 0: 1/4 -> 2/4
      one("b", "........", "........", "........"),  // fold 0, empty
      one("c", "########", "####....", "#####...")   // fold 1: 4/8 -> 5/8
  };
  FoldPlan tp;
  tp.k = 2;
  tp.assignments = {{"a", 0}, {"b", 0}, {"c", 1}};
  const ContrastReport r0 = assisted_relabel_report(toy, "A", 0, tp, "toy");
  const ContrastReport r1 = assisted_relabel_report(toy, "A", 1, tp, "toy");
  c.require(r0.original_iou == 0.25 && r0.second_iou == 0.5 && r0.improvement == 100.0, "fold 0 contrast");
  c.require(r1.original_iou == 0.5 && r1.second_iou == 0.625 && r1.improvement == 25.0, "fold 1 contrast");
  const ContrastReport syn = assisted_relabel_report(ds, "A", 0, plan, "synthetic");
  c.require(syn.improvement == improvement_percent(rep.raters[0].per_fold_iou[0], syn.second_iou),
            "synthetic contrast inconsistent with rater report");
  c.note("rater averages " + fmt("%.4f", rep.raters[0].average) + " > " + fmt("%.4f", rep.raters[1].average) +
         " > " + fmt("%.4f", rep.raters[2].average) + "; recount exact; 0 forward passes; contrast exact");
  return c.done();
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "Lovasz corner-point oracle", lovasz_corner_points},
      {2, "gradient audit", gradient_audit},
      {3, "table arithmetic", table_arithmetic},
      {4, "crop geometry", crop_geometry},
      {5, "augmentation law", augmentation_law},
      {6, "CLAHE suite", clahe_suite},
      {7, "fold laws", fold_laws},
      {8, "desk-scale learning", desk_learning},
      {9, "four-arm cross-validation", crossval_arms},
      {10, "rater comparison", rater_comparison},
  };
  std::set<int> chosen;
  for (int i = 1; i < argc; ++i) chosen.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& cr : all) {
    if (!chosen.empty() && chosen.count(cr.id) == 0) continue;
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %2d %-28s %s  %s\n", cr.id, cr.title, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
