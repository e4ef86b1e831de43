#include "cli.hpp"

#include <filesystem>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "bpseg/checkpoint.hpp"
#include "bpseg/dataset_io.hpp"
#include "bpseg/image_io.hpp"
#include "config.hpp"

#ifndef BPSEG_VERSION
#define BPSEG_VERSION "unknown"
#endif

namespace bpseg::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Flags {
  std::string config;
  std::string dataset_root;
  std::string out;
  std::string arm;
  std::string k;
  std::string seed;
  std::string workers;
  std::string device_profile;
  std::vector<std::string> sets;
};

struct Context {
  std::string subcommand;
  RunConfig cfg;
  std::ostream& out;
  std::ostream& err;

  fs::path out_dir() const { return fs::path(cfg.out); }
  fs::path report_dir() const { return out_dir() / "reports" / cfg.experiment; }
};

void write_manifest(const Context& ctx) {
  const RunConfig& c = ctx.cfg;
  json m;
  m["tool"] = "bpseg";
  m["version"] = BPSEG_VERSION;
  m["subcommand"] = ctx.subcommand;
  m["config_hash"] = config_hash(c);
  m["seeds"] = {{"master", c.seed},
                {"folds", c.seed},
                {"net", c.net.seed},
                {"train", c.train.seed},
                {"augment", c.prep.augment.seed},
                {"synth", c.synth.seed}};
  m["config"] = to_json(c);
  write_text(ctx.out_dir() / ("manifest-" + ctx.subcommand + ".json"), m.dump(2) + "\n");
}

void write_table(const fs::path& stem, const Table& t) {
  write_text(stem.string() + ".csv", t.csv());
  write_text(stem.string() + ".md", t.markdown());
}

std::vector<AnnotatedSample> load(const Context& ctx) {
  if (ctx.cfg.dataset_root.empty()) fail(ErrorCode::kConfigError, "--dataset-root is required");
  std::optional<Device> device;
  if (!ctx.cfg.device_profile.empty()) device = parse_device(ctx.cfg.device_profile);
  auto samples = load_dataset(ctx.cfg.dataset_root, device);
  if (samples.empty()) fail(ErrorCode::kEmptyInput, "no samples under " + ctx.cfg.dataset_root);
  return samples;
}

FoldPlan plan_for(const Context& ctx, std::span<const AnnotatedSample> samples) {
  FoldPlan plan;
  if (!ctx.cfg.folds_file.empty()) {
    plan = fold_plan_from_json(read_text(ctx.cfg.folds_file));
  } else {
    std::vector<std::string> ids;
    for (const auto& s : samples) ids.push_back(s.id);
    plan = make_folds(ids, ctx.cfg.k, ctx.cfg.seed, ctx.cfg.trim_to_divisible);
  }
  check_plan_covers(samples, plan);
  return plan;
}

ExperimentArm single_arm(const Context& ctx) {
  if (ctx.cfg.arms.size() != 1) fail(ErrorCode::kConfigError, ctx.subcommand + " takes exactly one arm");
  return ExperimentArm::make(parse_arm(ctx.cfg.arms.front()));
}

std::vector<AnnotatedSample> select(std::span<const AnnotatedSample> samples, const std::vector<std::string>& ids) {
  std::vector<AnnotatedSample> out;
  for (const auto& id : ids) {
    auto it = std::find_if(samples.begin(), samples.end(), [&](const AnnotatedSample& s) { return s.id == id; });
    if (it == samples.end()) fail(ErrorCode::kInvalidArgument, "unknown sample id '" + id + "'");
    out.push_back(*it);
  }
  return out;
}

std::string fold_stem(const ExperimentArm& arm, int fold) {
  return std::string(arm_key(arm.name)) + "_fold" + std::to_string(fold);
}

// Rater i perturbs the consensus more than rater i-1; the second pass is
// a milder redraw of the same rater.
RaterSimConfig rater_profile(int index, bool second, std::uint64_t seed) {
  RaterSimConfig r;
  const int m = index + 1;
  r.dilate_or_erode = (index % 2 == 0 ? 1 : -1) * (second ? m / 2 : m);
  r.boundary_jitter_sd = second ? 0.5 * m : 1.0 * m;
  r.drop_probability = second ? 0.0 : 0.05 * index;
  r.seed = seed;
  return r;
}

void cmd_synth_gen(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  if (c.synth_raters < 0 || c.synth_raters > 26) fail(ErrorCode::kConfigError, "synth.raters must be in 0..26");
  const fs::path root = ctx.out_dir() / "dataset";
  for (int i = 0; i < c.synth.count; ++i) {
    Phantom p = generate_phantom(c.synth, i);
    AnnotatedSample& s = p.sample;
    const std::uint64_t base = derive_seed(c.synth.seed, s.id);
    for (int r = 0; r < c.synth_raters; ++r) {
      const std::string name(1, static_cast<char>('A' + r));
      s.rater_masks[name] = simulate_rater(s.consensus, rater_profile(r, false, derive_seed(base, "rater_" + name)));
      if (c.synth_second_pass) {
        s.second_pass_masks[name] =
            simulate_rater(s.consensus, rater_profile(r, true, derive_seed(base, "second_" + name)));
      }
    }
    save_sample(root, s);
    if (c.synth_annotations) {
      write_text(root / std::string(to_string(s.device)) / s.id / "annotation.json",
                 polygons_to_json(ellipse_polygons(p.trunks)));
    }
  }
  ctx.out << "wrote " << c.synth.count << " phantoms to " << root.string() << "\n";
}

void cmd_prepare(Context& ctx) {
  const auto samples = load(ctx);
  const fs::path root = ctx.out_dir() / "dataset";
  for (const auto& s : samples) save_sample(root, crop_sample(s, crop_profile(s.device)));
  ctx.out << "cropped " << samples.size() << " samples to " << root.string() << "\n";
}

void cmd_enhance_report(Context& ctx) {
  const auto samples = load(ctx);
  const RunConfig& c = ctx.cfg;
  PrepConfig prep = c.prep;
  for (ArmName name : {ArmName::kOriginal, ArmName::kEnhanced}) {
    const auto prepared = prepare_eval_set(samples, ExperimentArm::make(name), prep);
    std::vector<GrayImage> images;
    for (const auto& s : prepared) images.push_back(s.image);
    const std::string tag = c.experiment + "_" + (name == ArmName::kOriginal ? "original" : "enhanced");
    const HistogramReport h = dataset_histogram(images, tag);
    const fs::path stem = ctx.out_dir() / "histograms" / tag;
    write_text(stem.string() + ".csv", histogram_csv(h));
    write_text(stem.string() + ".dat", histogram_gnuplot(h));
    std::uint64_t below = 0;
    for (int b = 0; b < 96; ++b) below += h.bins[static_cast<std::size_t>(b)];
    ctx.out << tag << ": p5 " << h.percentile(0.05) << " p95 " << h.percentile(0.95) << " below96 "
            << format_fixed(static_cast<double>(below) / static_cast<double>(h.total()), 4) << "\n";
  }
}

void cmd_folds(Context& ctx) {
  const auto samples = load(ctx);
  const FoldPlan plan = plan_for(ctx, samples);
  write_text(ctx.out_dir() / "folds.json", fold_plan_to_json(plan));
  std::ostringstream sizes;
  for (auto n : plan.fold_sizes()) sizes << ' ' << n;
  ctx.out << "k " << plan.k << " fold sizes" << sizes.str() << " dropped " << plan.dropped.size() << "\n";
}

void cmd_train(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const auto samples = load(ctx);
  const FoldPlan plan = plan_for(ctx, samples);
  const ExperimentArm arm = single_arm(ctx);
  const int fold = c.train_fold;
  if (fold < 0 || fold >= plan.k) fail(ErrorCode::kConfigError, "train.fold out of range");
  const auto train_raw = select(samples, plan.train_ids(fold));
  const auto test_raw = select(samples, plan.test_ids(fold));
  const auto train = prepare_train_set(train_raw, arm, c.prep);
  const auto test = prepare_eval_set(test_raw, arm, c.prep);
  TrainOptions opts;
  opts.on_epoch = [&](const EpochRecord& r) {
    ctx.out << "epoch " << r.epoch << " loss " << format_fixed(r.train_loss, 4) << " iou "
            << format_fixed(r.val_iou, 4) << "\n"
            << std::flush;
  };
  const TrainResult res = train_fold(train, test, fold_network_config(c.net, fold),
                                     fold_train_config(c.train, arm, fold), opts);
  const std::string stem = fold_stem(arm, fold);
  write_text(ctx.out_dir() / "logs" / (stem + ".csv"), history_csv(res.history));
  if (c.save_checkpoints) save_checkpoint(ctx.out_dir() / "checkpoints" / (stem + ".ckpt"), res.best);
  ctx.out << "best epoch " << res.history.best_epoch << " iou " << format_fixed(res.history.best_iou, 4) << "\n";
}

void cmd_crossval(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const auto samples = load(ctx);
  const FoldPlan plan = plan_for(ctx, samples);
  std::vector<ArmReport> reports;
  std::mutex log_mutex;
  for (const auto& key : c.arms) {
    const ExperimentArm arm = ExperimentArm::make(parse_arm(key));
    CrossvalOptions opts;
    opts.prep = c.prep;
    opts.workers = c.workers;
    opts.on_epoch = [&](int fold, const EpochRecord& r) {
      std::lock_guard lock(log_mutex);
      ctx.out << arm_key(arm.name) << " fold " << fold << " epoch " << r.epoch << " loss "
              << format_fixed(r.train_loss, 4) << " iou " << format_fixed(r.val_iou, 4) << "\n"
              << std::flush;
    };
    opts.on_fold = [&](const FoldOutcome& f) {
      const std::string stem = fold_stem(arm, f.fold);
      write_text(ctx.out_dir() / "logs" / (stem + ".csv"), history_csv(f.result->history));
      if (c.save_checkpoints) save_checkpoint(ctx.out_dir() / "checkpoints" / (stem + ".ckpt"), f.result->best);
    };
    ArmReport r = run_crossval(samples, arm, c.net, c.train, plan, opts);
    write_table(ctx.report_dir() / std::string(arm_key(arm.name)), arm_table(r));
    ctx.out << arm_key(arm.name) << " average " << format_fixed(r.average, 4) << "\n";
    reports.push_back(std::move(r));
  }
  if (reports.size() > 1) write_table(ctx.report_dir() / "summary", arms_table(reports));
}

// Reads the fold rows of an arm report CSV written by crossval.
ArmReport read_arm_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kParseError, path.string() + " is empty");
  ArmReport r;
  const std::string title = line.substr(line.find(',') + 1, line.find(',', line.find(',') + 1) - line.find(',') - 1);
  for (const auto& a : all_arms()) {
    if (arm_title(a.name) == title) r.arm = a;
  }
  while (std::getline(in, line)) {
    if (line.rfind("Fold ", 0) != 0) continue;
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    try {
      r.per_fold_iou.push_back(std::stod(line.substr(a + 1, b - a - 1)));
    } catch (...) {
      fail(ErrorCode::kParseError, "bad fold row in " + path.string() + ": " + line);
    }
  }
  if (r.per_fold_iou.empty()) fail(ErrorCode::kParseError, "no fold rows in " + path.string());
  r.per_fold_image_mean = r.per_fold_iou;
  r.dispersion = dispersion(r.per_fold_iou);
  r.average = r.dispersion.mean;
  return r;
}

void cmd_compare_raters(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const auto samples = load(ctx);
  const FoldPlan plan = plan_for(ctx, samples);
  std::optional<ArmReport> system;
  if (!c.compare_system_csv.empty()) {
    system = read_arm_csv(c.compare_system_csv);
    if (static_cast<int>(system->per_fold_iou.size()) != plan.k) {
      fail(ErrorCode::kShapeMismatch, "system report has " + std::to_string(system->per_fold_iou.size()) +
                                          " folds, plan has " + std::to_string(plan.k));
    }
  }
  const RaterReport report = compare_raters(samples, plan, c.compare_raters, system ? &*system : nullptr);
  write_table(ctx.report_dir() / "raters", rater_fold_table(report));
  const std::vector<std::pair<std::string, RaterReport>> rows{{c.compare_tag, report}};
  write_table(ctx.report_dir() / "raters_summary", rater_summary_table(rows));
  for (const auto& r : report.raters) ctx.out << "rater " << r.name << " " << format_fixed(r.average, 4) << "\n";
}

void cmd_assist_report(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const auto samples = load(ctx);
  const FoldPlan plan = plan_for(ctx, samples);
  const ContrastReport r = assisted_relabel_report(samples, c.assist_rater, c.assist_fold, plan, c.assist_tag);
  write_table(ctx.report_dir() / "assist", contrast_table(std::span<const ContrastReport>(&r, 1)));
  ctx.out << "rater " << r.rater << " fold " << r.fold << " " << format_fixed(r.original_iou, 4) << " -> "
          << format_fixed(r.second_iou, 4) << " (" << format_fixed(r.improvement, 2) << "%)\n";
}

void cmd_overlay(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  if (c.overlay_checkpoint.empty()) fail(ErrorCode::kConfigError, "overlay.checkpoint is required");
  const auto params = load_checkpoint(c.overlay_checkpoint);
  const auto samples = load(ctx);
  const ExperimentArm arm = single_arm(ctx);
  const auto chosen = c.overlay_ids.empty() ? samples : select(samples, c.overlay_ids);
  const auto prepared = prepare_eval_set(chosen, arm, c.prep);
  const EvalResult res = evaluate(params, prepared, c.train.batch_size, true);
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    const auto& s = prepared[i];
    write_png(ctx.out_dir() / "overlays" / (s.id + ".png"), render_overlay(s.image, res.predictions[i], s.mask));
  }
  ctx.out << "wrote " << prepared.size() << " overlays, aggregate iou " << format_fixed(iou_value(res.aggregate), 4)
          << "\n";
}

using Handler = void (*)(Context&);

const std::vector<std::pair<std::string, std::pair<const char*, Handler>>>& commands() {
  static const std::vector<std::pair<std::string, std::pair<const char*, Handler>>> table{
      {"synth-gen", {"Generate a seeded synthetic phantom dataset with simulated raters", cmd_synth_gen}},
      {"prepare", {"Crop every sample to its device region of interest", cmd_prepare}},
      {"enhance-report", {"Intensity histograms before and after CLAHE", cmd_enhance_report}},
      {"train", {"Train one fold", cmd_train}},
      {"crossval", {"k-fold cross-validation of one or more arms", cmd_crossval}},
      {"compare-raters", {"Per-fold IoU of each rater against the consensus", cmd_compare_raters}},
      {"assist-report", {"First-pass versus assisted second-pass rater IoU", cmd_assist_report}},
      {"overlay", {"Render prediction overlays from a checkpoint", cmd_overlay}},
      {"folds", {"Write the fold assignment", cmd_folds}},
  };
  return table;
}

bool is_usage(ErrorCode code) { return code == ErrorCode::kConfigError || code == ErrorCode::kInvalidConfig; }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  CLI::App app{"Brachial plexus segmentation experiments", "bpseg"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(BPSEG_VERSION));

  Flags flags;
  std::vector<std::pair<CLI::App*, Handler>> subs;
  for (const auto& [name, entry] : commands()) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", flags.config, "JSON configuration file")->type_name("FILE");
    sub->add_option("--dataset-root", flags.dataset_root, "Dataset directory")->type_name("DIR");
    sub->add_option("--out", flags.out, "Output directory")->type_name("DIR");
    sub->add_option("--arm", flags.arm, "Arm key(s), comma separated, or 'all'");
    sub->add_option("--k", flags.k, "Number of folds")->type_name("INT");
    sub->add_option("--seed", flags.seed, "Master seed")->type_name("UINT");
    sub->add_option("--workers", flags.workers, "Folds trained concurrently")->type_name("INT");
    sub->add_option("--device-profile", flags.device_profile, "Restrict to one device");
    sub->add_option("--set", flags.sets, "Override key=value (repeatable)")->type_name("KEY=VALUE");
    subs.emplace_back(sub, entry.second);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      app.exit(e, out, err);
      return 0;
    }
    err << "bpseg: " << e.what() << "\n" << app.help();
    return 2;
  }

  Context ctx{"", RunConfig{}, out, err};
  Handler handler = nullptr;
  for (const auto& [sub, h] : subs) {
    if (sub->parsed()) {
      ctx.subcommand = sub->get_name();
      handler = h;
    }
  }

  try {
    std::string config_path = flags.config;
    if (config_path.empty()) {
      if (const char* v = env("BPSEG_CONFIG")) config_path = v;
    }
    if (!config_path.empty()) apply_file(ctx.cfg, config_path);
    apply_env(ctx.cfg, env);
    if (const char* v = env("BPSEG_ARM")) set_value(ctx.cfg, "arms", v);
    for (const auto& kv : flags.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) fail(ErrorCode::kConfigError, "--set expects key=value, got '" + kv + "'");
      set_value(ctx.cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    const std::pair<const std::string*, const char*> named[] = {
        {&flags.dataset_root, "dataset_root"}, {&flags.out, "out"},   {&flags.arm, "arms"},
        {&flags.k, "k"},                       {&flags.seed, "seed"}, {&flags.workers, "workers"},
        {&flags.device_profile, "device_profile"}};
    for (const auto& [value, key] : named) {
      if (!value->empty()) set_value(ctx.cfg, key, *value);
    }
    ctx.cfg = resolve_seeds(ctx.cfg);
    if (ctx.cfg.workers < 1) fail(ErrorCode::kConfigError, "workers must be >= 1");
    if (ctx.cfg.k < 2) fail(ErrorCode::kConfigError, "k must be >= 2");
    ctx.cfg.net.validate();
    ctx.cfg.train.validate();
    ctx.cfg.prep.validate();
  } catch (const Error& e) {
    err << "bpseg: " << e.what() << "\n";
    return 2;
  }

  try {
    fs::create_directories(ctx.out_dir());
    write_manifest(ctx);
    handler(ctx);
  } catch (const Error& e) {
    err << "bpseg: " << e.what() << "\n";
    return is_usage(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    err << "bpseg: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace bpseg::cli
