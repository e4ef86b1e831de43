#pragma once

// Layered run configuration: defaults < JSON file < BPSEG_* environment < flags.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bpseg/experiments.hpp"
#include "bpseg/synthetic.hpp"

namespace bpseg::cli {

struct RunConfig {
  RunConfig();

  std::string dataset_root;
  std::string out = "out";
  std::string experiment = "default";
  std::vector<std::string> arms{"mixed_optimization"};
  int k = 10;
  std::uint64_t seed = 1;
  int workers = 1;
  /// Empty: each sample's own device.
  std::string device_profile;
  bool trim_to_divisible = false;
  std::string folds_file;

  NetworkConfig net;
  TrainConfig train;
  PrepConfig prep;
  PhantomConfig synth;
  int synth_raters = 3;
  bool synth_second_pass = true;
  bool synth_annotations = true;

  int train_fold = 0;
  bool save_checkpoints = true;
  std::vector<std::string> compare_raters;
  std::string compare_system_csv;
  std::string compare_tag = "dataset";
  std::string assist_rater = "A";
  int assist_fold = 0;
  std::string assist_tag = "dataset";
  std::string overlay_checkpoint;
  std::vector<std::string> overlay_ids;
};

/// Copy with every zero component seed derived from the master seed.
RunConfig resolve_seeds(const RunConfig& cfg);

/// Every recognised key, dotted form.
std::vector<std::string> config_keys();

/// Environment variable mirroring a key: BPSEG_ + upper case, '.' -> '_'.
std::string env_name(const std::string& key);

/// Throws Error(kConfigError) for unknown keys or unparsable values.
void set_value(RunConfig& cfg, const std::string& key, const std::string& value);
void apply_json(RunConfig& cfg, const nlohmann::json& doc, const std::string& prefix = "");
void apply_file(RunConfig& cfg, const std::filesystem::path& path);
/// `lookup` returns nullptr when a variable is unset.
void apply_env(RunConfig& cfg, const std::function<const char*(const char*)>& lookup);

/// Resolved configuration as a flat, key-sorted JSON object.
nlohmann::json to_json(const RunConfig& cfg);
/// FNV-1a of the canonical dump, 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace bpseg::cli
