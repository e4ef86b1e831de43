#include "config.hpp"

#include <cctype>
#include <cstdio>
#include <sstream>

#include "bpseg/image_io.hpp"
#include "bpseg/rng.hpp"

namespace bpseg::cli {

namespace {

using json = nlohmann::json;

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  fail(ErrorCode::kConfigError, "invalid value '" + value + "' for " + key + " (expected " + want + ")");
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (...) {
    bad_value(key, v, "an integer");
  }
  if (used != v.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  if (v.empty() || v[0] == '-') bad_value(key, v, "a non-negative integer");
  try {
    out = std::stoull(v, &used);
  } catch (...) {
    bad_value(key, v, "a non-negative integer");
  }
  if (used != v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (...) {
    bad_value(key, v, "a number");
  }
  if (used != v.size()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<json(const RunConfig&)> get;
};

template <typename Ref>
Field int_field(Ref ref) {
  return {[ref](RunConfig& c, const std::string& k, const std::string& v) {
            ref(c) = static_cast<std::remove_reference_t<decltype(ref(c))>>(parse_int(k, v));
          },
          [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); }};
}
template <typename Ref>
Field u64_field(Ref ref) {
  return {[ref](RunConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_u64(k, v); },
          [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); }};
}
template <typename Ref>
Field double_field(Ref ref) {
  return {[ref](RunConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_double(k, v); },
          [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); }};
}
template <typename Ref>
Field bool_field(Ref ref) {
  return {[ref](RunConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_bool(k, v); },
          [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); }};
}
template <typename Ref>
Field string_field(Ref ref) {
  return {[ref](RunConfig& c, const std::string&, const std::string& v) { ref(c) = v; },
          [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); }};
}
template <typename Ref>
Field list_field(Ref ref) {
  return {[ref](RunConfig& c, const std::string&, const std::string& v) { ref(c) = parse_list(v); },
          [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); }};
}

#define REF(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::map<std::string, Field>& registry() {
  static const std::map<std::string, Field> fields = [] {
    std::map<std::string, Field> f;
    f["dataset_root"] = string_field(REF(dataset_root));
    f["out"] = string_field(REF(out));
    f["experiment"] = string_field(REF(experiment));
    f["arms"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                   auto list = parse_list(v);
                   if (list.size() == 1 && list[0] == "all") {
                     list.clear();
                     for (const auto& a : all_arms()) list.emplace_back(arm_key(a.name));
                   }
                   if (list.empty()) bad_value(k, v, "at least one arm");
                   for (const auto& a : list) {
                     try {
                       parse_arm(a);
                     } catch (const Error&) {
                       bad_value(k, a, "original, modified_loss, enhanced, mixed_optimization or all");
                     }
                   }
                   c.arms = list;
                 },
                 [](const RunConfig& c) { return json(c.arms); }};
    f["k"] = int_field(REF(k));
    f["seed"] = u64_field(REF(seed));
    f["workers"] = int_field(REF(workers));
    f["device_profile"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                             if (!v.empty()) {
                               try {
                                 parse_device(v);
                               } catch (const Error&) {
                                 bad_value(k, v, "YGY, BK3000_IF1, BK3000_IF2 or SYNTHETIC");
                               }
                             }
                             c.device_profile = v;
                           },
                           [](const RunConfig& c) { return json(c.device_profile); }};
    f["trim_to_divisible"] = bool_field(REF(trim_to_divisible));
    f["folds_file"] = string_field(REF(folds_file));

    f["net.base_channels"] = int_field(REF(net.base_channels));
    f["net.depth"] = int_field(REF(net.depth));
    f["net.attention_reduction"] = int_field(REF(net.attention_reduction));
    f["net.seed"] = u64_field(REF(net.seed));

    f["train.batch_size"] = int_field(REF(train.batch_size));
    f["train.lr_initial"] = double_field(REF(train.lr_initial));
    f["train.lr_decrement"] = double_field(REF(train.lr_decrement));
    f["train.lr_floor"] = double_field(REF(train.lr_floor));
    f["train.momentum"] = double_field(REF(train.momentum));
    f["train.epochs"] = int_field(REF(train.epochs));
    f["train.seed"] = u64_field(REF(train.seed));
    f["train.schedule"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                             try {
                               c.train.schedule = parse_lr_schedule(v);
                             } catch (const Error&) {
                               bad_value(k, v, "linear or polynomial");
                             }
                           },
                           [](const RunConfig& c) { return json(std::string(to_string(c.train.schedule))); }};
    f["train.poly_power"] = double_field(REF(train.poly_power));
    f["train.poly_iterations"] = int_field(REF(train.poly_iterations));
    f["train.ce_weight"] = double_field(REF(train.ce_weight));
    f["train.lovasz_weight"] = double_field(REF(train.lovasz_weight));
    f["train.fold"] = int_field(REF(train_fold));
    f["train.save_checkpoints"] = bool_field(REF(save_checkpoints));

    f["prep.input_size"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                              c.prep.input_size = static_cast<int>(parse_int(k, v));
                              c.prep.augment.final_size = c.prep.input_size;
                            },
                            [](const RunConfig& c) { return json(c.prep.input_size); }};
    f["prep.pre_crop_size"] = int_field(REF(prep.augment.pre_crop_size));
    f["prep.crops_per_image"] = int_field(REF(prep.augment.crops_per_image));
    f["prep.augment_seed"] = u64_field(REF(prep.augment.seed));
    f["prep.augment"] = bool_field(REF(prep.augment_train));
    f["enhance.clip_limit"] = double_field(REF(prep.enhance.clip_limit));
    f["enhance.tiles_x"] = int_field(REF(prep.enhance.tiles_x));
    f["enhance.tiles_y"] = int_field(REF(prep.enhance.tiles_y));

    f["synth.count"] = int_field(REF(synth.count));
    f["synth.frame_width"] = int_field(REF(synth.frame_width));
    f["synth.frame_height"] = int_field(REF(synth.frame_height));
    f["synth.network_scale"] = bool_field(REF(synth.network_scale));
    f["synth.network_size"] = int_field(REF(synth.network_size));
    f["synth.trunks_min"] = int_field(REF(synth.trunks_min));
    f["synth.trunks_max"] = int_field(REF(synth.trunks_max));
    f["synth.radius_min"] = double_field(REF(synth.radius_min));
    f["synth.radius_max"] = double_field(REF(synth.radius_max));
    f["synth.distractors_max"] = int_field(REF(synth.distractors_max));
    f["synth.speckle_scale"] = double_field(REF(synth.speckle_scale));
    f["synth.background_level"] = double_field(REF(synth.background_level));
    f["synth.trunk_level"] = double_field(REF(synth.trunk_level));
    f["synth.rim_brightness"] = double_field(REF(synth.rim_brightness));
    f["synth.rim_fraction"] = double_field(REF(synth.rim_fraction));
    f["synth.seed"] = u64_field(REF(synth.seed));
    f["synth.raters"] = int_field(REF(synth_raters));
    f["synth.second_pass"] = bool_field(REF(synth_second_pass));
    f["synth.annotations"] = bool_field(REF(synth_annotations));

    f["compare.raters"] = list_field(REF(compare_raters));
    f["compare.system_csv"] = string_field(REF(compare_system_csv));
    f["compare.tag"] = string_field(REF(compare_tag));
    f["assist.rater"] = string_field(REF(assist_rater));
    f["assist.fold"] = int_field(REF(assist_fold));
    f["assist.tag"] = string_field(REF(assist_tag));
    f["overlay.checkpoint"] = string_field(REF(overlay_checkpoint));
    f["overlay.ids"] = list_field(REF(overlay_ids));
    return f;
  }();
  return fields;
}

#undef REF

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v.get<double>());
    return buf;
  }
  fail(ErrorCode::kConfigError, "unsupported JSON value " + v.dump());
}

}  // namespace

RunConfig::RunConfig() {
  net.seed = 0;
  train.seed = 0;
  prep.augment.seed = 0;
  synth.seed = 0;
}

RunConfig resolve_seeds(const RunConfig& cfg) {
  RunConfig r = cfg;
  if (r.net.seed == 0) r.net.seed = derive_seed(r.seed, "net");
  if (r.train.seed == 0) r.train.seed = derive_seed(r.seed, "train");
  if (r.prep.augment.seed == 0) r.prep.augment.seed = derive_seed(r.seed, "augment");
  if (r.synth.seed == 0) r.synth.seed = derive_seed(r.seed, "synth");
  return r;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : registry()) keys.push_back(k);
  return keys;
}

std::string env_name(const std::string& key) {
  std::string out = "BPSEG_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

void set_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& reg = registry();
  const auto it = reg.find(key);
  if (it == reg.end()) fail(ErrorCode::kConfigError, "unknown configuration key '" + key + "'");
  it->second.set(cfg, key, value);
}

void apply_json(RunConfig& cfg, const json& doc, const std::string& prefix) {
  if (!doc.is_object()) fail(ErrorCode::kConfigError, "configuration must be a JSON object");
  for (const auto& [k, v] : doc.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      apply_json(cfg, v, key);
    } else if (v.is_array()) {
      std::string joined;
      for (const auto& item : v) joined += (joined.empty() ? "" : ",") + scalar_text(item);
      set_value(cfg, key, joined);
    } else if (v.is_null()) {
      fail(ErrorCode::kConfigError, "null value for " + key);
    } else {
      set_value(cfg, key, scalar_text(v));
    }
  }
}

void apply_file(RunConfig& cfg, const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfigError, "cannot parse " + path.string() + ": " + e.what());
  }
  apply_json(cfg, doc);
}

void apply_env(RunConfig& cfg, const std::function<const char*(const char*)>& lookup) {
  for (const auto& key : config_keys()) {
    const std::string name = env_name(key);
    if (const char* v = lookup(name.c_str())) set_value(cfg, key, v);
  }
}

json to_json(const RunConfig& cfg) {
  json out = json::object();
  for (const auto& [k, f] : registry()) out[k] = f.get(cfg);
  return out;
}

std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(to_json(cfg).dump())));
  return buf;
}

}  // namespace bpseg::cli
