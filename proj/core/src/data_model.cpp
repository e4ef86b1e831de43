#include "bpseg/data_model.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

namespace bpseg {

std::string_view to_string(Device device) noexcept {
  switch (device) {
    case Device::kYgy: return "YGY";
    case Device::kBk3000If1: return "BK3000_IF1";
    case Device::kBk3000If2: return "BK3000_IF2";
    case Device::kSynthetic: return "SYNTHETIC";
  }
  return "SYNTHETIC";
}

Device parse_device(std::string_view name) {
  for (Device d : all_devices()) {
    if (to_string(d) == name) return d;
  }
  fail(ErrorCode::kParseError, "unknown device '" + std::string(name) + "'");
}

std::vector<Device> all_devices() {
  return {Device::kYgy, Device::kBk3000If1, Device::kBk3000If2, Device::kSynthetic};
}

namespace {

void check_mask(const BinaryMask& mask, const GrayImage& image, const std::string& what,
                std::vector<std::string>& out) {
  if (mask.size() != static_cast<std::size_t>(mask.width()) * static_cast<std::size_t>(mask.height())) {
    out.push_back("data length mismatch: " + what);
    return;
  }
  if (!mask.same_shape(image)) {
    out.push_back("dimension mismatch: " + what);
  }
  const auto labels = mask.data();
  if (std::any_of(labels.begin(), labels.end(), [](std::uint8_t v) { return v > 1; })) {
    out.push_back("non-binary label: " + what);
  }
}

}  // namespace

std::vector<std::string> validate_sample(const AnnotatedSample& sample) {
  std::vector<std::string> out;
  if (sample.id.empty()) out.push_back("empty id");
  if (sample.image.width() <= 0 || sample.image.height() <= 0) {
    out.push_back("non-positive image dimensions");
  }
  check_mask(sample.consensus, sample.image, "consensus", out);
  for (const auto& [rater, mask] : sample.rater_masks) {
    check_mask(mask, sample.image, "rater " + rater, out);
  }
  for (const auto& [rater, mask] : sample.second_pass_masks) {
    check_mask(mask, sample.image, "second pass " + rater, out);
  }
  return out;
}

std::vector<std::string> validate_dataset(std::span<const AnnotatedSample> samples) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& s : samples) {
    for (auto& v : validate_sample(s)) out.push_back(s.id + ": " + v);
    if (!seen.insert(s.id).second) out.push_back("duplicate id: " + s.id);
  }
  return out;
}

std::vector<std::string> FoldPlan::test_ids(int fold) const {
  std::vector<std::string> ids;
  for (const auto& [id, f] : assignments) {
    if (f == fold) ids.push_back(id);
  }
  return ids;
}

std::vector<std::string> FoldPlan::train_ids(int fold) const {
  std::vector<std::string> ids;
  for (const auto& [id, f] : assignments) {
    if (f != fold) ids.push_back(id);
  }
  return ids;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(std::max(k, 0)), 0);
  for (const auto& [id, f] : assignments) {
    if (f >= 0 && f < k) ++sizes[static_cast<std::size_t>(f)];
  }
  return sizes;
}

std::string fold_plan_to_json(const FoldPlan& plan) {
  nlohmann::json j;
  j["k"] = plan.k;
  j["seed"] = plan.seed;
  j["assignments"] = plan.assignments;
  j["dropped"] = plan.dropped;
  return j.dump(2) + "\n";
}

FoldPlan fold_plan_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, std::string("fold plan: ") + e.what());
  }
  FoldPlan plan;
  try {
    plan.k = j.at("k").get<int>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.assignments = j.at("assignments").get<std::map<std::string, int>>();
    if (j.contains("dropped")) plan.dropped = j.at("dropped").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, std::string("fold plan: ") + e.what());
  }
  for (const auto& [id, f] : plan.assignments) {
    if (f < 0 || f >= plan.k) fail(ErrorCode::kParseError, "fold index out of range for " + id);
  }
  return plan;
}

ExperimentArm ExperimentArm::make(ArmName name) noexcept {
  switch (name) {
    case ArmName::kOriginal: return {name, false, false};
    case ArmName::kModifiedLoss: return {name, false, true};
    case ArmName::kEnhanced: return {name, true, false};
    case ArmName::kMixedOptimization: return {name, true, true};
  }
  return {};
}

std::vector<ExperimentArm> all_arms() {
  return {ExperimentArm::make(ArmName::kOriginal), ExperimentArm::make(ArmName::kModifiedLoss),
          ExperimentArm::make(ArmName::kEnhanced), ExperimentArm::make(ArmName::kMixedOptimization)};
}

std::string_view arm_key(ArmName name) noexcept {
  switch (name) {
    case ArmName::kOriginal: return "original";
    case ArmName::kModifiedLoss: return "modified_loss";
    case ArmName::kEnhanced: return "enhanced";
    case ArmName::kMixedOptimization: return "mixed_optimization";
  }
  return "original";
}

std::string_view arm_title(ArmName name) noexcept {
  switch (name) {
    case ArmName::kOriginal: return "Original images";
    case ArmName::kModifiedLoss: return "Modified loss function";
    case ArmName::kEnhanced: return "Enhanced images";
    case ArmName::kMixedOptimization: return "Mixed-optimization";
  }
  return "Original images";
}

ArmName parse_arm(std::string_view key) {
  for (const auto& arm : all_arms()) {
    if (arm_key(arm.name) == key) return arm.name;
  }
  fail(ErrorCode::kParseError, "unknown arm '" + std::string(key) + "'");
}

bool arm_is_consistent(const ExperimentArm& arm) noexcept { return arm == ExperimentArm::make(arm.name); }

}  // namespace bpseg
