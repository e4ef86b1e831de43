#include "bpseg/dataset_io.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

#include "bpseg/image_io.hpp"

namespace bpseg {

namespace fs = std::filesystem;

void save_sample(const fs::path& root, const AnnotatedSample& sample) {
  if (sample.id.empty() || sample.id.find('/') != std::string::npos) {
    fail(ErrorCode::kInvalidArgument, "sample id '" + sample.id + "' is not a valid directory name");
  }
  const fs::path dir = root / std::string(to_string(sample.device)) / sample.id;
  write_png(dir / "image.png", sample.image);
  write_png(dir / "consensus.png", sample.consensus);
  for (const auto& [rater, mask] : sample.rater_masks) write_png(dir / ("rater_" + rater + ".png"), mask);
  for (const auto& [rater, mask] : sample.second_pass_masks) {
    write_png(dir / ("rater_" + rater + "_second.png"), mask);
  }
}

void save_dataset(const fs::path& root, std::span<const AnnotatedSample> samples) {
  for (const auto& s : samples) save_sample(root, s);
}

namespace {

AnnotatedSample load_sample(const fs::path& dir, Device device) {
  AnnotatedSample s;
  s.id = dir.filename().string();
  s.device = device;
  const fs::path image = dir / "image.png";
  if (!fs::exists(image)) fail(ErrorCode::kIoError, "missing " + image.string());
  s.image = read_png_gray(image);
  const fs::path consensus = dir / "consensus.png";
  const fs::path annotation = dir / "annotation.json";
  if (fs::exists(consensus)) {
    s.consensus = read_png_mask(consensus);
  } else if (fs::exists(annotation)) {
    const auto polys = parse_trunk_polygons(read_text(annotation));
    s.consensus = rasterize_polygons(polys, s.image.width(), s.image.height());
  } else {
    fail(ErrorCode::kIoError, "sample " + dir.string() + " has neither consensus.png nor annotation.json");
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    const std::string prefix = "rater_";
    if (name.rfind(prefix, 0) != 0 || f.extension() != ".png") continue;
    std::string stem = f.stem().string().substr(prefix.size());
    const std::string second = "_second";
    if (stem.size() > second.size() && stem.compare(stem.size() - second.size(), second.size(), second) == 0) {
      s.second_pass_masks.emplace(stem.substr(0, stem.size() - second.size()), read_png_mask(f));
    } else if (!stem.empty()) {
      s.rater_masks.emplace(stem, read_png_mask(f));
    }
  }
  return s;
}

}  // namespace

std::vector<AnnotatedSample> load_dataset(const fs::path& root, std::optional<Device> device) {
  if (!fs::is_directory(root)) fail(ErrorCode::kIoError, "dataset root " + root.string() + " is not a directory");
  std::vector<fs::path> device_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) device_dirs.push_back(e.path());
  }
  std::sort(device_dirs.begin(), device_dirs.end());
  std::vector<AnnotatedSample> out;
  for (const auto& ddir : device_dirs) {
    Device d;
    try {
      d = parse_device(ddir.filename().string());
    } catch (const Error&) {
      fail(ErrorCode::kParseError, "unknown device directory " + ddir.string());
    }
    if (device && *device != d) continue;
    std::vector<fs::path> ids;
    for (const auto& e : fs::directory_iterator(ddir)) {
      if (e.is_directory()) ids.push_back(e.path());
    }
    std::sort(ids.begin(), ids.end());
    for (const auto& dir : ids) out.push_back(load_sample(dir, d));
  }
  const auto problems = validate_dataset(out);
  if (!problems.empty()) fail(ErrorCode::kParseError, "invalid dataset: " + problems.front());
  return out;
}

std::string polygons_to_json(std::span<const Polygon> polygons) {
  nlohmann::json arr = nlohmann::json::array();
  int n = 0;
  for (const auto& p : polygons) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& v : p.vertices) pts.push_back({v.x, v.y});
    arr.push_back({{"label", "BP" + std::to_string(++n)}, {"points", pts}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace bpseg
