#pragma once

// On-disk dataset layout:
//   <root>/<DEVICE>/<id>/image.png
//                        consensus.png          (or annotation.json polygons)
//                        rater_<x>.png
//                        rater_<x>_second.png

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "bpseg/data_model.hpp"
#include "bpseg/preprocess.hpp"

namespace bpseg {

void save_sample(const std::filesystem::path& root, const AnnotatedSample& sample);
void save_dataset(const std::filesystem::path& root, std::span<const AnnotatedSample> samples);

/// Samples sorted by device directory then id. The consensus comes from
/// consensus.png, or from annotation.json when the PNG is absent. Throws
/// IoError for a missing root or image, ParseError for unknown device
/// directories or invalid samples.
std::vector<AnnotatedSample> load_dataset(const std::filesystem::path& root,
                                          std::optional<Device> device = std::nullopt);

/// [{"label": "BP1", "points": [[x, y], ...]}, ...]
std::string polygons_to_json(std::span<const Polygon> polygons);

}  // namespace bpseg
