#pragma once

// JSON mappings for configuration and on-disk descriptors.

#include <filesystem>

#include <json.hpp>

#include "lff/data.hpp"
#include "lff/display.hpp"
#include "lff/networks.hpp"
#include "lff/solvers.hpp"
#include "lff/training.hpp"

namespace lff {

nlohmann::json read_json(const std::filesystem::path& path);
/// Two-space indented, trailing newline; byte-stable for equal values.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

void to_json(nlohmann::json& j, const DisplayGeometry& g);
void from_json(const nlohmann::json& j, DisplayGeometry& g);
void to_json(nlohmann::json& j, const NetworkSpec& s);
void from_json(const nlohmann::json& j, NetworkSpec& s);
void to_json(nlohmann::json& j, const SolveConfig& c);
void from_json(const nlohmann::json& j, SolveConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const SceneParams& p);
void from_json(const nlohmann::json& j, SceneParams& p);
void to_json(nlohmann::json& j, const AugmentParams& p);
void from_json(const nlohmann::json& j, AugmentParams& p);
void to_json(nlohmann::json& j, const DatasetParams& p);
void from_json(const nlohmann::json& j, DatasetParams& p);
void to_json(nlohmann::json& j, const SampleRecord& r);
void from_json(const nlohmann::json& j, SampleRecord& r);
void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

}  // namespace lff
