#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "relulab/network.hpp"

namespace relulab {

struct ParamFile {
    Architecture arch;
    Vec theta;
};

nlohmann::json params_to_json(const Architecture& arch, const Vec& theta);
ParamFile params_from_json(const nlohmann::json& j);

ParamFile read_params(const std::filesystem::path& path);
void write_params(const std::filesystem::path& path, const Architecture& arch, const Vec& theta);

// CSV with header x_1..x_d,y. The box defaults to the bounding box of the inputs
// unless given.
Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const Dataset& data);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

// Shortest round-trip decimal representation.
std::string fmt_double(double v);

}  // namespace relulab
