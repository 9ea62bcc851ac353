#pragma once

// Model checkpoint: manifest.json (config, dtype, parameter table with
// shapes and element offsets) + params.bin (little-endian values
// concatenated in table order).

#include <filesystem>
#include <string>

#include <json.hpp>

#include "sits/tsvit.hpp"

namespace sits {

nlohmann::json to_json(const TsvitConfig& cfg);
TsvitConfig tsvit_config_from_json(const nlohmann::json& j);

/// Stored as float32 for Tensor<float> and float64 for Tensor<double>.
template <typename Scalar>
void save_checkpoint(const std::filesystem::path& dir, const TsvitConfig& cfg, const TsvitParams<Scalar>& params);

struct CheckpointInfo {
    TsvitConfig config;
    std::string dtype; // "float32" or "float64"
};

CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

/// Values are converted when the stored dtype differs from Scalar.
template <typename Scalar>
TsvitParams<Scalar> load_checkpoint(const std::filesystem::path& dir, TsvitConfig* cfg = nullptr);

} // namespace sits
