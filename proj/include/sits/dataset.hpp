#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sits/patch.hpp"

namespace sits {

struct TileRect {
    int row = 0, col = 0, height = 0, width = 0;
    bool operator==(const TileRect&) const = default;
};

/// Non-overlapping square tiles covering the extent; partial tiles at the
/// bottom/right edges are dropped.
std::vector<TileRect> tile_grid(int height_px, int width_px, int tile_px);

struct LabeledPatch {
    SitsPatch patch;
    LabelRaster labels;
};

/// Cuts a tile cube and its labels into patch_px squares (edge remainder
/// dropped). Patch origins are pixel offsets within the tile.
std::vector<LabeledPatch> extract_patches(const SitsPatch& tile, const LabelRaster& labels, int patch_px);

/// True iff the agricultural share (crop != 0) is strictly above threshold.
bool agri_share_filter(const LabelRaster& labels, double threshold = 0.15);

/// All non-overlapping px-sized squares of a patch, row-major.
std::vector<LabeledPatch> subdivide(const LabeledPatch& item, int px);

enum class SplitRole { Train, Validation, Test };

using SplitAssignment = std::map<std::string, SplitRole>;

std::string role_name(SplitRole role);
SplitRole parse_role(const std::string& name);

// ---------------------------------------------------------------- patch store
//
// One directory per patch: manifest.json + data.bin (float32 TBHW) +
// crop.bin (uint16) + mgmt.bin (uint8) + field.bin (uint32), all raw
// little-endian row-major.

void write_patch(const std::filesystem::path& dir, const SitsPatch& patch, const LabelRaster& labels);
LabeledPatch read_patch(const std::filesystem::path& dir);

/// Raw acquisitions of a tile: manifest.json (layout "NBHW", days) +
/// obs.bin (float32) + valid.bin (uint8 NHW) + the three label planes.
void write_observations(const std::filesystem::path& dir, const ObservationStack& stack, const LabelRaster& labels);
std::pair<ObservationStack, LabelRaster> read_observations(const std::filesystem::path& dir);

/// Prediction store: manifest.json + crop_pred.bin (uint16) and/or
/// mgmt_pred.bin (uint8), with the reference label planes alongside.
struct PredictionPlanes {
    std::optional<std::vector<std::uint16_t>> crop;
    std::optional<std::vector<std::uint8_t>> mgmt;
};

void write_prediction(const std::filesystem::path& dir, const SitsPatch& footprint, const LabelRaster& labels,
                      const PredictionPlanes& pred);
std::pair<PredictionPlanes, LabelRaster> read_prediction(const std::filesystem::path& dir);

void write_uint8_plane(const std::filesystem::path& path, std::span<const std::uint8_t> values);

/// Sorted subdirectories of `root` holding a manifest.json.
std::vector<std::filesystem::path> list_patch_dirs(const std::filesystem::path& root);

void save_split(const std::filesystem::path& path, const SplitAssignment& split);
SplitAssignment load_split(const std::filesystem::path& path);

} // namespace sits
