#pragma once

#include <span>
#include <vector>

#include "sits/dataset.hpp"
#include "sits/forest.hpp"
#include "sits/tsvit.hpp"

namespace sits {

/// Class rasters (one per model task) over the full footprint of a
/// normalized patch whose edge is a multiple of the model edge.
template <typename Scalar>
std::vector<std::vector<int>> predict_patch(const TsvitParams<Scalar>& params, const TsvitConfig& model,
                                            const SitsPatch& patch, int chunk = 1);

/// Per-pixel forest labels over an interpolated tile cube.
std::vector<int> predict_forest_raster(const Forest& forest, const SitsPatch& cube);

/// Patches of a tile cube, keeping only those above the agricultural share
/// threshold when `filter` is set.
std::vector<LabeledPatch> tile_patches(const SitsPatch& cube, const LabelRaster& labels, int patch_px, bool filter,
                                       double threshold = 0.15);

} // namespace sits
