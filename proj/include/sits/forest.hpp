#pragma once

// Pixel-wise Random Forest baseline: one sample per field from the field
// interior after an inward buffer, plus uniform Background samples per
// tile; Gini CART trees on bootstrap resamples, majority vote.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "sits/patch.hpp"

namespace sits {

struct ForestConfig {
    int n_trees = 300;
    int max_depth = 0;          // 0: unlimited
    int min_leaf = 1;
    int features_per_split = 0; // 0: ceil(sqrt(F))
    std::uint64_t seed = 0;
    int buffer_px = 2;
    int background_per_tile = 500;

    void validate() const;
};

struct PixelSample {
    std::vector<float> features; // T*B values, step-major
    int crop = 0;
    int mgmt = 0;
    std::string tile_id;
    std::uint32_t field_id = 0;
    int row = 0, col = 0;
};

/// Pixels of `field` whose Euclidean disk of radius buffer_px lies inside the
/// field (pixels outside the raster count as outside the field).
std::vector<std::pair<int, int>> eroded_pixels(const LabelRaster& labels, std::uint32_t field, int buffer_px);

/// Feature vector of one pixel of an interpolated tile cube.
std::vector<float> pixel_features(const SitsPatch& cube, int row, int col);

/// `tiles[i]` is sampled with labels[i]; deterministic given cfg.seed.
std::vector<PixelSample> sample_pixels(std::span<const LabelRaster> labels, std::span<const SitsPatch> tiles,
                                       const ForestConfig& cfg);

struct DecisionTree {
    std::vector<int> feature; // -1 at leaves
    std::vector<double> threshold;
    std::vector<int> left, right;
    std::vector<int> leaf_class;

    int predict(std::span<const float> x) const;
};

struct Forest {
    int n_classes = 0;
    int n_features = 0;
    std::vector<DecisionTree> trees;
};

/// Rows of `x` are samples, columns features.
Forest fit_forest(const Eigen::MatrixXf& x, std::span<const int> y, int n_classes, const ForestConfig& cfg,
                  int threads = 1);

Eigen::MatrixXf feature_matrix(std::span<const PixelSample> samples);

struct ForestVote {
    int label = 0;
    std::vector<double> shares;
};

ForestVote predict_forest(const Forest& forest, std::span<const float> features);

nlohmann::json to_json(const Forest& forest);
Forest forest_from_json(const nlohmann::json& j);

} // namespace sits
