#pragma once

// Synthetic agricultural landscape with known crop and management labels.
//
// Each tile is partitioned into rectangular fields separated by one-pixel
// background strips. Field pixels follow a double-logistic vegetation curve
// per crop that mixes a soil and a vegetation spectrum. Organic fields get
// their amplitude scaled by amplitude_factor and extra spatially correlated
// amplitude noise of sd heterogeneity_sd. Acquisitions fall at irregular
// dates and whole scenes are lost to clouds at cloud_gap_rate.

#include <cstdint>
#include <vector>

#include "sits/dataset.hpp"
#include "sits/patch.hpp"

namespace sits {

struct CropPhenology {
    double sos = 100;      // start of season (day of 2020)
    double eos = 230;      // end of season
    double rise = 8;       // green-up steepness, days
    double fall = 10;      // senescence steepness, days
    double amplitude = 0.7;
    double baseline = 0.1;
};

double double_logistic(const CropPhenology& crop, double day);

/// Evenly spread seasons for n crops.
std::vector<CropPhenology> default_crop_phenology(int n_crops);

struct SynthConfig {
    std::uint64_t seed = 7;
    int n_tiles = 21;
    int tile_px = 60;
    int validation_tiles = 3;
    int test_tiles = 3;
    int n_crops = 3;
    std::vector<CropPhenology> crops; // empty: default_crop_phenology(n_crops)

    double organic_share = 0.4;
    double amplitude_factor = 0.85;
    double heterogeneity_sd = 0.12;
    double base_heterogeneity_sd = 0.03;
    double heterogeneity_scale_px = 2.0;
    double field_amplitude_sd = 0.04;
    double field_timing_sd = 4.0;
    double noise_sd = 0.02;

    double cloud_gap_rate = 0.3;
    double revisit_days = 5.0;
    double first_day = -61; // 2019-11-01
    double last_day = 425;  // 2021-02-28

    int min_field_px = 6;
    int max_field_px = 20;
    double field_probability = 0.85;

    void validate() const;
};

struct SynthTile {
    ObservationStack observations;
    LabelRaster labels;
};

/// Tile `index` of the scene; depends only on (cfg, index).
SynthTile synth_tile(const SynthConfig& cfg, int index);

std::string synth_tile_id(int index);

/// Train / validation / test roles: the last test_tiles tiles are test, the
/// validation_tiles before them validation, the rest train.
SplitAssignment synth_split(const SynthConfig& cfg);

struct SynthScene {
    std::vector<SynthTile> tiles;
    SplitAssignment split;
};

SynthScene synth_generate(const SynthConfig& cfg);

} // namespace sits
