#include "sits/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "sits/error.hpp"

namespace sits {

namespace {

constexpr std::array<double, 10> kSoil{0.07, 0.10, 0.13, 0.16, 0.18, 0.20, 0.22, 0.23, 0.30, 0.25};
constexpr std::array<double, 10> kVegetation{0.03, 0.06, 0.03, 0.10, 0.28, 0.36, 0.40, 0.41, 0.20, 0.10};
constexpr std::array<double, 10> kWater{0.06, 0.05, 0.03, 0.02, 0.02, 0.01, 0.01, 0.01, 0.005, 0.003};
constexpr double kCloud = 0.45;

enum class Cover { Field, Road, Forest, Urban, Water, Meadow };

struct Rect {
    int row, col, height, width;
};

std::uint64_t splitmix(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void partition(const Rect& r, const SynthConfig& cfg, std::mt19937_64& rng, std::vector<Rect>& leaves)
{
    std::uniform_real_distribution<double> u(0, 1);
    const int longest = std::max(r.height, r.width);
    const bool small_enough = r.height <= cfg.max_field_px && r.width <= cfg.max_field_px;
    if (longest < 2 * cfg.min_field_px || (small_enough && u(rng) < 0.5)) {
        leaves.push_back(r);
        return;
    }
    const bool split_rows = r.height >= r.width;
    const int len = split_rows ? r.height : r.width;
    std::uniform_int_distribution<int> at(cfg.min_field_px, len - cfg.min_field_px);
    const int cut = at(rng);
    if (split_rows) {
        partition({r.row, r.col, cut, r.width}, cfg, rng, leaves);
        partition({r.row + cut, r.col, r.height - cut, r.width}, cfg, rng, leaves);
    } else {
        partition({r.row, r.col, r.height, cut}, cfg, rng, leaves);
        partition({r.row, r.col + cut, r.height, r.width - cut}, cfg, rng, leaves);
    }
}

// Unit-variance Gaussian-blurred white noise.
std::vector<double> smooth_noise(int h, int w, double scale, std::mt19937_64& rng)
{
    std::normal_distribution<double> gauss(0, 1);
    std::vector<double> field(static_cast<std::size_t>(h) * w);
    for (auto& v : field) v = gauss(rng);
    if (scale > 0) {
        const int radius = std::max(1, static_cast<int>(std::ceil(3 * scale)));
        std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
        for (int k = -radius; k <= radius; ++k) kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (scale * scale));
        auto blur = [&](bool along_rows) {
            std::vector<double> out(field.size(), 0.0);
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < w; ++j) {
                    double acc = 0, norm = 0;
                    for (int k = -radius; k <= radius; ++k) {
                        const int ii = along_rows ? std::clamp(i + k, 0, h - 1) : i;
                        const int jj = along_rows ? j : std::clamp(j + k, 0, w - 1);
                        const double wk = kernel[static_cast<std::size_t>(k + radius)];
                        acc += wk * field[static_cast<std::size_t>(ii) * w + jj];
                        norm += wk;
                    }
                    out[static_cast<std::size_t>(i) * w + j] = acc / norm;
                }
            }
            field.swap(out);
        };
        blur(true);
        blur(false);
    }
    double mean = 0, sq = 0;
    for (double v : field) mean += v;
    mean /= static_cast<double>(field.size());
    for (double v : field) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(field.size()));
    for (auto& v : field) v = sd > 0 ? (v - mean) / sd : 0.0;
    return field;
}

} // namespace

double double_logistic(const CropPhenology& crop, double day)
{
    const double up = 1.0 / (1.0 + std::exp(-(day - crop.sos) / crop.rise));
    const double down = 1.0 / (1.0 + std::exp((day - crop.eos) / crop.fall));
    return crop.baseline + crop.amplitude * (up + down - 1.0);
}

std::vector<CropPhenology> default_crop_phenology(int n_crops)
{
    std::vector<CropPhenology> crops;
    for (int c = 0; c < n_crops; ++c) {
        const double f = n_crops > 1 ? static_cast<double>(c) / (n_crops - 1) : 0.0;
        CropPhenology p;
        p.sos = 70 + 90 * f;
        p.eos = p.sos + 100 + 40 * (c % 2);
        p.rise = 7 + 3 * (c % 3);
        p.fall = 9 + 4 * ((c + 1) % 3);
        p.amplitude = 0.7;
        p.baseline = 0.08 + 0.04 * (c % 2);
        crops.push_back(p);
    }
    return crops;
}

void SynthConfig::validate() const
{
    if (n_crops < 2) throw ConfigError("synth: n_crops must be at least 2");
    if (!crops.empty() && static_cast<int>(crops.size()) != n_crops) throw ConfigError("synth: crop table size differs from n_crops");
    if (!(cloud_gap_rate >= 0 && cloud_gap_rate < 1)) throw ConfigError("synth: cloud_gap_rate must lie in [0, 1)");
    if (!(organic_share >= 0 && organic_share <= 1)) throw ConfigError("synth: organic_share must lie in [0, 1]");
    if (!(field_probability >= 0 && field_probability <= 1)) throw ConfigError("synth: field_probability must lie in [0, 1]");
    if (!(amplitude_factor > 0)) throw ConfigError("synth: amplitude_factor must be positive");
    if (heterogeneity_sd < 0 || base_heterogeneity_sd < 0 || field_amplitude_sd < 0 || field_timing_sd < 0 || noise_sd < 0) {
        throw ConfigError("synth: standard deviations must be non-negative");
    }
    if (n_tiles <= 0 || tile_px <= 0) throw ConfigError("synth: n_tiles and tile_px must be positive");
    if (validation_tiles < 0 || test_tiles < 0 || validation_tiles + test_tiles > n_tiles) {
        throw ConfigError("synth: validation_tiles + test_tiles exceeds n_tiles");
    }
    if (min_field_px < 3 || max_field_px < min_field_px) throw ConfigError("synth: need 3 <= min_field_px <= max_field_px");
    if (!(revisit_days >= 3)) throw ConfigError("synth: revisit_days must be at least 3");
    if (!(last_day > first_day)) throw ConfigError("synth: last_day must follow first_day");
}

std::string synth_tile_id(int index)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "T%04d", index);
    return buf;
}

SplitAssignment synth_split(const SynthConfig& cfg)
{
    SplitAssignment split;
    const int n_train = cfg.n_tiles - cfg.validation_tiles - cfg.test_tiles;
    for (int i = 0; i < cfg.n_tiles; ++i) {
        split[synth_tile_id(i)] = i < n_train                         ? SplitRole::Train
                                  : i < n_train + cfg.validation_tiles ? SplitRole::Validation
                                                                       : SplitRole::Test;
    }
    return split;
}

SynthTile synth_tile(const SynthConfig& cfg, int index)
{
    cfg.validate();
    const auto crops = cfg.crops.empty() ? default_crop_phenology(cfg.n_crops) : cfg.crops;
    std::mt19937_64 rng(splitmix(cfg.seed ^ splitmix(static_cast<std::uint64_t>(index) + 1)));
    std::uniform_real_distribution<double> u(0, 1);
    std::normal_distribution<double> gauss(0, 1);
    const int h = cfg.tile_px, w = cfg.tile_px;
    const auto plane = static_cast<std::size_t>(h) * w;

    SynthTile tile;
    tile.labels = LabelRaster::blank(h, w);

    // Layout: leaves of a guillotine partition, each shrunk by a one-pixel
    // strip on its bottom/right edge.
    std::vector<Rect> leaves;
    partition({0, 0, h, w}, cfg, rng, leaves);
    std::vector<Cover> cover(plane, Cover::Road);
    struct FieldParams {
        CropPhenology pheno;
        bool organic;
    };
    std::vector<FieldParams> fields{{}};
    for (const auto& leaf : leaves) {
        const bool is_field = u(rng) < cfg.field_probability;
        const int crop = std::uniform_int_distribution<int>(1, cfg.n_crops)(rng);
        const bool organic = u(rng) < cfg.organic_share;
        const double amp_jitter = gauss(rng), sos_jitter = gauss(rng), eos_jitter = gauss(rng);
        const auto background = static_cast<Cover>(std::uniform_int_distribution<int>(2, 5)(rng));
        const auto id = static_cast<std::uint32_t>(fields.size());
        if (is_field) {
            FieldParams f{crops[static_cast<std::size_t>(crop - 1)], organic};
            f.pheno.amplitude *= 1.0 + cfg.field_amplitude_sd * amp_jitter;
            if (organic) f.pheno.amplitude *= cfg.amplitude_factor;
            f.pheno.sos += cfg.field_timing_sd * sos_jitter;
            f.pheno.eos += cfg.field_timing_sd * eos_jitter;
            fields.push_back(f);
        }
        for (int i = leaf.row; i < leaf.row + leaf.height; ++i) {
            for (int j = leaf.col; j < leaf.col + leaf.width; ++j) {
                const auto k = static_cast<std::size_t>(i) * w + j;
                const bool strip = (i == leaf.row + leaf.height - 1 && leaf.row + leaf.height < h) ||
                                   (j == leaf.col + leaf.width - 1 && leaf.col + leaf.width < w);
                if (strip) continue;
                if (!is_field) {
                    cover[k] = background;
                    continue;
                }
                cover[k] = Cover::Field;
                tile.labels.crop[k] = static_cast<std::uint16_t>(crop);
                tile.labels.mgmt[k] = static_cast<std::uint8_t>(organic ? Management::Organic : Management::Conventional);
                tile.labels.field[k] = id;
            }
        }
    }

    // Both noise fields are always drawn so the random stream does not depend
    // on the management labels.
    const auto base_noise = smooth_noise(h, w, cfg.heterogeneity_scale_px, rng);
    const auto organic_noise = smooth_noise(h, w, cfg.heterogeneity_scale_px, rng);
    std::vector<double> amp_scale(plane, 1.0);
    for (std::size_t k = 0; k < plane; ++k) {
        double z = cfg.base_heterogeneity_sd * base_noise[k];
        if (tile.labels.mgmt[k] == static_cast<std::uint8_t>(Management::Organic)) z += cfg.heterogeneity_sd * organic_noise[k];
        amp_scale[k] = 1.0 + z;
    }

    ObservationStack& obs = tile.observations;
    obs.tile_id = synth_tile_id(index);
    obs.bands = default_band_names();
    obs.B = static_cast<int>(obs.bands.size());
    obs.H = h;
    obs.W = w;
    double last = -1e300;
    for (double t = cfg.first_day; t <= cfg.last_day; t += cfg.revisit_days) {
        const double day = std::round(t + std::uniform_real_distribution<double>(-1, 1)(rng));
        if (day > last && day <= cfg.last_day) {
            obs.days.push_back(day);
            last = day;
        }
    }
    obs.N = static_cast<int>(obs.days.size());
    std::vector<bool> clear(static_cast<std::size_t>(obs.N));
    for (int n = 0; n < obs.N; ++n) clear[static_cast<std::size_t>(n)] = u(rng) >= cfg.cloud_gap_rate;
    obs.values.resize(static_cast<std::size_t>(obs.N) * obs.B * plane);
    obs.valid.resize(static_cast<std::size_t>(obs.N) * plane);

    for (int n = 0; n < obs.N; ++n) {
        const double day = obs.days[static_cast<std::size_t>(n)];
        const bool scene_clear = clear[static_cast<std::size_t>(n)];
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const auto k = static_cast<std::size_t>(i) * w + j;
                obs.valid[obs.valid_index(n, i, j)] = scene_clear ? 1 : 0;
                double veg = 0;
                bool water = false;
                switch (cover[k]) {
                case Cover::Field: {
                    const auto& f = fields[tile.labels.field[k]];
                    CropPhenology p = f.pheno;
                    p.amplitude *= amp_scale[k];
                    veg = double_logistic(p, day);
                    break;
                }
                case Cover::Road: veg = 0.05; break;
                case Cover::Urban: veg = 0.12; break;
                case Cover::Forest: veg = 0.7 + 0.12 * std::sin(2 * M_PI * (day - 100) / 365.0); break;
                case Cover::Meadow: veg = 0.45 + 0.25 * std::sin(2 * M_PI * (day - 60) / 365.0); break;
                case Cover::Water: water = true; break;
                }
                for (int b = 0; b < obs.B; ++b) {
                    const auto bi = static_cast<std::size_t>(b);
                    double value = water ? kWater[bi] : kSoil[bi] + veg * (kVegetation[bi] - kSoil[bi]);
                    if (!scene_clear) value = kCloud;
                    value += cfg.noise_sd * gauss(rng);
                    obs.values[obs.value_index(n, b, i, j)] = static_cast<float>(value);
                }
            }
        }
    }
    return tile;
}

SynthScene synth_generate(const SynthConfig& cfg)
{
    cfg.validate();
    SynthScene scene;
    for (int i = 0; i < cfg.n_tiles; ++i) scene.tiles.push_back(synth_tile(cfg, i));
    scene.split = synth_split(cfg);
    return scene;
}

} // namespace sits
