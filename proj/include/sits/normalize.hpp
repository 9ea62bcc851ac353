#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sits/patch.hpp"

namespace sits {

/// Per-band affine scaling from the 5% / 95% quantiles of a patch sample.
struct QuantileNormalizer {
    std::vector<double> q_low;
    std::vector<double> q_high;

    static constexpr double kLow = 0.05;
    static constexpr double kHigh = 0.95;
    static constexpr double kMinSpread = 1e-9;
};

/// Empirical quantile with linear interpolation between order statistics
/// (h = (n-1) q). `values` is reordered.
double linear_quantile(std::vector<float>& values, double q);

/// Pools every pixel and time step per band over at most `n_sample`
/// patches drawn without replacement (all of them if fewer).
QuantileNormalizer fit_quantile_normalizer(std::span<const SitsPatch> patches, std::size_t n_sample = 1000,
                                           std::uint64_t seed = 0);

/// Indices of the patches fit_quantile_normalizer would draw, so callers can
/// load only those from disk.
std::vector<std::size_t> normalizer_sample(std::size_t n_patches, std::size_t n_sample, std::uint64_t seed);

/// x' = (x - q_low) / (q_high - q_low) per band, unclipped; bands with a
/// degenerate spread map to 0.
SitsPatch apply_normalizer(const SitsPatch& patch, const QuantileNormalizer& norm);

void save_normalizer(const std::filesystem::path& path, const QuantileNormalizer& norm);
QuantileNormalizer load_normalizer(const std::filesystem::path& path);

} // namespace sits
