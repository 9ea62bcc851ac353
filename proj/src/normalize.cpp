#include "sits/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "sits/error.hpp"

namespace sits {

double linear_quantile(std::vector<float>& values, double q)
{
    if (values.empty()) throw InputError("quantile of an empty sample");
    const double h = (static_cast<double>(values.size()) - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
    const double a = values[lo];
    if (lo + 1 >= values.size()) return a;
    const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
    return a + (h - static_cast<double>(lo)) * (b - a);
}

std::vector<std::size_t> normalizer_sample(std::size_t n_patches, std::size_t n_sample, std::uint64_t seed)
{
    std::vector<std::size_t> idx(n_patches);
    std::iota(idx.begin(), idx.end(), 0);
    if (n_patches <= n_sample) return idx;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(n_sample);
    std::sort(idx.begin(), idx.end());
    return idx;
}

QuantileNormalizer fit_quantile_normalizer(std::span<const SitsPatch> patches, std::size_t n_sample, std::uint64_t seed)
{
    if (patches.empty()) throw InputError("normalizer: empty patch sample");
    const auto chosen = normalizer_sample(patches.size(), n_sample, seed);
    const int bands = patches[chosen.front()].B;
    QuantileNormalizer norm;
    std::vector<float> pool;
    for (int b = 0; b < bands; ++b) {
        pool.clear();
        for (std::size_t i : chosen) {
            const SitsPatch& p = patches[i];
            if (p.B != bands) throw InputError("normalizer: patches disagree on band count");
            const std::size_t plane = static_cast<std::size_t>(p.H) * p.W;
            for (int t = 0; t < p.T; ++t) {
                const auto first = p.data.begin() + static_cast<std::ptrdiff_t>(p.index(t, b, 0, 0));
                pool.insert(pool.end(), first, first + static_cast<std::ptrdiff_t>(plane));
            }
        }
        norm.q_low.push_back(linear_quantile(pool, QuantileNormalizer::kLow));
        norm.q_high.push_back(linear_quantile(pool, QuantileNormalizer::kHigh));
    }
    return norm;
}

SitsPatch apply_normalizer(const SitsPatch& patch, const QuantileNormalizer& norm)
{
    if (static_cast<int>(norm.q_low.size()) != patch.B || static_cast<int>(norm.q_high.size()) != patch.B) {
        throw InputError("normalizer has " + std::to_string(norm.q_low.size()) + " bands, patch has " +
                         std::to_string(patch.B));
    }
    SitsPatch out = patch;
    const std::size_t plane = static_cast<std::size_t>(patch.H) * patch.W;
    for (int t = 0; t < patch.T; ++t) {
        for (int b = 0; b < patch.B; ++b) {
            const double lo = norm.q_low[static_cast<std::size_t>(b)];
            const double spread = norm.q_high[static_cast<std::size_t>(b)] - lo;
            float* px = out.data.data() + out.index(t, b, 0, 0);
            for (std::size_t k = 0; k < plane; ++k) {
                px[k] = spread < QuantileNormalizer::kMinSpread ? 0.0f : static_cast<float>((px[k] - lo) / spread);
            }
        }
    }
    return out;
}

void save_normalizer(const std::filesystem::path& path, const QuantileNormalizer& norm)
{
    nlohmann::json j{{"q_low", norm.q_low}, {"q_high", norm.q_high},
                     {"quantiles", {QuantileNormalizer::kLow, QuantileNormalizer::kHigh}}};
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

QuantileNormalizer load_normalizer(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read " + path.string());
    QuantileNormalizer norm;
    try {
        const auto j = nlohmann::json::parse(is);
        norm.q_low = j.at("q_low").get<std::vector<double>>();
        norm.q_high = j.at("q_high").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (norm.q_low.size() != norm.q_high.size()) throw FormatError(path.string() + ": q_low/q_high length mismatch");
    for (std::size_t b = 0; b < norm.q_low.size(); ++b) {
        if (norm.q_low[b] > norm.q_high[b]) throw FormatError(path.string() + ": q_low > q_high for band " + std::to_string(b));
    }
    return norm;
}

} // namespace sits
