#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "sits/error.hpp"
#include "sits/normalize.hpp"
#include "sits/rbf.hpp"

using namespace sits;

using sits::testing::irregular_sine;
using sits::testing::rbf_direct_sum;

TEST_CASE("kernel ensemble matches a direct summation of the formula")
{
    RbfEnsembleConfig cfg;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed);
        auto s = irregular_sine(rng, 25);
        s.valid[3] = s.valid[11] = false;
        const auto got = rbf_interpolate(s, cfg);
        const auto want = rbf_direct_sum(s, cfg);
        for (Eigen::Index t = 0; t < want.rows(); ++t) CHECK(got.source[static_cast<std::size_t>(t)] == StepSource::Kernel);
        CHECK((got.values - want).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("constant and single-observation series")
{
    RbfEnsembleConfig cfg;
    std::mt19937_64 rng(1);
    auto s = irregular_sine(rng, 20);
    s.values.setConstant(0.3);
    auto out = rbf_interpolate(s, cfg);
    CHECK((out.values.array() - 0.3).abs().maxCoeff() < 1e-15);

    auto single = irregular_sine(rng, 20);
    std::fill(single.valid.begin(), single.valid.end(), false);
    single.valid[7] = true;
    out = rbf_interpolate(single, cfg);
    for (Eigen::Index t = 0; t < out.values.rows(); ++t) {
        CHECK(out.filled(t));
        for (Eigen::Index b = 0; b < out.values.cols(); ++b) CHECK(out.values(t, b) == doctest::Approx(single.values(7, b)).epsilon(1e-12));
    }
}

TEST_CASE("no valid observation gives zeros and an empty mask")
{
    std::mt19937_64 rng(2);
    auto s = irregular_sine(rng, 12);
    std::fill(s.valid.begin(), s.valid.end(), false);
    const auto out = rbf_interpolate(s, RbfEnsembleConfig{});
    CHECK(out.values.isZero(0));
    for (Eigen::Index t = 0; t < out.values.rows(); ++t) CHECK_FALSE(out.filled(t));
}

TEST_CASE("far-away observations fall back to the nearest valid one")
{
    ObservationSeries s;
    s.times = Eigen::VectorXd::LinSpaced(3, 2000, 2020);
    s.values = Eigen::MatrixXd::Zero(3, 2);
    s.values(0, 0) = 1;
    s.values(2, 0) = 5;
    s.valid = {true, true, true};
    const auto out = rbf_interpolate(s, RbfEnsembleConfig{});
    CHECK(out.source.front() == StepSource::Nearest);
    CHECK(out.values(0, 0) == 1.0);

    RbfEnsembleConfig zero;
    zero.fallback = RbfFallback::Zero;
    const auto z = rbf_interpolate(s, zero);
    CHECK(z.values(0, 0) == 0.0);
}

TEST_CASE("interpolation properties")
{
    RbfEnsembleConfig cfg;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(100 + seed);
        std::normal_distribution<double> g(0, 1);
        auto s = irregular_sine(rng, 30, 3);
        for (Eigen::Index i = 0; i < s.values.size(); ++i) s.values.data()[i] += 0.1 * g(rng);
        s.valid[5] = s.valid[6] = s.valid[20] = false;
        const auto base = rbf_interpolate(s, cfg);

        SUBCASE("convex hull of the valid values")
        {
            for (Eigen::Index b = 0; b < 3; ++b) {
                double lo = 1e300, hi = -1e300;
                for (Eigen::Index i = 0; i < s.values.rows(); ++i) {
                    if (!s.valid[static_cast<std::size_t>(i)]) continue;
                    lo = std::min(lo, s.values(i, b));
                    hi = std::max(hi, s.values(i, b));
                }
                CHECK(base.values.col(b).minCoeff() >= lo - 1e-12);
                CHECK(base.values.col(b).maxCoeff() <= hi + 1e-12);
            }
        }
        SUBCASE("common time shift")
        {
            auto shifted = s;
            shifted.times.array() += 37.0;
            RbfEnsembleConfig moved = cfg;
            moved.target_times = RbfEnsembleConfig::default_target_times(37.0);
            CHECK((rbf_interpolate(shifted, moved).values - base.values).cwiseAbs().maxCoeff() < 1e-12);
        }
        SUBCASE("linear in the values")
        {
            auto doubled = s;
            doubled.values *= 2.0;
            CHECK((rbf_interpolate(doubled, cfg).values - 2.0 * base.values).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("series and ensemble validation")
{
    ObservationSeries s;
    s.times = Eigen::Vector3d(1, 1, 2);
    s.values = Eigen::MatrixXd::Zero(3, 1);
    s.valid = {true, true, true};
    CHECK_THROWS_AS(rbf_interpolate(s, RbfEnsembleConfig{}), InputError);

    RbfEnsembleConfig bad;
    bad.sigmas = {10, 5};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = RbfEnsembleConfig{};
    bad.boosted = {7};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = RbfEnsembleConfig{};
    bad.target_times = Eigen::VectorXd::LinSpaced(36, 0, 36 * 5);
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    const auto grid = RbfEnsembleConfig::default_target_times();
    CHECK(grid.size() == 36);
    CHECK(grid[0] == 0.0);
    CHECK(grid[35] == 350.0);
}

TEST_CASE("blend weights are shared by pixels with the same mask")
{
    std::mt19937_64 rng(5);
    auto s = irregular_sine(rng, 18, 2);
    s.valid[4] = false;
    RbfBlend blend(s.times, s.valid, RbfEnsembleConfig{});
    CHECK((blend.weights().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(blend.weights().col(4).isZero(0));
    CHECK((blend.apply(s.values).values - rbf_interpolate(s, RbfEnsembleConfig{}).values).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("tile interpolation matches per-pixel interpolation")
{
    ObservationStack stack;
    stack.N = 15;
    stack.B = 2;
    stack.H = 3;
    stack.W = 4;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<float> u(0, 1);
    for (int n = 0; n < stack.N; ++n) stack.days.push_back(-30 + 27.0 * n);
    stack.values.resize(static_cast<std::size_t>(stack.N) * stack.B * stack.H * stack.W);
    for (auto& v : stack.values) v = u(rng);
    stack.valid.resize(static_cast<std::size_t>(stack.N) * stack.H * stack.W);
    for (auto& v : stack.valid) v = u(rng) < 0.7;
    for (int threads : {1, 3}) {
        const auto tile = interpolate_stack(stack, RbfEnsembleConfig{}, threads);
        REQUIRE(tile.cube.T == 36);
        for (int i = 0; i < stack.H; ++i) {
            for (int j = 0; j < stack.W; ++j) {
                ObservationSeries s;
                s.times = Eigen::Map<const Eigen::VectorXd>(stack.days.data(), stack.N);
                s.values.resize(stack.N, stack.B);
                for (int n = 0; n < stack.N; ++n) {
                    s.valid.push_back(stack.valid[stack.valid_index(n, i, j)] != 0);
                    for (int b = 0; b < stack.B; ++b) s.values(n, b) = stack.values[stack.value_index(n, b, i, j)];
                }
                const auto want = rbf_interpolate(s, RbfEnsembleConfig{});
                for (int t = 0; t < 36; ++t) {
                    CHECK(tile.filled[(static_cast<std::size_t>(t) * stack.H + i) * stack.W + j] == (want.filled(t) ? 1 : 0));
                    for (int b = 0; b < stack.B; ++b) CHECK(tile.cube.at(t, b, i, j) == static_cast<float>(want.values(t, b)));
                }
            }
        }
    }
}

// ---------------------------------------------------------------- quantiles

TEST_CASE("linear-interpolated quantiles")
{
    std::vector<float> grid(101);
    std::iota(grid.begin(), grid.end(), 0.0f);
    CHECK(linear_quantile(grid, 0.05) == doctest::Approx(5.0));
    CHECK(linear_quantile(grid, 0.95) == doctest::Approx(95.0));

    std::vector<float> two{0.0f, 10.0f};
    CHECK(linear_quantile(two, 0.25) == doctest::Approx(2.5));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0, 1);
    std::vector<float> big(200000);
    for (auto& v : big) v = u(rng);
    auto sorted = big;
    std::sort(sorted.begin(), sorted.end());
    const double q05 = linear_quantile(big, 0.05), q95 = linear_quantile(big, 0.95);
    // sort-based oracle
    const double h = (sorted.size() - 1) * 0.05;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    CHECK(q05 == doctest::Approx(sorted[lo] + (h - lo) * (sorted[lo + 1] - sorted[lo])).epsilon(1e-12));
    CHECK(std::abs(q05 - 0.05) < 0.01);
    CHECK(std::abs(q95 - 0.95) < 0.01);
}

namespace {

SitsPatch random_patch(std::mt19937_64& rng, int t = 4, int b = 3, int hw = 5)
{
    auto p = SitsPatch::zeros(t, b, hw, hw);
    std::normal_distribution<float> g(0.2f, 0.1f);
    for (auto& v : p.data) v = g(rng);
    return p;
}

} // namespace

TEST_CASE("normalizer fit and application")
{
    std::mt19937_64 rng(4);
    std::vector<SitsPatch> patches;
    for (int i = 0; i < 6; ++i) patches.push_back(random_patch(rng));
    for (auto& p : patches) {
        for (int t = 0; t < p.T; ++t) {
            for (int i = 0; i < p.H; ++i) {
                for (int j = 0; j < p.W; ++j) p.data[p.index(t, 2, i, j)] = 0.7f;
            }
        }
    }
    const auto norm = fit_quantile_normalizer(patches);
    REQUIRE(norm.q_low.size() == 3);
    CHECK(norm.q_low[2] == doctest::Approx(0.7).epsilon(1e-7));
    CHECK(norm.q_high[2] == doctest::Approx(0.7).epsilon(1e-7));
    for (std::size_t b = 0; b < 3; ++b) CHECK(norm.q_low[b] <= norm.q_high[b]);

    const auto out = apply_normalizer(patches[0], norm);
    for (std::size_t k = 0; k < out.data.size(); ++k) {
        const int band = static_cast<int>((k / (static_cast<std::size_t>(out.H) * out.W)) % out.B);
        if (band == 2) {
            CHECK(out.data[k] == 0.0f); // degenerate band
            continue;
        }
        const double back = out.data[k] * (norm.q_high[band] - norm.q_low[band]) + norm.q_low[band];
        CHECK(std::abs(back - patches[0].data[k]) < 1e-6);
    }

    QuantileNormalizer unit{{0, 0, 0}, {1, 1, 1}};
    CHECK(apply_normalizer(patches[1], unit).data == patches[1].data);

    QuantileNormalizer two{{0.1, 0.1, 0.1}, {0.3, 0.3, 0.3}};
    auto edge = SitsPatch::zeros(1, 3, 1, 2);
    edge.data = {0.1f, 0.3f, 0.1f, 0.3f, 0.1f, 0.3f};
    const auto mapped = apply_normalizer(edge, two);
    CHECK(mapped.data[0] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(mapped.data[1] == doctest::Approx(1.0).epsilon(1e-6));

    CHECK_THROWS(fit_quantile_normalizer(std::vector<SitsPatch>{}));
    QuantileNormalizer wrong{{0, 0}, {1, 1}};
    CHECK_THROWS(apply_normalizer(patches[0], wrong));
}

TEST_CASE("normalization preserves order within a band")
{
    std::mt19937_64 rng(8);
    const auto p = random_patch(rng);
    const QuantileNormalizer n{{0.1, 0.0, -0.2}, {0.4, 0.9, 0.5}};
    const auto q = apply_normalizer(p, n);
    const std::size_t plane = static_cast<std::size_t>(p.H) * p.W;
    for (std::size_t a = 0; a < p.data.size(); a += 7) {
        for (std::size_t b = a % plane; b < p.data.size(); b += plane * static_cast<std::size_t>(p.B)) {
            if (p.data[a] < p.data[b] && (a / plane) % p.B == (b / plane) % p.B) CHECK(q.data[a] < q.data[b]);
        }
    }
}

TEST_CASE("normalizer sample draws without replacement")
{
    const auto all = normalizer_sample(10, 1000, 0);
    CHECK(all.size() == 10);
    const auto some = normalizer_sample(5000, 1000, 1);
    CHECK(some.size() == 1000);
    CHECK(std::adjacent_find(some.begin(), some.end()) == some.end());
    CHECK(normalizer_sample(5000, 1000, 1) == some);
}
