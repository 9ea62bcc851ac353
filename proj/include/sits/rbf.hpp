#pragma once

// Gap-filling of irregular observation series onto an equidistant grid with
// an ensemble of Gaussian kernels.
//
// For a target time t and kernel width s_k each valid observation y_i gets
// w_ik = exp(-(t_i - t)^2 / (2 s_k^2)). The kernel estimate is the weighted
// mean of the y_i, and the ensemble blends the kernel estimates with weights
// g_k * m_k, where m_k = sum_i w_ik is the local observation density and
// g_k = 2 for boosted (narrow) kernels, 1 otherwise. Narrow kernels thus
// dominate where data is dense; wide kernels take over across gaps.

#include <Eigen/Core>

#include <vector>

#include "sits/patch.hpp"

namespace sits {

struct ObservationSeries {
    Eigen::VectorXd times;  // days, strictly increasing
    Eigen::MatrixXd values; // N x B
    std::vector<bool> valid;

    void validate() const;
};

enum class RbfFallback {
    NearestValid, // closest valid acquisition in time, earlier one on ties
    Zero,
};

struct RbfEnsembleConfig {
    std::vector<double> sigmas{5, 10, 16, 32, 64};
    std::vector<double> boosted{5, 10};
    Eigen::VectorXd target_times = default_target_times();
    RbfFallback fallback = RbfFallback::NearestValid;

    static constexpr int kSteps = 36;
    static constexpr double kSpacing = 10.0;
    static constexpr double kBoostFactor = 2.0;
    static constexpr double kMinDensity = 1e-12;

    /// 36 days 10 apart starting at `first_day`.
    static Eigen::VectorXd default_target_times(double first_day = 0.0);

    void validate() const;
};

enum class StepSource : std::uint8_t { Kernel, Nearest, Empty };

struct Interpolated {
    Eigen::MatrixXd values; // steps x B
    std::vector<StepSource> source;

    bool filled(Eigen::Index step) const { return source[static_cast<std::size_t>(step)] != StepSource::Empty; }
};

/// Blend weights for one acquisition calendar and clear-sky mask. The
/// ensemble is linear in the observed values, so one RbfBlend serves every
/// pixel that shares the mask.
class RbfBlend {
public:
    RbfBlend(const Eigen::VectorXd& times, const std::vector<bool>& valid, const RbfEnsembleConfig& cfg);

    /// values: N x B (rows of invalid acquisitions are ignored).
    Interpolated apply(const Eigen::MatrixXd& values) const;

    const Eigen::MatrixXd& weights() const { return weights_; }
    const std::vector<StepSource>& source() const { return source_; }

private:
    Eigen::MatrixXd weights_; // steps x N, rows sum to 1 on kernel steps
    std::vector<StepSource> source_;
};

Interpolated rbf_interpolate(const ObservationSeries& series, const RbfEnsembleConfig& cfg);

struct InterpolatedTile {
    SitsPatch cube;                   // [steps x B x H x W]
    std::vector<std::uint8_t> filled; // [steps x H x W], 1 where a value exists
};

/// Interpolates every pixel of a tile; `threads` <= 1 runs inline.
InterpolatedTile interpolate_stack(const ObservationStack& stack, const RbfEnsembleConfig& cfg, int threads = 1);

} // namespace sits
