#include "sits/rbf.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "sits/error.hpp"

namespace sits {

void ObservationSeries::validate() const
{
    const auto n = times.size();
    if (values.rows() != n || static_cast<Eigen::Index>(valid.size()) != n) {
        throw InputError("observation series: " + std::to_string(n) + " times, " + std::to_string(values.rows()) +
                         " value rows, " + std::to_string(valid.size()) + " flags");
    }
    for (Eigen::Index i = 1; i < n; ++i) {
        if (!(times[i] > times[i - 1])) {
            throw InputError("observation series: times not strictly increasing at index " + std::to_string(i));
        }
    }
}

Eigen::VectorXd RbfEnsembleConfig::default_target_times(double first_day)
{
    return Eigen::VectorXd::LinSpaced(kSteps, first_day, first_day + kSpacing * (kSteps - 1));
}

void RbfEnsembleConfig::validate() const
{
    if (sigmas.empty()) throw ConfigError("rbf: no kernel widths");
    for (std::size_t k = 0; k < sigmas.size(); ++k) {
        if (!(sigmas[k] > 0)) throw ConfigError("rbf: kernel widths must be positive");
        if (k && !(sigmas[k] > sigmas[k - 1])) throw ConfigError("rbf: kernel widths must be strictly increasing");
    }
    for (double b : boosted) {
        if (std::find(sigmas.begin(), sigmas.end(), b) == sigmas.end()) {
            throw ConfigError("rbf: boosted width " + std::to_string(b) + " is not one of the kernel widths");
        }
    }
    if (target_times.size() != kSteps) {
        throw ConfigError("rbf: expected " + std::to_string(kSteps) + " target times, got " +
                          std::to_string(target_times.size()));
    }
    for (Eigen::Index j = 1; j < target_times.size(); ++j) {
        if (std::abs(target_times[j] - target_times[j - 1] - kSpacing) > 1e-9) {
            throw ConfigError("rbf: target times must be spaced " + std::to_string(kSpacing) + " days apart");
        }
    }
}

RbfBlend::RbfBlend(const Eigen::VectorXd& times, const std::vector<bool>& valid, const RbfEnsembleConfig& cfg)
{
    cfg.validate();
    const Eigen::Index n = times.size(), steps = cfg.target_times.size();
    weights_ = Eigen::MatrixXd::Zero(steps, n);
    source_.assign(static_cast<std::size_t>(steps), StepSource::Empty);

    std::vector<double> gain(cfg.sigmas.size(), 1.0);
    for (std::size_t k = 0; k < cfg.sigmas.size(); ++k) {
        if (std::find(cfg.boosted.begin(), cfg.boosted.end(), cfg.sigmas[k]) != cfg.boosted.end()) {
            gain[k] = RbfEnsembleConfig::kBoostFactor;
        }
    }

    Eigen::VectorXd row(n);
    for (Eigen::Index j = 0; j < steps; ++j) {
        const double t = cfg.target_times[j];
        row.setZero();
        double norm = 0;
        bool dense = false;
        for (std::size_t k = 0; k < cfg.sigmas.size(); ++k) {
            const double two_s2 = 2 * cfg.sigmas[k] * cfg.sigmas[k];
            double mass = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (!valid[static_cast<std::size_t>(i)]) continue;
                const double d = times[i] - t;
                const double w = std::exp(-d * d / two_s2);
                row[i] += gain[k] * w;
                mass += w;
            }
            dense = dense || mass >= RbfEnsembleConfig::kMinDensity;
            norm += gain[k] * mass;
        }
        if (dense) {
            weights_.row(j) = row / norm;
            source_[static_cast<std::size_t>(j)] = StepSource::Kernel;
            continue;
        }
        if (cfg.fallback != RbfFallback::NearestValid) continue;
        Eigen::Index best = -1;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!valid[static_cast<std::size_t>(i)]) continue;
            if (best < 0 || std::abs(times[i] - t) < std::abs(times[best] - t)) best = i;
        }
        if (best >= 0) {
            weights_(j, best) = 1.0;
            source_[static_cast<std::size_t>(j)] = StepSource::Nearest;
        }
    }
}

Interpolated RbfBlend::apply(const Eigen::MatrixXd& values) const
{
    if (values.rows() != weights_.cols()) {
        throw InputError("rbf: " + std::to_string(values.rows()) + " value rows for " +
                         std::to_string(weights_.cols()) + " acquisitions");
    }
    Interpolated out;
    out.source = source_;
    out.values = Eigen::MatrixXd::Zero(weights_.rows(), values.cols());
    // Explicit loop so rows of invalid (possibly non-finite) values never enter
    // the sum, not even multiplied by a zero weight.
    for (Eigen::Index i = 0; i < weights_.cols(); ++i) {
        if (weights_.col(i).isZero(0)) continue;
        out.values.noalias() += weights_.col(i) * values.row(i);
    }
    return out;
}

Interpolated rbf_interpolate(const ObservationSeries& series, const RbfEnsembleConfig& cfg)
{
    series.validate();
    return RbfBlend(series.times, series.valid, cfg).apply(series.values);
}

InterpolatedTile interpolate_stack(const ObservationStack& stack, const RbfEnsembleConfig& cfg, int threads)
{
    cfg.validate();
    const Eigen::Index steps = cfg.target_times.size();
    Eigen::VectorXd times(stack.N);
    for (int n = 0; n < stack.N; ++n) times[n] = stack.days[static_cast<std::size_t>(n)];
    ObservationSeries probe{times, Eigen::MatrixXd::Zero(stack.N, stack.B), std::vector<bool>(static_cast<std::size_t>(stack.N))};
    probe.validate();

    InterpolatedTile out;
    out.cube = SitsPatch::zeros(static_cast<int>(steps), stack.B, stack.H, stack.W);
    out.cube.origin = {stack.tile_id, 0, 0};
    out.cube.bands = stack.bands;
    for (Eigen::Index j = 0; j < steps; ++j) out.cube.dates.push_back(iso_date(cfg.target_times[j]));
    out.filled.assign(static_cast<std::size_t>(steps) * stack.H * stack.W, 0);

    std::map<std::vector<bool>, std::shared_ptr<const RbfBlend>> cache;
    std::mutex cache_mutex;
    auto blend_for = [&](const std::vector<bool>& mask) {
        std::lock_guard lock(cache_mutex);
        auto it = cache.find(mask);
        if (it == cache.end()) it = cache.emplace(mask, std::make_shared<const RbfBlend>(times, mask, cfg)).first;
        return it->second;
    };

    auto run_rows = [&](int row_begin, int row_end) {
        std::vector<bool> mask(static_cast<std::size_t>(stack.N));
        Eigen::MatrixXd values(stack.N, stack.B);
        for (int i = row_begin; i < row_end; ++i) {
            for (int j = 0; j < stack.W; ++j) {
                for (int n = 0; n < stack.N; ++n) {
                    mask[static_cast<std::size_t>(n)] = stack.valid[stack.valid_index(n, i, j)] != 0;
                    for (int b = 0; b < stack.B; ++b) values(n, b) = stack.values[stack.value_index(n, b, i, j)];
                }
                const auto result = blend_for(mask)->apply(values);
                for (Eigen::Index t = 0; t < steps; ++t) {
                    for (int b = 0; b < stack.B; ++b) {
                        out.cube.at(static_cast<int>(t), b, i, j) = static_cast<float>(result.values(t, b));
                    }
                    out.filled[(static_cast<std::size_t>(t) * stack.H + i) * stack.W + j] = result.filled(t) ? 1 : 0;
                }
            }
        }
    };

    threads = std::max(1, std::min(threads, stack.H));
    if (threads == 1) {
        run_rows(0, stack.H);
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < threads; ++w) {
            pool.emplace_back(run_rows, stack.H * w / threads, stack.H * (w + 1) / threads);
        }
    }
    return out;
}

} // namespace sits
