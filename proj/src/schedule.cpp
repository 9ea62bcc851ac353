#include <cmath>
#include <numbers>

#include "sits/error.hpp"
#include "sits/trainer.hpp"

namespace sits {

void TrainConfig::validate() const
{
    if (batch_patches <= 0) throw ConfigError("batch_patches must be positive");
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (chunk_patches <= 0) throw ConfigError("chunk_patches must be positive");
    if (windows_per_patch < 0) throw ConfigError("windows_per_patch must be non-negative");
    if (!(lr_start <= lr_peak)) throw ConfigError("lr_start must not exceed lr_peak");
    if (!(lr_floor <= lr_peak)) throw ConfigError("lr_floor must not exceed lr_peak");
    if (!(warmup_epochs >= 0 && warmup_epochs < cosine_end_epoch && cosine_end_epoch <= epochs)) {
        throw ConfigError("need 0 <= warmup_epochs < cosine_end_epoch <= epochs");
    }
    if (weight_decay < 0 || eps <= 0 || beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
        throw ConfigError("invalid optimizer hyperparameters");
    }
    for (double w : task_weights) {
        if (!(w >= 0) || !std::isfinite(w)) throw ConfigError("task weights must be finite and non-negative");
    }
}

double lr_at(double e, const TrainConfig& c)
{
    if (e <= 0) return c.lr_start;
    if (e < c.warmup_epochs) return std::lerp(c.lr_start, c.lr_peak, e / c.warmup_epochs);
    if (e >= c.cosine_end_epoch) return c.lr_floor;
    const double t = (1 + std::cos(std::numbers::pi * (e - c.warmup_epochs) / (c.cosine_end_epoch - c.warmup_epochs))) / 2;
    return std::lerp(c.lr_floor, c.lr_peak, t);
}

template <typename Scalar>
void adamw_step(NamedTensors<Scalar>& params, AdamWState<Scalar>& state, double lr, const TrainConfig& cfg)
{
    using Array = typename Tensor<Scalar>::Array;
    if (state.m.empty()) {
        for (const auto& [name, p] : params) {
            state.m.push_back(Array::Zero(p.size()));
            state.v.push_back(Array::Zero(p.size()));
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("optimizer state does not match parameter list");
    for (const auto& [name, p] : params) {
        if (p.has_grad() && !p.grad().allFinite()) throw NumericError("non-finite gradient in parameter '" + name + "'");
    }
    ++state.step;
    const double c1 = 1 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const auto b1 = static_cast<Scalar>(cfg.beta1), b2 = static_cast<Scalar>(cfg.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].second;
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.size() != p.size()) throw ShapeError("optimizer state does not match parameter '" + params[i].first + "'");
        if (p.has_grad()) {
            const auto& g = p.grad();
            m = b1 * m + (1 - b1) * g;
            v = b2 * v + (1 - b2) * g.square();
        } else {
            m *= b1;
            v *= b2;
        }
        auto& x = p.data_mut();
        x *= static_cast<Scalar>(1 - lr * cfg.weight_decay);
        const Array m_hat = m / static_cast<Scalar>(c1);
        const Array v_hat = v / static_cast<Scalar>(c2);
        x -= static_cast<Scalar>(lr) * m_hat / (v_hat.sqrt() + static_cast<Scalar>(cfg.eps));
    }
}

template void adamw_step<float>(NamedTensors<float>&, AdamWState<float>&, double, const TrainConfig&);
template void adamw_step<double>(NamedTensors<double>&, AdamWState<double>&, double, const TrainConfig&);

} // namespace sits
