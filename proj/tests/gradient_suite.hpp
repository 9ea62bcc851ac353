#pragma once

// Central-difference checks shared by the unit tests and the acceptance run.

#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sits/ops.hpp"
#include "sits/tsvit.hpp"

namespace sits::testing {

using T64 = Tensor<double>;

/// Worst relative error between the analytic and the central-difference
/// gradient of `f` with respect to each of its inputs.
inline double worst_gradient_error(std::vector<T64> inputs, const std::function<T64(const std::vector<T64>&)>& f)
{
    for (auto& in : inputs) {
        in.set_requires_grad(true);
        in.zero_grad();
    }
    backward(f(inputs));
    double worst = 0;
    for (auto& in : inputs) {
        Eigen::ArrayXd analytic = in.grad();
        Eigen::ArrayXd numeric = numeric_gradient(in, [&] {
            NoGradGuard guard;
            return f(inputs).item();
        });
        worst = std::max(worst, relative_error(analytic, numeric));
    }
    return worst;
}

// Projects a tensor onto a scalar with fixed random weights so every output
// element carries a distinct cotangent.
inline T64 project(const T64& y, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    return sum(mul(y, random_tensor<double>(y.shape(), rng)));
}

/// Worst error per differentiable op over `seeds` random draws.
inline std::map<std::string, double> op_gradient_sweep(int seeds)
{
    std::map<std::string, double> worst;
    for (std::uint64_t seed = 0; seed < static_cast<std::uint64_t>(seeds); ++seed) {
        std::mt19937_64 rng(seed * 7919 + 1);
        auto r = [&](Shape s, double sd = 1.0) { return random_tensor<double>(std::move(s), rng, false, sd); };
        const std::uint64_t ps = seed + 100;
        auto check = [&](const std::string& name, std::vector<T64> in, const std::function<T64(const std::vector<T64>&)>& f) {
            worst[name] = std::max(worst[name], worst_gradient_error(std::move(in), f));
        };
        check("matmul", {r({3, 4}), r({4, 2})}, [ps](const auto& in) { return project(matmul(in[0], in[1]), ps); });
        check("bmm", {r({2, 3, 4}), r({2, 4, 3})}, [ps](const auto& in) { return project(bmm(in[0], in[1]), ps); });
        check("bmm_transposed", {r({2, 3, 4}), r({2, 5, 4})},
              [ps](const auto& in) { return project(bmm(in[0], in[1], true), ps); });
        check("linear", {r({2, 3, 4}), r({4, 5}), r({5})},
              [ps](const auto& in) { return project(linear(in[0], in[1], in[2]), ps); });
        check("add", {r({2, 3, 4}), r({3, 4})}, [ps](const auto& in) { return project(add(in[0], in[1]), ps); });
        check("mul", {r({4}), r({2, 3, 4})}, [ps](const auto& in) { return project(mul(in[0], in[1]), ps); });
        check("sub", {r({2, 3}), r({2, 3})}, [ps](const auto& in) { return project(sub(in[0], in[1]), ps); });
        check("gelu", {r({3, 5}, 2.0)}, [ps](const auto& in) { return project(gelu(in[0]), ps); });
        check("softmax", {r({2, 3, 4}, 2.0)}, [ps](const auto& in) { return project(softmax(in[0], 1), ps); });
        check("layer_norm", {r({3, 6}), r({6}), r({6})},
              [ps](const auto& in) { return project(layer_norm(in[0], in[1], in[2]), ps); });
        check("cross_entropy", {r({4, 5}, 2.0)}, [](const auto& in) {
            std::vector<int> t{1, 4, -1, 0};
            return cross_entropy(in[0], t);
        });
        check("concat", {r({2, 3}), r({2, 2})}, [ps](const auto& in) { return project(concat<double>({in[0], in[1]}, 1), ps); });
        check("slice", {r({3, 4, 2})}, [ps](const auto& in) { return project(slice(in[0], 1, 1, 3), ps); });
        check("reshape_permute", {r({2, 3, 4})},
              [ps](const auto& in) { return project(permute(reshape(in[0], {6, 4}), {1, 0}), ps); });
        check("scale_mean", {r({2, 3, 4})}, [](const auto& in) { return mean(scale(mul(in[0], in[0]), 0.5)); });
    }
    return worst;
}

/// d=8, depths 1/1, T=4, B=2, H=4, S=2, two classes per task.
inline TsvitConfig tiny_tsvit()
{
    TsvitConfig c;
    c.patch_px = 4;
    c.subpatch_px = 2;
    c.embed_dim = 8;
    c.temporal_depth = 1;
    c.spatial_depth = 1;
    c.heads = 2;
    c.head_dim = 4;
    c.mlp_ratio = 2;
    c.T = 4;
    c.B = 2;
    c.tasks = {{"crop", 2}, {"mgmt", 2}};
    c.seed = 3;
    return c;
}

/// Worst error per parameter array of the tiny model for a random linear
/// functional of both logit sets.
inline std::map<std::string, double> tsvit_gradient_check(std::uint64_t seed = 10)
{
    const auto c = tiny_tsvit();
    auto p = TsvitParams<double>::init(c);
    std::mt19937_64 rng(seed);
    // larger values than the 0.02 initialization so every path carries signal
    for (auto& [name, t] : p.entries()) {
        if (!name.ends_with(".gamma")) t.data_mut() += 0.3 * random_tensor<double>(t.shape(), rng).data();
        t.set_requires_grad(true);
    }
    const auto x = random_tensor<double>({2, c.T, c.B, c.patch_px, c.patch_px}, rng);
    std::vector<T64> probe;
    for (int t = 0; t < 2; ++t) probe.push_back(random_tensor<double>({2, 4, 4, 2}, rng));
    auto loss = [&] {
        const auto out = forward(x, p, c);
        return add(sum(mul(out[0], probe[0])), sum(mul(out[1], probe[1])));
    };
    p.zero_grad();
    backward(loss());
    std::map<std::string, double> err;
    for (auto& [name, t] : p.entries()) {
        if (!t.has_grad()) {
            err[name] = 1.0;
            continue;
        }
        const auto numeric = numeric_gradient(t, [&] {
            NoGradGuard off;
            return loss().item();
        });
        err[name] = relative_error(t.grad(), numeric);
    }
    return err;
}

} // namespace sits::testing
