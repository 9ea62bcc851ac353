#pragma once

// Differentiable operations on Tensor<Scalar>. Every op validates shapes,
// computes the forward value eagerly and, when recording, attaches a
// backward closure that accumulates into its inputs' grad buffers.
//
// Broadcasting is limited to add/mul where one operand's shape is a
// trailing suffix of the other's.

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sits/tensor.hpp"

namespace sits {

namespace detail {

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using MapMat = Eigen::Map<RowMat<Scalar>>;
template <typename Scalar>
using CMapMat = Eigen::Map<const RowMat<Scalar>>;

inline int normalize_axis(int axis, int ndim, const Shape& shape)
{
    if (axis < 0) axis += ndim;
    if (axis < 0 || axis >= ndim) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
    }
    return axis;
}

// [outer, n, inner] view of a shape around `axis`.
struct AxisView {
    Index outer = 1, n = 1, inner = 1;
};

inline AxisView axis_view(const Shape& shape, int axis)
{
    AxisView v;
    for (int i = 0; i < axis; ++i) v.outer *= shape[static_cast<std::size_t>(i)];
    v.n = shape[static_cast<std::size_t>(axis)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) v.inner *= shape[i];
    return v;
}

inline bool is_suffix(const Shape& small, const Shape& big)
{
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

} // namespace detail

// ---------------------------------------------------------------- linear algebra

/// [m x k] . [k x n] -> [m x n]
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
    using namespace detail;
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
    typename Tensor<Scalar>::Array out(m * n);
    MapMat<Scalar>(out.data(), m, n).noalias() =
        CMapMat<Scalar>(a.data().data(), m, k) * CMapMat<Scalar>(b.data().data(), k, n);
    return make_result<Scalar>({m, n}, std::move(out), {&a, &b}, [m, k, n](TensorNode<Scalar>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        CMapMat<Scalar> g(self.grad.data(), m, n);
        if (pa.requires_grad) {
            MapMat<Scalar>(pa.grad_buffer().data(), m, k).noalias() += g * CMapMat<Scalar>(pb.data.data(), k, n).transpose();
        }
        if (pb.requires_grad) {
            MapMat<Scalar>(pb.grad_buffer().data(), k, n).noalias() += CMapMat<Scalar>(pa.data.data(), m, k).transpose() * g;
        }
    });
}

/// Batched product: [b x m x k] . [b x k x n] -> [b x m x n], or with
/// transpose_b: [b x m x k] . [b x n x k]^T -> [b x m x n].
template <typename Scalar>
Tensor<Scalar> bmm(const Tensor<Scalar>& a, const Tensor<Scalar>& b, bool transpose_b = false)
{
    using namespace detail;
    const bool ok = a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0) &&
                    a.dim(2) == (transpose_b ? b.dim(2) : b.dim(1));
    if (!ok) {
        throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const Index batch = a.dim(0), m = a.dim(1), k = a.dim(2);
    const Index n = transpose_b ? b.dim(1) : b.dim(2);
    typename Tensor<Scalar>::Array out(batch * m * n);
    for (Index i = 0; i < batch; ++i) {
        CMapMat<Scalar> A(a.data().data() + i * m * k, m, k);
        MapMat<Scalar> C(out.data() + i * m * n, m, n);
        if (transpose_b) {
            C.noalias() = A * CMapMat<Scalar>(b.data().data() + i * n * k, n, k).transpose();
        } else {
            C.noalias() = A * CMapMat<Scalar>(b.data().data() + i * k * n, k, n);
        }
    }
    return make_result<Scalar>({batch, m, n}, std::move(out), {&a, &b},
                               [batch, m, k, n, transpose_b](TensorNode<Scalar>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        for (Index i = 0; i < batch; ++i) {
            CMapMat<Scalar> G(self.grad.data() + i * m * n, m, n);
            CMapMat<Scalar> A(pa.data.data() + i * m * k, m, k);
            if (transpose_b) {
                CMapMat<Scalar> B(pb.data.data() + i * n * k, n, k);
                if (pa.requires_grad) MapMat<Scalar>(pa.grad_buffer().data() + i * m * k, m, k).noalias() += G * B;
                if (pb.requires_grad) MapMat<Scalar>(pb.grad_buffer().data() + i * n * k, n, k).noalias() += G.transpose() * A;
            } else {
                CMapMat<Scalar> B(pb.data.data() + i * k * n, k, n);
                if (pa.requires_grad) MapMat<Scalar>(pa.grad_buffer().data() + i * m * k, m, k).noalias() += G * B.transpose();
                if (pb.requires_grad) MapMat<Scalar>(pb.grad_buffer().data() + i * k * n, k, n).noalias() += A.transpose() * G;
            }
        }
    });
}

/// Affine map over the last axis: x[..., in] . w[in x out] + bias[out].
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& bias)
{
    using namespace detail;
    if (w.ndim() != 2 || x.dim(-1) != w.dim(0) || bias.ndim() != 1 || bias.dim(0) != w.dim(1)) {
        throw ShapeError("linear: incompatible shapes x" + shape_str(x.shape()) + " w" + shape_str(w.shape()) +
                         " b" + shape_str(bias.shape()));
    }
    const Index in = w.dim(0), outd = w.dim(1), rows = x.size() / in;
    Shape shape = x.shape();
    shape.back() = outd;
    typename Tensor<Scalar>::Array out(rows * outd);
    MapMat<Scalar> Y(out.data(), rows, outd);
    Y.noalias() = CMapMat<Scalar>(x.data().data(), rows, in) * CMapMat<Scalar>(w.data().data(), in, outd);
    Y.rowwise() += Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(bias.data().data(), outd);
    return make_result<Scalar>(std::move(shape), std::move(out), {&x, &w, &bias},
                               [rows, in, outd](TensorNode<Scalar>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        CMapMat<Scalar> G(self.grad.data(), rows, outd);
        if (px.requires_grad) {
            MapMat<Scalar>(px.grad_buffer().data(), rows, in).noalias() += G * CMapMat<Scalar>(pw.data.data(), in, outd).transpose();
        }
        if (pw.requires_grad) {
            MapMat<Scalar>(pw.grad_buffer().data(), in, outd).noalias() += CMapMat<Scalar>(px.data.data(), rows, in).transpose() * G;
        }
        if (pb.requires_grad) {
            Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(pb.grad_buffer().data(), outd) += G.colwise().sum();
        }
    });
}

// ---------------------------------------------------------------- elementwise

namespace detail {

// Elementwise binary op with trailing-suffix broadcast of `b` over `a`.
template <typename Scalar, bool Multiply>
Tensor<Scalar> broadcast_binary(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* name)
{
    if (!is_suffix(b.shape(), a.shape())) {
        if (is_suffix(a.shape(), b.shape())) return broadcast_binary<Scalar, Multiply>(b, a, name);
        throw ShapeError(std::string(name) + ": non-conforming shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const Index inner = b.size(), reps = a.size() / inner;
    typename Tensor<Scalar>::Array out(a.size());
    for (Index r = 0; r < reps; ++r) {
        if constexpr (Multiply) {
            out.segment(r * inner, inner) = a.data().segment(r * inner, inner) * b.data();
        } else {
            out.segment(r * inner, inner) = a.data().segment(r * inner, inner) + b.data();
        }
    }
    return make_result<Scalar>(a.shape(), std::move(out), {&a, &b}, [inner, reps](TensorNode<Scalar>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const auto& g = self.grad;
        if (pa.requires_grad) {
            auto& ga = pa.grad_buffer();
            if constexpr (Multiply) {
                for (Index r = 0; r < reps; ++r) ga.segment(r * inner, inner) += g.segment(r * inner, inner) * pb.data;
            } else {
                ga += g;
            }
        }
        if (pb.requires_grad) {
            auto& gb = pb.grad_buffer();
            for (Index r = 0; r < reps; ++r) {
                if constexpr (Multiply) {
                    gb += g.segment(r * inner, inner) * pa.data.segment(r * inner, inner);
                } else {
                    gb += g.segment(r * inner, inner);
                }
            }
        }
    });
}

} // namespace detail

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
    return detail::broadcast_binary<Scalar, false>(a, b, "add");
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
    return detail::broadcast_binary<Scalar, true>(a, b, "mul");
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor)
{
    return detail::make_result<Scalar>(x.shape(), x.data() * factor, {&x}, [factor](TensorNode<Scalar>& self) {
        self.parents[0]->grad_buffer() += self.grad * factor;
    });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
    return add(a, scale(b, Scalar(-1)));
}

/// Gaussian error linear unit, exact erf form.
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x)
{
    const Scalar inv_sqrt2 = Scalar(0.70710678118654752440);
    typename Tensor<Scalar>::Array out = x.data().unaryExpr([inv_sqrt2](Scalar v) {
        return Scalar(0.5) * v * (Scalar(1) + std::erf(v * inv_sqrt2));
    });
    return detail::make_result<Scalar>(x.shape(), std::move(out), {&x}, [inv_sqrt2](TensorNode<Scalar>& self) {
        auto& px = *self.parents[0];
        const Scalar inv_sqrt2pi = Scalar(0.39894228040143267794);
        auto& gx = px.grad_buffer();
        for (Index i = 0; i < gx.size(); ++i) {
            const Scalar v = px.data[i];
            const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(v * inv_sqrt2));
            const Scalar pdf = inv_sqrt2pi * std::exp(Scalar(-0.5) * v * v);
            gx[i] += self.grad[i] * (cdf + v * pdf);
        }
    });
}

// ---------------------------------------------------------------- structural

/// Reshape keeping row-major element order. One dimension may be -1.
template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape)
{
    Index known = 1;
    int infer = -1;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == -1) {
            if (infer >= 0) throw ShapeError("reshape: more than one -1 in " + shape_str(shape));
            infer = static_cast<int>(i);
        } else {
            known *= shape[i];
        }
    }
    if (infer >= 0 && known > 0 && x.size() % known == 0) shape[static_cast<std::size_t>(infer)] = x.size() / known;
    if (numel(shape) != x.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    return detail::make_result<Scalar>(std::move(shape), x.data(), {&x}, [](TensorNode<Scalar>& self) {
        self.parents[0]->grad_buffer() += self.grad;
    });
}

namespace detail {

// out[j] = in[src[j]] for an axis permutation; returns the gather index.
inline std::vector<Index> permute_index(const Shape& shape, std::span<const int> perm, Shape& out_shape)
{
    const std::size_t nd = shape.size();
    std::vector<Index> in_stride(nd, 1);
    for (std::size_t i = nd; i-- > 1;) in_stride[i - 1] = in_stride[i] * shape[i];
    out_shape.resize(nd);
    std::vector<Index> stride(nd);
    for (std::size_t i = 0; i < nd; ++i) {
        out_shape[i] = shape[static_cast<std::size_t>(perm[i])];
        stride[i] = in_stride[static_cast<std::size_t>(perm[i])];
    }
    const Index total = numel(shape);
    std::vector<Index> src(static_cast<std::size_t>(total));
    std::vector<Index> counter(nd, 0);
    Index offset = 0;
    for (Index j = 0; j < total; ++j) {
        src[static_cast<std::size_t>(j)] = offset;
        for (std::size_t d = nd; d-- > 0;) {
            offset += stride[d];
            if (++counter[d] < out_shape[d]) break;
            offset -= stride[d] * out_shape[d];
            counter[d] = 0;
        }
    }
    return src;
}

} // namespace detail

/// General axis permutation: result axis i is input axis perm[i].
template <typename Scalar>
Tensor<Scalar> permute(const Tensor<Scalar>& x, std::vector<int> perm)
{
    const int nd = x.ndim();
    std::vector<bool> seen(static_cast<std::size_t>(nd), false);
    bool ok = static_cast<int>(perm.size()) == nd;
    for (int p : perm) {
        ok = ok && p >= 0 && p < nd && !seen[static_cast<std::size_t>(p)];
        if (ok) seen[static_cast<std::size_t>(p)] = true;
    }
    if (!ok) throw ShapeError("permute: invalid permutation for shape " + shape_str(x.shape()));
    Shape out_shape;
    auto src = std::make_shared<std::vector<Index>>(detail::permute_index(x.shape(), perm, out_shape));
    typename Tensor<Scalar>::Array out(x.size());
    const auto& in = x.data();
    for (Index j = 0; j < out.size(); ++j) out[j] = in[(*src)[static_cast<std::size_t>(j)]];
    return detail::make_result<Scalar>(std::move(out_shape), std::move(out), {&x}, [src](TensorNode<Scalar>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (Index j = 0; j < self.grad.size(); ++j) g[(*src)[static_cast<std::size_t>(j)]] += self.grad[j];
    });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& x, int axis0, int axis1)
{
    const int nd = x.ndim();
    axis0 = detail::normalize_axis(axis0, nd, x.shape());
    axis1 = detail::normalize_axis(axis1, nd, x.shape());
    std::vector<int> perm(static_cast<std::size_t>(nd));
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[static_cast<std::size_t>(axis0)], perm[static_cast<std::size_t>(axis1)]);
    return permute(x, std::move(perm));
}

template <typename Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, int axis)
{
    if (parts.empty()) throw ShapeError("concat: no operands");
    const Shape& first = parts.front().shape();
    axis = detail::normalize_axis(axis, static_cast<int>(first.size()), first);
    Shape shape = first;
    shape[static_cast<std::size_t>(axis)] = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        bool ok = s.size() == first.size();
        if (ok) {
            s[static_cast<std::size_t>(axis)] = first[static_cast<std::size_t>(axis)];
            ok = s == first;
        }
        if (!ok) throw ShapeError("concat: shape " + shape_str(p.shape()) + " does not conform to " + shape_str(first));
        shape[static_cast<std::size_t>(axis)] += p.dim(axis);
    }
    const auto view = detail::axis_view(shape, axis);
    std::vector<Index> widths;
    for (const auto& p : parts) widths.push_back(p.dim(axis) * view.inner);
    const Index row = view.n * view.inner;
    typename Tensor<Scalar>::Array out(numel(shape));
    Index col = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        for (Index o = 0; o < view.outer; ++o) {
            out.segment(o * row + col, widths[i]) = parts[i].data().segment(o * widths[i], widths[i]);
        }
        col += widths[i];
    }
    return detail::make_result<Scalar>(std::move(shape), std::move(out), parts,
                                       [widths, row, outer = view.outer](TensorNode<Scalar>& self) {
        Index c = 0;
        for (std::size_t i = 0; i < widths.size(); ++i) {
            auto& p = *self.parents[i];
            if (p.requires_grad) {
                auto& g = p.grad_buffer();
                for (Index o = 0; o < outer; ++o) g.segment(o * widths[i], widths[i]) += self.grad.segment(o * row + c, widths[i]);
            }
            c += widths[i];
        }
    });
}

/// Half-open range [start, end) along `axis`.
template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, int axis, Index start, Index end)
{
    axis = detail::normalize_axis(axis, x.ndim(), x.shape());
    if (start < 0 || end > x.dim(axis) || start >= end) {
        throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(end) +
                         ") invalid for axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
    }
    Shape shape = x.shape();
    shape[static_cast<std::size_t>(axis)] = end - start;
    const auto view = detail::axis_view(x.shape(), axis);
    const Index row = view.n * view.inner, width = (end - start) * view.inner, off = start * view.inner;
    typename Tensor<Scalar>::Array out(view.outer * width);
    for (Index o = 0; o < view.outer; ++o) out.segment(o * width, width) = x.data().segment(o * row + off, width);
    return detail::make_result<Scalar>(std::move(shape), std::move(out), {&x},
                                       [row, width, off, outer = view.outer](TensorNode<Scalar>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (Index o = 0; o < outer; ++o) g.segment(o * row + off, width) += self.grad.segment(o * width, width);
    });
}

// ---------------------------------------------------------------- reductions

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x)
{
    typename Tensor<Scalar>::Array out(1);
    out[0] = x.data().sum();
    return detail::make_result<Scalar>({1}, std::move(out), {&x}, [](TensorNode<Scalar>& self) {
        self.parents[0]->grad_buffer() += self.grad[0];
    });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x)
{
    return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.size()));
}

// ---------------------------------------------------------------- normalization

/// Softmax along `axis` with max subtraction.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, int axis = -1)
{
    axis = detail::normalize_axis(axis, x.ndim(), x.shape());
    if (!x.data().isFinite().all()) throw NumericError("softmax: non-finite input");
    const auto v = detail::axis_view(x.shape(), axis);
    typename Tensor<Scalar>::Array out(x.size());
    const auto& in = x.data();
    for (Index o = 0; o < v.outer; ++o) {
        for (Index i = 0; i < v.inner; ++i) {
            const Index base = o * v.n * v.inner + i;
            Scalar mx = in[base];
            for (Index j = 1; j < v.n; ++j) mx = std::max(mx, in[base + j * v.inner]);
            Scalar z = 0;
            for (Index j = 0; j < v.n; ++j) {
                const Scalar e = std::exp(in[base + j * v.inner] - mx);
                out[base + j * v.inner] = e;
                z += e;
            }
            for (Index j = 0; j < v.n; ++j) out[base + j * v.inner] /= z;
        }
    }
    return detail::make_result<Scalar>(x.shape(), std::move(out), {&x}, [v](TensorNode<Scalar>& self) {
        auto& gx = self.parents[0]->grad_buffer();
        const auto& y = self.data;
        const auto& g = self.grad;
        for (Index o = 0; o < v.outer; ++o) {
            for (Index i = 0; i < v.inner; ++i) {
                const Index base = o * v.n * v.inner + i;
                Scalar dot = 0;
                for (Index j = 0; j < v.n; ++j) dot += g[base + j * v.inner] * y[base + j * v.inner];
                for (Index j = 0; j < v.n; ++j) {
                    const Index at = base + j * v.inner;
                    gx[at] += y[at] * (g[at] - dot);
                }
            }
        }
    });
}

/// Last-axis standardization followed by gamma * x + beta. A slice whose
/// values are all equal standardizes to exactly 0, so its output is beta.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                          Scalar eps = Scalar(1e-5))
{
    const Index n = x.dim(-1);
    if (gamma.ndim() != 1 || beta.ndim() != 1 || gamma.dim(0) != n || beta.dim(0) != n) {
        throw ShapeError("layer_norm: gamma" + shape_str(gamma.shape()) + "/beta" + shape_str(beta.shape()) +
                         " do not match last axis of " + shape_str(x.shape()));
    }
    if (!(eps > 0)) throw NumericError("layer_norm: eps must be positive");
    const Index rows = x.size() / n;
    using Array = typename Tensor<Scalar>::Array;
    auto xhat = std::make_shared<Array>(x.size());
    auto inv_std = std::make_shared<Array>(rows);
    Array out(x.size());
    for (Index r = 0; r < rows; ++r) {
        auto seg = x.data().segment(r * n, n);
        auto xh = xhat->segment(r * n, n);
        if (seg.maxCoeff() == seg.minCoeff()) {
            xh.setZero();
            (*inv_std)[r] = Scalar(1) / std::sqrt(eps);
        } else {
            const Scalar mu = seg.mean();
            const Scalar var = (seg - mu).square().mean();
            (*inv_std)[r] = Scalar(1) / std::sqrt(var + eps);
            xh = (seg - mu) * (*inv_std)[r];
        }
        out.segment(r * n, n) = xh * gamma.data() + beta.data();
    }
    return detail::make_result<Scalar>(x.shape(), std::move(out), {&x, &gamma, &beta},
                                       [xhat, inv_std, rows, n](TensorNode<Scalar>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        for (Index r = 0; r < rows; ++r) {
            auto g = self.grad.segment(r * n, n);
            auto xh = xhat->segment(r * n, n);
            if (pg.requires_grad) pg.grad_buffer() += g * xh;
            if (pb.requires_grad) pb.grad_buffer() += g;
            if (px.requires_grad) {
                const Array gy = g * pg.data;
                const Scalar mean_g = gy.mean();
                const Scalar mean_gx = (gy * xh).mean();
                px.grad_buffer().segment(r * n, n) += (*inv_std)[r] * (gy - mean_g - xh * mean_gx);
            }
        }
    });
}

// ---------------------------------------------------------------- loss

/// Mean negative log-softmax of the target class over rows whose target is
/// not `ignore_id`; 0 when every row is ignored.
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const int> targets, int ignore_id = -1)
{
    if (logits.ndim() != 2 || logits.dim(0) != static_cast<Index>(targets.size())) {
        throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(targets.size()) + " targets");
    }
    const Index rows = logits.dim(0), k = logits.dim(1);
    using Array = typename Tensor<Scalar>::Array;
    auto probs = std::make_shared<Array>(logits.size());
    auto tgt = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
    Index valid = 0;
    Scalar total = 0;
    for (Index r = 0; r < rows; ++r) {
        const int t = targets[static_cast<std::size_t>(r)];
        if (t == ignore_id) continue;
        if (t < 0 || t >= k) {
            throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0," + std::to_string(k) + ")");
        }
        auto row = logits.data().segment(r * k, k);
        const Scalar mx = row.maxCoeff();
        auto p = probs->segment(r * k, k);
        p = (row - mx).exp();
        const Scalar z = p.sum();
        p /= z;
        total += std::log(z) + mx - row[t];
        ++valid;
    }
    Array out(1);
    out[0] = valid ? total / static_cast<Scalar>(valid) : Scalar(0);
    return detail::make_result<Scalar>({1}, std::move(out), {&logits},
                                       [probs, tgt, rows, k, valid, ignore_id](TensorNode<Scalar>& self) {
        if (!valid) return;
        auto& g = self.parents[0]->grad_buffer();
        const Scalar s = self.grad[0] / static_cast<Scalar>(valid);
        for (Index r = 0; r < rows; ++r) {
            const int t = (*tgt)[static_cast<std::size_t>(r)];
            if (t == ignore_id) continue;
            g.segment(r * k, k) += s * probs->segment(r * k, k);
            g[r * k + t] -= s;
        }
    });
}

} // namespace sits
