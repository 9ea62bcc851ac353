#include "sits/tsvit.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sits/error.hpp"

namespace sits {

int TsvitConfig::n_class_tokens() const
{
    int n = 0;
    for (const auto& t : tasks) n += t.n_classes;
    return n;
}

int TsvitConfig::class_offset(std::size_t task) const
{
    int off = 0;
    for (std::size_t i = 0; i < task; ++i) off += tasks.at(i).n_classes;
    return off;
}

void TsvitConfig::validate() const
{
    if (subpatch_px <= 0 || patch_px <= 0) throw ConfigError("patch and sub-patch sizes must be positive");
    if (patch_px % subpatch_px != 0) {
        throw ShapeError("sub-patch size " + std::to_string(subpatch_px) + " does not divide patch edge " +
                         std::to_string(patch_px));
    }
    if (embed_dim <= 0 || heads <= 0 || head_dim <= 0 || mlp_ratio <= 0) {
        throw ConfigError("embed_dim, heads, head_dim and mlp_ratio must be positive");
    }
    if (temporal_depth < 0 || spatial_depth < 0) throw ConfigError("encoder depths must be non-negative");
    if (T <= 0 || B <= 0) throw ConfigError("T and B must be positive");
    if (tasks.empty()) throw ConfigError("at least one task is required");
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto& t = tasks[i];
        if (t.name != "crop" && t.name != "mgmt") throw ConfigError("unknown task '" + t.name + "'");
        if (t.n_classes <= 0) throw ConfigError("task '" + t.name + "' needs at least one class");
        for (std::size_t j = 0; j < i; ++j) {
            if (tasks[j].name == t.name) throw ConfigError("task '" + t.name + "' listed twice");
        }
    }
    if (tasks.size() == 2 && tasks[0].name != "crop") throw ConfigError("multitask order is crop, mgmt");
}

namespace {

std::size_t block_count(const TsvitConfig& c)
{
    const std::size_t d = c.embed_dim, inner = static_cast<std::size_t>(c.heads) * c.head_dim,
                      hidden = d * c.mlp_ratio;
    return 2 * d                        // norm1
           + d * 3 * inner + 3 * inner  // qkv
           + inner * d + d              // out projection
           + 2 * d                      // norm2
           + d * hidden + hidden        // fc1
           + hidden * d + d;            // fc2
}

} // namespace

std::size_t tsvit_parameter_count(const TsvitConfig& c)
{
    const std::size_t d = c.embed_dim, s2 = static_cast<std::size_t>(c.subpatch_px) * c.subpatch_px;
    std::size_t total = static_cast<std::size_t>(c.B) * s2 * d + d; // embedding
    total += static_cast<std::size_t>(c.T) * d;                   // temporal positions
    total += static_cast<std::size_t>(c.n_class_tokens()) * d;    // class tokens
    total += static_cast<std::size_t>(c.temporal_depth) * block_count(c);
    if (c.has_spatial_stage()) {
        total += static_cast<std::size_t>(c.n_subpatches()) * d + static_cast<std::size_t>(c.spatial_depth) * block_count(c);
    }
    total += c.tasks.size() * (d * s2 + s2);
    return total;
}

// ---------------------------------------------------------------- parameters

template <typename Scalar>
const Tensor<Scalar>& TsvitParams<Scalar>::at(const std::string& name) const
{
    const auto it = index_.find(name);
    if (it == index_.end()) throw IndexError("no parameter named '" + name + "'");
    return entries_[it->second].second;
}

template <typename Scalar>
Tensor<Scalar>& TsvitParams<Scalar>::at(const std::string& name)
{
    const auto it = index_.find(name);
    if (it == index_.end()) throw IndexError("no parameter named '" + name + "'");
    return entries_[it->second].second;
}

template <typename Scalar>
void TsvitParams<Scalar>::add(std::string name, Tensor<Scalar> value)
{
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
}

template <typename Scalar>
std::size_t TsvitParams<Scalar>::count() const
{
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += static_cast<std::size_t>(t.size());
    return n;
}

template <typename Scalar>
void TsvitParams<Scalar>::zero_grad()
{
    for (auto& [name, t] : entries_) t.zero_grad();
}

template <typename Scalar>
TsvitParams<Scalar> TsvitParams<Scalar>::clone() const
{
    TsvitParams out;
    for (const auto& [name, t] : entries_) {
        out.add(name, Tensor<Scalar>(t.shape(), t.data(), t.requires_grad()));
    }
    return out;
}

namespace {

template <typename Scalar>
class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    Tensor<Scalar> trunc_normal(Shape shape, double sd = 0.02)
    {
        std::normal_distribution<double> dist(0.0, sd);
        typename Tensor<Scalar>::Array a(numel(shape));
        for (Index i = 0; i < a.size(); ++i) {
            double v;
            do v = dist(rng_);
            while (std::abs(v) > 2 * sd);
            a[i] = static_cast<Scalar>(v);
        }
        return Tensor<Scalar>(std::move(shape), std::move(a), true);
    }

    Tensor<Scalar> fan_in_uniform(Index fan_in, Index fan_out)
    {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        typename Tensor<Scalar>::Array a(fan_in * fan_out);
        for (Index i = 0; i < a.size(); ++i) a[i] = static_cast<Scalar>(dist(rng_));
        return Tensor<Scalar>({fan_in, fan_out}, std::move(a), true);
    }

    static Tensor<Scalar> constant(Shape shape, Scalar v) { return Tensor<Scalar>::full(std::move(shape), v, true); }

private:
    std::mt19937_64 rng_;
};

template <typename Scalar>
void add_block(TsvitParams<Scalar>& p, Initializer<Scalar>& init, const TsvitConfig& c, const std::string& prefix)
{
    const Index d = c.embed_dim, inner = static_cast<Index>(c.heads) * c.head_dim, hidden = d * c.mlp_ratio;
    p.add(prefix + ".norm1.gamma", init.constant({d}, Scalar(1)));
    p.add(prefix + ".norm1.beta", init.constant({d}, Scalar(0)));
    p.add(prefix + ".attn.qkv.w", init.fan_in_uniform(d, 3 * inner));
    p.add(prefix + ".attn.qkv.b", init.constant({3 * inner}, Scalar(0)));
    p.add(prefix + ".attn.out.w", init.fan_in_uniform(inner, d));
    p.add(prefix + ".attn.out.b", init.constant({d}, Scalar(0)));
    p.add(prefix + ".norm2.gamma", init.constant({d}, Scalar(1)));
    p.add(prefix + ".norm2.beta", init.constant({d}, Scalar(0)));
    p.add(prefix + ".mlp.fc1.w", init.fan_in_uniform(d, hidden));
    p.add(prefix + ".mlp.fc1.b", init.constant({hidden}, Scalar(0)));
    p.add(prefix + ".mlp.fc2.w", init.fan_in_uniform(hidden, d));
    p.add(prefix + ".mlp.fc2.b", init.constant({d}, Scalar(0)));
}

} // namespace

template <typename Scalar>
TsvitParams<Scalar> TsvitParams<Scalar>::init(const TsvitConfig& c)
{
    c.validate();
    Initializer<Scalar> init(c.seed);
    TsvitParams p;
    const Index d = c.embed_dim, s2 = static_cast<Index>(c.subpatch_px) * c.subpatch_px;
    p.add("embed.w", init.fan_in_uniform(c.B * s2, d));
    p.add("embed.b", init.constant({d}, Scalar(0)));
    p.add("temporal.pos", init.trunc_normal({c.T, d}));
    for (const auto& task : c.tasks) p.add("cls." + task.name, init.trunc_normal({task.n_classes, d}));
    for (int i = 0; i < c.temporal_depth; ++i) add_block(p, init, c, "temporal." + std::to_string(i));
    if (c.has_spatial_stage()) {
        p.add("spatial.pos", init.trunc_normal({c.n_subpatches(), d}));
        for (int i = 0; i < c.spatial_depth; ++i) add_block(p, init, c, "spatial." + std::to_string(i));
    }
    for (const auto& task : c.tasks) {
        p.add("head." + task.name + ".w", init.fan_in_uniform(d, s2));
        p.add("head." + task.name + ".b", init.constant({s2}, Scalar(0)));
    }
    return p;
}

// ------------------------------------------------------------------- forward

template <typename Scalar>
Tensor<Scalar> patches_to_tensor(std::span<const SitsPatch> patches)
{
    if (patches.empty()) throw InputError("no patches to stack");
    const auto& f = patches.front();
    const Index per = static_cast<Index>(f.data.size());
    typename Tensor<Scalar>::Array a(per * static_cast<Index>(patches.size()));
    for (std::size_t n = 0; n < patches.size(); ++n) {
        const auto& p = patches[n];
        if (p.T != f.T || p.B != f.B || p.H != f.H || p.W != f.W || static_cast<Index>(p.data.size()) != per) {
            throw ShapeError("patches in a batch must share T, B, H and W");
        }
        for (Index i = 0; i < per; ++i) a[static_cast<Index>(n) * per + i] = static_cast<Scalar>(p.data[static_cast<std::size_t>(i)]);
    }
    return Tensor<Scalar>({static_cast<Index>(patches.size()), f.T, f.B, f.H, f.W}, std::move(a));
}

namespace {

template <typename Scalar>
Tensor<Scalar> attention(const Tensor<Scalar>& x, const TsvitParams<Scalar>& p, const std::string& prefix,
                         const TsvitConfig& c, ForwardTrace<Scalar>* trace)
{
    const Index m = x.dim(0), len = x.dim(1), h = c.heads, hd = c.head_dim;
    auto qkv = linear(x, p.at(prefix + ".qkv.w"), p.at(prefix + ".qkv.b"));
    qkv = permute(reshape(qkv, {m, len, 3, h, hd}), {2, 0, 3, 1, 4}); // [3, m, h, len, hd]
    auto q = reshape(slice(qkv, 0, 0, 1), {m * h, len, hd});
    auto k = reshape(slice(qkv, 0, 1, 2), {m * h, len, hd});
    auto v = reshape(slice(qkv, 0, 2, 3), {m * h, len, hd});
    auto scores = scale(bmm(q, k, true), static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(hd))));
    auto weights = softmax(scores, -1);
    if (trace) trace->attention.push_back(weights);
    auto ctx = permute(reshape(bmm(weights, v), {m, h, len, hd}), {0, 2, 1, 3});
    return linear(reshape(ctx, {m, len, h * hd}), p.at(prefix + ".out.w"), p.at(prefix + ".out.b"));
}

template <typename Scalar>
Tensor<Scalar> block(const Tensor<Scalar>& x, const TsvitParams<Scalar>& p, const std::string& prefix,
                     const TsvitConfig& c, ForwardTrace<Scalar>* trace)
{
    auto h = layer_norm(x, p.at(prefix + ".norm1.gamma"), p.at(prefix + ".norm1.beta"));
    auto y = add(x, attention(h, p, prefix + ".attn", c, trace));
    h = layer_norm(y, p.at(prefix + ".norm2.gamma"), p.at(prefix + ".norm2.beta"));
    h = gelu(linear(h, p.at(prefix + ".mlp.fc1.w"), p.at(prefix + ".mlp.fc1.b")));
    return add(y, linear(h, p.at(prefix + ".mlp.fc2.w"), p.at(prefix + ".mlp.fc2.b")));
}

} // namespace

template <typename Scalar>
Tensor<Scalar> tokenize(const Tensor<Scalar>& patches, const TsvitParams<Scalar>& params, const TsvitConfig& c)
{
    if (patches.ndim() != 5) throw ShapeError("tokenize expects [N x T x B x H x W], got " + shape_str(patches.shape()));
    const Index n = patches.dim(0), t = patches.dim(1), b = patches.dim(2), h = patches.dim(3), w = patches.dim(4);
    const Index s = c.subpatch_px;
    if (h != w) throw ShapeError("patch must be square, got " + std::to_string(h) + "x" + std::to_string(w));
    if (s <= 0 || h % s != 0) {
        throw ShapeError("sub-patch size " + std::to_string(s) + " does not divide patch edge " + std::to_string(h));
    }
    if (t != c.T || b != c.B) {
        throw ShapeError("input has T=" + std::to_string(t) + ", B=" + std::to_string(b) + " but model expects T=" +
                         std::to_string(c.T) + ", B=" + std::to_string(c.B));
    }
    if (h != c.patch_px) {
        throw ShapeError("input edge " + std::to_string(h) + " differs from model edge " + std::to_string(c.patch_px));
    }
    const Index g = h / s;
    auto x = reshape(patches, {n, t, b, g, s, g, s});
    x = permute(x, {0, 3, 5, 1, 4, 6, 2}); // [n, gi, gj, t, si, sj, b]
    x = reshape(x, {n * g * g, t, s * s * b});
    x = linear(x, params.at("embed.w"), params.at("embed.b"));
    return add(x, params.at("temporal.pos"));
}

template <typename Scalar>
Tensor<Scalar> temporal_encode(const Tensor<Scalar>& tokens, const TsvitParams<Scalar>& params, const TsvitConfig& c,
                               ForwardTrace<Scalar>* trace)
{
    if (tokens.ndim() != 3 || tokens.dim(2) != c.embed_dim) {
        throw ShapeError("temporal_encode expects [M x T x d], got " + shape_str(tokens.shape()));
    }
    const Index m = tokens.dim(0), n = c.n_class_tokens(), d = c.embed_dim;
    std::vector<Tensor<Scalar>> cls;
    for (const auto& task : c.tasks) cls.push_back(params.at("cls." + task.name));
    auto all = cls.size() == 1 ? cls.front() : concat(cls, 0);
    auto broadcast = add(Tensor<Scalar>::zeros({m, n, d}), all);
    auto x = concat<Scalar>({broadcast, tokens}, 1);
    for (int i = 0; i < c.temporal_depth; ++i) x = block(x, params, "temporal." + std::to_string(i), c, trace);
    return slice(x, 1, 0, n);
}

template <typename Scalar>
Tensor<Scalar> spatial_encode(const Tensor<Scalar>& features, const TsvitParams<Scalar>& params, const TsvitConfig& c,
                              ForwardTrace<Scalar>* trace)
{
    if (!c.has_spatial_stage()) return features;
    const Index p = c.n_subpatches(), n = c.n_class_tokens(), d = c.embed_dim;
    if (features.ndim() != 3 || features.dim(1) != n || features.dim(2) != d || features.dim(0) % p != 0) {
        throw ShapeError("spatial_encode expects [N*P x n x d], got " + shape_str(features.shape()));
    }
    const Index batch = features.dim(0) / p;
    auto x = permute(reshape(features, {batch, p, n, d}), {0, 2, 1, 3}); // [N, n, P, d]
    x = add(reshape(x, {batch * n, p, d}), params.at("spatial.pos"));
    for (int i = 0; i < c.spatial_depth; ++i) x = block(x, params, "spatial." + std::to_string(i), c, trace);
    x = permute(reshape(x, {batch, n, p, d}), {0, 2, 1, 3});
    return reshape(x, {batch * p, n, d});
}

template <typename Scalar>
std::vector<Tensor<Scalar>> decode(const Tensor<Scalar>& features, const TsvitParams<Scalar>& params,
                                   const TsvitConfig& c)
{
    const Index p = c.n_subpatches(), n = c.n_class_tokens(), d = c.embed_dim, g = c.grid(), s = c.subpatch_px;
    if (features.ndim() != 3 || features.dim(1) != n || features.dim(2) != d || features.dim(0) % p != 0) {
        throw ShapeError("decode expects [N*P x n x d], got " + shape_str(features.shape()));
    }
    const Index batch = features.dim(0) / p;
    std::vector<Tensor<Scalar>> out;
    for (std::size_t t = 0; t < c.tasks.size(); ++t) {
        const auto& task = c.tasks[t];
        const Index off = c.class_offset(t), k = task.n_classes;
        auto tok = c.tasks.size() == 1 ? features : slice(features, 1, off, off + k);
        auto scores = linear(tok, params.at("head." + task.name + ".w"), params.at("head." + task.name + ".b"));
        auto grid = reshape(scores, {batch, g, g, k, s, s});
        grid = permute(grid, {0, 1, 4, 2, 5, 3}); // [N, gi, si, gj, sj, k]
        out.push_back(reshape(grid, {batch, g * s, g * s, k}));
    }
    return out;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> forward(const Tensor<Scalar>& patches, const TsvitParams<Scalar>& params,
                                    const TsvitConfig& c, ForwardTrace<Scalar>* trace)
{
    auto tokens = tokenize(patches, params, c);
    auto features = temporal_encode(tokens, params, c, trace);
    features = spatial_encode(features, params, c, trace);
    return decode(features, params, c);
}

template <typename Scalar>
std::vector<int> predict(const Tensor<Scalar>& logits)
{
    const Index k = logits.dim(-1), rows = logits.size() / k;
    std::vector<int> out(static_cast<std::size_t>(rows));
    const auto& a = logits.data();
    for (Index r = 0; r < rows; ++r) {
        Index best = 0;
        for (Index j = 1; j < k; ++j) {
            if (a[r * k + j] > a[r * k + best]) best = j;
        }
        out[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
    return out;
}

template <typename Scalar>
TsvitParams<Scalar> restrict_tasks(const TsvitParams<Scalar>& params, const TsvitConfig& narrow)
{
    narrow.validate();
    const auto shape = TsvitParams<Scalar>::init(narrow);
    TsvitParams<Scalar> out;
    for (const auto& [name, t] : shape.entries()) {
        const auto& src = params.at(name);
        if (src.shape() != t.shape()) throw ShapeError("parameter '" + name + "' has shape " + shape_str(src.shape()));
        out.add(name, Tensor<Scalar>(src.shape(), src.data(), true));
    }
    return out;
}

#define SITS_INSTANTIATE(S)                                                                                         \
    template class TsvitParams<S>;                                                                                  \
    template Tensor<S> patches_to_tensor<S>(std::span<const SitsPatch>);                                            \
    template Tensor<S> tokenize<S>(const Tensor<S>&, const TsvitParams<S>&, const TsvitConfig&);                    \
    template Tensor<S> temporal_encode<S>(const Tensor<S>&, const TsvitParams<S>&, const TsvitConfig&,              \
                                          ForwardTrace<S>*);                                                        \
    template Tensor<S> spatial_encode<S>(const Tensor<S>&, const TsvitParams<S>&, const TsvitConfig&,               \
                                         ForwardTrace<S>*);                                                         \
    template std::vector<Tensor<S>> decode<S>(const Tensor<S>&, const TsvitParams<S>&, const TsvitConfig&);         \
    template std::vector<Tensor<S>> forward<S>(const Tensor<S>&, const TsvitParams<S>&, const TsvitConfig&,         \
                                               ForwardTrace<S>*);                                                   \
    template std::vector<int> predict<S>(const Tensor<S>&);                                                         \
    template TsvitParams<S> restrict_tasks<S>(const TsvitParams<S>&, const TsvitConfig&);

SITS_INSTANTIATE(float)
SITS_INSTANTIATE(double)

} // namespace sits
