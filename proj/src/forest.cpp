#include "sits/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "sits/error.hpp"

namespace sits {

void ForestConfig::validate() const
{
    if (n_trees <= 0) throw ConfigError("n_trees must be positive");
    if (max_depth < 0) throw ConfigError("max_depth must be non-negative (0 = unlimited)");
    if (min_leaf <= 0) throw ConfigError("min_leaf must be positive");
    if (features_per_split < 0) throw ConfigError("features_per_split must be non-negative");
    if (buffer_px < 0) throw ConfigError("buffer_px must be non-negative");
    if (background_per_tile < 0) throw ConfigError("background_per_tile must be non-negative");
}

namespace {

std::uint64_t mix(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

std::vector<std::pair<int, int>> eroded_pixels(const LabelRaster& labels, std::uint32_t field, int r)
{
    std::vector<std::pair<int, int>> disk;
    for (int di = -r; di <= r; ++di) {
        for (int dj = -r; dj <= r; ++dj) {
            if (di * di + dj * dj <= r * r) disk.emplace_back(di, dj);
        }
    }
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < labels.H; ++i) {
        for (int j = 0; j < labels.W; ++j) {
            if (labels.field[labels.index(i, j)] != field) continue;
            const bool inside = std::all_of(disk.begin(), disk.end(), [&](auto d) {
                const int a = i + d.first, b = j + d.second;
                return a >= 0 && b >= 0 && a < labels.H && b < labels.W && labels.field[labels.index(a, b)] == field;
            });
            if (inside) out.emplace_back(i, j);
        }
    }
    return out;
}

std::vector<float> pixel_features(const SitsPatch& cube, int row, int col)
{
    std::vector<float> f(static_cast<std::size_t>(cube.T) * cube.B);
    for (int t = 0; t < cube.T; ++t) {
        for (int b = 0; b < cube.B; ++b) f[static_cast<std::size_t>(t) * cube.B + b] = cube.at(t, b, row, col);
    }
    return f;
}

std::vector<PixelSample> sample_pixels(std::span<const LabelRaster> labels, std::span<const SitsPatch> tiles,
                                       const ForestConfig& cfg)
{
    cfg.validate();
    if (labels.size() != tiles.size()) throw ShapeError("one label raster per tile is required");
    std::vector<PixelSample> out;
    for (std::size_t k = 0; k < tiles.size(); ++k) {
        const auto& lab = labels[k];
        const auto& cube = tiles[k];
        if (lab.H != cube.H || lab.W != cube.W) throw ShapeError("labels do not match tile footprint");
        std::mt19937_64 rng(mix(cfg.seed ^ mix(k + 1)));
        auto make = [&](int i, int j) {
            PixelSample s;
            s.features = pixel_features(cube, i, j);
            s.crop = lab.crop[lab.index(i, j)];
            s.mgmt = lab.mgmt[lab.index(i, j)];
            s.field_id = lab.field[lab.index(i, j)];
            s.tile_id = cube.origin.tile_id;
            s.row = i;
            s.col = j;
            return s;
        };
        std::vector<std::uint32_t> fields;
        std::vector<std::size_t> background;
        for (std::size_t p = 0; p < lab.field.size(); ++p) {
            if (lab.field[p] != 0) {
                fields.push_back(lab.field[p]);
            } else {
                background.push_back(p);
            }
        }
        std::sort(fields.begin(), fields.end());
        fields.erase(std::unique(fields.begin(), fields.end()), fields.end());
        for (auto f : fields) {
            const auto eligible = eroded_pixels(lab, f, cfg.buffer_px);
            if (eligible.empty()) continue;
            std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
            const auto [i, j] = eligible[pick(rng)];
            out.push_back(make(i, j));
        }
        const auto n_bg = std::min(background.size(), static_cast<std::size_t>(cfg.background_per_tile));
        for (std::size_t i = 0; i < n_bg; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, background.size() - 1);
            std::swap(background[i], background[pick(rng)]);
        }
        background.resize(n_bg);
        std::sort(background.begin(), background.end());
        for (auto p : background) out.push_back(make(static_cast<int>(p) / lab.W, static_cast<int>(p) % lab.W));
    }
    return out;
}

Eigen::MatrixXf feature_matrix(std::span<const PixelSample> samples)
{
    if (samples.empty()) return {};
    const auto f = static_cast<Eigen::Index>(samples.front().features.size());
    Eigen::MatrixXf x(static_cast<Eigen::Index>(samples.size()), f);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (static_cast<Eigen::Index>(samples[i].features.size()) != f) throw ShapeError("feature lengths differ");
        x.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXf>(samples[i].features.data(), f);
    }
    return x;
}

int DecisionTree::predict(std::span<const float> x) const
{
    int node = 0;
    while (feature[static_cast<std::size_t>(node)] >= 0) {
        const auto n = static_cast<std::size_t>(node);
        node = static_cast<double>(x[static_cast<std::size_t>(feature[n])]) <= threshold[n] ? left[n] : right[n];
    }
    return leaf_class[static_cast<std::size_t>(node)];
}

namespace {

class TreeBuilder {
public:
    TreeBuilder(const Eigen::MatrixXf& x, std::span<const int> y, int n_classes, const ForestConfig& cfg, int mtry,
                std::uint64_t seed)
        : x_(x), y_(y), k_(n_classes), cfg_(cfg), mtry_(mtry), rng_(seed)
    {
    }

    DecisionTree build()
    {
        const auto n = static_cast<std::size_t>(x_.rows());
        std::vector<int> rows(n);
        std::uniform_int_distribution<int> pick(0, static_cast<int>(n) - 1);
        for (auto& r : rows) r = pick(rng_);
        grow(rows, 0);
        return std::move(tree_);
    }

private:
    struct Split {
        int feature = -1;
        double threshold = 0;
        double score = 0; // weighted child impurity sum, lower is better
    };

    int majority(std::span<const int> counts) const
    {
        return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    }

    int new_node()
    {
        tree_.feature.push_back(-1);
        tree_.threshold.push_back(0);
        tree_.left.push_back(-1);
        tree_.right.push_back(-1);
        tree_.leaf_class.push_back(0);
        return static_cast<int>(tree_.feature.size()) - 1;
    }

    static double gini_sum(std::span<const double> counts, double total)
    {
        double sq = 0;
        for (double c : counts) sq += c * c;
        return total - sq / total; // total * gini
    }

    int grow(std::vector<int>& rows, int depth)
    {
        const int node = new_node();
        std::vector<int> counts(static_cast<std::size_t>(k_), 0);
        for (int r : rows) ++counts[static_cast<std::size_t>(y_[static_cast<std::size_t>(r)])];
        const auto un = static_cast<std::size_t>(node);
        tree_.leaf_class[un] = majority(counts);
        const bool pure = std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }) <= 1;
        const bool deep = cfg_.max_depth > 0 && depth >= cfg_.max_depth;
        if (pure || deep || rows.size() < 2 * static_cast<std::size_t>(cfg_.min_leaf)) return node;

        const auto split = best_split(rows, counts);
        if (split.feature < 0) return node;
        std::vector<int> lo, hi;
        for (int r : rows) {
            (static_cast<double>(x_(r, split.feature)) <= split.threshold ? lo : hi).push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();
        tree_.feature[un] = split.feature;
        tree_.threshold[un] = split.threshold;
        const int l = grow(lo, depth + 1);
        tree_.left[un] = l;
        const int h = grow(hi, depth + 1);
        tree_.right[un] = h;
        return node;
    }

    Split best_split(const std::vector<int>& rows, const std::vector<int>& counts)
    {
        const auto n = rows.size();
        const auto min_leaf = static_cast<std::size_t>(cfg_.min_leaf);
        std::vector<int> features(static_cast<std::size_t>(x_.cols()));
        std::iota(features.begin(), features.end(), 0);
        std::shuffle(features.begin(), features.end(), rng_);

        Split best;
        best.score = std::numeric_limits<double>::infinity();
        std::vector<std::pair<float, int>> order(n);
        std::vector<double> left(static_cast<std::size_t>(k_)), right(static_cast<std::size_t>(k_));
        int examined = 0;
        for (int f : features) {
            if (examined >= mtry_) break;
            for (std::size_t i = 0; i < n; ++i) order[i] = {x_(rows[i], f), y_[static_cast<std::size_t>(rows[i])]};
            std::sort(order.begin(), order.end());
            if (order.front().first == order.back().first) continue;
            ++examined;
            std::fill(left.begin(), left.end(), 0.0);
            for (int c = 0; c < k_; ++c) right[static_cast<std::size_t>(c)] = counts[static_cast<std::size_t>(c)];
            for (std::size_t i = 0; i + 1 < n; ++i) {
                const auto c = static_cast<std::size_t>(order[i].second);
                left[c] += 1;
                right[c] -= 1;
                if (order[i].first == order[i + 1].first) continue;
                const std::size_t nl = i + 1, nr = n - nl;
                if (nl < min_leaf || nr < min_leaf) continue;
                const double score =
                    gini_sum(left, static_cast<double>(nl)) + gini_sum(right, static_cast<double>(nr));
                if (score < best.score) {
                    best.score = score;
                    best.feature = f;
                    best.threshold = (static_cast<double>(order[i].first) + static_cast<double>(order[i + 1].first)) / 2;
                }
            }
        }
        return best;
    }

    const Eigen::MatrixXf& x_;
    std::span<const int> y_;
    int k_;
    const ForestConfig& cfg_;
    int mtry_;
    std::mt19937_64 rng_;
    DecisionTree tree_;
};

} // namespace

Forest fit_forest(const Eigen::MatrixXf& x, std::span<const int> y, int n_classes, const ForestConfig& cfg, int threads)
{
    cfg.validate();
    if (x.rows() == 0 || static_cast<std::size_t>(x.rows()) != y.size()) {
        throw ShapeError("need one label per sample and at least one sample");
    }
    if (n_classes <= 0) n_classes = *std::max_element(y.begin(), y.end()) + 1;
    std::vector<bool> present(static_cast<std::size_t>(n_classes), false);
    for (int c : y) {
        if (c < 0 || c >= n_classes) throw IndexError("label " + std::to_string(c) + " outside [0, " + std::to_string(n_classes) + ")");
        present[static_cast<std::size_t>(c)] = true;
    }
    if (std::count(present.begin(), present.end(), true) < 2) throw InputError("forest needs at least two classes");

    const int f = static_cast<int>(x.cols());
    const int mtry = cfg.features_per_split > 0 ? std::min(cfg.features_per_split, f)
                                                : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(f))));
    Forest forest;
    forest.n_classes = n_classes;
    forest.n_features = f;
    forest.trees.resize(static_cast<std::size_t>(cfg.n_trees));
    const int workers = std::max(1, std::min(threads, cfg.n_trees));
    {
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (int t = w; t < cfg.n_trees; t += workers) {
                    TreeBuilder b(x, y, n_classes, cfg, mtry, mix(cfg.seed ^ mix(static_cast<std::uint64_t>(t) + 1)));
                    forest.trees[static_cast<std::size_t>(t)] = b.build();
                }
            });
        }
    }
    return forest;
}

ForestVote predict_forest(const Forest& forest, std::span<const float> features)
{
    if (static_cast<int>(features.size()) != forest.n_features) {
        throw ShapeError("feature vector has length " + std::to_string(features.size()) + ", forest expects " +
                         std::to_string(forest.n_features));
    }
    if (forest.trees.empty()) throw InputError("forest has no trees");
    std::vector<int> votes(static_cast<std::size_t>(forest.n_classes), 0);
    for (const auto& t : forest.trees) ++votes[static_cast<std::size_t>(t.predict(features))];
    ForestVote out;
    out.label = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    for (int v : votes) out.shares.push_back(static_cast<double>(v) / static_cast<double>(forest.trees.size()));
    return out;
}

nlohmann::json to_json(const Forest& forest)
{
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : forest.trees) {
        trees.push_back({{"feature", t.feature},
                         {"threshold", t.threshold},
                         {"left", t.left},
                         {"right", t.right},
                         {"leaf_class", t.leaf_class}});
    }
    return {{"kind", "random-forest"}, {"n_classes", forest.n_classes}, {"n_features", forest.n_features}, {"trees", trees}};
}

Forest forest_from_json(const nlohmann::json& j)
{
    Forest f;
    try {
        if (j.at("kind").get<std::string>() != "random-forest") throw FormatError("forest: wrong kind");
        f.n_classes = j.at("n_classes").get<int>();
        f.n_features = j.at("n_features").get<int>();
        for (const auto& t : j.at("trees")) {
            DecisionTree d;
            d.feature = t.at("feature").get<std::vector<int>>();
            d.threshold = t.at("threshold").get<std::vector<double>>();
            d.left = t.at("left").get<std::vector<int>>();
            d.right = t.at("right").get<std::vector<int>>();
            d.leaf_class = t.at("leaf_class").get<std::vector<int>>();
            const auto n = d.feature.size();
            if (n == 0 || d.threshold.size() != n || d.left.size() != n || d.right.size() != n || d.leaf_class.size() != n) {
                throw FormatError("forest: tree arrays differ in length");
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (d.feature[i] >= f.n_features) throw FormatError("forest: feature index out of range");
                const bool internal = d.feature[i] >= 0;
                if (internal && (d.left[i] <= static_cast<int>(i) || d.right[i] <= static_cast<int>(i) ||
                                 d.left[i] >= static_cast<int>(n) || d.right[i] >= static_cast<int>(n))) {
                    throw FormatError("forest: bad child index");
                }
            }
            f.trees.push_back(std::move(d));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("forest: ") + e.what());
    }
    return f;
}

} // namespace sits
