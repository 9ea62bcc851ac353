#include "sits/pipeline.hpp"

#include "sits/error.hpp"

namespace sits {

template <typename Scalar>
std::vector<std::vector<int>> predict_patch(const TsvitParams<Scalar>& params, const TsvitConfig& model,
                                            const SitsPatch& patch, int chunk)
{
    const int px = model.patch_px;
    if (patch.H % px != 0 || patch.W % px != 0) {
        throw ShapeError("model edge " + std::to_string(px) + " does not divide " + std::to_string(patch.H) + "x" +
                         std::to_string(patch.W) + " patch");
    }
    NoGradGuard no_grad;
    std::vector<SitsPatch> windows;
    std::vector<std::pair<int, int>> corners;
    for (int r = 0; r < patch.H; r += px) {
        for (int c = 0; c < patch.W; c += px) {
            windows.push_back(patch.H == px && patch.W == px ? patch : patch.crop(r, c, px, px));
            corners.emplace_back(r, c);
        }
    }
    std::vector<std::vector<int>> out(model.tasks.size(),
                                      std::vector<int>(static_cast<std::size_t>(patch.H) * patch.W, 0));
    const auto step = static_cast<std::size_t>(std::max(chunk, 1));
    for (std::size_t start = 0; start < windows.size(); start += step) {
        const auto end = std::min(windows.size(), start + step);
        const auto logits = forward(
            patches_to_tensor<Scalar>(std::span<const SitsPatch>(windows.data() + start, end - start)), params, model);
        for (std::size_t t = 0; t < model.tasks.size(); ++t) {
            const auto pred = predict(logits[t]);
            for (std::size_t w = start; w < end; ++w) {
                const auto [r0, c0] = corners[w];
                for (int i = 0; i < px; ++i) {
                    for (int j = 0; j < px; ++j) {
                        out[t][static_cast<std::size_t>(r0 + i) * patch.W + (c0 + j)] =
                            pred[((w - start) * px + i) * px + j];
                    }
                }
            }
        }
    }
    return out;
}

std::vector<int> predict_forest_raster(const Forest& forest, const SitsPatch& cube)
{
    std::vector<int> out(static_cast<std::size_t>(cube.H) * cube.W);
    for (int i = 0; i < cube.H; ++i) {
        for (int j = 0; j < cube.W; ++j) {
            const auto f = pixel_features(cube, i, j);
            out[static_cast<std::size_t>(i) * cube.W + j] = predict_forest(forest, f).label;
        }
    }
    return out;
}

std::vector<LabeledPatch> tile_patches(const SitsPatch& cube, const LabelRaster& labels, int patch_px, bool filter,
                                       double threshold)
{
    auto all = extract_patches(cube, labels, patch_px);
    if (!filter) return all;
    std::vector<LabeledPatch> kept;
    for (auto& p : all) {
        if (agri_share_filter(p.labels, threshold)) kept.push_back(std::move(p));
    }
    return kept;
}

template std::vector<std::vector<int>> predict_patch<float>(const TsvitParams<float>&, const TsvitConfig&,
                                                            const SitsPatch&, int);
template std::vector<std::vector<int>> predict_patch<double>(const TsvitParams<double>&, const TsvitConfig&,
                                                             const SitsPatch&, int);

} // namespace sits
