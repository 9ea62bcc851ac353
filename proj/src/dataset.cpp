#include "sits/dataset.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "sits/error.hpp"

namespace sits {

SitsPatch SitsPatch::zeros(int t, int b, int h, int w)
{
    SitsPatch p;
    p.T = t;
    p.B = b;
    p.H = h;
    p.W = w;
    p.data.assign(static_cast<std::size_t>(t) * b * h * w, 0.0f);
    return p;
}

SitsPatch SitsPatch::crop(int row, int col, int h, int w) const
{
    if (row < 0 || col < 0 || row + h > H || col + w > W) {
        throw ShapeError("crop window exceeds " + std::to_string(H) + "x" + std::to_string(W) + " patch");
    }
    SitsPatch out = zeros(T, B, h, w);
    out.origin = {origin.tile_id, origin.row + row, origin.col + col};
    out.pixel_size = pixel_size;
    out.dates = dates;
    out.bands = bands;
    for (int t = 0; t < T; ++t) {
        for (int b = 0; b < B; ++b) {
            for (int i = 0; i < h; ++i) {
                const float* src = data.data() + index(t, b, row + i, col);
                std::copy(src, src + w, out.data.data() + out.index(t, b, i, 0));
            }
        }
    }
    return out;
}

LabelRaster LabelRaster::blank(int h, int w)
{
    LabelRaster r;
    r.H = h;
    r.W = w;
    const auto n = static_cast<std::size_t>(h) * w;
    r.crop.assign(n, 0);
    r.mgmt.assign(n, 0);
    r.field.assign(n, 0);
    return r;
}

LabelRaster LabelRaster::crop_window(int row, int col, int h, int w) const
{
    if (row < 0 || col < 0 || row + h > H || col + w > W) throw ShapeError("label window exceeds raster");
    LabelRaster out = blank(h, w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            out.crop[out.index(i, j)] = crop[index(row + i, col + j)];
            out.mgmt[out.index(i, j)] = mgmt[index(row + i, col + j)];
            out.field[out.index(i, j)] = field[index(row + i, col + j)];
        }
    }
    return out;
}

void LabelRaster::validate() const
{
    const auto n = static_cast<std::size_t>(H) * W;
    if (crop.size() != n || mgmt.size() != n || field.size() != n) throw InputError("label planes do not match raster size");
    std::map<std::uint32_t, std::pair<std::uint16_t, std::uint8_t>> seen;
    for (std::size_t k = 0; k < n; ++k) {
        const bool bg_crop = crop[k] == 0, bg_mgmt = mgmt[k] == 0, bg_field = field[k] == 0;
        if (bg_crop != bg_mgmt || bg_crop != bg_field) {
            throw InputError("labels: Background inconsistent across planes at pixel " + std::to_string(k));
        }
        if (mgmt[k] > 2) throw InputError("labels: management id " + std::to_string(mgmt[k]) + " out of range");
        if (bg_field) continue;
        auto [it, fresh] = seen.emplace(field[k], std::make_pair(crop[k], mgmt[k]));
        if (!fresh && it->second != std::make_pair(crop[k], mgmt[k])) {
            throw InputError("labels: field " + std::to_string(field[k]) + " is not constant");
        }
    }
}

const std::vector<std::string>& default_band_names()
{
    static const std::vector<std::string> names{"B02", "B03", "B04", "B05", "B06",
                                                "B07", "B08", "B8A", "B11", "B12"};
    return names;
}

std::string iso_date(double day_offset)
{
    using namespace std::chrono;
    const sys_days day = sys_days{year{2020} / January / 1} + days{static_cast<int>(std::floor(day_offset))};
    const year_month_day ymd{day};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

std::vector<TileRect> tile_grid(int height_px, int width_px, int tile_px)
{
    if (tile_px <= 0) throw ConfigError("tile size must be positive");
    std::vector<TileRect> tiles;
    for (int r = 0; r + tile_px <= height_px; r += tile_px) {
        for (int c = 0; c + tile_px <= width_px; c += tile_px) tiles.push_back({r, c, tile_px, tile_px});
    }
    return tiles;
}

std::vector<LabeledPatch> extract_patches(const SitsPatch& tile, const LabelRaster& labels, int patch_px)
{
    if (labels.H != tile.H || labels.W != tile.W) throw ShapeError("labels do not match tile footprint");
    std::vector<LabeledPatch> out;
    for (const auto& rect : tile_grid(tile.H, tile.W, patch_px)) {
        out.push_back({tile.crop(rect.row, rect.col, rect.height, rect.width),
                       labels.crop_window(rect.row, rect.col, rect.height, rect.width)});
    }
    return out;
}

bool agri_share_filter(const LabelRaster& labels, double threshold)
{
    if (labels.crop.empty()) return false;
    std::size_t agri = 0;
    for (auto c : labels.crop) agri += c != 0;
    // share and threshold round to the same double when they are equal (135/900 vs 0.15)
    return static_cast<double>(agri) / static_cast<double>(labels.crop.size()) > threshold;
}

std::vector<LabeledPatch> subdivide(const LabeledPatch& item, int px)
{
    if (px <= 0 || item.patch.H % px != 0 || item.patch.W % px != 0) {
        throw ShapeError("sub-patch size " + std::to_string(px) + " does not divide " + std::to_string(item.patch.H) +
                         "x" + std::to_string(item.patch.W) + " patch");
    }
    std::vector<LabeledPatch> out;
    for (int r = 0; r < item.patch.H; r += px) {
        for (int c = 0; c < item.patch.W; c += px) {
            out.push_back({item.patch.crop(r, c, px, px), item.labels.crop_window(r, c, px, px)});
        }
    }
    return out;
}

std::string role_name(SplitRole role)
{
    switch (role) {
    case SplitRole::Train: return "train";
    case SplitRole::Validation: return "validation";
    case SplitRole::Test: return "test";
    }
    return "train";
}

SplitRole parse_role(const std::string& name)
{
    if (name == "train") return SplitRole::Train;
    if (name == "validation") return SplitRole::Validation;
    if (name == "test") return SplitRole::Test;
    throw FormatError("unknown split role '" + name + "'");
}

} // namespace sits
