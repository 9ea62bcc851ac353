#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace sits {

/// Management planes use 0 = Background, 1 = Conventional, 2 = Organic.
enum class Management : std::uint8_t { Background = 0, Conventional = 1, Organic = 2 };

struct PatchOrigin {
    std::string tile_id;
    int row = 0;
    int col = 0;

    bool operator==(const PatchOrigin&) const = default;
};

/// Equidistant time-series cube, row-major [T x B x H x W].
struct SitsPatch {
    int T = 0, B = 0, H = 0, W = 0;
    std::vector<float> data;
    PatchOrigin origin;
    double pixel_size = 10.0;
    std::vector<std::string> dates; // ISO, one per time step
    std::vector<std::string> bands;

    static SitsPatch zeros(int t, int b, int h, int w);

    std::size_t index(int t, int b, int i, int j) const
    {
        return ((static_cast<std::size_t>(t) * B + b) * H + i) * W + j;
    }
    float& at(int t, int b, int i, int j) { return data[index(t, b, i, j)]; }
    float at(int t, int b, int i, int j) const { return data[index(t, b, i, j)]; }

    /// Window [row, row+h) x [col, col+w) with the full time series.
    SitsPatch crop(int row, int col, int h, int w) const;
};

/// Per-pixel reference planes aligned to a patch or tile, row-major [H x W].
struct LabelRaster {
    int H = 0, W = 0;
    std::vector<std::uint16_t> crop;  // 0 = Background
    std::vector<std::uint8_t> mgmt;   // see Management
    std::vector<std::uint32_t> field; // 0 = no field

    static LabelRaster blank(int h, int w);

    std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * W + j; }
    LabelRaster crop_window(int row, int col, int h, int w) const;

    /// Throws InputError if Background is inconsistent across planes or a
    /// field carries more than one crop/management value.
    void validate() const;
};

/// Raw, irregular acquisitions of one tile: values [N x B x H x W], clear-sky
/// flags [N x H x W]; times are days since 2020-01-01.
struct ObservationStack {
    int N = 0, B = 0, H = 0, W = 0;
    std::vector<double> days;
    std::vector<float> values;
    std::vector<std::uint8_t> valid;
    std::string tile_id;
    std::vector<std::string> bands;

    std::size_t value_index(int n, int b, int i, int j) const
    {
        return ((static_cast<std::size_t>(n) * B + b) * H + i) * W + j;
    }
    std::size_t valid_index(int n, int i, int j) const
    {
        return (static_cast<std::size_t>(n) * H + i) * W + j;
    }
};

/// Sentinel-2 band names of the 10-band stack.
const std::vector<std::string>& default_band_names();

/// ISO date (YYYY-MM-DD) of a day offset from 2020-01-01.
std::string iso_date(double day_offset);

} // namespace sits
