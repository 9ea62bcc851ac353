#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "sits/binary_io.hpp"
#include "sits/dataset.hpp"
#include "sits/error.hpp"

namespace sits {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using io::read_plane;
using io::write_plane;

void write_json(const fs::path& path, const json& j)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

json read_manifest(const fs::path& dir)
{
    const auto path = dir / "manifest.json";
    std::ifstream is(path);
    if (!is) throw FormatError("manifest.json: missing in " + dir.string());
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw FormatError("manifest.json: not valid JSON (" + std::string(e.what()) + ")");
    }
}

template <typename T>
T field(const json& j, const char* name)
{
    if (!j.contains(name)) throw FormatError("manifest.json: missing field '" + std::string(name) + "'");
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        throw FormatError("manifest.json: field '" + std::string(name) + "' has the wrong type");
    }
}

void expect_value(const json& j, const char* name, const std::string& expected)
{
    const auto got = field<std::string>(j, name);
    if (got != expected) {
        throw FormatError("manifest.json: field '" + std::string(name) + "' is \"" + got + "\", expected \"" +
                          expected + "\"");
    }
}

std::vector<int> read_shape(const json& j, std::size_t rank)
{
    const auto shape = field<std::vector<long long>>(j, "shape");
    if (shape.size() != rank) {
        throw FormatError("manifest.json: field 'shape' must have " + std::to_string(rank) + " entries");
    }
    std::vector<int> out;
    for (auto d : shape) {
        if (d <= 0 || d > (1 << 20)) throw FormatError("manifest.json: field 'shape' has an invalid extent");
        out.push_back(static_cast<int>(d));
    }
    return out;
}

json origin_json(const PatchOrigin& o) { return {{"tile_id", o.tile_id}, {"row", o.row}, {"col", o.col}}; }

PatchOrigin read_origin(const json& j)
{
    const auto o = field<json>(j, "origin");
    PatchOrigin out;
    out.tile_id = field<std::string>(o, "tile_id");
    out.row = field<int>(o, "row");
    out.col = field<int>(o, "col");
    return out;
}

void write_labels(const fs::path& dir, const LabelRaster& labels)
{
    write_plane<std::uint16_t>(dir / "crop.bin", labels.crop);
    write_plane<std::uint8_t>(dir / "mgmt.bin", labels.mgmt);
    write_plane<std::uint32_t>(dir / "field.bin", labels.field);
}

LabelRaster read_labels(const fs::path& dir, int h, int w)
{
    LabelRaster labels;
    labels.H = h;
    labels.W = w;
    const auto n = static_cast<std::size_t>(h) * w;
    labels.crop = read_plane<std::uint16_t>(dir / "crop.bin", n);
    labels.mgmt = read_plane<std::uint8_t>(dir / "mgmt.bin", n);
    labels.field = read_plane<std::uint32_t>(dir / "field.bin", n);
    return labels;
}

json label_planes() { return {{"crop", "uint16"}, {"mgmt", "uint8"}, {"field", "uint32"}}; }

} // namespace

void write_uint8_plane(const fs::path& path, std::span<const std::uint8_t> values)
{
    write_plane<std::uint8_t>(path, values);
}

void write_patch(const fs::path& dir, const SitsPatch& patch, const LabelRaster& labels)
{
    if (patch.data.size() != static_cast<std::size_t>(patch.T) * patch.B * patch.H * patch.W) {
        throw ShapeError("patch data does not match its shape");
    }
    if (labels.H != patch.H || labels.W != patch.W) throw ShapeError("labels do not match patch footprint");
    fs::create_directories(dir);
    json j;
    j["kind"] = "patch";
    j["dtype"] = "float32";
    j["layout"] = "TBHW";
    j["shape"] = {patch.T, patch.B, patch.H, patch.W};
    j["dates"] = patch.dates;
    j["bands"] = patch.bands;
    j["origin"] = origin_json(patch.origin);
    j["pixel_size"] = patch.pixel_size;
    j["endianness"] = "little";
    j["planes"] = label_planes();
    write_json(dir / "manifest.json", j);
    write_plane<float>(dir / "data.bin", patch.data);
    write_labels(dir, labels);
}

LabeledPatch read_patch(const fs::path& dir)
{
    const auto j = read_manifest(dir);
    expect_value(j, "dtype", "float32");
    expect_value(j, "layout", "TBHW");
    expect_value(j, "endianness", "little");
    const auto shape = read_shape(j, 4);
    LabeledPatch out;
    SitsPatch& p = out.patch;
    p.T = shape[0];
    p.B = shape[1];
    p.H = shape[2];
    p.W = shape[3];
    p.dates = field<std::vector<std::string>>(j, "dates");
    p.bands = field<std::vector<std::string>>(j, "bands");
    if (p.dates.size() != static_cast<std::size_t>(p.T)) throw FormatError("manifest.json: field 'dates' does not match shape[0]");
    if (p.bands.size() != static_cast<std::size_t>(p.B)) throw FormatError("manifest.json: field 'bands' does not match shape[1]");
    p.origin = read_origin(j);
    if (j.contains("pixel_size")) p.pixel_size = field<double>(j, "pixel_size");
    p.data = read_plane<float>(dir / "data.bin", static_cast<std::size_t>(p.T) * p.B * p.H * p.W);
    out.labels = read_labels(dir, p.H, p.W);
    return out;
}

void write_observations(const fs::path& dir, const ObservationStack& stack, const LabelRaster& labels)
{
    if (stack.values.size() != static_cast<std::size_t>(stack.N) * stack.B * stack.H * stack.W ||
        stack.valid.size() != static_cast<std::size_t>(stack.N) * stack.H * stack.W ||
        stack.days.size() != static_cast<std::size_t>(stack.N)) {
        throw ShapeError("observation stack buffers do not match its shape");
    }
    fs::create_directories(dir);
    json j;
    j["kind"] = "observations";
    j["dtype"] = "float32";
    j["layout"] = "NBHW";
    j["shape"] = {stack.N, stack.B, stack.H, stack.W};
    j["days"] = stack.days;
    std::vector<std::string> dates;
    for (double d : stack.days) dates.push_back(iso_date(d));
    j["dates"] = dates;
    j["bands"] = stack.bands;
    j["origin"] = origin_json({stack.tile_id, 0, 0});
    j["endianness"] = "little";
    j["planes"] = label_planes();
    j["planes"]["valid"] = "uint8";
    write_json(dir / "manifest.json", j);
    write_plane<float>(dir / "obs.bin", stack.values);
    write_plane<std::uint8_t>(dir / "valid.bin", stack.valid);
    write_labels(dir, labels);
}

std::pair<ObservationStack, LabelRaster> read_observations(const fs::path& dir)
{
    const auto j = read_manifest(dir);
    expect_value(j, "dtype", "float32");
    expect_value(j, "layout", "NBHW");
    expect_value(j, "endianness", "little");
    const auto shape = read_shape(j, 4);
    ObservationStack s;
    s.N = shape[0];
    s.B = shape[1];
    s.H = shape[2];
    s.W = shape[3];
    s.days = field<std::vector<double>>(j, "days");
    if (s.days.size() != static_cast<std::size_t>(s.N)) throw FormatError("manifest.json: field 'days' does not match shape[0]");
    s.bands = field<std::vector<std::string>>(j, "bands");
    s.tile_id = read_origin(j).tile_id;
    s.values = read_plane<float>(dir / "obs.bin", static_cast<std::size_t>(s.N) * s.B * s.H * s.W);
    s.valid = read_plane<std::uint8_t>(dir / "valid.bin", static_cast<std::size_t>(s.N) * s.H * s.W);
    return {std::move(s), read_labels(dir, shape[2], shape[3])};
}

void write_prediction(const fs::path& dir, const SitsPatch& footprint, const LabelRaster& labels,
                      const PredictionPlanes& pred)
{
    const auto n = static_cast<std::size_t>(footprint.H) * footprint.W;
    if ((pred.crop && pred.crop->size() != n) || (pred.mgmt && pred.mgmt->size() != n)) {
        throw ShapeError("prediction planes do not match the patch footprint");
    }
    fs::create_directories(dir);
    json j;
    j["kind"] = "prediction";
    j["layout"] = "HW";
    j["shape"] = {footprint.T, footprint.B, footprint.H, footprint.W};
    j["origin"] = origin_json(footprint.origin);
    j["pixel_size"] = footprint.pixel_size;
    j["endianness"] = "little";
    j["planes"] = label_planes();
    if (pred.crop) j["planes"]["crop_pred"] = "uint16";
    if (pred.mgmt) j["planes"]["mgmt_pred"] = "uint8";
    write_json(dir / "manifest.json", j);
    if (pred.crop) write_plane<std::uint16_t>(dir / "crop_pred.bin", *pred.crop);
    if (pred.mgmt) write_plane<std::uint8_t>(dir / "mgmt_pred.bin", *pred.mgmt);
    write_labels(dir, labels);
}

std::pair<PredictionPlanes, LabelRaster> read_prediction(const fs::path& dir)
{
    const auto j = read_manifest(dir);
    expect_value(j, "kind", "prediction");
    expect_value(j, "endianness", "little");
    const auto shape = read_shape(j, 4);
    const auto planes = field<json>(j, "planes");
    const auto n = static_cast<std::size_t>(shape[2]) * shape[3];
    PredictionPlanes pred;
    if (planes.contains("crop_pred")) pred.crop = read_plane<std::uint16_t>(dir / "crop_pred.bin", n);
    if (planes.contains("mgmt_pred")) pred.mgmt = read_plane<std::uint8_t>(dir / "mgmt_pred.bin", n);
    return {std::move(pred), read_labels(dir, shape[2], shape[3])};
}

std::vector<fs::path> list_patch_dirs(const fs::path& root)
{
    std::vector<fs::path> dirs;
    if (!fs::is_directory(root)) throw FormatError("not a directory: " + root.string());
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

void save_split(const fs::path& path, const SplitAssignment& split)
{
    json j = json::object();
    for (const auto& [tile, role] : split) j[tile] = role_name(role);
    write_json(path, j);
}

SplitAssignment load_split(const fs::path& path)
{
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read split file " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw FormatError(path.string() + ": split file must map tile ids to roles");
    SplitAssignment split;
    for (const auto& [tile, role] : j.items()) {
        if (!role.is_string()) throw FormatError(path.string() + ": role of tile '" + tile + "' is not a string");
        split[tile] = parse_role(role.get<std::string>());
    }
    return split;
}

} // namespace sits
