#include "sits/checkpoint.hpp"

#include <fstream>

#include "sits/binary_io.hpp"
#include "sits/error.hpp"

namespace sits {

namespace fs = std::filesystem;
using nlohmann::json;

json to_json(const TsvitConfig& c)
{
    json tasks = json::array();
    for (const auto& t : c.tasks) tasks.push_back({{"name", t.name}, {"n_classes", t.n_classes}});
    return {{"patch_px", c.patch_px},           {"subpatch_px", c.subpatch_px},
            {"embed_dim", c.embed_dim},         {"temporal_depth", c.temporal_depth},
            {"spatial_depth", c.spatial_depth}, {"heads", c.heads},
            {"head_dim", c.head_dim},           {"mlp_ratio", c.mlp_ratio},
            {"T", c.T},                         {"B", c.B},
            {"tasks", tasks},                   {"seed", c.seed}};
}

TsvitConfig tsvit_config_from_json(const json& j)
{
    TsvitConfig c;
    try {
        c.patch_px = j.at("patch_px").get<int>();
        c.subpatch_px = j.at("subpatch_px").get<int>();
        c.embed_dim = j.at("embed_dim").get<int>();
        c.temporal_depth = j.at("temporal_depth").get<int>();
        c.spatial_depth = j.at("spatial_depth").get<int>();
        c.heads = j.at("heads").get<int>();
        c.head_dim = j.at("head_dim").get<int>();
        c.mlp_ratio = j.at("mlp_ratio").get<int>();
        c.T = j.at("T").get<int>();
        c.B = j.at("B").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.tasks.clear();
        for (const auto& t : j.at("tasks")) c.tasks.push_back({t.at("name").get<std::string>(), t.at("n_classes").get<int>()});
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest.json: bad model config (") + e.what() + ")");
    }
    c.validate();
    return c;
}

namespace {

template <typename Scalar>
constexpr const char* dtype_name()
{
    return sizeof(Scalar) == 4 ? "float32" : "float64";
}

json read_json(const fs::path& path)
{
    std::ifstream is(path);
    if (!is) throw FormatError(path.filename().string() + ": missing in " + path.parent_path().string());
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw FormatError(path.filename().string() + ": not valid JSON (" + e.what() + ")");
    }
}

} // namespace

template <typename Scalar>
void save_checkpoint(const fs::path& dir, const TsvitConfig& cfg, const TsvitParams<Scalar>& params)
{
    fs::create_directories(dir);
    json table = json::array();
    std::vector<Scalar> flat;
    flat.reserve(params.count());
    for (const auto& [name, t] : params.entries()) {
        table.push_back({{"name", name}, {"shape", t.shape()}, {"offset", flat.size()}, {"count", t.size()}});
        flat.insert(flat.end(), t.data().data(), t.data().data() + t.size());
    }
    json manifest{{"kind", "tsvit-checkpoint"}, {"dtype", dtype_name<Scalar>()}, {"endianness", "little"},
                  {"config", to_json(cfg)},     {"parameters", table},           {"total", flat.size()}};
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    if (!os) throw FormatError("cannot write " + (dir / "manifest.json").string());
    os << manifest.dump(2) << '\n';
    io::write_plane<Scalar>(dir / "params.bin", flat);
}

CheckpointInfo read_checkpoint_info(const fs::path& dir)
{
    const auto m = read_json(dir / "manifest.json");
    if (m.value("kind", "") != "tsvit-checkpoint") throw FormatError("manifest.json: not a model checkpoint");
    const auto dtype = m.value("dtype", "");
    if (dtype != "float32" && dtype != "float64") throw FormatError("manifest.json: unsupported dtype '" + dtype + "'");
    if (!m.contains("config")) throw FormatError("manifest.json: missing field 'config'");
    return {tsvit_config_from_json(m["config"]), dtype};
}

namespace {

template <typename Stored, typename Scalar>
TsvitParams<Scalar> load_as(const fs::path& dir, const json& m, const TsvitConfig& cfg)
{
    std::size_t total = 0;
    try {
        total = m.at("total").get<std::size_t>();
    } catch (const json::exception&) {
        throw FormatError("manifest.json: missing field 'total'");
    }
    const auto flat = io::read_plane<Stored>(dir / "params.bin", total);
    const auto expected = TsvitParams<Scalar>::init(cfg);
    TsvitParams<Scalar> out;
    for (const auto& entry : m.at("parameters")) {
        const auto name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<Shape>();
        const auto offset = entry.at("offset").get<std::size_t>();
        if (!expected.contains(name)) throw FormatError("manifest.json: unexpected parameter '" + name + "'");
        if (expected.at(name).shape() != shape) {
            throw FormatError("manifest.json: parameter '" + name + "' has shape " + shape_str(shape) + ", expected " +
                              shape_str(expected.at(name).shape()));
        }
        const auto n = static_cast<std::size_t>(numel(shape));
        if (offset + n > flat.size()) throw FormatError("params.bin: parameter '" + name + "' runs past the end");
        typename Tensor<Scalar>::Array a(static_cast<Index>(n));
        for (std::size_t i = 0; i < n; ++i) a[static_cast<Index>(i)] = static_cast<Scalar>(flat[offset + i]);
        if (!a.allFinite()) throw FormatError("params.bin: parameter '" + name + "' is not finite");
        out.add(name, Tensor<Scalar>(shape, std::move(a), true));
    }
    if (out.entries().size() != expected.entries().size()) throw FormatError("manifest.json: parameter table incomplete");
    return out;
}

} // namespace

template <typename Scalar>
TsvitParams<Scalar> load_checkpoint(const fs::path& dir, TsvitConfig* cfg_out)
{
    const auto info = read_checkpoint_info(dir);
    const auto m = read_json(dir / "manifest.json");
    auto params = info.dtype == "float32" ? load_as<float, Scalar>(dir, m, info.config)
                                          : load_as<double, Scalar>(dir, m, info.config);
    if (cfg_out) *cfg_out = info.config;
    return params;
}

template void save_checkpoint<float>(const fs::path&, const TsvitConfig&, const TsvitParams<float>&);
template void save_checkpoint<double>(const fs::path&, const TsvitConfig&, const TsvitParams<double>&);
template TsvitParams<float> load_checkpoint<float>(const fs::path&, TsvitConfig*);
template TsvitParams<double> load_checkpoint<double>(const fs::path&, TsvitConfig*);

} // namespace sits
