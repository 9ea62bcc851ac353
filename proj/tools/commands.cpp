#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "sits/checkpoint.hpp"
#include "sits/dataset.hpp"
#include "sits/error.hpp"
#include "sits/forest.hpp"
#include "sits/metrics.hpp"
#include "sits/normalize.hpp"
#include "sits/pipeline.hpp"
#include "sits/rbf.hpp"
#include "sits/run_config.hpp"
#include "sits/synth.hpp"
#include "sits/trainer.hpp"

namespace sits::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ------------------------------------------------------------ run manifest

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const char* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
    void update(const std::string& s) { update(s.data(), s.size()); }

    std::string hex()
    {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_, md, &len);
        std::string out;
        char h[3];
        for (unsigned int i = 0; i < len; ++i) {
            std::snprintf(h, sizeof h, "%02x", md[i]);
            out += h;
        }
        return out;
    }

private:
    EVP_MD_CTX* ctx_;
};

std::string sha256_file(const fs::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot read " + path.string());
    Sha256 h;
    std::vector<char> buf(1 << 16);
    while (is) {
        is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h.update(buf.data(), static_cast<std::size_t>(is.gcount()));
    }
    return h.hex();
}

std::vector<fs::path> files_under(const fs::path& root)
{
    std::vector<fs::path> out;
    if (fs::is_regular_file(root)) return {root};
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Digest of a file, or of the sorted (relative path, digest) list of a tree.
std::string sha256_tree(const fs::path& root)
{
    if (fs::is_regular_file(root)) return sha256_file(root);
    Sha256 h;
    for (const auto& f : files_under(root)) h.update(fs::relative(f, root).generic_string() + ' ' + sha256_file(f) + '\n');
    return h.hex();
}

void write_json_file(const fs::path& path, const json& j)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

struct Context {
    RunConfig config;
    std::map<std::string, std::string> paths; // flag name -> value
    int threads = 1;

    const std::string& path(const std::string& name) const { return paths.at(name); }
};

/// run.json beside the outputs: resolved settings, seed, input digests and
/// one digest per output file. Paths are stored relative to the output.
void write_run_manifest(const std::string& command, const Context& ctx, const fs::path& out_root,
                        const std::vector<std::string>& inputs)
{
    json m;
    m["command"] = command;
    m["config"] = ctx.config.to_json();
    if (ctx.config.has("seed")) m["seed"] = ctx.config.get_uint64("seed");
    json in = json::object();
    for (const auto& name : inputs) {
        const auto& p = ctx.path(name);
        if (!p.empty()) in[name] = {{"path", p}, {"sha256", sha256_tree(p)}};
    }
    m["inputs"] = in;
    json out = json::object();
    const auto root = fs::is_directory(out_root) ? out_root : out_root.parent_path();
    for (const auto& f : files_under(out_root)) {
        if (f.filename() == "run.json") continue;
        out[fs::relative(f, root).generic_string()] = sha256_file(f);
    }
    m["outputs"] = out;
    const auto name = fs::is_directory(out_root) ? std::string("run.json") : out_root.filename().string() + ".run.json";
    write_json_file(root / name, m);
}

// ---------------------------------------------------------------- commands

std::vector<ConfigKey> synth_keys()
{
    const SynthConfig d;
    auto s = [](double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };
    return {{"seed", std::to_string(d.seed), "generator seed"},
            {"n_tiles", std::to_string(d.n_tiles), "number of tiles"},
            {"tile_px", std::to_string(d.tile_px), "tile edge in pixels"},
            {"validation_tiles", std::to_string(d.validation_tiles), "tiles assigned to validation"},
            {"test_tiles", std::to_string(d.test_tiles), "tiles assigned to test"},
            {"n_crops", std::to_string(d.n_crops), "number of crop types"},
            {"organic_share", s(d.organic_share), "probability that a field is organic"},
            {"amplitude_factor", s(d.amplitude_factor), "organic vegetation amplitude multiplier"},
            {"heterogeneity_sd", s(d.heterogeneity_sd), "extra within-field amplitude noise of organic fields"},
            {"base_heterogeneity_sd", s(d.base_heterogeneity_sd), "within-field amplitude noise of all fields"},
            {"heterogeneity_scale_px", s(d.heterogeneity_scale_px), "correlation length of within-field noise"},
            {"field_amplitude_sd", s(d.field_amplitude_sd), "per-field amplitude jitter"},
            {"field_timing_sd", s(d.field_timing_sd), "per-field season timing jitter, days"},
            {"noise_sd", s(d.noise_sd), "per-observation reflectance noise"},
            {"cloud_gap_rate", s(d.cloud_gap_rate), "fraction of acquisitions lost to clouds"},
            {"revisit_days", s(d.revisit_days), "nominal revisit interval"},
            {"min_field_px", std::to_string(d.min_field_px), "minimum field edge"},
            {"max_field_px", std::to_string(d.max_field_px), "maximum field edge"},
            {"field_probability", s(d.field_probability), "probability that a parcel is cropland"}};
}

SynthConfig synth_config(const RunConfig& c)
{
    SynthConfig s;
    s.seed = c.get_uint64("seed");
    s.n_tiles = c.get_int("n_tiles");
    s.tile_px = c.get_int("tile_px");
    s.validation_tiles = c.get_int("validation_tiles");
    s.test_tiles = c.get_int("test_tiles");
    s.n_crops = c.get_int("n_crops");
    s.organic_share = c.get_double("organic_share");
    s.amplitude_factor = c.get_double("amplitude_factor");
    s.heterogeneity_sd = c.get_double("heterogeneity_sd");
    s.base_heterogeneity_sd = c.get_double("base_heterogeneity_sd");
    s.heterogeneity_scale_px = c.get_double("heterogeneity_scale_px");
    s.field_amplitude_sd = c.get_double("field_amplitude_sd");
    s.field_timing_sd = c.get_double("field_timing_sd");
    s.noise_sd = c.get_double("noise_sd");
    s.cloud_gap_rate = c.get_double("cloud_gap_rate");
    s.revisit_days = c.get_double("revisit_days");
    s.min_field_px = c.get_int("min_field_px");
    s.max_field_px = c.get_int("max_field_px");
    s.field_probability = c.get_double("field_probability");
    s.validate();
    return s;
}

void cmd_synth_gen(const Context& ctx)
{
    const auto cfg = synth_config(ctx.config);
    const fs::path out = ctx.path("out");
    fs::create_directories(out);
    const auto split = synth_split(cfg);
    for (int i = 0; i < cfg.n_tiles; ++i) {
        const auto tile = synth_tile(cfg, i);
        write_observations(out / tile.observations.tile_id, tile.observations, tile.labels);
    }
    save_split(out / "split.json", split);
    write_run_manifest("synth-gen", ctx, out, {});
    std::cout << "wrote " << cfg.n_tiles << " tiles to " << out.string() << '\n';
}

std::vector<ConfigKey> interpolate_keys()
{
    return {{"sigmas", "5,10,16,32,64", "kernel widths in days"},
            {"boosted", "5,10", "widths whose kernels get double weight"},
            {"first_day", "0", "first target day, days since 2020-01-01"},
            {"fallback", "nearest", "value when no kernel has support: nearest or zero"}};
}

void cmd_interpolate(const Context& ctx)
{
    RbfEnsembleConfig cfg;
    cfg.sigmas = ctx.config.get_doubles("sigmas");
    cfg.boosted = ctx.config.get_doubles("boosted");
    cfg.target_times = RbfEnsembleConfig::default_target_times(ctx.config.get_double("first_day"));
    const auto& fb = ctx.config.get("fallback");
    if (fb == "nearest") {
        cfg.fallback = RbfFallback::NearestValid;
    } else if (fb == "zero") {
        cfg.fallback = RbfFallback::Zero;
    } else {
        throw ConfigError("fallback must be 'nearest' or 'zero'");
    }
    cfg.validate();
    const fs::path in = ctx.path("in"), out = ctx.path("out");
    const auto dirs = list_patch_dirs(in);
    if (dirs.empty()) throw InputError("no observation stores under " + in.string());
    for (const auto& dir : dirs) {
        const auto [stack, labels] = read_observations(dir);
        const auto tile = interpolate_stack(stack, cfg, ctx.threads);
        const auto target = out / dir.filename();
        write_patch(target, tile.cube, labels);
        write_uint8_plane(target / "filled.bin", tile.filled);
    }
    write_run_manifest("interpolate", ctx, out, {"in"});
    std::cout << "interpolated " << dirs.size() << " tiles into " << out.string() << '\n';
}

std::vector<ConfigKey> tile_keys()
{
    return {{"patch_px", "30", "patch edge in pixels"},
            {"agri_threshold", "0.15", "minimum agricultural share of train/validation patches (exclusive)"}};
}

std::string patch_name(const PatchOrigin& o)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "_r%04d_c%04d", o.row, o.col);
    return o.tile_id + buf;
}

void cmd_tile(const Context& ctx)
{
    const int px = ctx.config.get_int("patch_px");
    const double threshold = ctx.config.get_double("agri_threshold");
    const fs::path in = ctx.path("in"), out = ctx.path("out");
    const auto split = load_split(ctx.path("split"));
    std::map<SplitRole, int> counts;
    for (const auto& dir : list_patch_dirs(in)) {
        const auto tile = read_patch(dir);
        const auto it = split.find(tile.patch.origin.tile_id);
        if (it == split.end()) throw InputError("tile " + tile.patch.origin.tile_id + " has no split role");
        const auto role = it->second;
        for (const auto& p : tile_patches(tile.patch, tile.labels, px, role != SplitRole::Test, threshold)) {
            write_patch(out / role_name(role) / patch_name(p.patch.origin), p.patch, p.labels);
            ++counts[role];
        }
    }
    write_run_manifest("tile", ctx, out, {"in", "split"});
    std::cout << "patches: train " << counts[SplitRole::Train] << ", validation " << counts[SplitRole::Validation]
              << ", test " << counts[SplitRole::Test] << '\n';
}

std::vector<ConfigKey> fit_norm_keys()
{
    return {{"n_sample", "1000", "patches drawn for the quantile fit"}, {"seed", "0", "sampling seed"}};
}

void cmd_fit_norm(const Context& ctx)
{
    const auto dirs = list_patch_dirs(ctx.path("in"));
    if (dirs.empty()) throw InputError("no patches under " + ctx.path("in"));
    const auto n_sample = static_cast<std::size_t>(ctx.config.get_int64("n_sample"));
    const auto seed = ctx.config.get_uint64("seed");
    std::vector<SitsPatch> sample;
    for (auto i : normalizer_sample(dirs.size(), n_sample, seed)) sample.push_back(read_patch(dirs[i]).patch);
    const auto norm = fit_quantile_normalizer(sample, sample.size(), seed);
    const fs::path out = ctx.path("out");
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_normalizer(out, norm);
    write_run_manifest("fit-norm", ctx, out, {"in"});
    std::cout << "normalizer fitted on " << sample.size() << " patches\n";
}

std::vector<ConfigKey> model_keys()
{
    const TsvitConfig m;
    const TrainConfig t;
    auto s = [](double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };
    return {{"patch_size", "30", "model input edge in pixels (30, 10 or 2)"},
            {"subpatch_px", std::to_string(m.subpatch_px), "sub-patch edge"},
            {"embed_dim", std::to_string(m.embed_dim), "token length"},
            {"temporal_depth", std::to_string(m.temporal_depth), "temporal encoder blocks"},
            {"spatial_depth", std::to_string(m.spatial_depth), "spatial encoder blocks"},
            {"heads", std::to_string(m.heads), "attention heads"},
            {"head_dim", std::to_string(m.head_dim), "per-head width"},
            {"mlp_ratio", std::to_string(m.mlp_ratio), "MLP hidden width over token length"},
            {"tasks", "crop,mgmt", "crop, mgmt or crop,mgmt"},
            {"crop_classes", "0", "crop classes including Background (0: from the data)"},
            {"mgmt_classes", "3", "management classes including Background"},
            {"seed", "0", "initialization and shuffling seed"},
            {"batch_patches", std::to_string(t.batch_patches), "stored patches per optimizer step (with all their windows)"},
            {"epochs", std::to_string(t.epochs), "training epochs"},
            {"warmup_epochs", s(t.warmup_epochs), "linear warm-up length"},
            {"lr_start", s(t.lr_start), "learning rate at epoch 0"},
            {"lr_peak", s(t.lr_peak), "learning rate after warm-up"},
            {"lr_floor", s(t.lr_floor), "learning rate after the cosine decay"},
            {"cosine_end_epoch", s(t.cosine_end_epoch), "epoch where the cosine decay ends"},
            {"weight_decay", s(t.weight_decay), "decoupled weight decay"},
            {"beta1", s(t.beta1), "Adam first-moment decay"},
            {"beta2", s(t.beta2), "Adam second-moment decay"},
            {"eps", s(t.eps), "Adam denominator offset"},
            {"task_weights", "", "loss weight per task (empty: 1 each)"},
            {"windows_per_patch", "0", "model-sized windows drawn per stored patch and epoch (0: all)"},
            {"chunk_patches", "1", "patches per forward/backward pass"},
            {"precision", "32", "floating point width: 32 or 64"}};
}

int class_count_from(const std::vector<LabeledPatch>& a, const std::vector<LabeledPatch>& b, bool crop)
{
    int k = 0;
    for (const auto* set : {&a, &b}) {
        for (const auto& p : *set) {
            if (crop) {
                for (auto c : p.labels.crop) k = std::max(k, static_cast<int>(c) + 1);
            } else {
                for (auto c : p.labels.mgmt) k = std::max(k, static_cast<int>(c) + 1);
            }
        }
    }
    return k;
}

TsvitConfig model_config(const RunConfig& c)
{
    TsvitConfig m;
    m.patch_px = c.get_int("patch_size");
    m.subpatch_px = c.get_int("subpatch_px");
    m.embed_dim = c.get_int("embed_dim");
    m.temporal_depth = c.get_int("temporal_depth");
    m.spatial_depth = c.get_int("spatial_depth");
    m.heads = c.get_int("heads");
    m.head_dim = c.get_int("head_dim");
    m.mlp_ratio = c.get_int("mlp_ratio");
    m.seed = c.get_uint64("seed");
    m.tasks.clear();
    for (const auto& name : c.get_strings("tasks")) {
        m.tasks.push_back({name, name == "crop" ? std::max(1, c.get_int("crop_classes")) : c.get_int("mgmt_classes")});
    }
    return m;
}

TrainConfig train_config(const RunConfig& c)
{
    TrainConfig t;
    t.batch_patches = c.get_int("batch_patches");
    t.epochs = c.get_int("epochs");
    t.warmup_epochs = c.get_double("warmup_epochs");
    t.lr_start = c.get_double("lr_start");
    t.lr_peak = c.get_double("lr_peak");
    t.lr_floor = c.get_double("lr_floor");
    t.cosine_end_epoch = c.get_double("cosine_end_epoch");
    t.weight_decay = c.get_double("weight_decay");
    t.beta1 = c.get_double("beta1");
    t.beta2 = c.get_double("beta2");
    t.eps = c.get_double("eps");
    t.seed = c.get_uint64("seed");
    t.task_weights = c.get_doubles("task_weights");
    t.windows_per_patch = c.get_int("windows_per_patch");
    t.chunk_patches = c.get_int("chunk_patches");
    t.validate();
    return t;
}

std::vector<LabeledPatch> load_patches(const fs::path& root, const QuantileNormalizer& norm)
{
    std::vector<LabeledPatch> out;
    for (const auto& dir : list_patch_dirs(root)) {
        auto item = read_patch(dir);
        item.patch = apply_normalizer(item.patch, norm);
        out.push_back(std::move(item));
    }
    if (out.empty()) throw InputError("no patches under " + root.string());
    return out;
}

int precision_of(const RunConfig& c)
{
    const int p = c.get_int("precision");
    if (p != 32 && p != 64) throw ConfigError("precision must be 32 or 64");
    return p;
}

template <typename Scalar>
void run_training(const Context& ctx, TsvitConfig model, const TrainConfig& tcfg, const fs::path& out)
{
    const auto norm = load_normalizer(ctx.path("norm"));
    const auto train_set = load_patches(ctx.path("train"), norm);
    const auto val_set = load_patches(ctx.path("validation"), norm);
    const auto& ref = train_set.front().patch;
    if (ref.H % model.patch_px != 0) {
        throw ShapeError("patch size " + std::to_string(model.patch_px) + " does not divide stored patch edge " +
                         std::to_string(ref.H));
    }
    model.T = ref.T;
    model.B = ref.B;
    for (auto& t : model.tasks) {
        if (t.name == "crop" && ctx.config.get_int("crop_classes") == 0) t.n_classes = class_count_from(train_set, val_set, true);
    }
    model.validate();

    fs::create_directories(out);
    save_normalizer(out / "norm.json", norm);
    std::ofstream log(out / "log.csv", std::ios::trunc);
    log << epoch_log_header() << '\n';
    auto params = TsvitParams<Scalar>::init(model);
    std::cout << "parameters: " << params.count() << ", train patches " << train_set.size() << ", validation "
              << val_set.size() << '\n';
    auto result = train(params, model, std::span<const LabeledPatch>(train_set), std::span<const LabeledPatch>(val_set),
                        tcfg, [&](const EpochLog& row) {
                            const auto line = epoch_log_row(row, model);
                            log << line << '\n';
                            log.flush();
                            std::cout << line << std::endl;
                        });
    for (std::size_t t = 0; t < model.tasks.size(); ++t) {
        save_checkpoint(out / ("best_" + model.tasks[t].name), model, result.best[t]);
        std::cout << "best " << model.tasks[t].name << " epoch " << result.best_epoch[t] << '\n';
    }
    save_checkpoint(out / "last", model, params);
}

void cmd_train(const Context& ctx)
{
    auto model = model_config(ctx.config);
    model.validate(); // surfaces S not dividing the input edge before any data is read
    const auto tcfg = train_config(ctx.config);
    const fs::path out = ctx.path("out");
    if (precision_of(ctx.config) == 64) {
        run_training<double>(ctx, model, tcfg, out);
    } else {
        run_training<float>(ctx, model, tcfg, out);
    }
    write_run_manifest("train", ctx, out, {"train", "validation", "norm"});
}

std::vector<ConfigKey> predict_keys()
{
    return {{"precision", "32", "floating point width: 32 or 64"}, {"chunk_patches", "1", "windows per forward pass"}};
}

template <typename Scalar>
struct LoadedModel {
    TsvitConfig config;
    TsvitParams<Scalar> params;
};

template <typename Scalar>
void run_prediction(const Context& ctx)
{
    const fs::path model_dir = ctx.path("model"), out = ctx.path("out");
    // per task: the checkpoint that predicts it
    std::vector<std::pair<std::string, LoadedModel<Scalar>>> models;
    if (fs::exists(model_dir / "manifest.json")) {
        LoadedModel<Scalar> m;
        m.params = load_checkpoint<Scalar>(model_dir, &m.config);
        for (const auto& t : m.config.tasks) models.emplace_back(t.name, m);
    } else {
        for (const char* task : {"crop", "mgmt"}) {
            const auto dir = model_dir / (std::string("best_") + task);
            if (!fs::exists(dir / "manifest.json")) continue;
            LoadedModel<Scalar> m;
            m.params = load_checkpoint<Scalar>(dir, &m.config);
            models.emplace_back(task, std::move(m));
        }
    }
    if (models.empty()) throw InputError("no checkpoint found in " + model_dir.string());
    const fs::path norm_path = ctx.path("norm").empty() ? model_dir / "norm.json" : fs::path(ctx.path("norm"));
    const auto norm = load_normalizer(norm_path);
    const int chunk = ctx.config.get_int("chunk_patches");
    const auto dirs = list_patch_dirs(ctx.path("in"));
    if (dirs.empty()) throw InputError("no patches under " + ctx.path("in"));
    for (const auto& dir : dirs) {
        const auto item = read_patch(dir);
        const auto patch = apply_normalizer(item.patch, norm);
        PredictionPlanes planes;
        for (const auto& [task, m] : models) {
            const auto rasters = predict_patch(m.params, m.config, patch, chunk);
            for (std::size_t t = 0; t < m.config.tasks.size(); ++t) {
                if (m.config.tasks[t].name != task) continue;
                const auto& r = rasters[t];
                if (task == "crop") {
                    planes.crop = std::vector<std::uint16_t>(r.begin(), r.end());
                } else {
                    planes.mgmt = std::vector<std::uint8_t>(r.begin(), r.end());
                }
            }
        }
        write_prediction(out / dir.filename(), item.patch, item.labels, planes);
    }
    std::cout << "predicted " << dirs.size() << " patches into " << out.string() << '\n';
}

void cmd_predict(const Context& ctx)
{
    if (precision_of(ctx.config) == 64) {
        run_prediction<double>(ctx);
    } else {
        run_prediction<float>(ctx);
    }
    write_run_manifest("predict", ctx, ctx.path("out"), {"model", "in"});
}

std::vector<ConfigKey> evaluate_keys()
{
    return {{"crop_classes", "0", "crop classes including Background (0: from the data)"},
            {"mgmt_classes", "3", "management classes including Background"},
            {"mgmt_names", "Background,Conventional,Organic", "management class names"}};
}

void cmd_evaluate(const Context& ctx)
{
    const auto dirs = list_patch_dirs(ctx.path("in"));
    if (dirs.empty()) throw InputError("no predictions under " + ctx.path("in"));
    std::vector<int> crop_pred, crop_ref, mgmt_pred, mgmt_ref;
    for (const auto& dir : dirs) {
        const auto [planes, labels] = read_prediction(dir);
        if (planes.crop) {
            crop_pred.insert(crop_pred.end(), planes.crop->begin(), planes.crop->end());
            crop_ref.insert(crop_ref.end(), labels.crop.begin(), labels.crop.end());
        }
        if (planes.mgmt) {
            mgmt_pred.insert(mgmt_pred.end(), planes.mgmt->begin(), planes.mgmt->end());
            mgmt_ref.insert(mgmt_ref.end(), labels.mgmt.begin(), labels.mgmt.end());
        }
    }
    const fs::path out = ctx.path("out");
    fs::create_directories(out);
    auto report = [&](const std::string& task, const std::vector<int>& pred, const std::vector<int>& ref, int k,
                      std::vector<std::string> names) {
        if (pred.empty()) return;
        if (k == 0) {
            for (int v : pred) k = std::max(k, v + 1);
            for (int v : ref) k = std::max(k, v + 1);
        }
        if (names.size() != static_cast<std::size_t>(k)) {
            names.clear();
            for (int i = 0; i < k; ++i) names.push_back(i == 0 ? "Background" : std::to_string(i));
        }
        ConfusionMatrix cm(k, names);
        cm += confusion(pred, ref, k);
        write_json_file(out / (task + "_report.json"), report_json(cm));
        std::ofstream(out / (task + "_report.csv"), std::ios::trunc) << report_csv(cm);
        const auto s = summary(cm);
        std::printf("%s: macro-F1 %.4f, OA %.4f\n", task.c_str(), s.macro_f1, s.overall_accuracy);
    };
    report("crop", crop_pred, crop_ref, ctx.config.get_int("crop_classes"), {});
    report("mgmt", mgmt_pred, mgmt_ref, ctx.config.get_int("mgmt_classes"), ctx.config.get_strings("mgmt_names"));
    write_run_manifest("evaluate", ctx, out, {"in"});
}

std::vector<ConfigKey> forest_keys()
{
    const ForestConfig f;
    return {{"n_trees", std::to_string(f.n_trees), "trees per forest"},
            {"max_depth", std::to_string(f.max_depth), "maximum tree depth (0: unlimited)"},
            {"min_leaf", std::to_string(f.min_leaf), "minimum samples per leaf"},
            {"features_per_split", std::to_string(f.features_per_split), "features tried per split (0: ceil(sqrt(F)))"},
            {"seed", std::to_string(f.seed), "sampling and bootstrap seed"},
            {"buffer_px", std::to_string(f.buffer_px), "inward field buffer in pixels"},
            {"background_per_tile", std::to_string(f.background_per_tile), "Background samples per tile"}};
}

void cmd_baseline_rf(const Context& ctx)
{
    ForestConfig f;
    f.n_trees = ctx.config.get_int("n_trees");
    f.max_depth = ctx.config.get_int("max_depth");
    f.min_leaf = ctx.config.get_int("min_leaf");
    f.features_per_split = ctx.config.get_int("features_per_split");
    f.seed = ctx.config.get_uint64("seed");
    f.buffer_px = ctx.config.get_int("buffer_px");
    f.background_per_tile = ctx.config.get_int("background_per_tile");
    f.validate();
    const auto split = load_split(ctx.path("split"));
    std::vector<LabeledPatch> train_tiles, test_tiles;
    for (const auto& dir : list_patch_dirs(ctx.path("in"))) {
        auto tile = read_patch(dir);
        const auto it = split.find(tile.patch.origin.tile_id);
        if (it == split.end()) throw InputError("tile " + tile.patch.origin.tile_id + " has no split role");
        if (it->second == SplitRole::Train) train_tiles.push_back(std::move(tile));
        if (it->second == SplitRole::Test) test_tiles.push_back(std::move(tile));
    }
    if (train_tiles.empty()) throw InputError("no training tiles");
    std::vector<LabelRaster> labels;
    std::vector<SitsPatch> cubes;
    for (const auto& t : train_tiles) {
        labels.push_back(t.labels);
        cubes.push_back(t.patch);
    }
    const auto samples = sample_pixels(labels, cubes, f);
    const auto x = feature_matrix(samples);
    std::vector<int> y_crop, y_mgmt;
    for (const auto& s : samples) {
        y_crop.push_back(s.crop);
        y_mgmt.push_back(s.mgmt);
    }
    const auto crop_forest = fit_forest(x, y_crop, 0, f, ctx.threads);
    const auto mgmt_forest = fit_forest(x, y_mgmt, 3, f, ctx.threads);
    const fs::path out = ctx.path("out");
    write_json_file(out / "forest_crop.json", to_json(crop_forest));
    write_json_file(out / "forest_mgmt.json", to_json(mgmt_forest));
    for (const auto& t : test_tiles) {
        const auto crop = predict_forest_raster(crop_forest, t.patch);
        const auto mgmt = predict_forest_raster(mgmt_forest, t.patch);
        PredictionPlanes planes;
        planes.crop = std::vector<std::uint16_t>(crop.begin(), crop.end());
        planes.mgmt = std::vector<std::uint8_t>(mgmt.begin(), mgmt.end());
        write_prediction(out / "predictions" / t.patch.origin.tile_id, t.patch, t.labels, planes);
    }
    write_run_manifest("baseline-rf", ctx, out, {"in", "split"});
    std::cout << "forests trained on " << samples.size() << " samples; predicted " << test_tiles.size()
              << " test tiles\n";
}

struct PathFlag {
    std::string name;
    bool required;
    std::string help;
};

struct Command {
    std::string name;
    std::string help;
    std::vector<ConfigKey> keys;
    std::vector<PathFlag> paths;
    std::function<void(const Context&)> action;
};

std::vector<Command> commands()
{
    return {
        {"synth-gen", "generate a synthetic scene of raw observation tiles", synth_keys(),
         {{"out", true, "output directory"}}, cmd_synth_gen},
        {"interpolate", "resample raw observations onto the 10-day grid", interpolate_keys(),
         {{"in", true, "directory of observation stores"}, {"out", true, "output directory of tile cubes"}},
         cmd_interpolate},
        {"tile", "cut tile cubes into patches per split role", tile_keys(),
         {{"in", true, "directory of tile cubes"}, {"split", true, "split.json"}, {"out", true, "output root"}},
         cmd_tile},
        {"fit-norm", "fit per-band quantile scaling on training patches", fit_norm_keys(),
         {{"in", true, "training patch directory"}, {"out", true, "normalizer JSON to write"}}, cmd_fit_norm},
        {"train", "train the transformer", model_keys(),
         {{"train", true, "training patch directory"},
          {"validation", true, "validation patch directory"},
          {"norm", true, "normalizer JSON"},
          {"out", true, "model output directory"}},
         cmd_train},
        {"predict", "write class rasters for a patch directory", predict_keys(),
         {{"model", true, "checkpoint or training output directory"},
          {"in", true, "patch directory"},
          {"norm", false, "normalizer JSON (default: the model's copy)"},
          {"out", true, "prediction directory"}},
         cmd_predict},
        {"evaluate", "confusion matrices and accuracy reports", evaluate_keys(),
         {{"in", true, "prediction directory"}, {"out", true, "report directory"}}, cmd_evaluate},
        {"baseline-rf", "pixel-wise random forest baseline", forest_keys(),
         {{"in", true, "directory of tile cubes"}, {"split", true, "split.json"}, {"out", true, "output directory"}},
         cmd_baseline_rf},
    };
}

std::string flag_name(const std::string& key)
{
    std::string f = key;
    std::replace(f.begin(), f.end(), '_', '-');
    return "--" + f;
}

} // namespace

int run(int argc, char** argv)
{
    CLI::App app{"Crop type and management classification from satellite image time series"};
    app.require_subcommand(1);
    const auto table = commands();

    struct Bound {
        std::map<std::string, std::string> key_values;
        std::map<std::string, std::string> path_values;
        std::string config_file;
        int threads = 1;
        CLI::App* sub = nullptr;
    };
    std::vector<Bound> bound(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto& cmd = table[i];
        auto& b = bound[i];
        b.sub = app.add_subcommand(cmd.name, cmd.help);
        b.sub->add_option("--config", b.config_file, "flat key = value settings file")->check(CLI::ExistingFile);
        b.sub->add_option("--threads", b.threads, "worker threads")->check(CLI::PositiveNumber);
        for (const auto& p : cmd.paths) {
            auto* opt = b.sub->add_option("--" + p.name, b.path_values[p.name], p.help);
            if (p.required) opt->required();
        }
        for (const auto& k : cmd.keys) {
            b.sub->add_option(flag_name(k.name), b.key_values[k.name], k.help + " [" + k.default_value + "]");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    for (std::size_t i = 0; i < table.size(); ++i) {
        auto& b = bound[i];
        if (!b.sub->parsed()) continue;
        const auto& cmd = table[i];
        try {
            Context ctx{RunConfig(cmd.keys), {}, b.threads};
            if (!b.config_file.empty()) ctx.config.load_file(b.config_file);
            for (const auto& k : cmd.keys) {
                if (b.sub->count(flag_name(k.name)) > 0) ctx.config.set(k.name, b.key_values[k.name]);
            }
            ctx.paths = b.path_values;
            cmd.action(ctx);
            return 0;
        } catch (const ConfigError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 1;
        } catch (const Error& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 2;
        } catch (const fs::filesystem_error& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 2;
        } catch (const nlohmann::json::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 2;
        }
    }
    return 1;
}

} // namespace sits::cli
