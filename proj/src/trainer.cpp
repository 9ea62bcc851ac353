#include "sits/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "sits/error.hpp"
#include "sits/metrics.hpp"

namespace sits {

std::vector<int> task_labels(std::span<const LabelRaster> labels, const std::string& task)
{
    std::vector<int> out;
    for (const auto& l : labels) {
        if (task == "crop") {
            out.insert(out.end(), l.crop.begin(), l.crop.end());
        } else if (task == "mgmt") {
            out.insert(out.end(), l.mgmt.begin(), l.mgmt.end());
        } else {
            throw ConfigError("unknown task '" + task + "'");
        }
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> global_loss(const std::vector<Tensor<Scalar>>& logits, const std::vector<std::vector<int>>& labels,
                           std::span<const double> weights)
{
    if (logits.empty() || logits.size() != labels.size()) throw ShapeError("one label set per task is required");
    if (!weights.empty() && weights.size() != logits.size()) throw ShapeError("one weight per task is required");
    Tensor<Scalar> total;
    for (std::size_t t = 0; t < logits.size(); ++t) {
        const Index k = logits[t].dim(-1);
        auto term = cross_entropy(reshape(logits[t], {logits[t].size() / k, k}), std::span<const int>(labels[t]));
        if (!weights.empty()) term = scale(term, static_cast<Scalar>(weights[t]));
        total = t == 0 ? term : add(total, term);
    }
    return total;
}

int select_best_epoch(std::span<const double> metric)
{
    if (metric.empty()) throw InputError("no epochs to select from");
    return static_cast<int>(std::max_element(metric.begin(), metric.end()) - metric.begin()) + 1;
}

std::string epoch_log_header() { return "epoch,lr,loss_total,loss_crop,loss_mgmt,f1_crop,f1_mgmt"; }

std::string epoch_log_row(const EpochLog& row, const TsvitConfig& model)
{
    auto column = [&](const std::vector<double>& values, const char* task) {
        for (std::size_t t = 0; t < model.tasks.size(); ++t) {
            if (model.tasks[t].name == task && t < values.size()) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.17g", values[t]);
                return std::string(buf);
            }
        }
        return std::string();
    };
    char head[128];
    std::snprintf(head, sizeof head, "%d,%.17g,%.17g", row.epoch, row.lr, row.loss_total);
    return std::string(head) + "," + column(row.task_loss, "crop") + "," + column(row.task_loss, "mgmt") + "," +
           column(row.task_f1, "crop") + "," + column(row.task_f1, "mgmt");
}

namespace {

std::vector<SitsPatch> patches_of(std::span<const LabeledPatch* const> items)
{
    std::vector<SitsPatch> out;
    out.reserve(items.size());
    for (const auto* it : items) out.push_back(it->patch);
    return out;
}

std::vector<LabelRaster> labels_of(std::span<const LabeledPatch* const> items)
{
    std::vector<LabelRaster> out;
    out.reserve(items.size());
    for (const auto* it : items) out.push_back(it->labels);
    return out;
}

/// Model-sized windows of every stored patch, grouped by source patch.
std::vector<std::vector<LabeledPatch>> windows(std::span<const LabeledPatch> set, int px)
{
    std::vector<std::vector<LabeledPatch>> out;
    out.reserve(set.size());
    for (const auto& item : set) {
        if (item.patch.H == px && item.patch.W == px) {
            out.push_back({item});
        } else {
            out.push_back(subdivide(item, px));
        }
    }
    return out;
}

} // namespace

template <typename Scalar>
std::vector<double> validation_f1(const TsvitParams<Scalar>& params, const TsvitConfig& model,
                                  std::span<const LabeledPatch> items, int chunk)
{
    if (items.empty()) throw InputError("empty validation set");
    NoGradGuard no_grad;
    std::vector<ConfusionMatrix> cms;
    for (const auto& t : model.tasks) cms.emplace_back(t.n_classes);
    const auto groups = windows(items, model.patch_px);
    std::vector<const LabeledPatch*> flat;
    for (const auto& g : groups) {
        for (const auto& w : g) flat.push_back(&w);
    }
    for (std::size_t start = 0; start < flat.size(); start += static_cast<std::size_t>(chunk)) {
        const auto end = std::min(flat.size(), start + static_cast<std::size_t>(chunk));
        std::span<const LabeledPatch* const> part(flat.data() + start, end - start);
        const auto patches = patches_of(part);
        const auto labels = labels_of(part);
        const auto logits = forward(patches_to_tensor<Scalar>(patches), params, model);
        for (std::size_t t = 0; t < model.tasks.size(); ++t) {
            const auto pred = predict(logits[t]);
            const auto ref = task_labels(labels, model.tasks[t].name);
            cms[t] += confusion(pred, ref, model.tasks[t].n_classes);
        }
    }
    std::vector<double> out;
    for (const auto& cm : cms) out.push_back(summary(cm).macro_f1);
    return out;
}

template <typename Scalar>
TrainResult<Scalar> train(TsvitParams<Scalar>& params, const TsvitConfig& model,
                          std::span<const LabeledPatch> train_set, std::span<const LabeledPatch> validation_set,
                          const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch)
{
    cfg.validate();
    model.validate();
    if (train_set.empty()) throw InputError("empty training set");
    if (validation_set.empty()) throw InputError("empty validation set");
    if (!cfg.task_weights.empty() && cfg.task_weights.size() != model.tasks.size()) {
        throw ConfigError("task_weights needs one entry per task");
    }
    const auto groups = windows(train_set, model.patch_px);

    std::mt19937_64 rng(cfg.seed);
    AdamWState<Scalar> state;
    TrainResult<Scalar> result;
    std::vector<std::vector<double>> history(model.tasks.size());
    result.best_epoch.assign(model.tasks.size(), 0);
    result.best.resize(model.tasks.size());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // a batch holds the windows of batch_patches stored patches
        std::vector<std::size_t> order(groups.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<const LabeledPatch*> items;
        std::vector<std::size_t> batch_start{0};
        for (std::size_t n = 0; n < order.size(); ++n) {
            const auto& g = groups[order[n]];
            std::vector<std::size_t> idx(g.size());
            std::iota(idx.begin(), idx.end(), 0);
            if (cfg.windows_per_patch > 0 && static_cast<std::size_t>(cfg.windows_per_patch) < g.size()) {
                std::shuffle(idx.begin(), idx.end(), rng);
                idx.resize(static_cast<std::size_t>(cfg.windows_per_patch));
                std::sort(idx.begin(), idx.end());
            }
            for (auto i : idx) items.push_back(&g[i]);
            if ((n + 1) % static_cast<std::size_t>(cfg.batch_patches) == 0 || n + 1 == order.size()) {
                batch_start.push_back(items.size());
            }
        }
        const std::size_t steps = batch_start.size() - 1;
        EpochLog row;
        row.epoch = epoch + 1;
        row.lr = lr_at(epoch, cfg);
        row.task_loss.assign(model.tasks.size(), 0.0);
        for (std::size_t s = 0; s < steps; ++s) {
            const std::size_t begin = batch_start[s], end = batch_start[s + 1];
            const double share_total = static_cast<double>(end - begin);
            params.zero_grad();
            for (std::size_t c = begin; c < end; c += static_cast<std::size_t>(cfg.chunk_patches)) {
                const auto c_end = std::min(end, c + static_cast<std::size_t>(cfg.chunk_patches));
                std::span<const LabeledPatch* const> part(items.data() + c, c_end - c);
                const auto labels = labels_of(part);
                const auto logits = forward(patches_to_tensor<Scalar>(patches_of(part)), params, model);
                std::vector<std::vector<int>> targets;
                for (const auto& t : model.tasks) targets.push_back(task_labels(labels, t.name));
                const double share = static_cast<double>(c_end - c) / share_total;
                for (std::size_t t = 0; t < model.tasks.size(); ++t) {
                    const Index k = logits[t].dim(-1);
                    NoGradGuard no_grad;
                    const double l = cross_entropy(reshape(logits[t], {logits[t].size() / k, k}),
                                                   std::span<const int>(targets[t]))
                                         .item();
                    row.task_loss[t] += share * l / static_cast<double>(steps);
                }
                auto loss = global_loss(logits, targets, std::span<const double>(cfg.task_weights));
                const double value = loss.item();
                if (!std::isfinite(value)) throw NumericError("non-finite loss in epoch " + std::to_string(epoch + 1));
                row.loss_total += share * value / static_cast<double>(steps);
                backward(scale(loss, static_cast<Scalar>(share)));
            }
            const double e = epoch + static_cast<double>(s) / static_cast<double>(steps);
            adamw_step(params.entries(), state, lr_at(e, cfg), cfg);
        }
        params.zero_grad();

        row.task_f1 = validation_f1(params, model, validation_set, cfg.chunk_patches);
        for (std::size_t t = 0; t < model.tasks.size(); ++t) {
            history[t].push_back(row.task_f1[t]);
            const int best = select_best_epoch(history[t]);
            if (best == epoch + 1) {
                result.best_epoch[t] = best;
                result.best[t] = params.clone();
            }
        }
        result.log.push_back(row);
        if (on_epoch) on_epoch(row);
    }
    return result;
}

template Tensor<float> global_loss<float>(const std::vector<Tensor<float>>&, const std::vector<std::vector<int>>&,
                                          std::span<const double>);
template Tensor<double> global_loss<double>(const std::vector<Tensor<double>>&, const std::vector<std::vector<int>>&,
                                            std::span<const double>);
template std::vector<double> validation_f1<float>(const TsvitParams<float>&, const TsvitConfig&,
                                                  std::span<const LabeledPatch>, int);
template std::vector<double> validation_f1<double>(const TsvitParams<double>&, const TsvitConfig&,
                                                   std::span<const LabeledPatch>, int);
template TrainResult<float> train<float>(TsvitParams<float>&, const TsvitConfig&, std::span<const LabeledPatch>,
                                         std::span<const LabeledPatch>, const TrainConfig&,
                                         const std::function<void(const EpochLog&)>&);
template TrainResult<double> train<double>(TsvitParams<double>&, const TsvitConfig&, std::span<const LabeledPatch>,
                                           std::span<const LabeledPatch>, const TrainConfig&,
                                           const std::function<void(const EpochLog&)>&);

} // namespace sits
