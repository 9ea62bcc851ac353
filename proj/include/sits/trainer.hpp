#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sits/dataset.hpp"
#include "sits/tsvit.hpp"

namespace sits {

struct TrainConfig {
    int batch_patches = 20; // stored patches per step, each contributing its windows
    int epochs = 40;
    double warmup_epochs = 2;
    double lr_start = 5e-5;
    double lr_peak = 1e-4;
    double lr_floor = 1e-5;
    double cosine_end_epoch = 20;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    std::vector<double> task_weights; // empty: 1.0 per task

    /// Stored patches are cut into model-sized windows; at most this many
    /// randomly chosen windows per stored patch enter an epoch (0 = all).
    int windows_per_patch = 0;
    /// Items per forward/backward pass inside a batch. Gradients of the
    /// chunks add up to the gradient of the whole batch.
    int chunk_patches = 1;

    void validate() const;
};

/// Linear warm-up, cosine decay to lr_floor at cosine_end_epoch, constant
/// afterwards.
double lr_at(double epoch_fraction, const TrainConfig& cfg);

template <typename Scalar>
struct AdamWState {
    std::vector<typename Tensor<Scalar>::Array> m, v;
    std::int64_t step = 0;
};

/// One decoupled-weight-decay Adam update from the gradients stored on the
/// parameters; a parameter without a gradient is treated as having zero
/// gradient.
template <typename Scalar>
void adamw_step(NamedTensors<Scalar>& params, AdamWState<Scalar>& state, double lr, const TrainConfig& cfg);

/// Class ids of one task for a batch of label rasters, pixel order matching
/// forward()'s [N x H x W] logits.
std::vector<int> task_labels(std::span<const LabelRaster> labels, const std::string& task);

/// Σ weight_t · cross_entropy(logits_t, labels_t).
template <typename Scalar>
Tensor<Scalar> global_loss(const std::vector<Tensor<Scalar>>& logits, const std::vector<std::vector<int>>& labels,
                           std::span<const double> weights);

/// 1-based index of the maximal value, ties to the earliest.
int select_best_epoch(std::span<const double> metric);

struct EpochLog {
    int epoch = 0;
    double lr = 0;
    double loss_total = 0;
    std::vector<double> task_loss; // per model task
    std::vector<double> task_f1;
};

std::string epoch_log_header();
std::string epoch_log_row(const EpochLog& row, const TsvitConfig& model);

template <typename Scalar>
struct TrainResult {
    std::vector<EpochLog> log;
    std::vector<int> best_epoch;               // per task, 1-based
    std::vector<TsvitParams<Scalar>> best;     // per task
};

/// Per-pixel validation macro-F1 of every task.
template <typename Scalar>
std::vector<double> validation_f1(const TsvitParams<Scalar>& params, const TsvitConfig& model,
                                  std::span<const LabeledPatch> items, int chunk = 1);

/// Runs cfg.epochs epochs of seeded shuffled mini-batches over `train`
/// (normalized patches at any multiple of the model edge) and keeps, per
/// task, the parameters of the epoch with the best validation macro-F1.
template <typename Scalar>
TrainResult<Scalar> train(TsvitParams<Scalar>& params, const TsvitConfig& model,
                          std::span<const LabeledPatch> train_set, std::span<const LabeledPatch> validation_set,
                          const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {});

} // namespace sits
