#pragma once

// Temporo-spatial vision transformer for per-pixel multitask classification.
//
// A patch [T x B x H x W] is cut into P = (H/S)^2 sub-patches of S x S
// pixels. Every acquisition of a sub-patch (B*S*S values) is embedded to a
// d-dimensional token and a learned per-step position embedding is added.
//
// Temporal stage: per sub-patch, the n class tokens (all tasks, crop first)
// are prepended to the T time tokens and the (n + T) sequence runs through
// the temporal blocks; only the n class outputs are kept.
//
// Spatial stage: per class k, the P tokens of class k (plus a spatial
// position embedding shared by all classes) attend to each other through the
// spatial blocks. Different classes never mix. Skipped when P == 1.
//
// Heads: one d -> S*S linear map per task turns token (p, k) into the scores
// of class k on the pixels of sub-patch p.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sits/ops.hpp"
#include "sits/patch.hpp"

namespace sits {

struct TaskSpec {
    std::string name; // "crop" or "mgmt"
    int n_classes = 0;

    bool operator==(const TaskSpec&) const = default;
};

struct TsvitConfig {
    int patch_px = 30;   // model input edge H = W
    int subpatch_px = 2; // S
    int embed_dim = 150; // d
    int temporal_depth = 8;
    int spatial_depth = 4;
    int heads = 8;
    int head_dim = 16;
    int mlp_ratio = 4;
    int T = 36;
    int B = 10;
    std::vector<TaskSpec> tasks{{"crop", 24}, {"mgmt", 3}};
    std::uint64_t seed = 0;

    int grid() const { return patch_px / subpatch_px; }
    int n_subpatches() const { return grid() * grid(); }
    int n_class_tokens() const;
    bool has_spatial_stage() const { return n_subpatches() > 1; }
    /// Offset of a task's first class token in the concatenated token set.
    int class_offset(std::size_t task) const;

    void validate() const;

    bool operator==(const TsvitConfig&) const = default;
};

/// Closed-form number of learnable scalars for a configuration.
std::size_t tsvit_parameter_count(const TsvitConfig& cfg);

template <typename Scalar>
using NamedTensors = std::vector<std::pair<std::string, Tensor<Scalar>>>;

/// Learnable arrays of the model, in creation order, addressed by
/// hierarchical name (e.g. "temporal.0.attn.qkv.w").
template <typename Scalar>
class TsvitParams {
public:
    /// Seeded initialization: truncated normal (sd 0.02) for embeddings and
    /// class tokens, U(+-1/sqrt(fan_in)) for linear weights, zero biases,
    /// unit layer-norm gains.
    static TsvitParams init(const TsvitConfig& cfg);

    const Tensor<Scalar>& at(const std::string& name) const;
    Tensor<Scalar>& at(const std::string& name);
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    NamedTensors<Scalar>& entries() { return entries_; }
    const NamedTensors<Scalar>& entries() const { return entries_; }

    void add(std::string name, Tensor<Scalar> value);
    std::size_t count() const;
    void zero_grad();

    /// Deep copy (fresh storage, no gradients).
    TsvitParams clone() const;

private:
    NamedTensors<Scalar> entries_;
    std::map<std::string, std::size_t> index_;
};

template <typename Scalar>
struct ForwardTrace {
    std::vector<Tensor<Scalar>> attention; // softmax weights per attention call
};

/// [N x T x B x H x W] stacked patches.
template <typename Scalar>
Tensor<Scalar> patches_to_tensor(std::span<const SitsPatch> patches);

/// [N x T x B x H x W] -> tokens [N*P x T x d].
template <typename Scalar>
Tensor<Scalar> tokenize(const Tensor<Scalar>& patches, const TsvitParams<Scalar>& params, const TsvitConfig& cfg);

/// tokens [M x T x d] -> class features [M x n x d].
template <typename Scalar>
Tensor<Scalar> temporal_encode(const Tensor<Scalar>& tokens, const TsvitParams<Scalar>& params, const TsvitConfig& cfg,
                               ForwardTrace<Scalar>* trace = nullptr);

/// class features [N*P x n x d] -> [N*P x n x d]; identity when P == 1.
template <typename Scalar>
Tensor<Scalar> spatial_encode(const Tensor<Scalar>& features, const TsvitParams<Scalar>& params, const TsvitConfig& cfg,
                              ForwardTrace<Scalar>* trace = nullptr);

/// class features [N*P x n x d] -> per task logits [N x H x W x K].
template <typename Scalar>
std::vector<Tensor<Scalar>> decode(const Tensor<Scalar>& features, const TsvitParams<Scalar>& params, const TsvitConfig& cfg);

/// Full model: [N x T x B x H x W] -> per task logits [N x H x W x K].
template <typename Scalar>
std::vector<Tensor<Scalar>> forward(const Tensor<Scalar>& patches, const TsvitParams<Scalar>& params,
                                    const TsvitConfig& cfg, ForwardTrace<Scalar>* trace = nullptr);

/// Per-pixel argmax of [... x K] logits, ties to the lowest class id.
template <typename Scalar>
std::vector<int> predict(const Tensor<Scalar>& logits);

/// Copies the parameters a narrower task list needs out of a wider model.
template <typename Scalar>
TsvitParams<Scalar> restrict_tasks(const TsvitParams<Scalar>& params, const TsvitConfig& narrow);

} // namespace sits
