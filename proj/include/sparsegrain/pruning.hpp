#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sparsegrain/model.hpp"

namespace sparsegrain {

/// One L1-norm importance score per grain, in partition order.
struct SaliencyVector {
    GrainShape shape = GrainShape::Fine0D;
    std::vector<double> scores;
};

SaliencyVector saliency(const WeightTensor& tensor, const GrainPartition& part);

/// Deletes the round-half-up(target * grain_count) grains with smallest
/// L1 norm; ties are broken by deleting the lower grain index first.
PruneMask prune_to_sparsity(const WeightTensor& tensor, GrainShape shape, double target_sparsity);

/// Nested variant used by iterative pruning: grains deleted in `prior` stay
/// deleted, additional deletions are chosen among currently kept grains by
/// the same smallest-saliency rule.
PruneMask prune_to_sparsity_nested(const WeightTensor& tensor, GrainShape shape,
                                   double target_sparsity, const PruneMask& prior);

/// Per-stage, per-layer sparsity targets; targets are non-decreasing across
/// stages for every layer.
struct PruneSchedule {
    std::vector<std::vector<double>> stage_targets; // [stage][layer]

    /// Same target list applied to every layer.
    static PruneSchedule uniform(const std::vector<double>& stages, std::size_t layer_count);
    void validate(std::size_t layer_count) const;
};

/// Scores a masked model; higher is better. Deterministic given its seed.
/// The retrain hook runs between pruning stages and may adjust weights (the
/// driver re-applies masks afterwards); the default is a no-op.
class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual double score(const std::vector<WeightTensor>& masked_model) = 0;
    virtual void retrain(std::vector<WeightTensor>& model,
                         const std::vector<PruneMask>& masks) {
        (void)model;
        (void)masks;
    }
};

/// Default quality proxy: negated mean squared error between each layer's
/// output on the original weights and on the masked weights, over a seeded
/// random input batch. No dataset needed, deterministic, and monotone enough
/// to drive sensitivity analysis.
class DistortionEvaluator : public Evaluator {
public:
    explicit DistortionEvaluator(const std::vector<WeightTensor>& reference_model,
                                 std::uint64_t seed, int batch = 1);
    double score(const std::vector<WeightTensor>& masked_model) override;

private:
    std::vector<std::vector<std::vector<float>>> inputs_;  // [layer][batch]
    std::vector<std::vector<std::vector<float>>> outputs_; // reference outputs
};

struct SensitivityPoint {
    double sparsity = 0.0;
    double score = 0.0;
};

/// eval result per (layer, grid sparsity), with only that layer pruned.
struct SensitivityReport {
    std::vector<std::string> layers;
    std::vector<std::vector<SensitivityPoint>> points; // aligned with layers
};

SensitivityReport sensitivity_scan(const std::vector<WeightTensor>& model, GrainShape shape,
                                   const std::vector<double>& grid, Evaluator& eval);

/// Picks, per layer, the largest scanned sparsity whose score drop relative
/// to the 0-sparsity anchor stays within `budget` (0 when none qualifies).
std::map<std::string, double> plan_stage(const SensitivityReport& report, double budget);

struct StageResult {
    double conv_density = 0.0;
    double score = 0.0;
};

struct IterativePruneResult {
    std::vector<PruneMask> masks;   // final mask per layer
    std::vector<StageResult> curve; // one entry per stage
};

/// Prunes every layer stage by stage with nested masks (a deleted grain
/// stays deleted), re-ranking grains on the current weights each stage and
/// invoking the evaluator (and its retrain hook) after masking.
/// Fully-connected layers are always pruned at Fine0D. `on_stage`, when set,
/// observes each stage's masks (for curve artifacts) without retaining them.
using StageObserver = std::function<void(std::size_t stage, const std::vector<PruneMask>&)>;
IterativePruneResult iterative_prune(const std::vector<WeightTensor>& model, GrainShape shape,
                                     const PruneSchedule& schedule, Evaluator& eval,
                                     const StageObserver& on_stage = {});

/// Mask file: JSON array of {layer, granularity, keep_bits (base64-packed,
/// LSB-first), density} entries.
void save_masks(const std::filesystem::path& path, const std::vector<PruneMask>& masks,
                const std::vector<GrainShape>& shapes);
std::vector<std::pair<PruneMask, GrainShape>> load_masks(const std::filesystem::path& path);

} // namespace sparsegrain
