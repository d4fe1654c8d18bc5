#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsegrain/activations.hpp"
#include "sparsegrain/model.hpp"

#include "json.hpp"

namespace sparsegrain {

/// Dataflow shape: products are formed between a block of `weights_per_group`
/// kept weights and a block of `acts_per_group` activation nonzeros; repeated
/// output addresses inside one such block pair are bypassed (counted once).
struct SimConfig {
    int weights_per_group = 4;
    int acts_per_group = 4;
    bool count_dense_baseline = true;

    void validate() const;
};

struct LayerMemRef {
    std::string layer;
    double weight_density = 0.0;
    double act_density = 0.0;
    std::uint64_t products = 0;    // valid (in-range) products formed
    std::uint64_t sparse_refs = 0; // accumulator references after bypass
    std::uint64_t dense_baseline_refs = 0; // all-keep mask, same activations
    double relative = 0.0;                 // sparse / dense, 0 when baseline off
};

struct MemRefReport {
    std::vector<LayerMemRef> layers;
    std::uint64_t total_sparse_refs = 0;
    std::uint64_t total_dense_refs = 0;

    double relative() const {
        return total_dense_refs
                   ? static_cast<double>(total_sparse_refs) / total_dense_refs
                   : 0.0;
    }
};

struct LayerSimResult {
    LayerMemRef refs;
    int out_h = 0;
    int out_w = 0;
    std::vector<double> output; // (c, x, y) row-major scatter-add result
};

/// Runs the sparse dataflow for one conv layer (stride 1 only): per input
/// channel, kept weights in (c, r, s) order against activation nonzeros in
/// (x, y) order, blocked per `cfg`; a product of weight (c, ., r, s) and
/// activation (x, y) targets output (c, x + pad - r, y + pad - s), out-of-
/// range targets are discarded, and each distinct in-range address per block
/// pair costs one reference.
LayerSimResult simulate_layer(const WeightTensor& tensor, const PruneMask& mask,
                              const ActivationMap& acts, const SimConfig& cfg);

/// Simulates every stride-1 conv layer with pseudo-random activations at the
/// given per-layer densities (one value broadcasts to all layers). Layer i
/// draws from seed mix_seed(seed, i), so reports are independent of which
/// layers are skipped. Fully-connected and strided layers are left out.
MemRefReport simulate_model(const std::vector<WeightTensor>& model,
                            const std::vector<PruneMask>& masks,
                            const std::vector<double>& act_densities, std::uint64_t seed,
                            const SimConfig& cfg);

nlohmann::json memref_report_json(const MemRefReport& report);
std::string memref_report_csv(const MemRefReport& report);

} // namespace sparsegrain
