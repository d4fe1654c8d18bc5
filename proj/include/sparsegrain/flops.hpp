#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsegrain/model.hpp"

#include "json.hpp"

namespace sparsegrain {

struct LayerFlops {
    std::string layer;
    std::uint64_t flops = 0;       // 2 * kept * out_h * out_w (conv), 2 * kept (fc)
    std::uint64_t dense_flops = 0; // all weights kept
    double ratio = 0.0;            // flops / dense_flops
};

struct FlopsReport {
    std::vector<LayerFlops> layers;
    std::uint64_t total_flops = 0;
    std::uint64_t total_dense = 0;

    double ratio() const {
        return total_dense ? static_cast<double>(total_flops) / total_dense : 0.0;
    }
};

FlopsReport count_flops(const std::vector<WeightTensor>& model,
                        const std::vector<PruneMask>& masks);

nlohmann::json flops_report_json(const FlopsReport& report);
std::string flops_report_csv(const FlopsReport& report);

} // namespace sparsegrain
