#include "sparsegrain/flops.hpp"

#include "sparsegrain/csvio.hpp"
#include "sparsegrain/errors.hpp"

namespace sparsegrain {

FlopsReport count_flops(const std::vector<WeightTensor>& model,
                        const std::vector<PruneMask>& masks) {
    if (masks.size() != model.size())
        throw InvalidArgument("count_flops: mask count mismatch");

    FlopsReport report;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const LayerSpec& spec = model[i].spec;
        if (masks[i].keep.size() != spec.weight_count())
            throw InvalidArgument("layer '" + spec.name + "': mask length mismatch");

        const std::uint64_t positions =
            spec.is_conv()
                ? static_cast<std::uint64_t>(spec.output_h()) * spec.output_w()
                : 1;
        LayerFlops row;
        row.layer = spec.name;
        row.flops = 2 * static_cast<std::uint64_t>(masks[i].kept_count()) * positions;
        row.dense_flops = 2 * static_cast<std::uint64_t>(spec.weight_count()) * positions;
        row.ratio = row.dense_flops ? static_cast<double>(row.flops) / row.dense_flops : 0.0;
        report.total_flops += row.flops;
        report.total_dense += row.dense_flops;
        report.layers.push_back(std::move(row));
    }
    return report;
}

nlohmann::json flops_report_json(const FlopsReport& report) {
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerFlops& row : report.layers)
        layers.push_back({{"layer", row.layer},
                          {"flops", row.flops},
                          {"dense_flops", row.dense_flops},
                          {"ratio", row.ratio}});
    return {
        {"layers", layers},
        {"total",
         {{"flops", report.total_flops},
          {"dense_flops", report.total_dense},
          {"ratio", report.ratio()}}},
    };
}

std::string flops_report_csv(const FlopsReport& report) {
    std::string out = "layer,flops,dense_flops,ratio\n";
    for (const LayerFlops& row : report.layers)
        out += row.layer + ',' + std::to_string(row.flops) + ',' +
               std::to_string(row.dense_flops) + ',' + format_double(row.ratio) + '\n';
    out += "(total)," + std::to_string(report.total_flops) + ',' +
           std::to_string(report.total_dense) + ',' + format_double(report.ratio()) + '\n';
    return out;
}

} // namespace sparsegrain
