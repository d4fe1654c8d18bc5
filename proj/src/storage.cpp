#include "sparsegrain/storage.hpp"

#include "sparsegrain/csvio.hpp"
#include "sparsegrain/errors.hpp"

namespace sparsegrain {

StorageReport storage_ratio(const std::vector<SparseEncoding>& encodings,
                            const std::vector<LayerSpec>& specs) {
    if (encodings.size() != specs.size())
        throw InvalidArgument("storage report: " + std::to_string(encodings.size()) +
                              " encodings for " + std::to_string(specs.size()) + " layers");

    StorageReport report;
    report.layers.reserve(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const SparseEncoding& enc = encodings[i];
        const LayerSpec& spec = specs[i];
        if (enc.spec.name != spec.name)
            throw InvalidArgument("storage report: encoding " + std::to_string(i) + " is for '" +
                                  enc.spec.name + "', expected '" + spec.name + "'");

        LayerStorage row;
        row.layer = spec.name;
        row.granularity = enc.granularity;
        row.is_conv = spec.is_conv();
        row.weight_count = spec.weight_count();
        row.kept_weights = enc.kept_weights;
        row.density = row.weight_count
                          ? static_cast<double>(row.kept_weights) / row.weight_count
                          : 0.0;
        row.bits_values = enc.bits_values;
        row.bits_indices = enc.bits_indices;
        row.sparse_bits = enc.bits_total;
        row.dense_bits = enc.dense_bits();
        row.storage_ratio = row.dense_bits
                                ? static_cast<double>(row.sparse_bits) / row.dense_bits
                                : 0.0;

        report.total.weight_count += row.weight_count;
        report.total.kept_weights += row.kept_weights;
        report.total.sparse_bits += row.sparse_bits;
        report.total.dense_bits += row.dense_bits;
        if (row.is_conv) {
            report.conv.weight_count += row.weight_count;
            report.conv.kept_weights += row.kept_weights;
            report.conv.sparse_bits += row.sparse_bits;
            report.conv.dense_bits += row.dense_bits;
        }
        report.layers.push_back(std::move(row));
    }
    return report;
}

namespace {

nlohmann::json aggregate_json(const StorageAggregate& agg) {
    return {
        {"weight_count", agg.weight_count}, {"kept_weights", agg.kept_weights},
        {"sparse_bits", agg.sparse_bits},   {"dense_bits", agg.dense_bits},
        {"density", agg.density()},         {"storage_ratio", agg.ratio()},
    };
}

} // namespace

nlohmann::json storage_report_json(const StorageReport& report) {
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerStorage& row : report.layers) {
        layers.push_back({
            {"layer", row.layer},
            {"granularity", grain_shape_name(row.granularity)},
            {"kind", row.is_conv ? "conv" : "fc"},
            {"weight_count", row.weight_count},
            {"kept_weights", row.kept_weights},
            {"density", row.density},
            {"bits_values", row.bits_values},
            {"bits_indices", row.bits_indices},
            {"sparse_bits", row.sparse_bits},
            {"dense_bits", row.dense_bits},
            {"storage_ratio", row.storage_ratio},
        });
    }
    return {
        {"layers", layers},
        {"conv", aggregate_json(report.conv)},
        {"total", aggregate_json(report.total)},
    };
}

std::string storage_report_csv(const StorageReport& report) {
    std::string out =
        "layer,granularity,kind,weight_count,kept_weights,density,"
        "bits_values,bits_indices,sparse_bits,dense_bits,storage_ratio\n";
    const auto row_line = [&out](const std::string& layer, const std::string& gran,
                                 const std::string& kind, std::uint64_t weights,
                                 std::uint64_t kept, double density, std::uint64_t bv,
                                 std::uint64_t bi, std::uint64_t sparse, std::uint64_t dense,
                                 double ratio) {
        out += layer + ',' + gran + ',' + kind + ',' + std::to_string(weights) + ',' +
               std::to_string(kept) + ',' + format_double(density) + ',' +
               std::to_string(bv) + ',' + std::to_string(bi) + ',' + std::to_string(sparse) +
               ',' + std::to_string(dense) + ',' + format_double(ratio) + '\n';
    };
    for (const LayerStorage& row : report.layers)
        row_line(row.layer, grain_shape_name(row.granularity), row.is_conv ? "conv" : "fc",
                 row.weight_count, row.kept_weights, row.density, row.bits_values,
                 row.bits_indices, row.sparse_bits, row.dense_bits, row.storage_ratio);
    row_line("(conv)", "-", "-", report.conv.weight_count, report.conv.kept_weights,
             report.conv.density(), 0, 0, report.conv.sparse_bits, report.conv.dense_bits,
             report.conv.ratio());
    row_line("(total)", "-", "-", report.total.weight_count, report.total.kept_weights,
             report.total.density(), 0, 0, report.total.sparse_bits, report.total.dense_bits,
             report.total.ratio());
    return out;
}

} // namespace sparsegrain
