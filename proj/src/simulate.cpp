#include "sparsegrain/simulate.hpp"

#include <utility>

#include "sparsegrain/csvio.hpp"
#include "sparsegrain/errors.hpp"
#include "sparsegrain/random.hpp"

namespace sparsegrain {

void SimConfig::validate() const {
    if (weights_per_group < 1 || acts_per_group < 1)
        throw InvalidArgument("sim group sizes must be at least 1");
}

namespace {

struct ChannelWeight {
    float value;
    std::int32_t cbase; // c * out_h * out_w
    std::int32_t xoff;  // ox = x - xoff
    std::int32_t yoff;
};

struct DataflowCounts {
    std::uint64_t products = 0;
    std::uint64_t refs = 0;
};

// Walks the blocked Cartesian products of one layer. `keep` may be null for
// the dense baseline; `output` may be null to skip accumulation.
DataflowCounts run_dataflow(const WeightTensor& tensor, const std::uint8_t* keep,
                            const ActivationMap& acts, const SimConfig& cfg,
                            std::vector<double>* output) {
    const LayerSpec& spec = tensor.spec;
    const int out_h = spec.output_h();
    const int out_w = spec.output_w();
    const int F = cfg.weights_per_group;
    const int I = cfg.acts_per_group;

    DataflowCounts counts;
    std::vector<ChannelWeight> weights;
    std::vector<std::int64_t> seen;
    seen.reserve(static_cast<std::size_t>(F) * I);

    for (int k = 0; k < spec.in_channels; ++k) {
        weights.clear();
        for (int c = 0; c < spec.out_channels; ++c) {
            const std::int32_t cbase = c * out_h * out_w;
            for (int r = 0; r < spec.kernel_h; ++r)
                for (int s = 0; s < spec.kernel_w; ++s) {
                    const std::size_t flat = tensor.flat_index(c, k, r, s);
                    if (keep && !keep[flat]) continue;
                    weights.push_back(
                        {tensor.values[flat], cbase, r - spec.pad, s - spec.pad});
                }
        }
        const auto& cells = acts.nonzeros[k];
        if (weights.empty() || cells.empty()) continue;

        for (std::size_t w0 = 0; w0 < weights.size(); w0 += F) {
            const std::size_t w1 = std::min(weights.size(), w0 + F);
            for (std::size_t a0 = 0; a0 < cells.size(); a0 += I) {
                const std::size_t a1 = std::min(cells.size(), a0 + I);
                seen.clear();
                for (std::size_t wi = w0; wi < w1; ++wi) {
                    const ChannelWeight& w = weights[wi];
                    for (std::size_t ai = a0; ai < a1; ++ai) {
                        const ActivationMap::Cell& a = cells[ai];
                        const int ox = a.x - w.xoff;
                        const int oy = a.y - w.yoff;
                        if (static_cast<unsigned>(ox) >= static_cast<unsigned>(out_h) ||
                            static_cast<unsigned>(oy) >= static_cast<unsigned>(out_w))
                            continue;
                        const std::int64_t addr = w.cbase + ox * out_w + oy;
                        counts.products += 1;
                        if (output)
                            (*output)[static_cast<std::size_t>(addr)] +=
                                static_cast<double>(w.value) * a.value;
                        bool dup = false;
                        for (std::int64_t prior : seen)
                            if (prior == addr) {
                                dup = true;
                                break;
                            }
                        if (!dup) seen.push_back(addr);
                    }
                }
                counts.refs += seen.size();
            }
        }
    }
    return counts;
}

} // namespace

LayerSimResult simulate_layer(const WeightTensor& tensor, const PruneMask& mask,
                              const ActivationMap& acts, const SimConfig& cfg) {
    cfg.validate();
    const LayerSpec& spec = tensor.spec;
    if (!spec.is_conv())
        throw InvalidArgument("layer '" + spec.name + "': simulator handles conv layers only");
    if (spec.stride != 1)
        throw InvalidArgument("layer '" + spec.name + "': simulator requires stride 1");
    if (mask.keep.size() != tensor.values.size())
        throw InvalidArgument("layer '" + spec.name + "': mask length mismatch");
    if (acts.channels != spec.in_channels || acts.height != spec.input_h ||
        acts.width != spec.input_w)
        throw InvalidArgument("layer '" + spec.name + "': activation geometry mismatch");

    LayerSimResult result;
    result.out_h = spec.output_h();
    result.out_w = spec.output_w();
    result.output.assign(
        static_cast<std::size_t>(spec.out_channels) * result.out_h * result.out_w, 0.0);

    const DataflowCounts sparse =
        run_dataflow(tensor, mask.keep.data(), acts, cfg, &result.output);
    result.refs.layer = spec.name;
    result.refs.weight_density = mask.density();
    result.refs.act_density = acts.density();
    result.refs.products = sparse.products;
    result.refs.sparse_refs = sparse.refs;
    if (cfg.count_dense_baseline) {
        result.refs.dense_baseline_refs = run_dataflow(tensor, nullptr, acts, cfg, nullptr).refs;
        if (result.refs.dense_baseline_refs)
            result.refs.relative = static_cast<double>(result.refs.sparse_refs) /
                                   result.refs.dense_baseline_refs;
    }
    return result;
}

MemRefReport simulate_model(const std::vector<WeightTensor>& model,
                            const std::vector<PruneMask>& masks,
                            const std::vector<double>& act_densities, std::uint64_t seed,
                            const SimConfig& cfg) {
    cfg.validate();
    if (masks.size() != model.size())
        throw InvalidArgument("simulate_model: mask count mismatch");
    if (act_densities.size() != 1 && act_densities.size() != model.size())
        throw InvalidArgument("simulate_model: need one activation density or one per layer");
    for (double d : act_densities)
        if (!(d > 0.0) || d > 1.0)
            throw InvalidArgument("activation density must lie in (0, 1], got " +
                                  std::to_string(d));

    MemRefReport report;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const LayerSpec& spec = model[i].spec;
        if (!spec.is_conv() || spec.stride != 1) continue;
        const double density = act_densities.size() == 1 ? act_densities[0] : act_densities[i];
        Rng rng(mix_seed(seed, i));
        const ActivationMap acts = make_random_activations(spec.in_channels, spec.input_h,
                                                           spec.input_w, density, rng);
        LayerSimResult layer = simulate_layer(model[i], masks[i], acts, cfg);
        report.total_sparse_refs += layer.refs.sparse_refs;
        report.total_dense_refs += layer.refs.dense_baseline_refs;
        report.layers.push_back(std::move(layer.refs));
    }
    return report;
}

nlohmann::json memref_report_json(const MemRefReport& report) {
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerMemRef& row : report.layers) {
        layers.push_back({
            {"layer", row.layer},
            {"weight_density", row.weight_density},
            {"act_density", row.act_density},
            {"products", row.products},
            {"sparse_refs", row.sparse_refs},
            {"dense_refs", row.dense_baseline_refs},
            {"relative", row.relative},
        });
    }
    return {
        {"layers", layers},
        {"total",
         {{"sparse_refs", report.total_sparse_refs},
          {"dense_refs", report.total_dense_refs},
          {"relative", report.relative()}}},
    };
}

std::string memref_report_csv(const MemRefReport& report) {
    std::string out =
        "layer,weight_density,act_density,products,sparse_refs,dense_refs,relative\n";
    for (const LayerMemRef& row : report.layers)
        out += row.layer + ',' + format_double(row.weight_density) + ',' +
               format_double(row.act_density) + ',' + std::to_string(row.products) + ',' +
               std::to_string(row.sparse_refs) + ',' +
               std::to_string(row.dense_baseline_refs) + ',' + format_double(row.relative) +
               '\n';
    out += "(total),,,," + std::to_string(report.total_sparse_refs) + ',' +
           std::to_string(report.total_dense_refs) + ',' + format_double(report.relative()) +
           '\n';
    return out;
}

} // namespace sparsegrain
