// sparsegrain command line: prune / sensitivity / encode / storage-report /
// simulate / flops / report / interp. Every output is a pure function of the
// config file and the seed; files are written atomically.
//
// Exit codes: 0 success, 1 usage or config error, 2 data error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sparsegrain/csvio.hpp"
#include "sparsegrain/encoding.hpp"
#include "sparsegrain/errors.hpp"
#include "sparsegrain/flops.hpp"
#include "sparsegrain/model_io.hpp"
#include "sparsegrain/pruning.hpp"
#include "sparsegrain/quantize.hpp"
#include "sparsegrain/random.hpp"
#include "sparsegrain/simulate.hpp"
#include "sparsegrain/storage.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sparsegrain;

namespace {

struct ExperimentConfig {
    fs::path manifest;
    std::vector<GrainShape> granularities;
    std::vector<double> sparsity_stages;
    std::vector<double> sparsity_grid;
    std::uint64_t seed = 1;
    int eval_batch = 1;
    SimConfig sim;
    std::vector<double> act_densities; // one entry broadcasts to all layers
    std::string value_codec = "linear"; // or "codebook"
    int codebook_bits = 8;
    fs::path out_dir;
};

// Paths in the config file resolve relative to the config's directory, so a
// config travels with its data.
ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open config '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidArgument("config '" + path.string() + "': " + e.what());
    }

    ExperimentConfig cfg;
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    try {
        if (!doc.contains("manifest"))
            throw InvalidArgument("config '" + path.string() + "': missing manifest path");
        cfg.manifest = base / doc.at("manifest").get<std::string>();

        for (const std::string& token :
             doc.value("granularities",
                       std::vector<std::string>{"fine", "vector", "kernel", "filter"}))
            cfg.granularities.push_back(parse_grain_shape(token));
        if (cfg.granularities.empty())
            throw InvalidArgument("config '" + path.string() + "': empty granularity list");

        cfg.sparsity_stages =
            doc.value("sparsity_stages", std::vector<double>{0.3, 0.5, 0.7});
        cfg.sparsity_grid =
            doc.value("sparsity_grid", std::vector<double>{0.0, 0.2, 0.4, 0.6, 0.8});
        cfg.seed = doc.value("seed", std::uint64_t{1});
        cfg.eval_batch = doc.value("eval_batch", 1);

        if (doc.contains("sim")) {
            const json& sim = doc["sim"];
            cfg.sim.weights_per_group = sim.value("weights_per_group", 4);
            cfg.sim.acts_per_group = sim.value("acts_per_group", 4);
            cfg.sim.count_dense_baseline = sim.value("dense_baseline", true);
        }
        if (doc.contains("act_densities"))
            cfg.act_densities = doc["act_densities"].get<std::vector<double>>();
        else
            cfg.act_densities = {doc.value("act_density", 0.35)};

        cfg.value_codec = doc.value("value_codec", std::string("linear"));
        if (cfg.value_codec != "linear" && cfg.value_codec != "codebook")
            throw InvalidArgument("config '" + path.string() + "': value_codec must be " +
                                  "'linear' or 'codebook'");
        cfg.codebook_bits = doc.value("codebook_bits", 8);
        cfg.out_dir = base / doc.value("out_dir", std::string("out"));
    } catch (const json::exception& e) {
        throw InvalidArgument("config '" + path.string() + "': " + e.what());
    }
    return cfg;
}

std::string sanitize(const std::string& name) {
    std::string out = name;
    for (char& c : out)
        if (c == '/' || c == '\\' || c == ' ') c = '_';
    return out;
}

fs::path mask_path(const ExperimentConfig& cfg, GrainShape shape) {
    return cfg.out_dir / ("masks_" + std::string(grain_shape_name(shape)) + ".json");
}

fs::path encoding_path(const ExperimentConfig& cfg, GrainShape shape,
                       const std::string& layer) {
    return cfg.out_dir /
           ("enc_" + std::string(grain_shape_name(shape)) + "_" + sanitize(layer) + ".bin");
}

/// Masks for one granularity: derived single-shot at `density` when given,
/// otherwise loaded from the prune artifacts in the output directory.
std::vector<PruneMask> masks_for(const ExperimentConfig& cfg,
                                 const std::vector<WeightTensor>& model, GrainShape shape,
                                 std::optional<double> density) {
    if (density) {
        if (!(*density > 0.0) || *density > 1.0)
            throw InvalidArgument("--density must lie in (0, 1], got " +
                                  std::to_string(*density));
        std::vector<PruneMask> masks;
        masks.reserve(model.size());
        for (const WeightTensor& tensor : model)
            masks.push_back(prune_to_sparsity(
                tensor, effective_shape(tensor.spec, shape), 1.0 - *density));
        return masks;
    }

    const fs::path path = mask_path(cfg, shape);
    if (!fs::exists(path))
        throw InvalidArgument("no mask file at '" + path.string() +
                              "'; run the prune command first or pass --density");
    std::map<std::string, PruneMask> by_name;
    for (auto& [mask, mask_shape] : load_masks(path)) by_name[mask.layer] = std::move(mask);

    std::vector<PruneMask> masks;
    masks.reserve(model.size());
    for (const WeightTensor& tensor : model) {
        const auto it = by_name.find(tensor.spec.name);
        if (it == by_name.end())
            throw DataError("mask file '" + path.string() + "' has no entry for layer '" +
                            tensor.spec.name + "'");
        if (it->second.keep.size() != tensor.values.size())
            throw DataError("mask for layer '" + tensor.spec.name +
                            "' does not match the tensor size");
        masks.push_back(std::move(it->second));
    }
    return masks;
}

std::vector<SparseEncoding> encode_model(const ExperimentConfig& cfg,
                                         const std::vector<WeightTensor>& model,
                                         const std::vector<PruneMask>& masks,
                                         GrainShape shape) {
    std::vector<SparseEncoding> encodings;
    encodings.reserve(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
        const GrainShape layer_shape = effective_shape(model[i].spec, shape);
        if (cfg.value_codec == "codebook") {
            std::vector<float> kept;
            for (std::size_t w = 0; w < model[i].values.size(); ++w)
                if (masks[i].keep[w]) kept.push_back(model[i].values[w]);
            if (kept.empty()) kept.push_back(0.0f);
            const Codebook book =
                quantize(kept, cfg.codebook_bits, mix_seed(cfg.seed, i));
            encodings.push_back(encode(model[i], masks[i], layer_shape, &book));
        } else {
            encodings.push_back(encode(model[i], masks[i], layer_shape));
        }
    }
    return encodings;
}

/// Whole-model storage ratio for a set of masks, computed from exact bit
/// counts (no streams materialized).
double mask_storage_ratio(const std::vector<WeightTensor>& model,
                          const std::vector<PruneMask>& masks, GrainShape shape) {
    std::uint64_t sparse = 0, dense = 0;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const GrainPartition part =
            partition(model[i].spec, effective_shape(model[i].spec, shape));
        sparse += count_storage_bits(masks[i], part).bits_total;
        dense += std::uint64_t{8} * model[i].spec.weight_count();
    }
    return dense ? static_cast<double>(sparse) / dense : 0.0;
}

std::vector<GrainShape> layer_shapes(const std::vector<WeightTensor>& model,
                                     GrainShape shape) {
    std::vector<GrainShape> shapes;
    shapes.reserve(model.size());
    for (const WeightTensor& tensor : model)
        shapes.push_back(effective_shape(tensor.spec, shape));
    return shapes;
}

std::vector<GrainShape> sweep(const ExperimentConfig& cfg, const std::string& only) {
    if (only.empty()) return cfg.granularities;
    return {parse_grain_shape(only)};
}

// ---------------------------------------------------------------------------
// Subcommands.

int cmd_prune(const ExperimentConfig& cfg, const std::string& only) {
    const std::vector<WeightTensor> model = load_model(cfg.manifest);
    fs::create_directories(cfg.out_dir);
    for (GrainShape shape : sweep(cfg, only)) {
        DistortionEvaluator eval(model, cfg.seed, cfg.eval_batch);
        const PruneSchedule schedule =
            PruneSchedule::uniform(cfg.sparsity_stages, model.size());

        std::vector<double> storage_curve;
        const IterativePruneResult result = iterative_prune(
            model, shape, schedule, eval,
            [&](std::size_t, const std::vector<PruneMask>& stage_masks) {
                storage_curve.push_back(mask_storage_ratio(model, stage_masks, shape));
            });

        save_masks(mask_path(cfg, shape), result.masks, layer_shapes(model, shape));
        std::string csv = "density,score,storage_ratio\n";
        for (std::size_t s = 0; s < result.curve.size(); ++s)
            csv += format_double(result.curve[s].conv_density) + ',' +
                   format_double(result.curve[s].score) + ',' +
                   format_double(storage_curve[s]) + '\n';
        const fs::path curve_path =
            cfg.out_dir / ("curve_" + std::string(grain_shape_name(shape)) + ".csv");
        write_file_atomic(curve_path, csv);

        const StageResult& last = result.curve.back();
        std::cout << grain_shape_name(shape) << ": density "
                  << format_double(last.conv_density) << ", score "
                  << format_double(last.score) << ", storage_ratio "
                  << format_double(storage_curve.back()) << "\n";
    }
    return 0;
}

int cmd_sensitivity(const ExperimentConfig& cfg, const std::string& only) {
    const std::vector<WeightTensor> model = load_model(cfg.manifest);
    fs::create_directories(cfg.out_dir);
    for (GrainShape shape : sweep(cfg, only)) {
        DistortionEvaluator eval(model, cfg.seed, cfg.eval_batch);
        const SensitivityReport report =
            sensitivity_scan(model, shape, cfg.sparsity_grid, eval);
        std::string csv = "layer,sparsity,score\n";
        for (std::size_t l = 0; l < report.layers.size(); ++l)
            for (const SensitivityPoint& p : report.points[l])
                csv += report.layers[l] + ',' + format_double(p.sparsity) + ',' +
                       format_double(p.score) + '\n';
        const fs::path path =
            cfg.out_dir / ("sensitivity_" + std::string(grain_shape_name(shape)) + ".csv");
        write_file_atomic(path, csv);
        std::cout << grain_shape_name(shape) << ": scanned " << report.layers.size()
                  << " layers at " << cfg.sparsity_grid.size() << " sparsities\n";
    }
    return 0;
}

int cmd_encode(const ExperimentConfig& cfg, const std::string& gran,
               std::optional<double> density) {
    const std::vector<WeightTensor> model = load_model(cfg.manifest);
    const GrainShape shape = parse_grain_shape(gran);
    const std::vector<PruneMask> masks = masks_for(cfg, model, shape, density);
    fs::create_directories(cfg.out_dir);
    const std::vector<SparseEncoding> encodings = encode_model(cfg, model, masks, shape);
    std::uint64_t total_bits = 0;
    for (std::size_t i = 0; i < encodings.size(); ++i) {
        write_encoding(encoding_path(cfg, shape, model[i].spec.name), encodings[i]);
        total_bits += encodings[i].bits_total;
    }
    std::cout << "encoded " << encodings.size() << " layers (" << grain_shape_name(shape)
              << "), total " << total_bits << " bits\n";
    return 0;
}

int cmd_storage_report(const ExperimentConfig& cfg, const std::string& gran) {
    const std::vector<WeightTensor> model = load_model(cfg.manifest);
    const GrainShape shape = parse_grain_shape(gran);
    std::vector<SparseEncoding> encodings;
    std::vector<LayerSpec> specs;
    for (const WeightTensor& tensor : model) {
        const fs::path path = encoding_path(cfg, shape, tensor.spec.name);
        if (!fs::exists(path))
            throw InvalidArgument("no encoding at '" + path.string() +
                                  "'; run the encode command first");
        encodings.push_back(read_encoding(path));
        specs.push_back(tensor.spec);
    }
    const StorageReport report = storage_ratio(encodings, specs);
    const std::string stem = "storage_" + std::string(grain_shape_name(shape));
    write_file_atomic(cfg.out_dir / (stem + ".json"),
                      storage_report_json(report).dump(2) + "\n");
    write_file_atomic(cfg.out_dir / (stem + ".csv"), storage_report_csv(report));
    std::cout << grain_shape_name(shape) << ": storage ratio conv "
              << format_double(report.conv.ratio()) << ", total "
              << format_double(report.total.ratio()) << "\n";
    return 0;
}

int cmd_simulate(const ExperimentConfig& cfg, const std::string& gran,
                 std::optional<double> density) {
    const std::vector<WeightTensor> model = load_model(cfg.manifest);
    const GrainShape shape = parse_grain_shape(gran);
    const std::vector<PruneMask> masks = masks_for(cfg, model, shape, density);
    fs::create_directories(cfg.out_dir);
    const MemRefReport report =
        simulate_model(model, masks, cfg.act_densities, cfg.seed, cfg.sim);
    const std::string stem = "memref_" + std::string(grain_shape_name(shape));
    write_file_atomic(cfg.out_dir / (stem + ".json"),
                      memref_report_json(report).dump(2) + "\n");
    write_file_atomic(cfg.out_dir / (stem + ".csv"), memref_report_csv(report));
    std::cout << grain_shape_name(shape) << ": sparse refs " << report.total_sparse_refs
              << ", dense refs " << report.total_dense_refs << ", relative "
              << format_double(report.relative()) << "\n";
    return 0;
}

int cmd_flops(const ExperimentConfig& cfg, const std::string& gran,
              std::optional<double> density) {
    const std::vector<WeightTensor> model = load_model(cfg.manifest);
    const GrainShape shape = parse_grain_shape(gran);
    const std::vector<PruneMask> masks = masks_for(cfg, model, shape, density);
    fs::create_directories(cfg.out_dir);
    const FlopsReport report = count_flops(model, masks);
    const std::string stem = "flops_" + std::string(grain_shape_name(shape));
    write_file_atomic(cfg.out_dir / (stem + ".json"),
                      flops_report_json(report).dump(2) + "\n");
    write_file_atomic(cfg.out_dir / (stem + ".csv"), flops_report_csv(report));
    std::cout << grain_shape_name(shape) << ": flops " << report.total_flops << " of "
              << report.total_dense << " (ratio " << format_double(report.ratio())
              << ")\n";
    return 0;
}

int cmd_report(const ExperimentConfig& cfg, const std::string& only,
               std::optional<double> density) {
    const std::vector<WeightTensor> model = load_model(cfg.manifest);
    fs::create_directories(cfg.out_dir);
    std::string combined =
        "granularity,conv_density,flops_ratio,storage_conv,storage_total,memref_relative\n";

    for (GrainShape shape : sweep(cfg, only)) {
        const std::vector<PruneMask> masks = masks_for(cfg, model, shape, density);
        const FlopsReport flops = count_flops(model, masks);
        const std::vector<SparseEncoding> encodings = encode_model(cfg, model, masks, shape);
        std::vector<LayerSpec> specs;
        for (const WeightTensor& tensor : model) specs.push_back(tensor.spec);
        StorageReport storage = storage_ratio(encodings, specs);

        // An unpruned layer stays in dense form; sparse-encoding it would
        // only add index overhead.
        for (std::size_t i = 0; i < storage.layers.size(); ++i) {
            LayerStorage& row = storage.layers[i];
            if (row.kept_weights == row.weight_count && row.sparse_bits > row.dense_bits) {
                const std::uint64_t delta = row.sparse_bits - row.dense_bits;
                storage.total.sparse_bits -= delta;
                if (row.is_conv) storage.conv.sparse_bits -= delta;
                row.sparse_bits = row.dense_bits;
                row.bits_values = row.dense_bits;
                row.bits_indices = 0;
                row.storage_ratio = 1.0;
            }
        }

        const MemRefReport memref =
            simulate_model(model, masks, cfg.act_densities, cfg.seed, cfg.sim);

        json layers = json::array();
        for (std::size_t i = 0; i < model.size(); ++i) {
            layers.push_back({
                {"layer", model[i].spec.name},
                {"density", masks[i].density()},
                {"flops_ratio", flops.layers[i].ratio},
                {"storage_ratio", storage.layers[i].storage_ratio},
            });
        }
        const json doc = {
            {"granularity", grain_shape_name(shape)},
            {"layers", layers},
            {"conv_density", conv_density(model, masks)},
            {"flops_ratio", flops.ratio()},
            {"storage_conv", storage.conv.ratio()},
            {"storage_total", storage.total.ratio()},
            {"memref_relative", memref.relative()},
        };
        const fs::path path =
            cfg.out_dir / ("report_" + std::string(grain_shape_name(shape)) + ".json");
        write_file_atomic(path, doc.dump(2) + "\n");

        combined += std::string(grain_shape_name(shape)) + ',' +
                    format_double(doc["conv_density"].get<double>()) + ',' +
                    format_double(flops.ratio()) + ',' +
                    format_double(storage.conv.ratio()) + ',' +
                    format_double(storage.total.ratio()) + ',' +
                    format_double(memref.relative()) + '\n';
        std::cout << grain_shape_name(shape) << ": flops "
                  << format_double(flops.ratio()) << ", storage conv "
                  << format_double(storage.conv.ratio()) << ", storage total "
                  << format_double(storage.total.ratio()) << ", memref "
                  << format_double(memref.relative()) << "\n";
    }
    write_file_atomic(cfg.out_dir / "report.csv", combined);
    return 0;
}

int cmd_interp(const fs::path& curve_csv, double target) {
    const CsvTable table = read_csv(curve_csv);
    int acc_col = table.column("accuracy");
    if (acc_col < 0) acc_col = table.column("score");
    int density_col = table.column("density");
    if (density_col < 0) density_col = table.column("conv_density");
    if (acc_col < 0 || density_col < 0)
        throw DataError("curve '" + curve_csv.string() +
                        "' needs an accuracy (or score) column and a density column");
    const int storage_col = table.column("storage_ratio");

    auto parse_cell = [&](const std::string& cell) {
        try {
            return std::stod(cell);
        } catch (const std::exception&) {
            throw DataError("curve '" + curve_csv.string() + "': bad number '" + cell + "'");
        }
    };
    std::vector<std::pair<double, double>> density_curve, storage_curve;
    for (const auto& row : table.rows) {
        const double acc = parse_cell(row[acc_col]);
        density_curve.emplace_back(acc, parse_cell(row[density_col]));
        if (storage_col >= 0) storage_curve.emplace_back(acc, parse_cell(row[storage_col]));
    }

    json out = {{"accuracy", target},
                {"density", interpolate_at_accuracy(density_curve, target)}};
    if (storage_col >= 0)
        out["storage_ratio"] = interpolate_at_accuracy(storage_curve, target);
    std::cout << out.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Granularity-aware pruning, sparse encoding, and dataflow simulation"};
    app.require_subcommand(1);

    std::string config_path, out_override;
    std::string gran_filter;        // prune/sensitivity/report: empty = full sweep
    std::string gran_one = "fine";  // single-granularity commands
    std::optional<std::uint64_t> seed_override;
    std::optional<double> density;

    auto add_common = [&](CLI::App* sub, bool needs_config = true) {
        auto* opt = sub->add_option("--config", config_path, "experiment config (JSON)");
        if (needs_config) opt->required();
        sub->add_option("--seed", seed_override, "override the config seed");
        sub->add_option("--out", out_override, "override the output directory");
    };

    CLI::App* prune = app.add_subcommand("prune", "iterative pruning sweep; writes masks and curves");
    add_common(prune);
    prune->add_option("--granularity", gran_filter, "restrict to one granularity");

    CLI::App* sens = app.add_subcommand("sensitivity", "per-layer sparsity scan");
    add_common(sens);
    sens->add_option("--granularity", gran_filter, "restrict to one granularity");

    CLI::App* enc = app.add_subcommand("encode", "write sparse encodings for pruned layers");
    add_common(enc);
    enc->add_option("--granularity", gran_one, "granularity to encode");
    enc->add_option("--density", density, "derive single-shot masks at this kept density");

    CLI::App* sto = app.add_subcommand("storage-report", "bit-exact storage ratios from encodings");
    add_common(sto);
    sto->add_option("--granularity", gran_one, "granularity to report");

    CLI::App* sim = app.add_subcommand("simulate", "count output memory references");
    add_common(sim);
    sim->add_option("--granularity", gran_one, "granularity of the masks");
    sim->add_option("--density", density, "derive single-shot masks at this kept density");

    CLI::App* flo = app.add_subcommand("flops", "per-layer FLOP counts");
    add_common(flo);
    flo->add_option("--granularity", gran_one, "granularity of the masks");
    flo->add_option("--density", density, "derive single-shot masks at this kept density");

    CLI::App* rep = app.add_subcommand("report", "combined density/flops/storage/memref table");
    add_common(rep);
    rep->add_option("--granularity", gran_filter, "restrict to one granularity");
    rep->add_option("--density", density, "derive single-shot masks at this kept density");

    CLI::App* itp = app.add_subcommand("interp", "interpolate density at a target accuracy");
    std::string curve_path;
    double target_accuracy = 0.0;
    itp->add_option("curve", curve_path, "curve CSV (accuracy/score + density columns)")
        ->required();
    itp->add_option("accuracy", target_accuracy, "target accuracy")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (itp->parsed()) return cmd_interp(curve_path, target_accuracy);

        ExperimentConfig cfg = load_config(config_path);
        if (seed_override) cfg.seed = *seed_override;
        if (!out_override.empty()) cfg.out_dir = out_override;

        if (prune->parsed()) return cmd_prune(cfg, gran_filter);
        if (sens->parsed()) return cmd_sensitivity(cfg, gran_filter);
        if (enc->parsed()) return cmd_encode(cfg, gran_one, density);
        if (sto->parsed()) return cmd_storage_report(cfg, gran_one);
        if (sim->parsed()) return cmd_simulate(cfg, gran_one, density);
        if (flo->parsed()) return cmd_flops(cfg, gran_one, density);
        if (rep->parsed()) return cmd_report(cfg, gran_filter, density);
        return 1;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
