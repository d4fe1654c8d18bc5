// Python bindings. Granularities and layer kinds cross the boundary as
// strings ("fine"/"vector"/"kernel"/"filter", "conv"/"fc"); weight and mask
// buffers cross as numpy arrays.
#include <cstring>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sparsegrain/activations.hpp"
#include "sparsegrain/encoding.hpp"
#include "sparsegrain/errors.hpp"
#include "sparsegrain/flops.hpp"
#include "sparsegrain/forward.hpp"
#include "sparsegrain/model.hpp"
#include "sparsegrain/model_io.hpp"
#include "sparsegrain/pruning.hpp"
#include "sparsegrain/quantize.hpp"
#include "sparsegrain/random.hpp"
#include "sparsegrain/simulate.hpp"
#include "sparsegrain/storage.hpp"

namespace py = pybind11;
using namespace sparsegrain;

namespace {

template <typename T>
py::array_t<T> to_array(const std::vector<T>& values) {
    py::array_t<T> out(static_cast<py::ssize_t>(values.size()));
    std::memcpy(out.mutable_data(), values.data(), values.size() * sizeof(T));
    return out;
}

template <typename T>
std::vector<T> from_array(const py::array_t<T, py::array::c_style | py::array::forcecast>& arr) {
    return std::vector<T>(arr.data(), arr.data() + arr.size());
}

std::string kind_name(LayerKind kind) { return kind == LayerKind::Conv ? "conv" : "fc"; }

LayerKind parse_kind(const std::string& token) {
    if (token == "conv") return LayerKind::Conv;
    if (token == "fc") return LayerKind::FullyConnected;
    throw InvalidArgument("unknown layer kind '" + token + "' (want 'conv' or 'fc')");
}

SimConfig make_sim_config(int weights_per_group, int acts_per_group, bool dense_baseline) {
    SimConfig cfg;
    cfg.weights_per_group = weights_per_group;
    cfg.acts_per_group = acts_per_group;
    cfg.count_dense_baseline = dense_baseline;
    return cfg;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Granularity-aware pruning, sparse encoding, and dataflow simulation";

    py::register_exception<InvalidArgument>(m, "InvalidArgumentError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);

    py::class_<LayerSpec>(m, "LayerSpec")
        .def(py::init([](const std::string& name, const std::string& kind, int out_channels,
                         int in_channels, int kernel_h, int kernel_w, int stride, int pad,
                         int input_h, int input_w) {
                 LayerSpec spec;
                 spec.name = name;
                 spec.kind = parse_kind(kind);
                 spec.out_channels = out_channels;
                 spec.in_channels = in_channels;
                 spec.kernel_h = kernel_h;
                 spec.kernel_w = kernel_w;
                 spec.stride = stride;
                 spec.pad = pad;
                 spec.input_h = input_h;
                 spec.input_w = input_w;
                 spec.validate();
                 return spec;
             }),
             py::arg("name"), py::arg("kind"), py::arg("out_channels"), py::arg("in_channels"),
             py::arg("kernel_h") = 1, py::arg("kernel_w") = 1, py::arg("stride") = 1,
             py::arg("pad") = 0, py::arg("input_h") = 1, py::arg("input_w") = 1)
        .def_readonly("name", &LayerSpec::name)
        .def_property_readonly("kind", [](const LayerSpec& s) { return kind_name(s.kind); })
        .def_readonly("out_channels", &LayerSpec::out_channels)
        .def_readonly("in_channels", &LayerSpec::in_channels)
        .def_readonly("kernel_h", &LayerSpec::kernel_h)
        .def_readonly("kernel_w", &LayerSpec::kernel_w)
        .def_readonly("stride", &LayerSpec::stride)
        .def_readonly("pad", &LayerSpec::pad)
        .def_readonly("input_h", &LayerSpec::input_h)
        .def_readonly("input_w", &LayerSpec::input_w)
        .def("weight_count", &LayerSpec::weight_count)
        .def("output_h", &LayerSpec::output_h)
        .def("output_w", &LayerSpec::output_w)
        .def("is_conv", &LayerSpec::is_conv)
        .def("__repr__", [](const LayerSpec& s) {
            return "LayerSpec('" + s.name + "', " + kind_name(s.kind) + ", " +
                   std::to_string(s.out_channels) + "x" + std::to_string(s.in_channels) + "x" +
                   std::to_string(s.kernel_h) + "x" + std::to_string(s.kernel_w) + ")";
        });

    py::class_<WeightTensor>(m, "WeightTensor")
        .def(py::init([](const LayerSpec& spec,
                         py::array_t<float, py::array::c_style | py::array::forcecast> values) {
                 WeightTensor tensor;
                 tensor.spec = spec;
                 tensor.values = from_array(values);
                 tensor.validate();
                 return tensor;
             }),
             py::arg("spec"), py::arg("values"))
        .def_readonly("spec", &WeightTensor::spec)
        .def_property_readonly("values",
                               [](const WeightTensor& t) { return to_array(t.values); },
                               "flat (c, k, r, s) row-major float32 copy")
        .def("at", &WeightTensor::at, py::arg("c"), py::arg("k"), py::arg("r"), py::arg("s"));

    py::class_<PruneMask>(m, "PruneMask")
        .def(py::init([](const std::string& layer,
                         py::array_t<std::uint8_t,
                                     py::array::c_style | py::array::forcecast> keep) {
                 PruneMask mask;
                 mask.layer = layer;
                 mask.keep = from_array(keep);
                 for (std::uint8_t& v : mask.keep) v = v ? 1 : 0;
                 return mask;
             }),
             py::arg("layer"), py::arg("keep"))
        .def_readonly("layer", &PruneMask::layer)
        .def_property_readonly("keep",
                               [](const PruneMask& mask) { return to_array(mask.keep); })
        .def("kept_count", &PruneMask::kept_count)
        .def("density", &PruneMask::density);

    py::class_<StorageBits>(m, "StorageBits")
        .def_readonly("kept_grains", &StorageBits::kept_grains)
        .def_readonly("padding_grains", &StorageBits::padding_grains)
        .def_readonly("bits_total", &StorageBits::bits_total);

    py::class_<Codebook>(m, "Codebook")
        .def_readonly("n_bits", &Codebook::n_bits)
        .def_property_readonly("centers",
                               [](const Codebook& b) { return to_array(b.centers); })
        .def_property_readonly("assignment",
                               [](const Codebook& b) { return to_array(b.assignment); })
        .def_readonly("reconstruction_error", &Codebook::reconstruction_error)
        .def("nearest", &Codebook::nearest, py::arg("value"));

    py::class_<SparseEncoding>(m, "SparseEncoding")
        .def_property_readonly(
            "granularity",
            [](const SparseEncoding& e) { return std::string(grain_shape_name(e.granularity)); })
        .def_readonly("spec", &SparseEncoding::spec)
        .def_property_readonly("index_stream",
                               [](const SparseEncoding& e) { return to_array(e.index_stream); })
        .def_property_readonly("value_stream",
                               [](const SparseEncoding& e) { return to_array(e.value_stream); })
        .def_readonly("kept_grains", &SparseEncoding::kept_grains)
        .def_readonly("padding_grains", &SparseEncoding::padding_grains)
        .def_readonly("kept_weights", &SparseEncoding::kept_weights)
        .def_readonly("bits_values", &SparseEncoding::bits_values)
        .def_readonly("bits_indices", &SparseEncoding::bits_indices)
        .def_readonly("bits_total", &SparseEncoding::bits_total)
        .def_property_readonly("codec",
                               [](const SparseEncoding& e) {
                                   return e.codec == ValueCodec::LinearMinMax
                                              ? "linear"
                                              : "codebook";
                               })
        .def_readonly("value_min", &SparseEncoding::value_min)
        .def_readonly("value_max", &SparseEncoding::value_max)
        .def_property_readonly("centers",
                               [](const SparseEncoding& e) { return to_array(e.centers); })
        .def("stored_grains", &SparseEncoding::stored_grains)
        .def("dense_bits", &SparseEncoding::dense_bits)
        .def("decode_value", &SparseEncoding::decode_value, py::arg("code"));

    py::class_<ActivationMap>(m, "ActivationMap")
        .def_readonly("channels", &ActivationMap::channels)
        .def_readonly("height", &ActivationMap::height)
        .def_readonly("width", &ActivationMap::width)
        .def("nonzero_count", &ActivationMap::nonzero_count)
        .def("density", &ActivationMap::density)
        .def("cells",
             [](const ActivationMap& acts, int channel) {
                 std::vector<std::tuple<int, int, float>> out;
                 for (const auto& cell : acts.nonzeros.at(static_cast<std::size_t>(channel)))
                     out.emplace_back(cell.x, cell.y, cell.value);
                 return out;
             },
             py::arg("channel"), "nonzero (x, y, value) triples of one channel")
        .def("to_dense", [](const ActivationMap& acts) {
            py::array_t<float> out({acts.channels, acts.height, acts.width});
            const std::vector<float> dense = acts.to_dense();
            std::memcpy(out.mutable_data(), dense.data(), dense.size() * sizeof(float));
            return out;
        });

    py::class_<LayerMemRef>(m, "LayerMemRef")
        .def_readonly("layer", &LayerMemRef::layer)
        .def_readonly("weight_density", &LayerMemRef::weight_density)
        .def_readonly("act_density", &LayerMemRef::act_density)
        .def_readonly("products", &LayerMemRef::products)
        .def_readonly("sparse_refs", &LayerMemRef::sparse_refs)
        .def_readonly("dense_baseline_refs", &LayerMemRef::dense_baseline_refs)
        .def_readonly("relative", &LayerMemRef::relative);

    py::class_<MemRefReport>(m, "MemRefReport")
        .def_readonly("layers", &MemRefReport::layers)
        .def_readonly("total_sparse_refs", &MemRefReport::total_sparse_refs)
        .def_readonly("total_dense_refs", &MemRefReport::total_dense_refs)
        .def("relative", &MemRefReport::relative);

    py::class_<LayerSimResult>(m, "LayerSimResult")
        .def_readonly("refs", &LayerSimResult::refs)
        .def_readonly("out_h", &LayerSimResult::out_h)
        .def_readonly("out_w", &LayerSimResult::out_w)
        .def_property_readonly("output", [](const LayerSimResult& r) {
            py::array_t<double> out(static_cast<py::ssize_t>(r.output.size()));
            std::memcpy(out.mutable_data(), r.output.data(), r.output.size() * sizeof(double));
            return out;
        });

    py::class_<LayerFlops>(m, "LayerFlops")
        .def_readonly("layer", &LayerFlops::layer)
        .def_readonly("flops", &LayerFlops::flops)
        .def_readonly("dense_flops", &LayerFlops::dense_flops)
        .def_readonly("ratio", &LayerFlops::ratio);

    py::class_<FlopsReport>(m, "FlopsReport")
        .def_readonly("layers", &FlopsReport::layers)
        .def_readonly("total_flops", &FlopsReport::total_flops)
        .def_readonly("total_dense", &FlopsReport::total_dense)
        .def("ratio", &FlopsReport::ratio);

    py::class_<LayerStorage>(m, "LayerStorage")
        .def_readonly("layer", &LayerStorage::layer)
        .def_property_readonly(
            "granularity",
            [](const LayerStorage& s) { return std::string(grain_shape_name(s.granularity)); })
        .def_readonly("is_conv", &LayerStorage::is_conv)
        .def_readonly("weight_count", &LayerStorage::weight_count)
        .def_readonly("kept_weights", &LayerStorage::kept_weights)
        .def_readonly("density", &LayerStorage::density)
        .def_readonly("bits_values", &LayerStorage::bits_values)
        .def_readonly("bits_indices", &LayerStorage::bits_indices)
        .def_readonly("sparse_bits", &LayerStorage::sparse_bits)
        .def_readonly("dense_bits", &LayerStorage::dense_bits)
        .def_readonly("storage_ratio", &LayerStorage::storage_ratio);

    py::class_<StorageAggregate>(m, "StorageAggregate")
        .def_readonly("weight_count", &StorageAggregate::weight_count)
        .def_readonly("kept_weights", &StorageAggregate::kept_weights)
        .def_readonly("sparse_bits", &StorageAggregate::sparse_bits)
        .def_readonly("dense_bits", &StorageAggregate::dense_bits)
        .def("density", &StorageAggregate::density)
        .def("ratio", &StorageAggregate::ratio);

    py::class_<StorageReport>(m, "StorageReport")
        .def_readonly("layers", &StorageReport::layers)
        .def_readonly("conv", &StorageReport::conv)
        .def_readonly("total", &StorageReport::total);

    py::class_<SensitivityPoint>(m, "SensitivityPoint")
        .def_readonly("sparsity", &SensitivityPoint::sparsity)
        .def_readonly("score", &SensitivityPoint::score);

    py::class_<SensitivityReport>(m, "SensitivityReport")
        .def_readonly("layers", &SensitivityReport::layers)
        .def_readonly("points", &SensitivityReport::points);

    py::class_<StageResult>(m, "StageResult")
        .def_readonly("conv_density", &StageResult::conv_density)
        .def_readonly("score", &StageResult::score);

    py::class_<IterativePruneResult>(m, "IterativePruneResult")
        .def_readonly("masks", &IterativePruneResult::masks)
        .def_readonly("curve", &IterativePruneResult::curve);

    py::class_<DistortionEvaluator>(m, "DistortionEvaluator")
        .def(py::init<const std::vector<WeightTensor>&, std::uint64_t, int>(),
             py::arg("reference_model"), py::arg("seed"), py::arg("batch") = 1)
        .def("score", &DistortionEvaluator::score, py::arg("masked_model"),
             "negated mean squared layer-output error against the reference model");

    // model io
    m.def("load_model", &load_model, py::arg("manifest_path"));
    m.def("save_model", &save_model, py::arg("model"), py::arg("directory"),
          py::arg("manifest_name") = "manifest.json");

    // pruning
    m.def(
        "prune_to_sparsity",
        [](const WeightTensor& tensor, const std::string& granularity, double target) {
            return prune_to_sparsity(tensor, parse_grain_shape(granularity), target);
        },
        py::arg("tensor"), py::arg("granularity"), py::arg("target_sparsity"));
    m.def(
        "prune_to_sparsity_nested",
        [](const WeightTensor& tensor, const std::string& granularity, double target,
           const PruneMask& prior) {
            return prune_to_sparsity_nested(tensor, parse_grain_shape(granularity), target,
                                            prior);
        },
        py::arg("tensor"), py::arg("granularity"), py::arg("target_sparsity"),
        py::arg("prior"));
    m.def(
        "saliency",
        [](const WeightTensor& tensor, const std::string& granularity) {
            const GrainPartition part =
                partition(tensor.spec, parse_grain_shape(granularity));
            return to_array(saliency(tensor, part).scores);
        },
        py::arg("tensor"), py::arg("granularity"), "per-grain L1 norms in partition order");
    m.def("apply_mask", &apply_mask, py::arg("tensor"), py::arg("mask"));
    m.def("all_keep_mask", &all_keep_mask, py::arg("spec"));
    m.def(
        "is_grain_atomic",
        [](const PruneMask& mask, const LayerSpec& spec, const std::string& granularity) {
            return is_grain_atomic(mask, partition(spec, parse_grain_shape(granularity)));
        },
        py::arg("mask"), py::arg("spec"), py::arg("granularity"));
    m.def(
        "effective_granularity",
        [](const LayerSpec& spec, const std::string& granularity) {
            return std::string(
                grain_shape_name(effective_shape(spec, parse_grain_shape(granularity))));
        },
        py::arg("spec"), py::arg("granularity"),
        "the granularity actually applied (fully-connected layers fall back to 'fine')");
    m.def("conv_density", &conv_density, py::arg("model"), py::arg("masks"));
    m.def(
        "sensitivity_scan",
        [](const std::vector<WeightTensor>& model, const std::string& granularity,
           const std::vector<double>& grid, DistortionEvaluator& eval) {
            return sensitivity_scan(model, parse_grain_shape(granularity), grid, eval);
        },
        py::arg("model"), py::arg("granularity"), py::arg("grid"), py::arg("evaluator"));
    m.def(
        "iterative_prune",
        [](const std::vector<WeightTensor>& model, const std::string& granularity,
           const std::vector<double>& stage_targets, DistortionEvaluator& eval) {
            const PruneSchedule schedule =
                PruneSchedule::uniform(stage_targets, model.size());
            return iterative_prune(model, parse_grain_shape(granularity), schedule, eval);
        },
        py::arg("model"), py::arg("granularity"), py::arg("stage_targets"),
        py::arg("evaluator"),
        "stage_targets apply uniformly to every layer; masks nest across stages");
    m.def(
        "save_masks",
        [](const std::filesystem::path& path, const std::vector<PruneMask>& masks,
           const std::vector<std::string>& granularities) {
            std::vector<GrainShape> shapes;
            shapes.reserve(granularities.size());
            for (const std::string& g : granularities) shapes.push_back(parse_grain_shape(g));
            save_masks(path, masks, shapes);
        },
        py::arg("path"), py::arg("masks"), py::arg("granularities"));
    m.def(
        "load_masks",
        [](const std::filesystem::path& path) {
            std::vector<std::pair<PruneMask, std::string>> out;
            for (auto& [mask, shape] : load_masks(path))
                out.emplace_back(std::move(mask), grain_shape_name(shape));
            return out;
        },
        py::arg("path"));

    // encoding and storage
    m.def(
        "encode",
        [](const WeightTensor& tensor, const PruneMask& mask, const std::string& granularity,
           const Codebook* codebook) {
            return encode(tensor, mask, parse_grain_shape(granularity), codebook);
        },
        py::arg("tensor"), py::arg("mask"), py::arg("granularity"),
        py::arg("codebook") = nullptr);
    m.def(
        "decode",
        [](const SparseEncoding& encoding) {
            DecodedLayer layer = decode(encoding);
            return py::make_tuple(std::move(layer.tensor), std::move(layer.mask));
        },
        py::arg("encoding"), "returns (tensor, mask) with dequantized kept weights");
    m.def(
        "count_storage_bits",
        [](const PruneMask& mask, const LayerSpec& spec, const std::string& granularity) {
            return count_storage_bits(mask, partition(spec, parse_grain_shape(granularity)));
        },
        py::arg("mask"), py::arg("spec"), py::arg("granularity"));
    m.def("write_encoding", &write_encoding, py::arg("path"), py::arg("encoding"));
    m.def("read_encoding", &read_encoding, py::arg("path"));
    m.def("storage_ratio", &storage_ratio, py::arg("encodings"), py::arg("specs"));
    m.def(
        "quantize",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> values, int n_bits,
           std::uint64_t seed) { return quantize(from_array(values), n_bits, seed); },
        py::arg("values"), py::arg("n_bits"), py::arg("seed"));
    m.def("interpolate_at_accuracy", &interpolate_at_accuracy, py::arg("curve"),
          py::arg("target_accuracy"),
          "curve is a list of (accuracy, value) pairs; refuses extrapolation");

    // activations, simulation, flops
    m.def(
        "make_random_activations",
        [](int channels, int height, int width, double density, std::uint64_t seed) {
            Rng rng(seed);
            return make_random_activations(channels, height, width, density, rng);
        },
        py::arg("channels"), py::arg("height"), py::arg("width"), py::arg("density"),
        py::arg("seed"));
    m.def(
        "activations_from_dense",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> dense) {
            if (dense.ndim() != 3)
                throw InvalidArgument("dense activations must be a (channels, h, w) array");
            return activations_from_dense(static_cast<int>(dense.shape(0)),
                                          static_cast<int>(dense.shape(1)),
                                          static_cast<int>(dense.shape(2)),
                                          from_array(dense));
        },
        py::arg("dense"));
    m.def(
        "simulate_layer",
        [](const WeightTensor& tensor, const PruneMask& mask, const ActivationMap& acts,
           int weights_per_group, int acts_per_group, bool dense_baseline) {
            return simulate_layer(tensor, mask, acts,
                                  make_sim_config(weights_per_group, acts_per_group,
                                                  dense_baseline));
        },
        py::arg("tensor"), py::arg("mask"), py::arg("acts"), py::arg("weights_per_group") = 4,
        py::arg("acts_per_group") = 4, py::arg("dense_baseline") = true);
    m.def(
        "simulate_model",
        [](const std::vector<WeightTensor>& model, const std::vector<PruneMask>& masks,
           const std::vector<double>& act_densities, std::uint64_t seed, int weights_per_group,
           int acts_per_group, bool dense_baseline) {
            return simulate_model(model, masks, act_densities, seed,
                                  make_sim_config(weights_per_group, acts_per_group,
                                                  dense_baseline));
        },
        py::arg("model"), py::arg("masks"), py::arg("act_densities"), py::arg("seed"),
        py::arg("weights_per_group") = 4, py::arg("acts_per_group") = 4,
        py::arg("dense_baseline") = true);
    m.def("count_flops", &count_flops, py::arg("model"), py::arg("masks"));
    m.def(
        "layer_output",
        [](const WeightTensor& tensor,
           py::array_t<float, py::array::c_style | py::array::forcecast> input) {
            return to_array(layer_output(tensor, from_array(input)));
        },
        py::arg("tensor"), py::arg("input"),
        "dense forward pass; conv input is flat (k, x, y), output flat (c, x, y)");
}
