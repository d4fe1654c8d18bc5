#include "sparsegrain/model.hpp"

#include <cmath>

#include "sparsegrain/errors.hpp"

namespace sparsegrain {

void LayerSpec::validate() const {
    auto fail = [this](const std::string& why) {
        throw InvalidArgument("layer '" + name + "': " + why);
    };
    if (out_channels < 1 || in_channels < 1 || kernel_h < 1 || kernel_w < 1)
        fail("channel and kernel dimensions must be positive");
    if (stride < 1) fail("stride must be positive");
    if (pad < 0) fail("pad must be non-negative");
    if (is_conv()) {
        if (input_h < 1 || input_w < 1) fail("input spatial dimensions must be positive");
        const int span_h = input_h + 2 * pad - kernel_h;
        const int span_w = input_w + 2 * pad - kernel_w;
        if (span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0)
            fail("output spatial dimensions are not positive integers for this stride/pad");
    } else {
        if (kernel_h != 1 || kernel_w != 1) fail("fc layers must have a 1x1 kernel");
    }
}

void WeightTensor::validate() const {
    if (values.size() != spec.weight_count())
        throw DataError("layer '" + spec.name + "': value count " +
                        std::to_string(values.size()) + " does not match geometry (" +
                        std::to_string(spec.weight_count()) + " weights)");
    for (float v : values)
        if (!std::isfinite(v))
            throw DataError("layer '" + spec.name + "': non-finite weight value");
}

const char* grain_shape_name(GrainShape shape) {
    switch (shape) {
        case GrainShape::Fine0D: return "fine";
        case GrainShape::Vector1D: return "vector";
        case GrainShape::Kernel2D: return "kernel";
        case GrainShape::Filter3D: return "filter";
    }
    return "?";
}

GrainShape parse_grain_shape(const std::string& token) {
    if (token == "fine") return GrainShape::Fine0D;
    if (token == "vector") return GrainShape::Vector1D;
    if (token == "kernel") return GrainShape::Kernel2D;
    if (token == "filter") return GrainShape::Filter3D;
    throw InvalidArgument("unknown granularity '" + token +
                          "' (expected fine, vector, kernel, or filter)");
}

GrainPartition partition(const LayerSpec& spec, GrainShape shape) {
    spec.validate();
    if (!spec.is_conv() && shape != GrainShape::Fine0D)
        throw InvalidArgument("layer '" + spec.name + "': granularity " +
                              grain_shape_name(shape) +
                              " is unsupported on fully-connected layers");
    GrainPartition part;
    part.shape = shape;
    part.layer = spec;
    const std::size_t c = spec.out_channels, k = spec.in_channels;
    const std::size_t r = spec.kernel_h, s = spec.kernel_w;
    switch (shape) {
        case GrainShape::Fine0D:
            part.weights_per_grain = 1;
            part.grain_count = c * k * r * s;
            break;
        case GrainShape::Vector1D:
            part.weights_per_grain = s;
            part.grain_count = c * k * r;
            break;
        case GrainShape::Kernel2D:
            part.weights_per_grain = r * s;
            part.grain_count = c * k;
            break;
        case GrainShape::Filter3D:
            part.weights_per_grain = k * r * s;
            part.grain_count = c;
            break;
    }
    return part;
}

GrainShape effective_shape(const LayerSpec& spec, GrainShape requested) {
    return spec.is_conv() ? requested : GrainShape::Fine0D;
}

std::size_t PruneMask::kept_count() const {
    std::size_t n = 0;
    for (std::uint8_t k : keep) n += k != 0;
    return n;
}

double PruneMask::density() const {
    if (keep.empty()) return 0.0;
    return static_cast<double>(kept_count()) / static_cast<double>(keep.size());
}

PruneMask all_keep_mask(const LayerSpec& spec) {
    return PruneMask{spec.name, std::vector<std::uint8_t>(spec.weight_count(), 1)};
}

bool is_grain_atomic(const PruneMask& mask, const GrainPartition& part) {
    if (mask.keep.size() != part.grain_count * part.weights_per_grain) return false;
    for (std::size_t g = 0; g < part.grain_count; ++g) {
        const std::uint8_t first = mask.keep[part.grain_begin(g)];
        for (std::size_t i = part.grain_begin(g) + 1; i < part.grain_end(g); ++i)
            if (mask.keep[i] != first) return false;
    }
    return true;
}

WeightTensor apply_mask(const WeightTensor& tensor, const PruneMask& mask) {
    if (mask.keep.size() != tensor.values.size())
        throw InvalidArgument("layer '" + tensor.spec.name + "': mask length " +
                              std::to_string(mask.keep.size()) + " does not match tensor (" +
                              std::to_string(tensor.values.size()) + ")");
    WeightTensor out = tensor;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        if (!mask.keep[i]) out.values[i] = 0.0f;
    return out;
}

double conv_density(const std::vector<WeightTensor>& model,
                    const std::vector<PruneMask>& masks) {
    if (model.size() != masks.size())
        throw InvalidArgument("model and mask lists differ in length");
    std::size_t kept = 0, total = 0;
    for (std::size_t i = 0; i < model.size(); ++i) {
        if (!model[i].spec.is_conv()) continue;
        kept += masks[i].kept_count();
        total += model[i].size();
    }
    if (total == 0) { // all-fc model: count everything
        for (std::size_t i = 0; i < model.size(); ++i) {
            kept += masks[i].kept_count();
            total += model[i].size();
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(kept) / static_cast<double>(total);
}

} // namespace sparsegrain
