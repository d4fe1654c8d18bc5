#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace sparsegrain {

enum class LayerKind { Conv, FullyConnected };

/// Geometry of one layer. Convolutions are C x K x R x S tensors
/// (out_channels x in_channels x kernel_h x kernel_w); fully-connected
/// layers are modeled as out x in x 1 x 1 so one code path handles both.
struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::Conv;
    int out_channels = 0;
    int in_channels = 0;
    int kernel_h = 1;
    int kernel_w = 1;
    int stride = 1;
    int pad = 0;
    int input_h = 1; // spatial size of the input activation map; unused for fc
    int input_w = 1;

    bool is_conv() const { return kind == LayerKind::Conv; }

    std::size_t weight_count() const {
        return static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w;
    }

    int output_h() const {
        return is_conv() ? (input_h + 2 * pad - kernel_h) / stride + 1 : 1;
    }
    int output_w() const {
        return is_conv() ? (input_w + 2 * pad - kernel_w) / stride + 1 : 1;
    }

    /// Throws InvalidArgument when dimensions are inconsistent (non-positive
    /// sizes, fc with a spatial kernel, conv output size not a positive
    /// integer for the given stride/pad).
    void validate() const;
};

/// A layer's weights in (c, k, r, s) row-major order.
struct WeightTensor {
    LayerSpec spec;
    std::vector<float> values;

    std::size_t size() const { return values.size(); }

    std::size_t flat_index(int c, int k, int r, int s) const {
        return ((static_cast<std::size_t>(c) * spec.in_channels + k) * spec.kernel_h + r) *
                   spec.kernel_w +
               s;
    }
    float at(int c, int k, int r, int s) const { return values[flat_index(c, k, r, s)]; }

    /// Throws when values length mismatches the spec or a value is non-finite.
    void validate() const;
};

/// The pruning atom: a single weight, a sub-kernel vector along the kernel
/// width, a 2-D kernel, or a 3-D filter.
enum class GrainShape { Fine0D, Vector1D, Kernel2D, Filter3D };

const char* grain_shape_name(GrainShape shape);
GrainShape parse_grain_shape(const std::string& token);

/// Disjoint cover of a tensor into equally sized grains. Grains are
/// contiguous slices of the row-major weight array, ordered lexicographically
/// in (c, k, r), so grain i covers [i * weights_per_grain, (i+1) * weights_per_grain).
struct GrainPartition {
    GrainShape shape = GrainShape::Fine0D;
    LayerSpec layer;
    std::size_t grain_count = 0;
    std::size_t weights_per_grain = 0;

    std::size_t grain_begin(std::size_t grain) const { return grain * weights_per_grain; }
    std::size_t grain_end(std::size_t grain) const { return (grain + 1) * weights_per_grain; }
};

/// Builds the partition for one layer. Coarse shapes on fully-connected
/// layers are rejected (fc layers admit Fine0D only).
GrainPartition partition(const LayerSpec& spec, GrainShape shape);

/// Where the given shape is not applicable (fc layers), fall back to Fine0D.
GrainShape effective_shape(const LayerSpec& spec, GrainShape requested);

/// Keep/delete decision per weight, aligned with WeightTensor::values.
/// Masks produced by the pruning routines are grain-atomic: all weights of a
/// grain share one keep value.
struct PruneMask {
    std::string layer;
    std::vector<std::uint8_t> keep;

    std::size_t kept_count() const;
    double density() const;
};

PruneMask all_keep_mask(const LayerSpec& spec);

/// True when every grain of the partition has a single keep value.
bool is_grain_atomic(const PruneMask& mask, const GrainPartition& part);

/// Returns the tensor with masked-out weights set to exactly zero.
WeightTensor apply_mask(const WeightTensor& tensor, const PruneMask& mask);

/// Weight density over conv layers only; over all layers when the model has
/// no conv layer.
double conv_density(const std::vector<WeightTensor>& model, const std::vector<PruneMask>& masks);

} // namespace sparsegrain
