// Shared test fixtures: model generators, frozen reference geometries, and
// independent oracles. The oracles deliberately re-derive results from first
// principles (scatter-form convolution, set-based reference counting, a
// separate stream walker) so they do not share code with the library.
#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "sparsegrain/activations.hpp"
#include "sparsegrain/encoding.hpp"
#include "sparsegrain/model.hpp"
#include "sparsegrain/random.hpp"

namespace testsupport {

using namespace sparsegrain;

inline LayerSpec conv_spec(const std::string& name, int c, int k, int r, int s, int stride,
                           int pad, int in_h, int in_w) {
    LayerSpec spec;
    spec.name = name;
    spec.kind = LayerKind::Conv;
    spec.out_channels = c;
    spec.in_channels = k;
    spec.kernel_h = r;
    spec.kernel_w = s;
    spec.stride = stride;
    spec.pad = pad;
    spec.input_h = in_h;
    spec.input_w = in_w;
    return spec;
}

inline LayerSpec fc_spec(const std::string& name, int out, int in) {
    LayerSpec spec;
    spec.name = name;
    spec.kind = LayerKind::FullyConnected;
    spec.out_channels = out;
    spec.in_channels = in;
    return spec;
}

inline WeightTensor random_tensor(const LayerSpec& spec, std::uint64_t seed) {
    WeightTensor tensor;
    tensor.spec = spec;
    tensor.values.resize(spec.weight_count());
    Rng rng(seed);
    for (float& v : tensor.values) v = static_cast<float>(rng.next_normal());
    return tensor;
}

/// AlexNet geometry as published (227x227 input variant).
inline std::vector<LayerSpec> alexnet_specs() {
    return {
        conv_spec("conv1", 96, 3, 11, 11, 4, 0, 227, 227),
        conv_spec("conv2", 256, 48, 5, 5, 1, 2, 27, 27),
        conv_spec("conv3", 384, 256, 3, 3, 1, 1, 13, 13),
        conv_spec("conv4", 384, 192, 3, 3, 1, 1, 13, 13),
        conv_spec("conv5", 256, 192, 3, 3, 1, 1, 13, 13),
        fc_spec("fc6", 4096, 9216),
        fc_spec("fc7", 4096, 4096),
        fc_spec("fc8", 1000, 4096),
    };
}

/// VGG-16's thirteen conv layers with the real channel structure but
/// desk-scale spatial inputs (16/8/8/4/2 per block instead of 224..14).
inline std::vector<LayerSpec> vgg16_conv_specs() {
    const std::array<std::pair<int, int>, 13> channels = {{
        {64, 3},    {64, 64},   {128, 64},  {128, 128}, {256, 128}, {256, 256}, {256, 256},
        {512, 256}, {512, 512}, {512, 512}, {512, 512}, {512, 512}, {512, 512},
    }};
    const std::array<int, 13> spatial = {16, 16, 8, 8, 8, 8, 8, 4, 4, 4, 2, 2, 2};
    std::vector<LayerSpec> specs;
    for (std::size_t i = 0; i < channels.size(); ++i)
        specs.push_back(conv_spec("conv" + std::to_string(i + 1), channels[i].first,
                                  channels[i].second, 3, 3, 1, 1, spatial[i], spatial[i]));
    return specs;
}

/// Gather-form dense convolution / fc, written independently of the library.
inline std::vector<double> conv_oracle(const WeightTensor& t, const std::vector<float>& in) {
    const LayerSpec& sp = t.spec;
    if (!sp.is_conv()) {
        std::vector<double> out(sp.out_channels, 0.0);
        for (int c = 0; c < sp.out_channels; ++c)
            for (int k = 0; k < sp.in_channels; ++k) out[c] += double(t.at(c, k, 0, 0)) * in[k];
        return out;
    }
    const int oh = (sp.input_h + 2 * sp.pad - sp.kernel_h) / sp.stride + 1;
    const int ow = (sp.input_w + 2 * sp.pad - sp.kernel_w) / sp.stride + 1;
    std::vector<double> out(std::size_t(sp.out_channels) * oh * ow, 0.0);
    for (int c = 0; c < sp.out_channels; ++c)
        for (int k = 0; k < sp.in_channels; ++k)
            for (int r = 0; r < sp.kernel_h; ++r)
                for (int s = 0; s < sp.kernel_w; ++s)
                    for (int ox = 0; ox < oh; ++ox)
                        for (int oy = 0; oy < ow; ++oy) {
                            const int ix = ox * sp.stride - sp.pad + r;
                            const int iy = oy * sp.stride - sp.pad + s;
                            if (ix < 0 || ix >= sp.input_h || iy < 0 || iy >= sp.input_w)
                                continue;
                            out[(std::size_t(c) * oh + ox) * ow + oy] +=
                                double(t.at(c, k, r, s)) *
                                in[(std::size_t(k) * sp.input_h + ix) * sp.input_w + iy];
                        }
    return out;
}

/// Exhaustive reference counter: every (channel, weight-block, act-block)
/// pair contributes the number of distinct in-range output addresses,
/// collected in a std::set.
inline std::uint64_t memref_oracle(const WeightTensor& t, const PruneMask& mask,
                                   const ActivationMap& acts, int F, int I) {
    const LayerSpec& sp = t.spec;
    const int oh = sp.input_h + 2 * sp.pad - sp.kernel_h + 1;
    const int ow = sp.input_w + 2 * sp.pad - sp.kernel_w + 1;
    std::uint64_t refs = 0;
    for (int k = 0; k < sp.in_channels; ++k) {
        std::vector<std::tuple<int, int, int>> kept; // (c, r, s)
        for (int c = 0; c < sp.out_channels; ++c)
            for (int r = 0; r < sp.kernel_h; ++r)
                for (int s = 0; s < sp.kernel_w; ++s)
                    if (mask.keep[t.flat_index(c, k, r, s)]) kept.emplace_back(c, r, s);
        const auto& cells = acts.nonzeros[k];
        for (std::size_t w0 = 0; w0 < kept.size(); w0 += F)
            for (std::size_t a0 = 0; a0 < cells.size(); a0 += I) {
                std::set<std::tuple<int, int, int>> addresses;
                for (std::size_t wi = w0; wi < std::min(kept.size(), w0 + F); ++wi)
                    for (std::size_t ai = a0; ai < std::min(cells.size(), a0 + I); ++ai) {
                        const auto [c, r, s] = kept[wi];
                        const int ox = cells[ai].x + sp.pad - r;
                        const int oy = cells[ai].y + sp.pad - s;
                        if (ox >= 0 && ox < oh && oy >= 0 && oy < ow)
                            addresses.insert({c, ox, oy});
                    }
                refs += addresses.size();
            }
    }
    return refs;
}

/// Independent walk of a sparse encoding's streams per the documented
/// convention. Returns the kept grain positions and each kept grain's
/// decoded weight values.
struct DecodedStreams {
    std::vector<std::size_t> kept_positions;
    std::vector<std::vector<float>> grain_values; // aligned with kept_positions
};

inline DecodedStreams walk_streams(const SparseEncoding& enc) {
    const GrainPartition part = partition(enc.spec, enc.granularity);
    const std::size_t wpg = part.weights_per_grain;
    DecodedStreams out;
    std::size_t cursor = 0;
    for (std::size_t e = 0; e < enc.index_stream.size(); ++e) {
        const std::uint8_t nib = enc.index_stream[e];
        if (nib == 15) {
            cursor += 15;
            continue;
        }
        out.kept_positions.push_back(cursor + nib);
        std::vector<float> values;
        for (std::size_t i = 0; i < wpg; ++i)
            values.push_back(enc.decode_value(enc.value_stream[e * wpg + i]));
        out.grain_values.push_back(std::move(values));
        cursor = cursor + nib + 1;
    }
    return out;
}

/// Grain positions a mask keeps, straight from the mask.
inline std::vector<std::size_t> kept_grain_positions(const PruneMask& mask,
                                                     const GrainPartition& part) {
    std::vector<std::size_t> kept;
    for (std::size_t g = 0; g < part.grain_count; ++g)
        if (mask.keep[part.grain_begin(g)]) kept.push_back(g);
    return kept;
}

/// Mask keeping exactly the first `kept` weights (Fine0D, no index gaps).
inline PruneMask prefix_mask(const LayerSpec& spec, std::size_t kept) {
    PruneMask mask;
    mask.layer = spec.name;
    mask.keep.assign(spec.weight_count(), 0);
    for (std::size_t i = 0; i < kept && i < mask.keep.size(); ++i) mask.keep[i] = 1;
    return mask;
}

/// Grain-atomic random mask at an exact kept-grain count.
inline PruneMask random_grain_mask(const LayerSpec& spec, GrainShape shape,
                                   std::size_t kept_grains, Rng& rng) {
    const GrainPartition part = partition(spec, shape);
    std::vector<std::size_t> order(part.grain_count);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        const std::size_t j = i + rng.next_index(order.size() - i);
        std::swap(order[i], order[j]);
    }
    PruneMask mask;
    mask.layer = spec.name;
    mask.keep.assign(spec.weight_count(), 0);
    for (std::size_t i = 0; i < kept_grains && i < order.size(); ++i)
        for (std::size_t w = part.grain_begin(order[i]); w < part.grain_end(order[i]); ++w)
            mask.keep[w] = 1;
    return mask;
}

} // namespace testsupport
