#include "sparsegrain/forward.hpp"

#include "sparsegrain/errors.hpp"

namespace sparsegrain {

std::vector<float> layer_output(const WeightTensor& tensor, const std::vector<float>& input) {
    const LayerSpec& spec = tensor.spec;
    if (!spec.is_conv()) {
        if (input.size() != static_cast<std::size_t>(spec.in_channels))
            throw InvalidArgument("layer '" + spec.name + "': fc input length mismatch");
        std::vector<float> out(spec.out_channels, 0.0f);
        for (int c = 0; c < spec.out_channels; ++c) {
            double acc = 0.0;
            for (int k = 0; k < spec.in_channels; ++k)
                acc += static_cast<double>(tensor.at(c, k, 0, 0)) * input[k];
            out[c] = static_cast<float>(acc);
        }
        return out;
    }

    const int h = spec.input_h, w = spec.input_w;
    if (input.size() != static_cast<std::size_t>(spec.in_channels) * h * w)
        throw InvalidArgument("layer '" + spec.name + "': conv input size mismatch");
    const int oh = spec.output_h(), ow = spec.output_w();
    std::vector<float> out(static_cast<std::size_t>(spec.out_channels) * oh * ow, 0.0f);
    for (int c = 0; c < spec.out_channels; ++c) {
        for (int ox = 0; ox < oh; ++ox) {
            for (int oy = 0; oy < ow; ++oy) {
                double acc = 0.0;
                for (int k = 0; k < spec.in_channels; ++k) {
                    for (int r = 0; r < spec.kernel_h; ++r) {
                        const int ix = ox * spec.stride - spec.pad + r;
                        if (ix < 0 || ix >= h) continue;
                        for (int s = 0; s < spec.kernel_w; ++s) {
                            const int iy = oy * spec.stride - spec.pad + s;
                            if (iy < 0 || iy >= w) continue;
                            acc += static_cast<double>(tensor.at(c, k, r, s)) *
                                   input[(static_cast<std::size_t>(k) * h + ix) * w + iy];
                        }
                    }
                }
                out[(static_cast<std::size_t>(c) * oh + ox) * ow + oy] =
                    static_cast<float>(acc);
            }
        }
    }
    return out;
}

} // namespace sparsegrain
