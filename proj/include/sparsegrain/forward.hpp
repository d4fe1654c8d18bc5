#pragma once

#include <vector>

#include "sparsegrain/model.hpp"

namespace sparsegrain {

/// Direct dense forward pass of one layer. Conv input is (k, x, y) row-major
/// of size K*input_h*input_w and the output is (c, x, y) of size
/// C*output_h*output_w; fc input is length K, output length C. Output element
/// (c, x', y') accumulates weight(c, k, r, s) * input(k, x'*stride - pad + r,
/// y'*stride - pad + s) over in-range taps.
std::vector<float> layer_output(const WeightTensor& tensor, const std::vector<float>& input);

} // namespace sparsegrain
