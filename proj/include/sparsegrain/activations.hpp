#pragma once

#include <cstdint>
#include <vector>

#include "sparsegrain/model.hpp"
#include "sparsegrain/random.hpp"

namespace sparsegrain {

/// Sparse input activations for one conv layer: per input channel, the
/// nonzero cells in (x, y) lexicographic order (x is the row).
struct ActivationMap {
    int channels = 0; // input channels
    int height = 0;
    int width = 0;

    struct Cell {
        int x = 0;
        int y = 0;
        float value = 0.0f;
    };
    std::vector<std::vector<Cell>> nonzeros; // one list per channel

    std::size_t nonzero_count() const;
    double density() const;

    /// Checks ranges and strict (x, y) ordering per channel.
    void validate() const;

    /// Dense (k, x, y) row-major buffer, zeros where no cell is stored.
    std::vector<float> to_dense() const;
};

/// Places round(density * height * width) cells uniformly at random in each
/// channel (values from a unit normal). Density must lie in (0, 1].
ActivationMap make_random_activations(int channels, int height, int width, double density,
                                      Rng& rng);

/// Builds the sparse map from a dense (k, x, y) buffer; exact zeros are
/// treated as absent.
ActivationMap activations_from_dense(int channels, int height, int width,
                                     const std::vector<float>& dense);

} // namespace sparsegrain
