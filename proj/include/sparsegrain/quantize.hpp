#pragma once

#include <cstdint>
#include <vector>

namespace sparsegrain {

/// Shared-value codebook from k-means over kept weights. `centers` are
/// sorted ascending; `assignment[i]` is the nearest-center index for input
/// value i (ties go to the lower center index).
struct Codebook {
    int n_bits = 8;
    std::vector<float> centers;
    std::vector<std::uint32_t> assignment;
    double reconstruction_error = 0.0; // mean squared error

    std::uint32_t nearest(float value) const;
};

/// Seeded k-means (k-means++ init, Lloyd iterations, at most 50 rounds or
/// convergence at 1e-6 relative center shift) with 2^n_bits centers.
/// Deterministic given the seed. When the input has no more distinct values
/// than centers, the codebook is exact and the error is zero.
Codebook quantize(const std::vector<float>& values, int n_bits, std::uint64_t seed);

/// Linear interpolation of density (or any per-point quantity) at a target
/// accuracy, between the two bracketing curve points nearest in accuracy.
/// Points are considered in density-sorted order; exact matches return the
/// point's value. Targets outside the curve's accuracy range are refused.
double interpolate_at_accuracy(const std::vector<std::pair<double, double>>& accuracy_density,
                               double target_accuracy);

} // namespace sparsegrain
