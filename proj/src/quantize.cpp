#include "sparsegrain/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sparsegrain/errors.hpp"
#include "sparsegrain/random.hpp"

namespace sparsegrain {

std::uint32_t Codebook::nearest(float value) const {
    // centers are sorted; lower_bound narrows the candidates to two
    const auto it = std::lower_bound(centers.begin(), centers.end(), value);
    if (it == centers.begin()) return 0;
    if (it == centers.end()) return static_cast<std::uint32_t>(centers.size() - 1);
    const auto hi = static_cast<std::uint32_t>(it - centers.begin());
    const auto lo = hi - 1;
    const double d_lo = std::abs(static_cast<double>(value) - centers[lo]);
    const double d_hi = std::abs(static_cast<double>(value) - centers[hi]);
    return d_hi < d_lo ? hi : lo; // tie goes to the lower index
}

Codebook quantize(const std::vector<float>& values, int n_bits, std::uint64_t seed) {
    if (values.empty()) throw InvalidArgument("quantize: empty value list");
    if (n_bits < 1 || n_bits > 8)
        throw InvalidArgument("quantize: n_bits must be in [1, 8], got " +
                              std::to_string(n_bits));

    Codebook book;
    book.n_bits = n_bits;
    const std::size_t k_max = std::size_t{1} << n_bits;

    std::set<float> distinct(values.begin(), values.end());
    if (distinct.size() <= k_max) {
        book.centers.assign(distinct.begin(), distinct.end());
    } else {
        // k-means++ seeding on squared distances
        Rng rng(seed);
        std::vector<float> centers;
        centers.reserve(k_max);
        centers.push_back(values[rng.next_index(values.size())]);
        std::vector<double> dist2(values.size());
        while (centers.size() < k_max) {
            double total = 0.0;
            for (std::size_t i = 0; i < values.size(); ++i) {
                double best = dist2[i];
                const double d = static_cast<double>(values[i]) - centers.back();
                if (centers.size() == 1 || d * d < best) best = d * d;
                dist2[i] = best;
                total += best;
            }
            if (total <= 0.0) break; // fewer distinct values than centers
            double pick = rng.next_unit() * total;
            std::size_t chosen = values.size() - 1;
            for (std::size_t i = 0; i < values.size(); ++i) {
                pick -= dist2[i];
                if (pick <= 0.0) {
                    chosen = i;
                    break;
                }
            }
            centers.push_back(values[chosen]);
        }
        std::sort(centers.begin(), centers.end());

        // Lloyd refinement
        const int max_rounds = 50;
        const double tol = 1e-6;
        std::vector<double> sums(centers.size());
        std::vector<std::size_t> counts(centers.size());
        Codebook probe;
        for (int round = 0; round < max_rounds; ++round) {
            probe.centers = centers;
            std::fill(sums.begin(), sums.end(), 0.0);
            std::fill(counts.begin(), counts.end(), std::size_t{0});
            for (float v : values) {
                const std::uint32_t c = probe.nearest(v);
                sums[c] += v;
                counts[c] += 1;
            }
            double shift = 0.0, scale = 0.0;
            for (std::size_t c = 0; c < centers.size(); ++c) {
                const double updated =
                    counts[c] > 0 ? sums[c] / static_cast<double>(counts[c]) : centers[c];
                shift += std::abs(updated - centers[c]);
                scale += std::abs(centers[c]);
                centers[c] = static_cast<float>(updated);
            }
            std::sort(centers.begin(), centers.end());
            if (shift <= tol * std::max(scale, 1e-30)) break;
        }
        book.centers = centers;
    }

    book.assignment.reserve(values.size());
    double sse = 0.0;
    for (float v : values) {
        const std::uint32_t c = book.nearest(v);
        book.assignment.push_back(c);
        const double d = static_cast<double>(v) - book.centers[c];
        sse += d * d;
    }
    book.reconstruction_error = sse / static_cast<double>(values.size());
    return book;
}

double interpolate_at_accuracy(const std::vector<std::pair<double, double>>& accuracy_density,
                               double target_accuracy) {
    if (accuracy_density.size() < 2)
        throw InvalidArgument("interpolation needs at least two curve points");

    std::vector<std::pair<double, double>> curve = accuracy_density; // (accuracy, density)
    std::sort(curve.begin(), curve.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });

    const std::pair<double, double>* below = nullptr; // accuracy <= target, nearest
    const std::pair<double, double>* above = nullptr; // accuracy >= target, nearest
    for (const auto& point : curve) {
        if (point.first <= target_accuracy && (!below || point.first > below->first))
            below = &point;
        if (point.first >= target_accuracy && (!above || point.first < above->first))
            above = &point;
    }
    if (!below || !above)
        throw InvalidArgument("target accuracy " + std::to_string(target_accuracy) +
                              " lies outside the curve; refusing to extrapolate");
    if (below->first == above->first) return below->second; // exact hit
    const double t = (target_accuracy - below->first) / (above->first - below->first);
    return below->second + t * (above->second - below->second);
}

} // namespace sparsegrain
