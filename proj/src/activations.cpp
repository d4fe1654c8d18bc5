#include "sparsegrain/activations.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sparsegrain/errors.hpp"

namespace sparsegrain {

std::size_t ActivationMap::nonzero_count() const {
    std::size_t n = 0;
    for (const auto& channel : nonzeros) n += channel.size();
    return n;
}

double ActivationMap::density() const {
    const std::size_t cells = static_cast<std::size_t>(channels) * height * width;
    return cells ? static_cast<double>(nonzero_count()) / cells : 0.0;
}

void ActivationMap::validate() const {
    if (channels <= 0 || height <= 0 || width <= 0)
        throw InvalidArgument("activation map has non-positive geometry");
    if (nonzeros.size() != static_cast<std::size_t>(channels))
        throw InvalidArgument("activation map channel count mismatch");
    for (const auto& channel : nonzeros) {
        const Cell* prev = nullptr;
        for (const Cell& cell : channel) {
            if (cell.x < 0 || cell.x >= height || cell.y < 0 || cell.y >= width)
                throw InvalidArgument("activation cell out of range");
            if (prev && (cell.x < prev->x || (cell.x == prev->x && cell.y <= prev->y)))
                throw InvalidArgument("activation cells not in strict (x, y) order");
            prev = &cell;
        }
    }
}

std::vector<float> ActivationMap::to_dense() const {
    std::vector<float> dense(static_cast<std::size_t>(channels) * height * width, 0.0f);
    for (int k = 0; k < channels; ++k)
        for (const Cell& cell : nonzeros[k])
            dense[(static_cast<std::size_t>(k) * height + cell.x) * width + cell.y] = cell.value;
    return dense;
}

ActivationMap make_random_activations(int channels, int height, int width, double density,
                                      Rng& rng) {
    if (channels <= 0 || height <= 0 || width <= 0)
        throw InvalidArgument("activation geometry must be positive");
    if (!(density > 0.0) || density > 1.0)
        throw InvalidArgument("activation density must lie in (0, 1], got " +
                              std::to_string(density));

    const std::size_t per_channel = static_cast<std::size_t>(height) * width;
    const std::size_t target =
        std::min(per_channel,
                 static_cast<std::size_t>(std::llround(density * static_cast<double>(per_channel))));

    ActivationMap map;
    map.channels = channels;
    map.height = height;
    map.width = width;
    map.nonzeros.resize(channels);

    std::vector<std::uint32_t> cells(per_channel);
    for (int k = 0; k < channels; ++k) {
        // partial Fisher-Yates: the first `target` entries are a uniform sample
        std::iota(cells.begin(), cells.end(), 0u);
        for (std::size_t i = 0; i < target; ++i) {
            const std::size_t j = i + rng.next_index(per_channel - i);
            std::swap(cells[i], cells[j]);
        }
        std::sort(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(target));

        auto& channel = map.nonzeros[k];
        channel.reserve(target);
        for (std::size_t i = 0; i < target; ++i) {
            ActivationMap::Cell cell;
            cell.x = static_cast<int>(cells[i] / width);
            cell.y = static_cast<int>(cells[i] % width);
            float v = static_cast<float>(rng.next_normal());
            if (v == 0.0f) v = 1.0f; // a stored cell must be nonzero
            cell.value = v;
            channel.push_back(cell);
        }
    }
    return map;
}

ActivationMap activations_from_dense(int channels, int height, int width,
                                     const std::vector<float>& dense) {
    if (dense.size() != static_cast<std::size_t>(channels) * height * width)
        throw InvalidArgument("dense activation buffer length mismatch");
    ActivationMap map;
    map.channels = channels;
    map.height = height;
    map.width = width;
    map.nonzeros.resize(channels);
    std::size_t i = 0;
    for (int k = 0; k < channels; ++k)
        for (int x = 0; x < height; ++x)
            for (int y = 0; y < width; ++y, ++i)
                if (dense[i] != 0.0f) map.nonzeros[k].push_back({x, y, dense[i]});
    return map;
}

} // namespace sparsegrain
