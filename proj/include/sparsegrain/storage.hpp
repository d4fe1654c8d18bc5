#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsegrain/encoding.hpp"
#include "sparsegrain/model.hpp"

#include "json.hpp"

namespace sparsegrain {

struct LayerStorage {
    std::string layer;
    GrainShape granularity = GrainShape::Fine0D;
    bool is_conv = true;
    std::uint64_t weight_count = 0;
    std::uint64_t kept_weights = 0; // excludes padding grains
    double density = 0.0;
    std::uint64_t bits_values = 0;
    std::uint64_t bits_indices = 0;
    std::uint64_t sparse_bits = 0;
    std::uint64_t dense_bits = 0; // 8 bits per weight in the dense reference
    double storage_ratio = 0.0;   // sparse_bits / dense_bits
};

struct StorageAggregate {
    std::uint64_t weight_count = 0;
    std::uint64_t kept_weights = 0;
    std::uint64_t sparse_bits = 0;
    std::uint64_t dense_bits = 0;

    double density() const {
        return weight_count ? static_cast<double>(kept_weights) / weight_count : 0.0;
    }
    double ratio() const {
        return dense_bits ? static_cast<double>(sparse_bits) / dense_bits : 0.0;
    }
};

struct StorageReport {
    std::vector<LayerStorage> layers;
    StorageAggregate conv;  // conv layers only
    StorageAggregate total; // every layer
};

// One encoding per layer, in the model's layer order. Throws InvalidArgument
// when the lists disagree in length or layer names.
StorageReport storage_ratio(const std::vector<SparseEncoding>& encodings,
                            const std::vector<LayerSpec>& specs);

nlohmann::json storage_report_json(const StorageReport& report);
std::string storage_report_csv(const StorageReport& report);

} // namespace sparsegrain
