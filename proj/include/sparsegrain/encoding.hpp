#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sparsegrain/model.hpp"
#include "sparsegrain/quantize.hpp"

namespace sparsegrain {

enum class ValueCodec : std::uint8_t { LinearMinMax = 0, CodebookIndex = 1 };

/// Grain-shared sparse format: one 4-bit relative index per stored grain
/// plus one 8-bit code per stored weight.
///
/// Index stream convention: walking grains in partition order with a cursor,
/// a nibble g in [0, 14] places the next kept grain g slots past the cursor;
/// the reserved nibble 15 is a zero-padding grain that advances the cursor
/// by 15 slots (14 skipped plus the padding grain itself, whose codes are
/// zero and which counts fully in both bit totals).
struct SparseEncoding {
    GrainShape granularity = GrainShape::Fine0D;
    LayerSpec spec;

    std::vector<std::uint8_t> index_stream; // one nibble value per stored grain
    std::vector<std::uint8_t> value_stream; // weights_per_grain codes per stored grain

    std::uint64_t kept_grains = 0;
    std::uint64_t padding_grains = 0;
    std::uint64_t kept_weights = 0;

    std::uint64_t bits_values = 0;
    std::uint64_t bits_indices = 0;
    std::uint64_t bits_total = 0;

    ValueCodec codec = ValueCodec::LinearMinMax;
    float value_min = 0.0f; // linear codec range over kept weights
    float value_max = 0.0f;
    std::vector<float> centers; // codebook codec only

    std::uint64_t stored_grains() const { return kept_grains + padding_grains; }
    std::uint64_t dense_bits() const { return std::uint64_t{8} * spec.weight_count(); }

    /// Maps an 8-bit code back to its real value.
    float decode_value(std::uint8_t code) const;
};

/// Encodes the kept grains of a grain-atomic mask. Values are 8-bit codes:
/// indices into `codebook` when one is given, else linear min-max
/// quantization over the layer's kept weights.
SparseEncoding encode(const WeightTensor& tensor, const PruneMask& mask, GrainShape shape,
                      const Codebook* codebook = nullptr);

/// Bit accounting for a mask at a granularity without materializing the
/// streams; totals match what encode() would produce.
struct StorageBits {
    std::uint64_t kept_grains = 0;
    std::uint64_t padding_grains = 0;
    std::uint64_t bits_total = 0;
};
StorageBits count_storage_bits(const PruneMask& mask, const GrainPartition& part);

struct DecodedLayer {
    WeightTensor tensor; // dequantized kept weights, zero elsewhere
    PruneMask mask;      // kept grains (padding grains are not kept)
};

DecodedLayer decode(const SparseEncoding& encoding);

/// Binary container: fixed header (magic, granularity, codec, layer dims,
/// counts, codec parameters) + packed nibble stream (two per byte, low
/// nibble first) + value byte stream. Little-endian throughout.
void write_encoding(const std::filesystem::path& path, const SparseEncoding& encoding);
SparseEncoding read_encoding(const std::filesystem::path& path);

} // namespace sparsegrain
