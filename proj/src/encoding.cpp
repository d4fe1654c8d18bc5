#include "sparsegrain/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sparsegrain/errors.hpp"

namespace sparsegrain {

namespace {

constexpr std::uint8_t kPaddingNibble = 15;
constexpr std::size_t kPaddingAdvance = 15; // 14 skipped slots + the padding grain

std::uint8_t linear_code(float value, float lo, float hi) {
    if (hi <= lo) return 0;
    const double t = (static_cast<double>(value) - lo) / (static_cast<double>(hi) - lo);
    const long code = std::lround(t * 255.0);
    return static_cast<std::uint8_t>(std::clamp(code, 0L, 255L));
}

} // namespace

float SparseEncoding::decode_value(std::uint8_t code) const {
    if (codec == ValueCodec::CodebookIndex) {
        if (code >= centers.size())
            throw DataError("layer '" + spec.name + "': value code " + std::to_string(code) +
                            " exceeds codebook size");
        return centers[code];
    }
    if (value_max <= value_min) return value_min;
    return static_cast<float>(value_min +
                              static_cast<double>(code) / 255.0 *
                                  (static_cast<double>(value_max) - value_min));
}

SparseEncoding encode(const WeightTensor& tensor, const PruneMask& mask, GrainShape shape,
                      const Codebook* codebook) {
    const GrainPartition part = partition(tensor.spec, shape);
    if (mask.keep.size() != tensor.values.size())
        throw InvalidArgument("layer '" + tensor.spec.name + "': mask length mismatch");
    if (!is_grain_atomic(mask, part))
        throw InvalidArgument("layer '" + tensor.spec.name +
                              "': mask is not grain-atomic for granularity " +
                              grain_shape_name(shape));

    SparseEncoding enc;
    enc.granularity = shape;
    enc.spec = tensor.spec;
    const std::size_t wpg = part.weights_per_grain;

    if (codebook) {
        enc.codec = ValueCodec::CodebookIndex;
        enc.centers = codebook->centers;
        if (enc.centers.size() > 256)
            throw InvalidArgument("codebook has more than 256 centers");
    } else {
        // linear min-max range over kept weights
        bool any = false;
        float lo = 0.0f, hi = 0.0f;
        for (std::size_t i = 0; i < tensor.values.size(); ++i) {
            if (!mask.keep[i]) continue;
            const float v = tensor.values[i];
            if (!any) {
                lo = hi = v;
                any = true;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        enc.value_min = lo;
        enc.value_max = hi;
    }

    std::size_t cursor = 0; // next unconsumed grain slot
    for (std::size_t g = 0; g < part.grain_count; ++g) {
        if (!mask.keep[part.grain_begin(g)]) continue;
        while (g - cursor > 14) {
            enc.index_stream.push_back(kPaddingNibble);
            enc.value_stream.insert(enc.value_stream.end(), wpg, 0);
            enc.padding_grains += 1;
            cursor += kPaddingAdvance;
        }
        enc.index_stream.push_back(static_cast<std::uint8_t>(g - cursor));
        for (std::size_t i = part.grain_begin(g); i < part.grain_end(g); ++i) {
            const float v = tensor.values[i];
            enc.value_stream.push_back(codebook
                                           ? static_cast<std::uint8_t>(codebook->nearest(v))
                                           : linear_code(v, enc.value_min, enc.value_max));
        }
        enc.kept_grains += 1;
        cursor = g + 1;
    }

    enc.kept_weights = enc.kept_grains * wpg;
    enc.bits_values = std::uint64_t{8} * enc.value_stream.size();
    enc.bits_indices = std::uint64_t{4} * enc.index_stream.size();
    enc.bits_total = enc.bits_values + enc.bits_indices;
    return enc;
}

StorageBits count_storage_bits(const PruneMask& mask, const GrainPartition& part) {
    if (mask.keep.size() != part.grain_count * part.weights_per_grain)
        throw InvalidArgument("layer '" + mask.layer + "': mask length mismatch");
    if (!is_grain_atomic(mask, part))
        throw InvalidArgument("layer '" + mask.layer + "': mask is not grain-atomic");

    StorageBits bits;
    std::size_t cursor = 0;
    for (std::size_t g = 0; g < part.grain_count; ++g) {
        if (!mask.keep[part.grain_begin(g)]) continue;
        while (g - cursor > 14) {
            bits.padding_grains += 1;
            cursor += kPaddingAdvance;
        }
        bits.kept_grains += 1;
        cursor = g + 1;
    }
    bits.bits_total = (bits.kept_grains + bits.padding_grains) *
                      (std::uint64_t{8} * part.weights_per_grain + 4);
    return bits;
}

DecodedLayer decode(const SparseEncoding& enc) {
    const GrainPartition part = partition(enc.spec, enc.granularity);
    const std::size_t wpg = part.weights_per_grain;
    if (enc.value_stream.size() != enc.index_stream.size() * wpg)
        throw DataError("layer '" + enc.spec.name + "': stream lengths are inconsistent");

    DecodedLayer out;
    out.tensor.spec = enc.spec;
    out.tensor.values.assign(enc.spec.weight_count(), 0.0f);
    out.mask.layer = enc.spec.name;
    out.mask.keep.assign(enc.spec.weight_count(), 0);

    std::size_t cursor = 0;
    for (std::size_t e = 0; e < enc.index_stream.size(); ++e) {
        const std::uint8_t nibble = enc.index_stream[e];
        if (nibble > 15) throw DataError("layer '" + enc.spec.name + "': index nibble > 15");
        if (nibble == kPaddingNibble) {
            cursor += kPaddingAdvance; // zero grain at cursor+14; nothing to write
            if (cursor > part.grain_count)
                throw DataError("layer '" + enc.spec.name + "': index stream overruns tensor");
            continue;
        }
        const std::size_t grain = cursor + nibble;
        if (grain >= part.grain_count)
            throw DataError("layer '" + enc.spec.name + "': index stream overruns tensor");
        for (std::size_t i = 0; i < wpg; ++i) {
            out.tensor.values[part.grain_begin(grain) + i] =
                enc.decode_value(enc.value_stream[e * wpg + i]);
            out.mask.keep[part.grain_begin(grain) + i] = 1;
        }
        cursor = grain + 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binary container.

namespace {

constexpr char kMagic[4] = {'S', 'G', 'E', '1'};

template <typename T>
void put(std::string& buf, T value) {
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    buf.append(raw, sizeof(T));
}

template <typename T>
T take(std::ifstream& in, const std::filesystem::path& path) {
    T value;
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw DataError("truncated encoding container '" + path.string() + "'");
    return value;
}

} // namespace

void write_encoding(const std::filesystem::path& path, const SparseEncoding& enc) {
    std::string buf;
    buf.append(kMagic, 4);
    put<std::uint8_t>(buf, static_cast<std::uint8_t>(enc.granularity));
    put<std::uint8_t>(buf, static_cast<std::uint8_t>(enc.codec));
    put<std::uint8_t>(buf, enc.spec.is_conv() ? 0 : 1);
    put<std::uint8_t>(buf, 0);
    put<std::uint16_t>(buf, static_cast<std::uint16_t>(enc.spec.name.size()));
    buf.append(enc.spec.name);
    for (int dim : {enc.spec.out_channels, enc.spec.in_channels, enc.spec.kernel_h,
                    enc.spec.kernel_w, enc.spec.stride, enc.spec.pad, enc.spec.input_h,
                    enc.spec.input_w})
        put<std::int32_t>(buf, dim);
    put<std::uint64_t>(buf, enc.kept_grains);
    put<std::uint64_t>(buf, enc.padding_grains);
    put<float>(buf, enc.value_min);
    put<float>(buf, enc.value_max);
    put<std::uint16_t>(buf, static_cast<std::uint16_t>(enc.centers.size()));
    for (float c : enc.centers) put<float>(buf, c);

    // nibbles packed two per byte, low nibble first
    for (std::size_t i = 0; i < enc.index_stream.size(); i += 2) {
        std::uint8_t byte = enc.index_stream[i] & 0x0f;
        if (i + 1 < enc.index_stream.size())
            byte |= static_cast<std::uint8_t>((enc.index_stream[i + 1] & 0x0f) << 4);
        put<std::uint8_t>(buf, byte);
    }
    buf.append(reinterpret_cast<const char*>(enc.value_stream.data()),
               enc.value_stream.size());

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write encoding '" + path.string() + "'");
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw DataError("short write on encoding '" + path.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

SparseEncoding read_encoding(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open encoding '" + path.string() + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("'" + path.string() + "' is not a sparse-encoding container");

    SparseEncoding enc;
    enc.granularity = static_cast<GrainShape>(take<std::uint8_t>(in, path));
    enc.codec = static_cast<ValueCodec>(take<std::uint8_t>(in, path));
    const bool is_fc = take<std::uint8_t>(in, path) != 0;
    take<std::uint8_t>(in, path);
    const auto name_len = take<std::uint16_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw DataError("truncated encoding container '" + path.string() + "'");
    enc.spec.name = name;
    enc.spec.kind = is_fc ? LayerKind::FullyConnected : LayerKind::Conv;
    enc.spec.out_channels = take<std::int32_t>(in, path);
    enc.spec.in_channels = take<std::int32_t>(in, path);
    enc.spec.kernel_h = take<std::int32_t>(in, path);
    enc.spec.kernel_w = take<std::int32_t>(in, path);
    enc.spec.stride = take<std::int32_t>(in, path);
    enc.spec.pad = take<std::int32_t>(in, path);
    enc.spec.input_h = take<std::int32_t>(in, path);
    enc.spec.input_w = take<std::int32_t>(in, path);
    enc.kept_grains = take<std::uint64_t>(in, path);
    enc.padding_grains = take<std::uint64_t>(in, path);
    enc.value_min = take<float>(in, path);
    enc.value_max = take<float>(in, path);
    const auto n_centers = take<std::uint16_t>(in, path);
    enc.centers.resize(n_centers);
    for (auto& c : enc.centers) c = take<float>(in, path);

    try {
        enc.spec.validate();
    } catch (const InvalidArgument& e) {
        throw DataError(std::string("encoding container: ") + e.what());
    }
    const GrainPartition part = partition(enc.spec, enc.granularity);
    const std::uint64_t stored = enc.stored_grains();
    if (stored > part.grain_count + part.grain_count / kPaddingAdvance + 1)
        throw DataError("encoding container '" + path.string() + "' declares too many grains");

    enc.index_stream.resize(stored);
    for (std::size_t i = 0; i < stored; i += 2) {
        const auto byte = take<std::uint8_t>(in, path);
        enc.index_stream[i] = byte & 0x0f;
        if (i + 1 < stored) enc.index_stream[i + 1] = (byte >> 4) & 0x0f;
    }
    enc.value_stream.resize(stored * part.weights_per_grain);
    in.read(reinterpret_cast<char*>(enc.value_stream.data()),
            static_cast<std::streamsize>(enc.value_stream.size()));
    if (!in) throw DataError("truncated encoding container '" + path.string() + "'");

    enc.kept_weights = enc.kept_grains * part.weights_per_grain;
    enc.bits_values = std::uint64_t{8} * enc.value_stream.size();
    enc.bits_indices = std::uint64_t{4} * enc.index_stream.size();
    enc.bits_total = enc.bits_values + enc.bits_indices;
    return enc;
}

} // namespace sparsegrain
