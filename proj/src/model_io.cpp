#include "sparsegrain/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "sparsegrain/errors.hpp"

namespace sparsegrain {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "blob I/O assumes a little-endian host");

std::vector<float> read_blob(const fs::path& path, std::size_t expected_count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open blob '" + path.string() + "'");
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    if (bytes != expected_count * sizeof(float))
        throw DataError("blob '" + path.string() + "' holds " + std::to_string(bytes) +
                        " bytes, expected " + std::to_string(expected_count * sizeof(float)));
    std::vector<float> values(expected_count);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(bytes));
    if (!in) throw DataError("short read on blob '" + path.string() + "'");
    return values;
}

void write_blob(const fs::path& path, const std::vector<float>& values) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write blob '" + path.string() + "'");
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(float)));
        if (!out) throw DataError("short write on blob '" + path.string() + "'");
    }
    fs::rename(tmp, path);
}

void write_file_atomic(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write '" + path.string() + "'");
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw DataError("short write on '" + path.string() + "'");
    }
    fs::rename(tmp, path);
}

static LayerSpec layer_from_json(const json& j) {
    LayerSpec spec;
    try {
        spec.name = j.at("name").get<std::string>();
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "conv")
            spec.kind = LayerKind::Conv;
        else if (kind == "fc")
            spec.kind = LayerKind::FullyConnected;
        else
            throw DataError("layer '" + spec.name + "': unknown kind '" + kind + "'");
        spec.out_channels = j.at("C").get<int>();
        spec.in_channels = j.at("K").get<int>();
        spec.kernel_h = j.at("R").get<int>();
        spec.kernel_w = j.at("S").get<int>();
        spec.stride = j.value("stride", 1);
        spec.pad = j.value("pad", 0);
        spec.input_h = j.value("input_h", 1);
        spec.input_w = j.value("input_w", 1);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed manifest layer entry: ") + e.what());
    }
    try {
        spec.validate();
    } catch (const InvalidArgument& e) {
        throw DataError(e.what());
    }
    return spec;
}

std::vector<WeightTensor> load_model(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw DataError("cannot open manifest '" + manifest_path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("manifest '" + manifest_path.string() + "': " + e.what());
    }
    if (!doc.contains("layers") || !doc["layers"].is_array())
        throw DataError("manifest '" + manifest_path.string() + "' has no layers array");

    const fs::path base = manifest_path.has_parent_path() ? manifest_path.parent_path()
                                                          : fs::path(".");
    std::vector<WeightTensor> model;
    model.reserve(doc["layers"].size());
    for (const json& entry : doc["layers"]) {
        WeightTensor tensor;
        tensor.spec = layer_from_json(entry);
        if (!entry.contains("weights_file"))
            throw DataError("layer '" + tensor.spec.name + "': missing weights_file");
        const fs::path blob = base / entry["weights_file"].get<std::string>();
        try {
            tensor.values = read_blob(blob, tensor.spec.weight_count());
        } catch (const DataError& e) {
            throw DataError("layer '" + tensor.spec.name + "': " + e.what());
        }
        tensor.validate();
        model.push_back(std::move(tensor));
    }
    return model;
}

fs::path save_model(const std::vector<WeightTensor>& model, const fs::path& dir,
                    const std::string& manifest_name) {
    fs::create_directories(dir);
    json layers = json::array();
    for (const WeightTensor& tensor : model) {
        tensor.validate();
        const LayerSpec& s = tensor.spec;
        const std::string blob_name = s.name + ".bin";
        write_blob(dir / blob_name, tensor.values);
        layers.push_back({{"name", s.name},
                          {"kind", s.is_conv() ? "conv" : "fc"},
                          {"C", s.out_channels},
                          {"K", s.in_channels},
                          {"R", s.kernel_h},
                          {"S", s.kernel_w},
                          {"stride", s.stride},
                          {"pad", s.pad},
                          {"input_h", s.input_h},
                          {"input_w", s.input_w},
                          {"weights_file", blob_name}});
    }
    const fs::path manifest = dir / manifest_name;
    write_file_atomic(manifest, json{{"layers", layers}}.dump(2) + "\n");
    return manifest;
}

} // namespace sparsegrain
