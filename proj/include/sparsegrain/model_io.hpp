#pragma once

#include <filesystem>
#include <vector>

#include "sparsegrain/model.hpp"

namespace sparsegrain {

/// Loads a model from a JSON manifest. Each layer entry references a raw
/// little-endian float32 blob in (c, k, r, s) row-major order; blob paths are
/// resolved relative to the manifest's directory. Rejects missing files,
/// byte-length mismatches, and non-finite values, naming the layer.
std::vector<WeightTensor> load_model(const std::filesystem::path& manifest_path);

/// Writes manifest.json plus one <name>.bin blob per layer into `dir`.
/// Returns the manifest path. load_model(save_model(...)) is bit-exact.
std::filesystem::path save_model(const std::vector<WeightTensor>& model,
                                 const std::filesystem::path& dir,
                                 const std::string& manifest_name = "manifest.json");

/// Raw blob helpers (float32 little-endian).
std::vector<float> read_blob(const std::filesystem::path& path, std::size_t expected_count);
void write_blob(const std::filesystem::path& path, const std::vector<float>& values);

/// Writes `text` to `path` via a temp file and rename, so partial output is
/// never observed.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

} // namespace sparsegrain
