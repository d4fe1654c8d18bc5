// Small CSV helpers with deterministic number formatting, so repeated runs
// of the tools produce byte-identical files.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace sparsegrain {

// Shortest round-trip decimal representation (std::to_chars).
std::string format_double(double value);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a header column, or -1 when absent.
    int column(const std::string& name) const;
};

// Parses a simple comma-separated file (no quoting; cells may not contain
// commas). First line is the header. Throws DataError on ragged rows.
CsvTable read_csv(const std::filesystem::path& path);

} // namespace sparsegrain
