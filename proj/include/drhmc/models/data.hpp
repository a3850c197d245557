#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace drhmc {

/// Numeric CSV with a header row; one column per field. Lines starting with
/// '#' are comments.
using CsvColumns = std::map<std::string, std::vector<double>>;

CsvColumns read_csv_columns(const std::filesystem::path& path);
void write_csv_columns(const std::filesystem::path& path, const std::vector<std::string>& order,
                       const CsvColumns& columns);

/// Directory holding the bundled datasets.
std::filesystem::path bundled_data_dir();

}  // namespace drhmc
