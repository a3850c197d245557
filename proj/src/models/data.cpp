#include "drhmc/models/data.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace drhmc {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

CsvColumns read_csv_columns(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::vector<std::string> header;
  CsvColumns cols;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split(line);
    if (header.empty()) {
      header = cells;
      for (const auto& h : header) {
        if (h.empty()) throw std::runtime_error(path.string() + ": empty column name");
        if (cols.count(h)) throw std::runtime_error(path.string() + ": duplicate column " + h);
        cols[h];
      }
      continue;
    }
    if (cells.size() != header.size())
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(header.size()) + " fields");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[i], &used);
        if (used != cells[i].size()) throw std::invalid_argument(cells[i]);
        cols[header[i]].push_back(v);
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cells[i] +
                                 "'");
      }
    }
  }
  if (header.empty()) throw std::runtime_error(path.string() + ": missing header");
  return cols;
}

void write_csv_columns(const std::filesystem::path& path, const std::vector<std::string>& order,
                       const CsvColumns& columns) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::size_t rows = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out << (i ? "," : "") << order[i];
    rows = std::max(rows, columns.at(order[i]).size());
  }
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& col = columns.at(order[i]);
      auto res = std::to_chars(buf, buf + sizeof buf, col.at(r));
      out << (i ? "," : "") << std::string_view(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

std::filesystem::path bundled_data_dir() {
#ifdef DRHMC_DATA_DIR
  return DRHMC_DATA_DIR;
#else
  return "data";
#endif
}

}  // namespace drhmc
