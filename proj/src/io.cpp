#include "drhmc/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace drhmc {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_chain_csv(std::ostream& out, const ChainResult& chain, const std::vector<std::string>& parameter_names) {
  if (static_cast<Index>(parameter_names.size()) != chain.draws.cols())
    throw std::invalid_argument("chain csv: parameter name count does not match draws");
  out << "iteration,stage,stages_tried,cum_evals";
  for (const auto& n : parameter_names) out << ',' << n;
  out << '\n';
  for (Index i = 0; i < chain.draws.rows(); ++i) {
    const auto r = static_cast<std::size_t>(i);
    out << i << ',' << chain.stage_tags[r] << ',' << chain.stages_tried[r] << ',' << chain.cum_evals[r];
    for (Index j = 0; j < chain.draws.cols(); ++j) out << ',' << format_double(chain.draws(i, j));
    out << '\n';
  }
}

void write_chain_csv(const std::filesystem::path& path, const ChainResult& chain,
                     const std::vector<std::string>& parameter_names) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_chain_csv(out, chain, parameter_names);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace drhmc
