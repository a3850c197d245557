#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "drhmc/sampler.hpp"

namespace drhmc {

/// Shortest round-trip decimal form; "nan", "inf", "-inf" for non-finite values.
std::string format_double(double v);

/// Columns: iteration, stage, stages_tried, cum_evals, then one per parameter.
void write_chain_csv(std::ostream& out, const ChainResult& chain, const std::vector<std::string>& parameter_names);
void write_chain_csv(const std::filesystem::path& path, const ChainResult& chain,
                     const std::vector<std::string>& parameter_names);

std::string hex64(std::uint64_t v);

}  // namespace drhmc
