#pragma once

#include "noisy/networks.hpp"

#include <filesystem>
#include <iosfwd>

namespace noisy {

// Text checkpoint, one parameter per two lines:
//
//   noisy-checkpoint 1
//   <name> <rank> <dim0> ... <dimN>
//   <v0> <v1> ... (17 significant digits, row-major)
//
// Values are printed with %.17g, so load(save(p)) == p bit for bit.

void write_checkpoint(std::ostream& os, const ParameterSet& params);
ParameterSet read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
ParameterSet load_checkpoint(const std::filesystem::path& path);

}  // namespace noisy
