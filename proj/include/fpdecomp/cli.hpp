#pragma once

#include <string>
#include <vector>

#include "fpdecomp/grid.hpp"

/// Command-line front end. Every run writes its outputs and a manifest.json
/// into the --out directory.
namespace fpdecomp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitUsage = 64;

/// `args` excludes the program name. Errors are reported as JSON on stderr.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

/// `gauss:mu1,mu2,...:sigma`, `uniform`, or the path of a CSV whose last
/// column holds one value per cell (header row, cells in grid order).
GridField parse_initial_density(const std::string& text, const Grid& g);

/// Comma-separated reals or integers.
std::vector<double> parse_reals(const std::string& text);
std::vector<int> parse_ints(const std::string& text);

}  // namespace fpdecomp::cli
