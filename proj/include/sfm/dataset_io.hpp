#pragma once

#include <filesystem>
#include <string>

#include "sfm/specgen.hpp"

namespace sfm {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s);

// Writes <dir>/manifest.json and <dir>/spectra.csv. Loading the directory
// reproduces the dataset exactly, including every power value bit for bit.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace sfm
