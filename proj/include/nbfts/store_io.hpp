#pragma once

#include <string>

#include "nbfts/gibbs.hpp"

namespace nbfts {

// DrawStore directory layout: metadata.json plus one flat little-endian
// binary table per parameter, one row per stored draw (f64 for reals, i64
// for counts/masks). Shapes and dtypes are listed in the metadata.
void save_drawstore(const DrawStore& store, const std::string& dir);
DrawStore load_drawstore(const std::string& dir);

// Checks metadata against the actual table files; throws on any mismatch.
void validate_drawstore(const std::string& dir);

}  // namespace nbfts
