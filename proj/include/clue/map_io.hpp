#pragma once

// Ambiguity map file: "AMAP", u32 grid side G, then G*G little-endian f32,
// row-major. A map dataset directory holds maps.bin (AMAP records back to
// back) and labels.txt (one 0/1 label per line, same order).

#include <cstdint>
#include <string>
#include <vector>

#include "clue/aggregate.hpp"
#include "clue/probe.hpp"

namespace clue {

std::vector<std::uint8_t> encode_map(const AmbiguityMap& m);
void save_map(const std::string& path, const AmbiguityMap& m);
AmbiguityMap load_map(const std::string& path);

void save_map_dataset(const std::string& dir, const std::vector<LabeledMap>& data);
std::vector<LabeledMap> load_map_dataset(const std::string& dir);

}  // namespace clue
