#pragma once

#include "basgcn/pipeline.hpp"

#include <filesystem>

namespace basgcn {

// Versioned binary container for a GridSet. Layout, all little-endian:
//
//   magic "BGC1", u32 version (1)
//   u64 fingerprint, u32 M, u32 L, u64 seed, u32 channels, u32 classes,
//   u32 graph count
//   L prototype records:  u32 level, u64 seed, f64 centroids[M*level]
//                         (row-major, row = centroid), u32 order[M]
//   per graph:            i32 label, f64 features[M*channels],
//                         f64 adjacency[M*M], f64 backtrackless[M*M]
//                         (all row-major)
//
// Matrices are 64-bit IEEE floats, so a round-trip is bitwise lossless.
// read_grid_cache rejects files whose magic, version, or fingerprint does not
// match the request.
void write_grid_cache(const std::filesystem::path& path, const GridSet& set);
GridSet read_grid_cache(const std::filesystem::path& path, std::uint64_t expected_fingerprint);

}  // namespace basgcn
