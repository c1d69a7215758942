#pragma once

#include "basgcn/align.hpp"
#include "basgcn/graph.hpp"
#include "basgcn/parallel.hpp"

namespace basgcn {

struct GridParams {
  int grid_size = 64;   // M, prototypes per level
  int levels = 10;      // L, depth levels
  std::uint64_t seed = 1;
};

// Complete preprocessing output for one dataset and configuration.
struct GridSet {
  std::vector<AlignedGrid<double>> grids;
  std::vector<PrototypeSet<double>> prototypes;  // levels 1..L
  std::uint64_t fingerprint = 0;
  int grid_size = 0;
  int levels = 0;
  std::uint64_t seed = 0;
  int channels = 0;
  int num_classes = 0;
};

// Cache key: dataset content, grid parameters, and the prototype-fitting
// subset (empty = all graphs, the transductive default).
inline std::uint64_t grid_fingerprint(const GraphDataset& ds, const GridParams& params,
                                      std::span<const int> fit_subset = {}) {
  Fnv1a h;
  h.update_u64(dataset_fingerprint(ds));
  h.update_i32(params.grid_size);
  h.update_i32(params.levels);
  h.update_u64(params.seed);
  h.update_u64(fit_subset.size());
  for (int i : fit_subset) h.update_i32(i);
  return h.digest();
}

// Depth representations for every graph, parallel across graphs.
inline std::vector<MatrixX<double>> dataset_db_representations(const GraphDataset& ds, int depth,
                                                               int threads = 1) {
  std::vector<MatrixX<double>> dbs(ds.graphs.size());
  parallel_for(static_cast<int>(ds.graphs.size()), threads,
               [&](int i) { dbs[i] = db_representation<double>(ds.graphs[i], depth); });
  return dbs;
}

// Full preprocessing: depth representations, per-level prototype fitting
// (over fit_subset when given, otherwise over all graphs), and grid
// construction for every graph. Labels stored on the grids are class indices
// into ds.class_alphabet. Pass precomputed_dbs (depth >= params.levels) to
// skip the depth-representation pass.
inline GridSet build_grid_set(const GraphDataset& ds, const GridParams& params, int threads = 1,
                              std::span<const int> fit_subset = {},
                              const std::vector<MatrixX<double>>* precomputed_dbs = nullptr) {
  const int n = static_cast<int>(ds.graphs.size());
  GridSet set;
  set.grid_size = params.grid_size;
  set.levels = params.levels;
  set.seed = params.seed;
  set.channels = static_cast<int>(ds.label_alphabet.size());
  set.num_classes = static_cast<int>(ds.class_alphabet.size());
  set.fingerprint = grid_fingerprint(ds, params, fit_subset);

  const auto dbs = precomputed_dbs ? *precomputed_dbs
                                   : dataset_db_representations(ds, params.levels, threads);

  std::vector<MatrixX<double>> fit_dbs;
  std::span<const MatrixX<double>> fit_span(dbs);
  if (!fit_subset.empty()) {
    fit_dbs.reserve(fit_subset.size());
    for (int i : fit_subset) fit_dbs.push_back(dbs[i]);
    fit_span = fit_dbs;
  }

  set.prototypes.reserve(params.levels);
  for (int level = 1; level <= params.levels; ++level) {
    auto stacked = collect_representations<double>(fit_span, level);
    set.prototypes.push_back(fit_prototypes<double>(stacked.values, params.grid_size,
                                                    mix_seed(params.seed, static_cast<std::uint64_t>(level))));
  }

  set.grids.resize(n);
  parallel_for(n, threads, [&](int i) {
    const Graph& g = ds.graphs[i];
    set.grids[i] = build_grid<double>(one_hot_features<double>(g, ds), self_loop_adjacency<double>(g),
                                      dbs[i], set.prototypes, class_index(ds, g.graph_label));
  });
  return set;
}

}  // namespace basgcn
