#pragma once

#include "basgcn/graph.hpp"

#include <filesystem>
#include <string>

namespace basgcn {

// Reads a dataset in the TU-Dortmund flat-file layout from `directory`:
//
//   <name>_A.txt                one edge per line, "u, v" (or "u v"), 1-based
//                               global vertex ids; undirected edges may be
//                               listed once or in both directions
//   <name>_graph_indicator.txt  one 1-based graph id per vertex line
//   <name>_graph_labels.txt     one class label per graph line
//   <name>_node_labels.txt      optional, one vertex label per vertex line
//
// Commas, extra whitespace and a trailing newline are tolerated. Edges are
// deduplicated to undirected form and self-loop lines are dropped (self-loops
// are added functionally downstream). Without a node-label file the graphs
// are labeled by vertex degree and has_node_labels is false.
//
// Throws std::runtime_error naming the file when a mandatory file is missing,
// and a format error with the offending 1-based line number when an index
// dangles.
GraphDataset load_tu_dataset(const std::filesystem::path& directory, const std::string& name);

}  // namespace basgcn
