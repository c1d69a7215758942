#include "basgcn/tu_loader.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace basgcn {
namespace {

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("missing dataset file: " + path.string());
  }
  return in;
}

[[noreturn]] void format_error(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

// Reads integers from a line, treating commas as separators.
std::vector<long> parse_ints(const std::string& line) {
  std::string cleaned = line;
  std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
  std::istringstream ss(cleaned);
  std::vector<long> out;
  long v;
  while (ss >> v) out.push_back(v);
  return out;
}

std::vector<long> read_int_column(const std::filesystem::path& path) {
  std::ifstream in = open_or_throw(path);
  std::vector<long> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto ints = parse_ints(line);
    if (ints.empty()) continue;  // tolerate blank lines
    if (ints.size() != 1) format_error(path, lineno, "expected one integer");
    values.push_back(ints[0]);
  }
  return values;
}

}  // namespace

GraphDataset load_tu_dataset(const std::filesystem::path& directory, const std::string& name) {
  const auto a_path = directory / (name + "_A.txt");
  const auto indicator_path = directory / (name + "_graph_indicator.txt");
  const auto graph_labels_path = directory / (name + "_graph_labels.txt");
  const auto node_labels_path = directory / (name + "_node_labels.txt");

  const std::vector<long> indicator = read_int_column(indicator_path);
  const std::vector<long> graph_labels = read_int_column(graph_labels_path);
  const long num_vertices_total = static_cast<long>(indicator.size());
  const long num_graphs = static_cast<long>(graph_labels.size());

  GraphDataset ds;
  ds.name = name;
  ds.graphs.resize(num_graphs);

  // Vertex membership: global 1-based id -> (graph, local index). Local
  // indices follow ascending global id within each graph.
  std::vector<int> graph_of(num_vertices_total);
  std::vector<int> local_of(num_vertices_total);
  {
    std::vector<int> counts(num_graphs, 0);
    for (long v = 0; v < num_vertices_total; ++v) {
      long gid = indicator[v];
      if (gid < 1 || gid > num_graphs) {
        format_error(indicator_path, static_cast<std::size_t>(v + 1),
                     "graph id " + std::to_string(gid) + " out of range");
      }
      graph_of[v] = static_cast<int>(gid - 1);
      local_of[v] = counts[gid - 1]++;
    }
    for (long g = 0; g < num_graphs; ++g) {
      ds.graphs[g].num_vertices = counts[g];
      ds.graphs[g].graph_label = static_cast<int>(graph_labels[g]);
      ds.graphs[g].vertex_labels.assign(counts[g], 0);
    }
  }

  // Edges, deduplicated to undirected form; files may list each edge once or
  // twice. Self-loop lines are dropped.
  {
    std::ifstream in = open_or_throw(a_path);
    std::vector<std::set<std::pair<int, int>>> seen(num_graphs);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto ints = parse_ints(line);
      if (ints.empty()) continue;
      if (ints.size() != 2) format_error(a_path, lineno, "expected an edge pair");
      long u = ints[0], v = ints[1];
      if (u < 1 || u > num_vertices_total || v < 1 || v > num_vertices_total) {
        format_error(a_path, lineno, "vertex index out of range");
      }
      int gu = graph_of[u - 1], gv = graph_of[v - 1];
      if (gu != gv) format_error(a_path, lineno, "edge endpoints belong to different graphs");
      if (u == v) continue;
      int lu = local_of[u - 1], lv = local_of[v - 1];
      auto e = std::minmax(lu, lv);
      if (seen[gu].insert(e).second) {
        ds.graphs[gu].edges.push_back(e);
      }
    }
  }

  // Vertex labels; degree labels when the file is absent.
  if (std::filesystem::exists(node_labels_path)) {
    const std::vector<long> node_labels = read_int_column(node_labels_path);
    if (node_labels.size() != static_cast<std::size_t>(num_vertices_total)) {
      format_error(node_labels_path, node_labels.size() + 1,
                   "node label count does not match graph indicator");
    }
    for (long v = 0; v < num_vertices_total; ++v) {
      ds.graphs[graph_of[v]].vertex_labels[local_of[v]] = static_cast<int>(node_labels[v]);
    }
    std::vector<int> alpha(node_labels.begin(), node_labels.end());
    std::sort(alpha.begin(), alpha.end());
    alpha.erase(std::unique(alpha.begin(), alpha.end()), alpha.end());
    ds.label_alphabet = std::move(alpha);
    ds.has_node_labels = true;
  } else {
    apply_degree_labels(ds);
    ds.has_node_labels = false;
  }

  {
    std::vector<int> classes(graph_labels.begin(), graph_labels.end());
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    ds.class_alphabet = std::move(classes);
  }
  // Degenerate single-class files still load; training-side consumers demand
  // at least two classes.
  return ds;
}

}  // namespace basgcn
