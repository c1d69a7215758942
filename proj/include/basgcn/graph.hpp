#pragma once

#include "basgcn/types.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace basgcn {

// Undirected graph with discrete vertex labels. Edges are stored once,
// endpoint-sorted, without self-loops; self-loops enter only through
// self_loop_adjacency().
struct Graph {
  int num_vertices = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<int> vertex_labels;
  int graph_label = 0;
};

struct GraphDataset {
  std::vector<Graph> graphs;
  std::vector<int> label_alphabet;  // sorted distinct vertex labels
  std::vector<int> class_alphabet;  // sorted distinct graph labels
  std::string name;
  bool has_node_labels = true;
};

inline std::vector<std::vector<int>> adjacency_list(const Graph& g) {
  std::vector<std::vector<int>> adj(g.num_vertices);
  for (auto [u, v] : g.edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  return adj;
}

inline std::vector<int> vertex_degrees(const Graph& g) {
  std::vector<int> deg(g.num_vertices, 0);
  for (auto [u, v] : g.edges) {
    ++deg[u];
    ++deg[v];
  }
  return deg;
}

// Adjacency with unit diagonal: A + I on a 0/1 undirected adjacency.
template <class Scalar>
MatrixX<Scalar> self_loop_adjacency(const Graph& g) {
  MatrixX<Scalar> a = MatrixX<Scalar>::Identity(g.num_vertices, g.num_vertices);
  for (auto [u, v] : g.edges) {
    a(u, v) = Scalar(1);
    a(v, u) = Scalar(1);
  }
  return a;
}

// Copy of g labeled by self-loop-free vertex degree.
inline Graph with_degree_labels(const Graph& g) {
  Graph out = g;
  out.vertex_labels = vertex_degrees(g);
  return out;
}

// Relabel every graph by vertex degree and rebuild the label alphabet.
inline void apply_degree_labels(GraphDataset& ds) {
  std::vector<int> labels;
  for (auto& g : ds.graphs) {
    g = with_degree_labels(g);
    labels.insert(labels.end(), g.vertex_labels.begin(), g.vertex_labels.end());
  }
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  ds.label_alphabet = std::move(labels);
}

inline int label_channel(const GraphDataset& ds, int label) {
  auto it = std::lower_bound(ds.label_alphabet.begin(), ds.label_alphabet.end(), label);
  if (it == ds.label_alphabet.end() || *it != label) {
    throw std::invalid_argument("vertex label " + std::to_string(label) +
                                " not in dataset alphabet");
  }
  return static_cast<int>(it - ds.label_alphabet.begin());
}

inline int class_index(const GraphDataset& ds, int graph_label) {
  auto it = std::lower_bound(ds.class_alphabet.begin(), ds.class_alphabet.end(), graph_label);
  if (it == ds.class_alphabet.end() || *it != graph_label) {
    throw std::invalid_argument("graph label " + std::to_string(graph_label) +
                                " not in dataset class alphabet");
  }
  return static_cast<int>(it - ds.class_alphabet.begin());
}

// One-hot vertex feature matrix, n x |label_alphabet|, rows in vertex order.
template <class Scalar>
MatrixX<Scalar> one_hot_features(const Graph& g, const GraphDataset& ds) {
  MatrixX<Scalar> x = MatrixX<Scalar>::Zero(g.num_vertices, static_cast<Index>(ds.label_alphabet.size()));
  for (int i = 0; i < g.num_vertices; ++i) {
    x(i, label_channel(ds, g.vertex_labels[i])) = Scalar(1);
  }
  return x;
}

// Content hash covering structure, labels and alphabets; grid caches key on it.
inline std::uint64_t dataset_fingerprint(const GraphDataset& ds) {
  Fnv1a h;
  h.update(ds.name.data(), ds.name.size());
  h.update_u64(ds.graphs.size());
  for (const auto& g : ds.graphs) {
    h.update_i32(g.num_vertices);
    h.update_i32(g.graph_label);
    h.update_u64(g.edges.size());
    for (auto [u, v] : g.edges) {
      h.update_i32(u);
      h.update_i32(v);
    }
    for (int l : g.vertex_labels) h.update_i32(l);
  }
  for (int l : ds.label_alphabet) h.update_i32(l);
  for (int c : ds.class_alphabet) h.update_i32(c);
  return h.digest();
}

}  // namespace basgcn
