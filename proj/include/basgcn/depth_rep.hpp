#pragma once

#include "basgcn/graph.hpp"

#include <cmath>
#include <map>
#include <queue>

namespace basgcn {

// Subgraph induced by a vertex subset; vertices keep their parent-graph
// indices and are listed ascending.
struct InducedSubgraph {
  std::vector<int> vertices;
  std::vector<std::pair<int, int>> edges;
};

inline std::vector<int> bfs_distances(const std::vector<std::vector<int>>& adj, int root) {
  std::vector<int> dist(adj.size(), -1);
  std::queue<int> q;
  dist[root] = 0;
  q.push(root);
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u]) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
    }
  }
  return dist;
}

// Subgraph induced by all vertices within shortest-path distance k of root,
// on the self-loop-free graph.
inline InducedSubgraph expansion_subgraph(const Graph& g, int root, int k) {
  if (root < 0 || root >= g.num_vertices) throw std::invalid_argument("expansion_subgraph: bad root");
  if (k < 1) throw std::invalid_argument("expansion_subgraph: k must be >= 1");
  const auto adj = adjacency_list(g);
  const auto dist = bfs_distances(adj, root);
  InducedSubgraph sub;
  std::vector<char> in_ball(g.num_vertices, 0);
  for (int v = 0; v < g.num_vertices; ++v) {
    if (dist[v] >= 0 && dist[v] <= k) {
      in_ball[v] = 1;
      sub.vertices.push_back(v);
    }
  }
  for (int u : sub.vertices) {
    for (int v : adj[u]) {
      if (u < v && in_ball[v]) sub.edges.push_back({u, v});
    }
  }
  return sub;
}

namespace detail {

// Entropy of p(v) = deg(v)/total summed over the degree histogram in
// ascending degree order, so the value does not depend on vertex numbering,
// down to the last bit.
template <class Scalar>
Scalar entropy_from_histogram(const std::map<long, long>& histogram, long total_degree) {
  if (total_degree == 0) return Scalar(0);
  Scalar h = 0;
  for (auto [d, count] : histogram) {
    Scalar p = Scalar(d) / Scalar(total_degree);
    h -= Scalar(count) * p * std::log2(p);
  }
  return h;
}

}  // namespace detail

// Shannon entropy of the steady-state random-walk distribution
// p(v) = deg(v) / sum(deg) on the subgraph; 0 when the subgraph has no edges.
template <class Scalar>
Scalar subgraph_entropy(const InducedSubgraph& sub) {
  if (sub.vertices.empty()) throw std::invalid_argument("subgraph_entropy: empty subgraph");
  std::map<int, long> deg;
  for (auto [u, v] : sub.edges) {
    ++deg[u];
    ++deg[v];
  }
  std::map<long, long> histogram;
  long total = 0;
  for (auto [v, d] : deg) {
    ++histogram[d];
    total += d;
  }
  return detail::entropy_from_histogram<Scalar>(histogram, total);
}

// |V| x K matrix of depth-based representations: row i, column k-1 holds the
// entropy of the k-layer expansion subgraph rooted at vertex i. One BFS per
// root; the per-k histograms match subgraph_entropy(expansion_subgraph(...))
// exactly.
template <class Scalar>
MatrixX<Scalar> db_representation(const Graph& g, int depth) {
  if (depth < 1) throw std::invalid_argument("db_representation: depth must be >= 1");
  const auto adj = adjacency_list(g);
  MatrixX<Scalar> values(g.num_vertices, depth);
  for (int root = 0; root < g.num_vertices; ++root) {
    const auto dist = bfs_distances(adj, root);
    for (int k = 1; k <= depth; ++k) {
      std::map<long, long> histogram;
      long total = 0;
      for (int u = 0; u < g.num_vertices; ++u) {
        if (dist[u] < 0 || dist[u] > k) continue;
        long d = 0;
        for (int v : adj[u]) {
          if (dist[v] >= 0 && dist[v] <= k) ++d;
        }
        if (d > 0) {
          ++histogram[d];
          total += d;
        }
      }
      values(root, k - 1) = detail::entropy_from_histogram<Scalar>(histogram, total);
    }
  }
  return values;
}

}  // namespace basgcn
