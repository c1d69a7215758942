#pragma once

#include "basgcn/depth_rep.hpp"
#include "basgcn/kmeans.hpp"

#include <numeric>
#include <span>

namespace basgcn {

// Prototype representations for one depth level: M centroids in K dimensions
// plus the canonical grid order (order[r] = centroid index placed at rank r).
template <class Scalar>
struct PrototypeSet {
  int level = 0;
  MatrixX<Scalar> centroids;  // M x level
  std::vector<int> order;
  std::uint64_t seed = 0;
};

// Fixed-size grid structure of one graph: aligned features, aligned
// adjacency, and its backtrackless (directed) counterpart.
template <class Scalar>
struct AlignedGrid {
  MatrixX<Scalar> features;       // M x c
  MatrixX<Scalar> adjacency;      // M x M, symmetric
  MatrixX<Scalar> backtrackless;  // M x M, generally asymmetric
  int label = 0;                  // class index
};

template <class Scalar>
struct StackedReps {
  MatrixX<Scalar> values;    // sum(|V_p|) x level
  std::vector<int> offsets;  // row offset of each graph's slice
};

// Vertical concatenation of per-graph depth representations, truncated to the
// requested level.
template <class Scalar>
StackedReps<Scalar> collect_representations(std::span<const MatrixX<Scalar>> db_matrices, int level) {
  Index total = 0;
  for (const auto& db : db_matrices) {
    if (db.cols() < level) throw std::invalid_argument("collect_representations: depth too shallow");
    total += db.rows();
  }
  StackedReps<Scalar> out;
  out.values.resize(total, level);
  out.offsets.reserve(db_matrices.size());
  Index row = 0;
  for (const auto& db : db_matrices) {
    out.offsets.push_back(static_cast<int>(row));
    out.values.middleRows(row, db.rows()) = db.leftCols(level);
    row += db.rows();
  }
  return out;
}

// Grid order of the centroids: similarity s(u,v) = exp(-|u-v|_2 / level),
// degree = total similarity, sorted by descending degree with index ties
// ascending.
template <class Scalar>
std::vector<int> prototype_order(const MatrixX<Scalar>& centroids, int level) {
  const Index m = centroids.rows();
  VectorX<Scalar> degree(m);
  for (Index j = 0; j < m; ++j) {
    Scalar sum = 0;
    for (Index k = 0; k < m; ++k) {
      sum += std::exp(-(centroids.row(j) - centroids.row(k)).norm() / Scalar(level));
    }
    degree(j) = sum;
  }
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return degree(a) > degree(b); });
  return order;
}

// k-means over stacked representations; `order` is filled from the fitted
// centroids.
template <class Scalar>
PrototypeSet<Scalar> fit_prototypes(const MatrixX<Scalar>& reps, int num_prototypes, std::uint64_t seed) {
  PrototypeSet<Scalar> protos;
  protos.level = static_cast<int>(reps.cols());
  protos.seed = seed;
  protos.centroids = kmeans_fit<Scalar>(reps, num_prototypes, seed).centroids;
  protos.order = prototype_order(protos.centroids, protos.level);
  return protos;
}

// 0/1 matrix aligning each vertex to its nearest prototype; distance ties go
// to the smallest prototype index, so every row has exactly one 1.
template <class Scalar>
MatrixX<Scalar> correspondence_matrix(const MatrixX<Scalar>& db, const PrototypeSet<Scalar>& protos) {
  if (db.cols() != protos.centroids.cols()) {
    throw std::invalid_argument("correspondence_matrix: depth does not match prototype level");
  }
  const Index n = db.rows();
  const Index m = protos.centroids.rows();
  MatrixX<Scalar> c = MatrixX<Scalar>::Zero(n, m);
  for (Index i = 0; i < n; ++i) {
    Index best = 0;
    Scalar best_d = (db.row(i) - protos.centroids.row(0)).squaredNorm();
    for (Index j = 1; j < m; ++j) {
      Scalar d = (db.row(i) - protos.centroids.row(j)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    c(i, best) = Scalar(1);
  }
  return c;
}

// Aligned vertex features: each grid row collects the features of the
// vertices mapped to that prototype.
template <class Scalar>
MatrixX<Scalar> aligned_features(const MatrixX<Scalar>& correspondence, const MatrixX<Scalar>& features) {
  if (correspondence.rows() != features.rows()) {
    throw std::invalid_argument("aligned_features: row counts disagree");
  }
  return correspondence.transpose() * features;
}

// Aligned (possibly weighted) adjacency over the grid vertices.
template <class Scalar>
MatrixX<Scalar> aligned_adjacency(const MatrixX<Scalar>& correspondence, const MatrixX<Scalar>& adjacency) {
  if (correspondence.rows() != adjacency.rows() || adjacency.rows() != adjacency.cols()) {
    throw std::invalid_argument("aligned_adjacency: shape mismatch");
  }
  return correspondence.transpose() * adjacency * correspondence;
}

// Directed replacement for a symmetric nonnegative adjacency: an entry
// survives only from the endpoint with the lower steady-state random-walk
// visiting probability to the higher one. The diagonal always survives and
// an all-zero matrix is returned unchanged. P(i) compares as the row-sum
// degree (same ordering; the division by total mass is monotone).
template <class Scalar>
MatrixX<Scalar> backtracklessize(const MatrixX<Scalar>& adjacency) {
  const Index m = adjacency.rows();
  if (adjacency.cols() != m) throw std::invalid_argument("backtracklessize: matrix not square");
  VectorX<Scalar> degree = adjacency.rowwise().sum();
  if (degree.sum() == Scalar(0)) return adjacency;
  MatrixX<Scalar> out(m, m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < m; ++j) {
      out(i, j) = degree(i) <= degree(j) ? adjacency(i, j) : Scalar(0);
    }
  }
  return out;
}

namespace detail {

template <class Scalar>
MatrixX<Scalar> reorder_rows(const MatrixX<Scalar>& x, const std::vector<int>& order) {
  MatrixX<Scalar> out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) out.row(r) = x.row(order[r]);
  return out;
}

template <class Scalar>
MatrixX<Scalar> reorder_rows_cols(const MatrixX<Scalar>& x, const std::vector<int>& order) {
  MatrixX<Scalar> out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index c = 0; c < x.cols(); ++c) out(r, c) = x(order[r], order[c]);
  }
  return out;
}

}  // namespace detail

// Multi-level aligned grid of a single graph: the per-level aligned feature
// and adjacency matrices, reindexed by each level's prototype order, averaged
// over levels, with the directed adjacency derived at the end.
template <class Scalar>
AlignedGrid<Scalar> build_grid(const MatrixX<Scalar>& features, const MatrixX<Scalar>& self_loop_adj,
                               const MatrixX<Scalar>& db, std::span<const PrototypeSet<Scalar>> protos,
                               int label = 0) {
  if (protos.empty()) throw std::invalid_argument("build_grid: no prototype sets");
  const Index m = protos.front().centroids.rows();
  const auto levels = static_cast<int>(protos.size());
  AlignedGrid<Scalar> grid;
  grid.features = MatrixX<Scalar>::Zero(m, features.cols());
  grid.adjacency = MatrixX<Scalar>::Zero(m, m);
  grid.label = label;
  for (const auto& p : protos) {
    if (p.centroids.rows() != m) throw std::invalid_argument("build_grid: prototype sets disagree on M");
    if (db.cols() < p.level) throw std::invalid_argument("build_grid: depth representation too shallow");
    MatrixX<Scalar> c = correspondence_matrix(db.leftCols(p.level).eval(), p);
    grid.features += detail::reorder_rows(aligned_features(c, features), p.order) / Scalar(levels);
    grid.adjacency += detail::reorder_rows_cols(aligned_adjacency(c, self_loop_adj), p.order) / Scalar(levels);
  }
  grid.backtrackless = backtracklessize(grid.adjacency);
  return grid;
}

}  // namespace basgcn
