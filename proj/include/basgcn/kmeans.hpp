#pragma once

#include "basgcn/types.hpp"

#include <limits>
#include <stdexcept>
#include <vector>

namespace basgcn {

template <class Scalar>
struct KMeansResult {
  MatrixX<Scalar> centroids;          // M x dim, row j = centroid j
  std::vector<int> assignment;        // point -> centroid index
  Scalar objective = 0;               // sum of squared distances
  std::vector<Scalar> objective_trace;  // one entry per Lloyd iteration
};

namespace detail {

template <class Scalar>
int nearest_centroid(const MatrixX<Scalar>& points, const MatrixX<Scalar>& centroids, Index i) {
  int best = 0;
  Scalar best_d = (points.row(i) - centroids.row(0)).squaredNorm();
  for (Index j = 1; j < centroids.rows(); ++j) {
    Scalar d = (points.row(i) - centroids.row(j)).squaredNorm();
    if (d < best_d) {  // ties keep the smallest index
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding. Deterministic for a fixed seed:
// sampling uses the canonical uniform draw, assignment ties go to the
// smallest centroid index, and clusters that empty out are reseeded to the
// point currently farthest from its own centroid.
template <class Scalar>
KMeansResult<Scalar> kmeans_fit(const MatrixX<Scalar>& points, int num_clusters,
                                std::uint64_t seed, int max_iterations = 300,
                                Scalar shift_tolerance = Scalar(1e-6)) {
  const Index n = points.rows();
  const Index dim = points.cols();
  if (num_clusters < 1) throw std::invalid_argument("kmeans_fit: need at least one cluster");
  if (num_clusters > n) {
    throw std::invalid_argument("kmeans_fit: more clusters than points (" +
                                std::to_string(num_clusters) + " > " + std::to_string(n) + ")");
  }

  std::mt19937_64 rng(seed);
  MatrixX<Scalar> centroids(num_clusters, dim);

  // k-means++ seeding: first centroid uniform, the rest sampled with
  // probability proportional to the squared distance to the nearest chosen
  // centroid.
  {
    Index first = static_cast<Index>(uniform_unit(rng) * static_cast<double>(n));
    if (first >= n) first = n - 1;
    centroids.row(0) = points.row(first);
    VectorX<Scalar> d2(n);
    for (Index i = 0; i < n; ++i) d2(i) = (points.row(i) - centroids.row(0)).squaredNorm();
    for (int j = 1; j < num_clusters; ++j) {
      Scalar total = d2.sum();
      Index pick = 0;
      if (total > Scalar(0)) {
        Scalar target = static_cast<Scalar>(uniform_unit(rng)) * total;
        Scalar cum = 0;
        pick = n - 1;
        for (Index i = 0; i < n; ++i) {
          cum += d2(i);
          if (cum > target) {
            pick = i;
            break;
          }
        }
      }
      centroids.row(j) = points.row(pick);
      for (Index i = 0; i < n; ++i) {
        d2(i) = std::min(d2(i), (points.row(i) - centroids.row(j)).squaredNorm());
      }
    }
  }

  KMeansResult<Scalar> result;
  result.assignment.assign(n, 0);

  for (int iter = 0; iter < max_iterations; ++iter) {
    // Assignment step.
    for (Index i = 0; i < n; ++i) {
      result.assignment[i] = detail::nearest_centroid(points, centroids, i);
    }

    // Update step.
    MatrixX<Scalar> sums = MatrixX<Scalar>::Zero(num_clusters, dim);
    std::vector<long> counts(num_clusters, 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(result.assignment[i]) += points.row(i);
      ++counts[result.assignment[i]];
    }
    MatrixX<Scalar> next = centroids;
    for (int j = 0; j < num_clusters; ++j) {
      if (counts[j] > 0) next.row(j) = sums.row(j) / Scalar(counts[j]);
    }

    // Reseed empty clusters to the point farthest from its current centroid.
    std::vector<char> claimed(n, 0);
    for (int j = 0; j < num_clusters; ++j) {
      if (counts[j] > 0) continue;
      Index far = -1;
      Scalar far_d = -1;
      for (Index i = 0; i < n; ++i) {
        if (claimed[i]) continue;
        Scalar d = (points.row(i) - next.row(result.assignment[i])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      next.row(j) = points.row(far);
      claimed[far] = 1;
    }

    Scalar shift = 0;
    for (int j = 0; j < num_clusters; ++j) {
      shift = std::max(shift, (next.row(j) - centroids.row(j)).norm());
    }
    centroids = next;

    // Objective of the current assignment against the updated centroids;
    // this quantity is non-increasing across iterations.
    Scalar objective = 0;
    for (Index i = 0; i < n; ++i) {
      objective += (points.row(i) - centroids.row(result.assignment[i])).squaredNorm();
    }
    result.objective_trace.push_back(objective);

    if (shift < shift_tolerance) break;
  }

  for (Index i = 0; i < n; ++i) {
    result.assignment[i] = detail::nearest_centroid(points, centroids, i);
  }
  result.centroids = std::move(centroids);
  result.objective = 0;
  for (Index i = 0; i < n; ++i) {
    result.objective += (points.row(i) - result.centroids.row(result.assignment[i])).squaredNorm();
  }
  return result;
}

}  // namespace basgcn
