#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "basgcn/grid_cache.hpp"
#include "basgcn/tu_loader.hpp"
#include "testutil.hpp"

#include <cmath>
#include <set>

using namespace basgcn;
using testutil::TempDir;

namespace {

using Mat = MatrixX<double>;

bool exact_equal(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

double max_abs_diff(const Mat& a, const Mat& b) { return (a - b).cwiseAbs().maxCoeff(); }

Graph path_graph(int n) {
  Graph g;
  g.num_vertices = n;
  g.vertex_labels.assign(n, 0);
  for (int i = 0; i + 1 < n; ++i) g.edges.push_back({i, i + 1});
  return g;
}

Graph triangle_graph() {
  Graph g;
  g.num_vertices = 3;
  g.vertex_labels = {0, 0, 0};
  g.edges = {{0, 1}, {0, 2}, {1, 2}};
  return g;
}

Graph star_graph(int leaves) {
  Graph g;
  g.num_vertices = leaves + 1;
  g.vertex_labels.assign(leaves + 1, 0);
  for (int i = 1; i <= leaves; ++i) g.edges.push_back({0, i});
  return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// graph-io
// ---------------------------------------------------------------------------

TEST_CASE("tu loader round-trips a synthetic fixture") {
  GraphDataset ds = testutil::random_dataset(/*seed=*/7, /*count=*/5, 3, 9, 0.4, 3, 2);
  ds.name = "FIX";

  for (bool duplicate_edges : {false, true}) {
    CAPTURE(duplicate_edges);
    TempDir tmp("tu_roundtrip");
    testutil::write_tu_files(tmp.path, ds, duplicate_edges);
    GraphDataset loaded = load_tu_dataset(tmp.path, "FIX");

    REQUIRE(loaded.graphs.size() == ds.graphs.size());
    CHECK(loaded.label_alphabet == ds.label_alphabet);
    CHECK(loaded.class_alphabet == ds.class_alphabet);
    CHECK(loaded.has_node_labels);
    long total_vertices = 0;
    for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
      CHECK(loaded.graphs[i].num_vertices == ds.graphs[i].num_vertices);
      CHECK(loaded.graphs[i].edges == ds.graphs[i].edges);
      CHECK(loaded.graphs[i].vertex_labels == ds.graphs[i].vertex_labels);
      CHECK(loaded.graphs[i].graph_label == ds.graphs[i].graph_label);
      total_vertices += loaded.graphs[i].num_vertices;
    }

    // Sum of vertex counts equals the indicator line count.
    std::ifstream ind(tmp.path / "FIX_graph_indicator.txt");
    long lines = 0;
    std::string line;
    while (std::getline(ind, line)) ++lines;
    CHECK(total_vertices == lines);
  }
}

TEST_CASE("tu loader accepts a degenerate single-vertex dataset") {
  Graph trivial;
  trivial.num_vertices = 1;
  trivial.vertex_labels = {0};
  trivial.graph_label = 1;
  GraphDataset ds = testutil::make_dataset({trivial}, "TRIV");
  TempDir tmp("tu_trivial");
  testutil::write_tu_files(tmp.path, ds);

  GraphDataset loaded = load_tu_dataset(tmp.path, "TRIV");
  REQUIRE(loaded.graphs.size() == 1);
  CHECK(loaded.graphs[0].num_vertices == 1);
  CHECK(loaded.graphs[0].edges.empty());
  CHECK(exact_equal(self_loop_adjacency<double>(loaded.graphs[0]), Mat::Identity(1, 1)));
}

TEST_CASE("tu loader reports missing files and dangling indices") {
  TempDir tmp("tu_errors");
  GraphDataset ds = testutil::random_dataset(3, 2, 3, 5, 0.5, 2, 2);
  ds.name = "ERR";
  testutil::write_tu_files(tmp.path, ds);

  CHECK_THROWS_WITH_AS(load_tu_dataset(tmp.path, "NOPE"),
                       doctest::Contains("NOPE_graph_indicator.txt"), std::runtime_error);
  {
    std::ofstream ind(tmp.path / "NOPE_graph_indicator.txt");
    ind << "1\n";
    std::ofstream gl(tmp.path / "NOPE_graph_labels.txt");
    gl << "1\n";
  }
  CHECK_THROWS_WITH_AS(load_tu_dataset(tmp.path, "NOPE"),
                       doctest::Contains("NOPE_A.txt"), std::runtime_error);

  {
    std::ofstream a(tmp.path / "ERR_A.txt", std::ios::app);
    a << "1, 999\n";
  }
  try {
    load_tu_dataset(tmp.path, "ERR");
    FAIL("expected a format error");
  } catch (const std::runtime_error& e) {
    std::string what = e.what();
    CHECK(what.find("ERR_A.txt") != std::string::npos);
    CHECK(what.find("out of range") != std::string::npos);
    CHECK(what.find(':') != std::string::npos);  // carries a line number
  }
}

TEST_CASE("tu loader loads MUTAG when the dataset is present") {
  const char* env = std::getenv("BASGCN_DATA");
  std::filesystem::path root = env ? env : "data";
  if (!std::filesystem::exists(root / "MUTAG" / "MUTAG_A.txt")) {
    MESSAGE("MUTAG not available; skipping dataset-dependent checks");
    return;
  }
  GraphDataset ds = load_tu_dataset(root / "MUTAG", "MUTAG");
  CHECK(ds.graphs.size() == 188);
  CHECK(ds.class_alphabet.size() == 2);
  CHECK(ds.label_alphabet.size() == 7);
  Mat x = one_hot_features<double>(ds.graphs[0], ds);
  CHECK(x.cols() == 7);
  for (Index r = 0; r < x.rows(); ++r) CHECK(x.row(r).sum() == 1.0);
}

TEST_CASE("self-loop adjacency") {
  Graph single;
  single.num_vertices = 1;
  single.vertex_labels = {0};
  CHECK(exact_equal(self_loop_adjacency<double>(single), Mat::Identity(1, 1)));

  CHECK(exact_equal(self_loop_adjacency<double>(path_graph(2)), Mat::Ones(2, 2)));
  CHECK(exact_equal(self_loop_adjacency<double>(triangle_graph()), Mat::Ones(3, 3)));

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Graph g = testutil::random_graph(rng, 2, 12, 0.4, 2);
    Mat a = self_loop_adjacency<double>(g) - Mat::Identity(g.num_vertices, g.num_vertices);
    CHECK(exact_equal(a, a.transpose().eval()));
    CHECK(a.diagonal().cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("one-hot features") {
  Graph g;
  g.num_vertices = 2;
  g.vertex_labels = {5, 9};
  GraphDataset ds = testutil::make_dataset({g});
  Mat x = one_hot_features<double>(ds.graphs[0], ds);
  CHECK(exact_equal(x, Mat::Identity(2, 2)));

  Graph h;
  h.num_vertices = 4;
  h.vertex_labels.assign(4, 3);
  GraphDataset ds1 = testutil::make_dataset({h});
  CHECK(exact_equal(one_hot_features<double>(ds1.graphs[0], ds1), Mat::Ones(4, 1)));

  // Exactly one nonzero entry per row, equal to 1.
  GraphDataset rds = testutil::random_dataset(23, 4, 2, 10, 0.3, 4, 2);
  for (const auto& rg : rds.graphs) {
    Mat rx = one_hot_features<double>(rg, rds);
    for (Index r = 0; r < rx.rows(); ++r) {
      int nonzero = 0;
      for (Index c = 0; c < rx.cols(); ++c) {
        if (rx(r, c) != 0.0) {
          ++nonzero;
          CHECK(rx(r, c) == 1.0);
        }
      }
      CHECK(nonzero == 1);
    }
  }

  Graph bad = g;
  bad.vertex_labels = {5, 777};
  CHECK_THROWS_AS(one_hot_features<double>(bad, ds), std::invalid_argument);
}

TEST_CASE("degree labels") {
  Graph star = star_graph(3);
  CHECK(with_degree_labels(star).vertex_labels == std::vector<int>{3, 1, 1, 1});

  Graph isolated;
  isolated.num_vertices = 1;
  isolated.vertex_labels = {42};
  CHECK(with_degree_labels(isolated).vertex_labels == std::vector<int>{0});

  // Degrees equal the self-loop-free adjacency row sums.
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Graph g = testutil::random_graph(rng, 2, 15, 0.35, 2);
    Mat a = self_loop_adjacency<double>(g) - Mat::Identity(g.num_vertices, g.num_vertices);
    Graph relabeled = with_degree_labels(g);
    for (int v = 0; v < g.num_vertices; ++v) {
      CHECK(relabeled.vertex_labels[v] == static_cast<int>(a.row(v).sum()));
    }
  }

  // Loader falls back to degree labels when the node-label file is absent.
  GraphDataset ds = testutil::random_dataset(9, 3, 3, 7, 0.5, 2, 2);
  ds.name = "DEG";
  TempDir tmp("tu_degree");
  testutil::write_tu_files(tmp.path, ds, false, /*node_labels=*/false);
  GraphDataset loaded = load_tu_dataset(tmp.path, "DEG");
  CHECK_FALSE(loaded.has_node_labels);
  for (std::size_t i = 0; i < loaded.graphs.size(); ++i) {
    CHECK(loaded.graphs[i].vertex_labels == with_degree_labels(ds.graphs[i]).vertex_labels);
  }
}

// ---------------------------------------------------------------------------
// depth-rep
// ---------------------------------------------------------------------------

TEST_CASE("expansion subgraph") {
  Graph tri = triangle_graph();
  InducedSubgraph whole = expansion_subgraph(tri, 0, 1);
  CHECK(whole.vertices == std::vector<int>{0, 1, 2});
  CHECK(whole.edges.size() == 3);

  Graph p3 = path_graph(3);
  InducedSubgraph ball = expansion_subgraph(p3, 0, 1);
  CHECK(ball.vertices == std::vector<int>{0, 1});
  CHECK(ball.edges == std::vector<std::pair<int, int>>{{0, 1}});

  // Floyd-Warshall ball oracle on a random 20-vertex graph.
  std::mt19937_64 rng(77);
  Graph g = testutil::random_graph(rng, 20, 20, 0.15, 2);
  const int n = g.num_vertices;
  std::vector<std::vector<int>> dist(n, std::vector<int>(n, 1 << 20));
  for (int v = 0; v < n; ++v) dist[v][v] = 0;
  for (auto [u, v] : g.edges) dist[u][v] = dist[v][u] = 1;
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) dist[i][j] = std::min(dist[i][j], dist[i][k] + dist[k][j]);
    }
  }
  for (int root : {0, 5, 13}) {
    for (int k = 1; k <= 4; ++k) {
      InducedSubgraph sub = expansion_subgraph(g, root, k);
      std::vector<int> expected;
      for (int v = 0; v < n; ++v) {
        if (dist[root][v] <= k) expected.push_back(v);
      }
      CHECK(sub.vertices == expected);
      std::set<std::pair<int, int>> in_ball(sub.edges.begin(), sub.edges.end());
      for (auto [u, v] : g.edges) {
        bool inside = dist[root][u] <= k && dist[root][v] <= k;
        CHECK(in_ball.count({u, v}) == (inside ? 1u : 0u));
      }
    }
  }
}

TEST_CASE("subgraph entropy") {
  CHECK(subgraph_entropy<double>(expansion_subgraph(triangle_graph(), 0, 1)) ==
        doctest::Approx(std::log2(3.0)).epsilon(1e-12));

  InducedSubgraph lone{{0}, {}};
  CHECK(subgraph_entropy<double>(lone) == 0.0);

  Graph star = star_graph(3);
  double h_star = subgraph_entropy<double>(expansion_subgraph(star, 0, 1));
  CHECK(h_star == doctest::Approx(0.5 + 3.0 * (1.0 / 6.0) * std::log2(6.0)).epsilon(1e-12));

  // Path entropies: P3 has degree profile (1,2,1), P5 has (1,2,2,2,1).
  CHECK(subgraph_entropy<double>(expansion_subgraph(path_graph(3), 1, 1)) ==
        doctest::Approx(1.5).epsilon(1e-12));
  CHECK(subgraph_entropy<double>(expansion_subgraph(path_graph(5), 2, 2)) ==
        doctest::Approx(2.25).epsilon(1e-12));
}

TEST_CASE("depth-based representation matrix") {
  Mat tri = db_representation<double>(triangle_graph(), 3);
  for (Index r = 0; r < 3; ++r) {
    for (Index c = 0; c < 3; ++c) CHECK(tri(r, c) == doctest::Approx(std::log2(3.0)).epsilon(1e-12));
  }

  Graph single;
  single.num_vertices = 1;
  single.vertex_labels = {0};
  CHECK(exact_equal(db_representation<double>(single, 4), Mat::Zero(1, 4)));

  Mat p5 = db_representation<double>(path_graph(5), 2);
  CHECK(p5(2, 0) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(p5(2, 1) == doctest::Approx(2.25).epsilon(1e-12));

  // Matches the operation composition entry by entry.
  std::mt19937_64 rng(31);
  Graph g = testutil::random_graph(rng, 8, 14, 0.3, 2);
  Mat db = db_representation<double>(g, 4);
  for (int v = 0; v < g.num_vertices; ++v) {
    for (int k = 1; k <= 4; ++k) {
      CHECK(db(v, k - 1) == subgraph_entropy<double>(expansion_subgraph(g, v, k)));
    }
  }
}

TEST_CASE("depth representation properties") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 8; ++trial) {
    Graph g = testutil::random_graph(rng, 4, 16, 0.3, 2);
    const int depth = 6;
    Mat db = db_representation<double>(g, depth);

    // Permutation covariance, bitwise.
    auto perm = testutil::random_permutation(rng, g.num_vertices);
    Mat db_perm = db_representation<double>(testutil::permuted_graph(g, perm), depth);
    for (int v = 0; v < g.num_vertices; ++v) {
      CHECK((db.row(v).array() == db_perm.row(perm[v]).array()).all());
    }

    const auto adj = adjacency_list(g);
    for (int v = 0; v < g.num_vertices; ++v) {
      const auto dist = bfs_distances(adj, v);
      int ecc = 0;
      for (int d : dist) ecc = std::max(ecc, d);

      const int sat = std::max(1, ecc);  // constant once the ball covers the component
      for (int k = sat; k <= depth; ++k) {
        CHECK(db(v, k - 1) == db(v, sat - 1));
      }
      for (int k = 1; k <= depth; ++k) {
        long ball = 0;
        for (int d : dist) {
          if (d >= 0 && d <= k) ++ball;
        }
        CHECK(db(v, k - 1) >= 0.0);
        CHECK(db(v, k - 1) <= std::log2(static_cast<double>(std::max<long>(ball, 2))) + 1e-12);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

TEST_CASE("kmeans: as many clusters as points") {
  Mat pts(4, 2);
  pts << 0, 0, 1, 0, 0, 1, 5, 5;
  auto result = kmeans_fit<double>(pts, 4, 99);
  CHECK(result.objective == 0.0);
  std::set<std::pair<double, double>> centroid_set, point_set;
  for (Index i = 0; i < 4; ++i) {
    centroid_set.insert({result.centroids(i, 0), result.centroids(i, 1)});
    point_set.insert({pts(i, 0), pts(i, 1)});
  }
  CHECK(centroid_set == point_set);
}

TEST_CASE("kmeans: identical points collapse every centroid") {
  Mat pts = Mat::Constant(6, 3, 2.5);
  auto result = kmeans_fit<double>(pts, 3, 4);
  for (Index j = 0; j < 3; ++j) {
    CHECK(exact_equal(result.centroids.row(j).eval(), Mat::Constant(1, 3, 2.5)));
  }
}

TEST_CASE("kmeans: two blobs against the exhaustive 2-partition oracle") {
  std::mt19937_64 rng(2024);
  const int n = 20;
  Mat pts(n, 2);
  for (int i = 0; i < n; ++i) {
    double cx = i < n / 2 ? 0.0 : 8.0;
    pts(i, 0) = cx + uniform_unit(rng);
    pts(i, 1) = uniform_unit(rng);
  }

  // Exhaustive search over all 2-partitions (point 0 pinned to side 0).
  double best_sse = std::numeric_limits<double>::infinity();
  Mat best_means(2, 2);
  for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
    Mat sums = Mat::Zero(2, 2);
    int counts[2] = {0, 0};
    for (int i = 0; i < n; ++i) {
      int side = i == 0 ? 0 : ((mask >> (i - 1)) & 1);
      sums.row(side) += pts.row(i);
      ++counts[side];
    }
    if (counts[0] == 0 || counts[1] == 0) continue;
    Mat means(2, 2);
    means.row(0) = sums.row(0) / counts[0];
    means.row(1) = sums.row(1) / counts[1];
    double sse = 0;
    for (int i = 0; i < n; ++i) {
      int side = i == 0 ? 0 : ((mask >> (i - 1)) & 1);
      sse += (pts.row(i) - means.row(side)).squaredNorm();
    }
    if (sse < best_sse) {
      best_sse = sse;
      best_means = means;
    }
  }

  auto result = kmeans_fit<double>(pts, 2, 7);
  CHECK(result.objective == doctest::Approx(best_sse).epsilon(1e-9));
  bool direct = (result.centroids - best_means).cwiseAbs().maxCoeff() < 1e-6;
  Mat swapped(2, 2);
  swapped.row(0) = best_means.row(1);
  swapped.row(1) = best_means.row(0);
  bool crossed = (result.centroids - swapped).cwiseAbs().maxCoeff() < 1e-6;
  CHECK((direct || crossed));
}

TEST_CASE("kmeans: determinism, monotone objective, cluster-count guard") {
  std::mt19937_64 rng(5);
  Mat pts(40, 3);
  for (Index i = 0; i < pts.size(); ++i) pts(i / 3, i % 3) = uniform_unit(rng);

  auto a = kmeans_fit<double>(pts, 5, 123);
  auto b = kmeans_fit<double>(pts, 5, 123);
  CHECK(exact_equal(a.centroids, b.centroids));
  CHECK(a.assignment == b.assignment);

  for (std::size_t i = 1; i < a.objective_trace.size(); ++i) {
    CHECK(a.objective_trace[i] <= a.objective_trace[i - 1] + 1e-12);
  }

  CHECK_THROWS_AS(kmeans_fit<double>(pts, 41, 1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// align
// ---------------------------------------------------------------------------

TEST_CASE("collect representations stacks per-graph slices") {
  std::vector<Mat> dbs{Mat::Constant(3, 4, 1.0), Mat::Constant(4, 4, 2.0)};
  auto stacked = collect_representations<double>(dbs, 4);
  CHECK(stacked.values.rows() == 7);
  CHECK(stacked.values.cols() == 4);
  CHECK(stacked.offsets == std::vector<int>{0, 3});
  CHECK(stacked.values(0, 0) == 1.0);
  CHECK(stacked.values(3, 0) == 2.0);

  auto single = collect_representations<double>(std::span<const Mat>(dbs.data(), 1), 2);
  CHECK(single.offsets == std::vector<int>{0});
  CHECK(exact_equal(single.values, dbs[0].leftCols(2).eval()));
}

TEST_CASE("correspondence matrix") {
  PrototypeSet<double> one;
  one.level = 1;
  one.centroids = Mat::Constant(1, 1, 0.7);
  one.order = {0};
  Mat db = Mat::Zero(5, 1);
  CHECK(exact_equal(correspondence_matrix(db, one), Mat::Ones(5, 1)));

  PrototypeSet<double> two;
  two.level = 1;
  two.centroids.resize(2, 1);
  two.centroids << 0.5, 4.0;
  two.order = {0, 1};
  Mat reps(3, 1);
  reps << 0, 1, 5;
  Mat expected(3, 2);
  expected << 1, 0, 1, 0, 0, 1;
  CHECK(exact_equal(correspondence_matrix(reps, two), expected));

  // Equidistant vertex aligns to the smaller prototype index.
  PrototypeSet<double> tie;
  tie.level = 1;
  tie.centroids.resize(2, 1);
  tie.centroids << 2.0, 4.0;
  tie.order = {0, 1};
  Mat mid = Mat::Constant(1, 1, 3.0);
  Mat c = correspondence_matrix(mid, tie);
  CHECK(c(0, 0) == 1.0);
  CHECK(c(0, 1) == 0.0);

  // Every row has exactly one 1 on random inputs.
  std::mt19937_64 rng(3);
  Mat rdb(20, 3);
  for (Index i = 0; i < rdb.rows(); ++i) {
    for (Index j = 0; j < 3; ++j) rdb(i, j) = uniform_unit(rng);
  }
  auto protos = fit_prototypes<double>(rdb, 4, 11);
  Mat rc = correspondence_matrix(rdb, protos);
  for (Index i = 0; i < rc.rows(); ++i) CHECK(rc.row(i).sum() == 1.0);
}

TEST_CASE("aligned features and adjacency") {
  Mat x(3, 2);
  x << 1, 0, 0, 1, 1, 1;
  CHECK(exact_equal(aligned_features<double>(Mat::Identity(3, 3), x), x));

  Mat c(3, 2);
  c << 1, 0, 1, 0, 0, 1;
  Mat expected(2, 2);
  expected << 1, 1, 1, 1;
  CHECK(exact_equal(aligned_features<double>(c, x), expected));

  // Column sums preserved.
  CHECK(exact_equal(Mat(aligned_features<double>(c, x).colwise().sum()),
                    Mat(x.colwise().sum())));

  Mat a2 = Mat::Ones(2, 2);
  CHECK(exact_equal(aligned_adjacency<double>(Mat::Identity(2, 2), a2), a2));
  Mat c1 = Mat::Ones(2, 1);
  CHECK(exact_equal(aligned_adjacency<double>(c1, a2), Mat::Constant(1, 1, 4.0)));

  std::mt19937_64 rng(17);
  Graph g = testutil::random_graph(rng, 5, 9, 0.4, 2);
  Mat at = self_loop_adjacency<double>(g);
  Mat cr = Mat::Zero(g.num_vertices, 3);
  for (int i = 0; i < g.num_vertices; ++i) cr(i, testutil::draw_int(rng, 0, 2)) = 1.0;
  CHECK(aligned_adjacency<double>(cr, at).sum() == at.sum());
}

TEST_CASE("prototype order") {
  CHECK(prototype_order<double>(Mat::Constant(1, 1, 3.0), 1) == std::vector<int>{0});

  Mat same = Mat::Constant(2, 2, 1.0);
  CHECK(prototype_order<double>(same, 2) == std::vector<int>{0, 1});

  Mat line(3, 1);
  line << 0, 1, 10;
  for (int level : {1, 2, 5}) {
    auto order = prototype_order<double>(line, level);
    CHECK(order == std::vector<int>{1, 0, 2});
  }
}

TEST_CASE("build_grid with identity correspondence") {
  Graph g = path_graph(3);
  Mat x(3, 2);
  x << 1, 0, 0, 1, 1, 0;
  Mat at = self_loop_adjacency<double>(g);
  Mat db(3, 1);
  db << 0, 1, 10;

  PrototypeSet<double> protos;
  protos.level = 1;
  protos.centroids = db;
  protos.order = {0, 1, 2};
  std::vector<PrototypeSet<double>> levels{protos};
  AlignedGrid<double> grid = build_grid<double>(x, at, db, levels, 1);
  CHECK(exact_equal(grid.features, x));
  CHECK(exact_equal(grid.adjacency, at));
  CHECK(exact_equal(grid.backtrackless, backtracklessize(at)));
  CHECK(grid.label == 1);

  // With a nontrivial order the grid is the same data reindexed.
  levels[0].order = {2, 0, 1};
  AlignedGrid<double> reordered = build_grid<double>(x, at, db, levels, 1);
  for (int r = 0; r < 3; ++r) {
    CHECK(exact_equal(Mat(reordered.features.row(r)), Mat(x.row(levels[0].order[r]))));
    for (int c = 0; c < 3; ++c) {
      CHECK(reordered.adjacency(r, c) == at(levels[0].order[r], levels[0].order[c]));
    }
  }
}

TEST_CASE("build_grid level averaging is a no-op for identical correspondences") {
  Graph g = path_graph(3);
  Mat x(3, 2);
  x << 1, 0, 0, 1, 1, 0;
  Mat at = self_loop_adjacency<double>(g);
  Mat db = Mat::Zero(3, 3);
  db(0, 0) = 0;
  db(1, 0) = 1;
  db(2, 0) = 10;  // distances live in the first coordinate only

  std::vector<PrototypeSet<double>> levels;
  for (int level = 1; level <= 3; ++level) {
    PrototypeSet<double> p;
    p.level = level;
    p.centroids = db.leftCols(level);
    p.order = prototype_order<double>(p.centroids, level);
    levels.push_back(std::move(p));
  }
  std::vector<PrototypeSet<double>> first{levels[0]};

  AlignedGrid<double> averaged = build_grid<double>(x, at, db, levels, 0);
  AlignedGrid<double> single = build_grid<double>(x, at, db, first, 0);
  CHECK(max_abs_diff(averaged.features, single.features) < 1e-15);
  CHECK(max_abs_diff(averaged.adjacency, single.adjacency) < 1e-15);
}

TEST_CASE("build_grid matches a straight-line recomputation") {
  std::mt19937_64 rng(41);
  Graph g = testutil::random_graph(rng, 6, 6, 0.5, 2);
  GraphDataset ds = testutil::make_dataset({g});
  Mat x = one_hot_features<double>(ds.graphs[0], ds);
  Mat at = self_loop_adjacency<double>(ds.graphs[0]);
  const int levels_count = 3, m = 4;
  Mat db = db_representation<double>(ds.graphs[0], levels_count);

  std::vector<PrototypeSet<double>> protos;
  for (int level = 1; level <= levels_count; ++level) {
    protos.push_back(fit_prototypes<double>(db.leftCols(level).eval(), m, mix_seed(9, level)));
  }
  AlignedGrid<double> grid = build_grid<double>(x, at, db, protos, 0);

  // Straight-line recomputation with scalar loops.
  Mat xbar = Mat::Zero(m, x.cols());
  Mat abar = Mat::Zero(m, m);
  for (const auto& p : protos) {
    const int n = g.num_vertices;
    std::vector<int> assign(n);
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int j = 0; j < m; ++j) {
        double d = 0;
        for (int k = 0; k < p.level; ++k) {
          double diff = db(i, k) - p.centroids(j, k);
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      assign[i] = best;
    }
    Mat xk = Mat::Zero(m, x.cols());
    Mat ak = Mat::Zero(m, m);
    for (int i = 0; i < n; ++i) {
      for (Index c = 0; c < x.cols(); ++c) xk(assign[i], c) += x(i, c);
      for (int j = 0; j < n; ++j) ak(assign[i], assign[j]) += at(i, j);
    }
    for (int r = 0; r < m; ++r) {
      for (Index c = 0; c < x.cols(); ++c) xbar(r, c) += xk(p.order[r], c) / levels_count;
      for (int c = 0; c < m; ++c) abar(r, c) += ak(p.order[r], p.order[c]) / levels_count;
    }
  }
  CHECK(max_abs_diff(grid.features, xbar) < 1e-12);
  CHECK(max_abs_diff(grid.adjacency, abar) < 1e-12);

  // Mass conservation.
  CHECK(grid.features.sum() == doctest::Approx(x.sum()).epsilon(1e-12));
  CHECK(grid.adjacency.sum() == doctest::Approx(at.sum()).epsilon(1e-12));
}

TEST_CASE("backtracklessize") {
  // Regular structure: all visiting probabilities equal, nothing dropped.
  Mat cycle = Mat::Zero(4, 4);
  for (int i = 0; i < 4; ++i) {
    cycle(i, i) = 1;
    cycle(i, (i + 1) % 4) = 1;
    cycle((i + 1) % 4, i) = 1;
  }
  CHECK(exact_equal(backtracklessize(cycle), cycle));

  Mat a(3, 3);
  a << 1, 1, 0, 1, 1, 1, 0, 1, 1;
  Mat expected(3, 3);
  expected << 1, 1, 0, 0, 1, 0, 0, 1, 1;
  Mat d = backtracklessize(a);
  CHECK(exact_equal(d, expected));
  CHECK_FALSE(exact_equal(d, d.transpose().eval()));

  CHECK(exact_equal(backtracklessize(Mat(Mat::Zero(3, 3))), Mat::Zero(3, 3)));

  // Entrywise rule with the visiting-probability oracle on random inputs.
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    int m = testutil::draw_int(rng, 2, 8);
    Mat sym = Mat::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = i; j < m; ++j) {
        double v = uniform_unit(rng) < 0.4 ? 0.0 : std::floor(uniform_unit(rng) * 4);
        sym(i, j) = sym(j, i) = v;
      }
    }
    Mat dir = backtracklessize(sym);
    VectorX<double> deg = sym.rowwise().sum();
    double total = deg.sum();
    CHECK(exact_equal(Mat(dir.diagonal().asDiagonal()), Mat(sym.diagonal().asDiagonal())));
    if (total == 0) {
      CHECK(exact_equal(dir, sym));
      continue;
    }
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        double pi = deg(i) / total, pj = deg(j) / total;
        CHECK(dir(i, j) == (pi <= pj ? sym(i, j) : 0.0));
      }
    }
    // Off-diagonal coverage: every undirected entry survives in at least one
    // direction; in both directions exactly when the probabilities tie.
    for (int i = 0; i < m; ++i) {
      for (int j = i + 1; j < m; ++j) {
        if (sym(i, j) == 0) continue;
        CHECK(dir(i, j) + dir(j, i) >= sym(i, j));
        bool both = dir(i, j) == sym(i, j) && dir(j, i) == sym(i, j);
        CHECK(both == (deg(i) == deg(j)));
      }
    }
  }
}

TEST_CASE("grid pipeline: permutation invariance and determinism") {
  GraphDataset ds = testutil::random_dataset(101, 8, 4, 10, 0.35, 3, 2);
  GridParams params{4, 3, 5};
  GridSet set = build_grid_set(ds, params);

  std::mt19937_64 rng(55);
  for (int gi = 0; gi < static_cast<int>(ds.graphs.size()); ++gi) {
    const Graph& g = ds.graphs[gi];
    auto perm = testutil::random_permutation(rng, g.num_vertices);
    Graph pg = testutil::permuted_graph(g, perm);
    AlignedGrid<double> regrid =
        build_grid<double>(one_hot_features<double>(pg, ds), self_loop_adjacency<double>(pg),
                           db_representation<double>(pg, params.levels), set.prototypes,
                           set.grids[gi].label);
    CHECK(exact_equal(regrid.features, set.grids[gi].features));
    CHECK(exact_equal(regrid.adjacency, set.grids[gi].adjacency));
    CHECK(exact_equal(regrid.backtrackless, set.grids[gi].backtrackless));
  }

  GridSet again = build_grid_set(ds, params);
  for (std::size_t i = 0; i < set.grids.size(); ++i) {
    CHECK(exact_equal(again.grids[i].features, set.grids[i].features));
    CHECK(exact_equal(again.grids[i].adjacency, set.grids[i].adjacency));
    CHECK(exact_equal(again.grids[i].backtrackless, set.grids[i].backtrackless));
  }

  // Same results when preprocessing runs on multiple threads.
  GridSet threaded = build_grid_set(ds, params, 4);
  for (std::size_t i = 0; i < set.grids.size(); ++i) {
    CHECK(exact_equal(threaded.grids[i].features, set.grids[i].features));
  }
}

TEST_CASE("grid cache round trip and rejection") {
  GraphDataset ds = testutil::random_dataset(31, 6, 4, 8, 0.4, 2, 2);
  GridParams params{4, 2, 9};
  GridSet set = build_grid_set(ds, params);

  TempDir tmp("grid_cache");
  auto path = tmp.path / "fixture.grids";
  write_grid_cache(path, set);
  GridSet loaded = read_grid_cache(path, set.fingerprint);
  REQUIRE(loaded.grids.size() == set.grids.size());
  CHECK(loaded.levels == set.levels);
  CHECK(loaded.channels == set.channels);
  CHECK(loaded.num_classes == set.num_classes);
  for (std::size_t i = 0; i < set.grids.size(); ++i) {
    CHECK(exact_equal(loaded.grids[i].features, set.grids[i].features));
    CHECK(exact_equal(loaded.grids[i].adjacency, set.grids[i].adjacency));
    CHECK(exact_equal(loaded.grids[i].backtrackless, set.grids[i].backtrackless));
    CHECK(loaded.grids[i].label == set.grids[i].label);
  }
  for (std::size_t l = 0; l < set.prototypes.size(); ++l) {
    CHECK(exact_equal(loaded.prototypes[l].centroids, set.prototypes[l].centroids));
    CHECK(loaded.prototypes[l].order == set.prototypes[l].order);
  }

  CHECK_THROWS_WITH_AS(read_grid_cache(path, set.fingerprint + 1),
                       doctest::Contains("fingerprint mismatch"), std::runtime_error);

  // Truncated file.
  std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
  CHECK_THROWS_AS(read_grid_cache(path, set.fingerprint), std::runtime_error);

  CHECK_THROWS_AS(read_grid_cache(tmp.path / "missing.grids", set.fingerprint), std::runtime_error);
}
