#include "basgcn/grid_cache.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "grid cache i/o assumes a little-endian platform");

namespace basgcn {
namespace {

constexpr char kMagic[4] = {'B', 'G', 'C', '1'};
constexpr std::uint32_t kVersion = 1;

void put(std::ostream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}
void put_u32(std::ostream& out, std::uint32_t v) { put(out, &v, sizeof v); }
void put_u64(std::ostream& out, std::uint64_t v) { put(out, &v, sizeof v); }
void put_i32(std::ostream& out, std::int32_t v) { put(out, &v, sizeof v); }

void put_matrix(std::ostream& out, const MatrixX<double>& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      double v = m(r, c);
      put(out, &v, sizeof v);
    }
  }
}

void get(std::istream& in, void* data, std::size_t n, const std::filesystem::path& path) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("grid cache truncated or unreadable: " + path.string());
}
std::uint32_t get_u32(std::istream& in, const std::filesystem::path& p) {
  std::uint32_t v;
  get(in, &v, sizeof v, p);
  return v;
}
std::uint64_t get_u64(std::istream& in, const std::filesystem::path& p) {
  std::uint64_t v;
  get(in, &v, sizeof v, p);
  return v;
}
std::int32_t get_i32(std::istream& in, const std::filesystem::path& p) {
  std::int32_t v;
  get(in, &v, sizeof v, p);
  return v;
}

MatrixX<double> get_matrix(std::istream& in, Index rows, Index cols, const std::filesystem::path& p) {
  MatrixX<double> m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      double v;
      get(in, &v, sizeof v, p);
      m(r, c) = v;
    }
  }
  return m;
}

}  // namespace

void write_grid_cache(const std::filesystem::path& path, const GridSet& set) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open grid cache for writing: " + path.string());
  put(out, kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_u64(out, set.fingerprint);
  put_u32(out, static_cast<std::uint32_t>(set.grid_size));
  put_u32(out, static_cast<std::uint32_t>(set.levels));
  put_u64(out, set.seed);
  put_u32(out, static_cast<std::uint32_t>(set.channels));
  put_u32(out, static_cast<std::uint32_t>(set.num_classes));
  put_u32(out, static_cast<std::uint32_t>(set.grids.size()));
  for (const auto& p : set.prototypes) {
    put_u32(out, static_cast<std::uint32_t>(p.level));
    put_u64(out, p.seed);
    put_matrix(out, p.centroids);
    for (int idx : p.order) put_u32(out, static_cast<std::uint32_t>(idx));
  }
  for (const auto& g : set.grids) {
    put_i32(out, g.label);
    put_matrix(out, g.features);
    put_matrix(out, g.adjacency);
    put_matrix(out, g.backtrackless);
  }
  if (!out) throw std::runtime_error("failed writing grid cache: " + path.string());
}

GridSet read_grid_cache(const std::filesystem::path& path, std::uint64_t expected_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open grid cache: " + path.string());
  char magic[4];
  get(in, magic, sizeof magic, path);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("not a grid cache file: " + path.string());
  }
  if (get_u32(in, path) != kVersion) {
    throw std::runtime_error("unsupported grid cache version: " + path.string());
  }
  GridSet set;
  set.fingerprint = get_u64(in, path);
  if (set.fingerprint != expected_fingerprint) {
    throw std::runtime_error("grid cache fingerprint mismatch (stale or different configuration): " +
                             path.string());
  }
  set.grid_size = static_cast<int>(get_u32(in, path));
  set.levels = static_cast<int>(get_u32(in, path));
  set.seed = get_u64(in, path);
  set.channels = static_cast<int>(get_u32(in, path));
  set.num_classes = static_cast<int>(get_u32(in, path));
  const auto count = get_u32(in, path);
  set.prototypes.resize(set.levels);
  for (auto& p : set.prototypes) {
    p.level = static_cast<int>(get_u32(in, path));
    p.seed = get_u64(in, path);
    p.centroids = get_matrix(in, set.grid_size, p.level, path);
    p.order.resize(set.grid_size);
    for (auto& idx : p.order) idx = static_cast<int>(get_u32(in, path));
  }
  set.grids.resize(count);
  for (auto& g : set.grids) {
    g.label = get_i32(in, path);
    g.features = get_matrix(in, set.grid_size, set.channels, path);
    g.adjacency = get_matrix(in, set.grid_size, set.grid_size, path);
    g.backtrackless = get_matrix(in, set.grid_size, set.grid_size, path);
  }
  return set;
}

}  // namespace basgcn
