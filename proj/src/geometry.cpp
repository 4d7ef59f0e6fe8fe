#include "tlr/geometry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "tlr/util.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

namespace tlr {

namespace {

int grid_side(int n, int dim) {
  int s = 1;
  while (true) {
    long long cells = 1;
    for (int d = 0; d < dim; ++d) cells *= s;
    if (cells >= n) return s;
    ++s;
  }
}

}  // namespace

PointSet generate_points(PointKind kind, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("generate_points: n must be >= 1");
  PointSet ps;
  switch (kind) {
    case PointKind::Grid2D: {
      ps.dim = 2;
      int s = grid_side(n, 2);
      ps.coords.reserve((std::size_t)n * 2);
      for (int ix = 0; ix < s && (int)ps.coords.size() < 2 * n; ++ix)
        for (int iy = 0; iy < s && (int)ps.coords.size() < 2 * n; ++iy) {
          ps.coords.push_back((ix + 0.5) / s);
          ps.coords.push_back((iy + 0.5) / s);
        }
      break;
    }
    case PointKind::Grid3D: {
      ps.dim = 3;
      int s = grid_side(n, 3);
      ps.coords.reserve((std::size_t)n * 3);
      for (int ix = 0; ix < s && (int)ps.coords.size() < 3 * n; ++ix)
        for (int iy = 0; iy < s && (int)ps.coords.size() < 3 * n; ++iy)
          for (int iz = 0; iz < s && (int)ps.coords.size() < 3 * n; ++iz) {
            ps.coords.push_back((ix + 0.5) / s);
            ps.coords.push_back((iy + 0.5) / s);
            ps.coords.push_back((iz + 0.5) / s);
          }
      break;
    }
    case PointKind::RandomBall3D: {
      ps.dim = 3;
      Rng rng(mix64(seed ^ 0xba11ULL));
      ps.coords.reserve((std::size_t)n * 3);
      while ((int)ps.coords.size() < 3 * n) {
        double x = 2.0 * rng.uniform() - 1.0;
        double y = 2.0 * rng.uniform() - 1.0;
        double z = 2.0 * rng.uniform() - 1.0;
        if (x * x + y * y + z * z <= 1.0) {
          ps.coords.push_back(x);
          ps.coords.push_back(y);
          ps.coords.push_back(z);
        }
      }
      break;
    }
    default:
      throw ConfigError("generate_points: unsupported kind");
  }
  ps.ordering.resize(n);
  for (int i = 0; i < n; ++i) ps.ordering[i] = i;
  return ps;
}

namespace {

void kd_recurse(const PointSet& ps, std::vector<int>& ord, int lo, int hi,
                int tile_size) {
  int m = hi - lo;
  if (m <= tile_size) return;
  int dim = ps.dim;

  // Widest dimension of the cluster bounding box; ties go to the lowest axis.
  int best_d = 0;
  double best_ext = -1.0;
  for (int d = 0; d < dim; ++d) {
    double mn = std::numeric_limits<double>::infinity(), mx = -mn;
    for (int t = lo; t < hi; ++t) {
      double c = ps.point(ord[t])[d];
      mn = std::min(mn, c);
      mx = std::max(mx, c);
    }
    if (mx - mn > best_ext) {
      best_ext = mx - mn;
      best_d = d;
    }
  }

  std::sort(ord.begin() + lo, ord.begin() + hi, [&](int a, int b) {
    double ca = ps.point(a)[best_d], cb = ps.point(b)[best_d];
    if (ca != cb) return ca < cb;
    return a < b;  // deterministic tie-break by original index
  });

  int clusters = (m + tile_size - 1) / tile_size;
  int left = tile_size * (int)(std::bit_ceil((unsigned)clusters) / 2);
  kd_recurse(ps, ord, lo, lo + left, tile_size);
  kd_recurse(ps, ord, lo + left, hi, tile_size);
}

}  // namespace

PointSet kd_order(PointSet ps, int tile_size) {
  int n = ps.size();
  if (tile_size < 1 || tile_size > n)
    throw ConfigError("kd_order: tile size out of range");
  kd_recurse(ps, ps.ordering, 0, n, tile_size);
  return ps;
}

std::vector<int> kd_leaf_sizes(const PointSet& ps, int tile_size) {
  // Replays the recursion's split points, left to right.
  std::vector<int> sizes;
  struct Frame { int lo, hi; };
  std::vector<Frame> stack{{0, ps.size()}};
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    int m = f.hi - f.lo;
    if (m <= tile_size) {
      sizes.push_back(m);
      continue;
    }
    int clusters = (m + tile_size - 1) / tile_size;
    int left = tile_size * (int)(std::bit_ceil((unsigned)clusters) / 2);
    stack.push_back({f.lo + left, f.hi});
    stack.push_back({f.lo, f.lo + left});
  }
  return sizes;
}

double kernel_entry(const KernelSpec& ks, const PointSet& ps, int i, int j) {
  if (i == j) return 1.0 + ks.nugget;
  const double* x = ps.point(ps.ordering[i]);
  const double* y = ps.point(ps.ordering[j]);
  double d2 = 0.0;
  for (int d = 0; d < ps.dim; ++d) {
    double t = x[d] - y[d];
    d2 += t * t;
  }
  double ell = ks.correlation_length;
  switch (ks.kind) {
    case KernelKind::IsotropicExponential:
      return std::exp(-std::sqrt(d2) / ell);
    case KernelKind::SquaredExponential:
      return std::exp(-d2 / (2.0 * ell * ell));
  }
  throw ConfigError("kernel_entry: unsupported kernel");
}

void write_points(const PointSet& ps, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("write_points: cannot open " + path);
  std::uint32_t version = 1, dim = ps.dim;
  std::uint64_t n = ps.size();
  f.write("TLRP", 4);
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&dim), 4);
  f.write(reinterpret_cast<const char*>(&n), 8);
  for (int m = 0; m < ps.size(); ++m)
    f.write(reinterpret_cast<const char*>(ps.point(ps.ordering[m])),
            sizeof(double) * ps.dim);
  if (!f) throw DataError("write_points: write failed");
}

PointSet read_points(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("read_points: cannot open " + path);
  char magic[4];
  std::uint32_t version = 0, dim = 0;
  std::uint64_t n = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&dim), 4);
  f.read(reinterpret_cast<char*>(&n), 8);
  if (!f || std::memcmp(magic, "TLRP", 4) != 0)
    throw DataError("read_points: bad magic");
  if (version != 1) throw DataError("read_points: unsupported version");
  if (dim < 1 || dim > 3) throw DataError("read_points: bad dimension");
  PointSet ps;
  ps.dim = (int)dim;
  ps.coords.resize(n * dim);
  f.read(reinterpret_cast<char*>(ps.coords.data()), 8 * n * dim);
  if (!f) throw DataError("read_points: truncated file");
  ps.ordering.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) ps.ordering[i] = (int)i;
  return ps;
}

}  // namespace tlr
