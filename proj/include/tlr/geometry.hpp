#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tlr/errors.hpp"

namespace tlr {

enum class PointKind { Grid2D, Grid3D, RandomBall3D };
enum class KernelKind { IsotropicExponential, SquaredExponential };

/// Point cloud plus the permutation mapping matrix index -> original point.
struct PointSet {
  int dim = 0;
  std::vector<double> coords;   // size N*dim, point p at coords[p*dim ..]
  std::vector<int> ordering;    // matrix index -> original point index

  int size() const { return static_cast<int>(ordering.size()); }
  const double* point(int original) const { return coords.data() + (std::size_t)original * dim; }
};

struct KernelSpec {
  KernelKind kind = KernelKind::IsotropicExponential;
  double correlation_length = 0.1;
  double nugget = 0.0;
};

struct ProblemSpec {
  PointSet points;
  KernelSpec kernel;
};

PointSet generate_points(PointKind kind, int n, std::uint64_t seed);

// Recursive KD split: sort by the widest box dimension, put
// tile_size * (bit_ceil(ceil(m/tile_size)) / 2) points in the left child.
// Every leaf has exactly tile_size points except possibly the last.
PointSet kd_order(PointSet ps, int tile_size);

double kernel_entry(const KernelSpec& ks, const PointSet& ps, int i, int j);

// TLRP binary format: "TLRP", u32 version, u32 dim, u64 N, then N*dim
// little-endian f64 in ordering order.
void write_points(const PointSet& ps, const std::string& path);
PointSet read_points(const std::string& path);

std::vector<int> kd_leaf_sizes(const PointSet& ps, int tile_size);

}  // namespace tlr
