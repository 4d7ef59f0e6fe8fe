#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tlr/dense_kernels.hpp"
#include "tlr/geometry.hpp"

namespace tlr {

struct AraConfig;  // ara.hpp

/// Off-diagonal tile stored as a factor pair, tile ~= U V^T.
struct LowRankTile {
  DenseTile U;  // rows(i) x k
  DenseTile V;  // rows(j) x k
  int rank() const { return U.cols(); }
};

enum class Compressor { ARA, SVD };

/// Symmetric tile low rank matrix: dense diagonal tiles, adaptive-rank
/// factor pairs on the strictly lower block triangle.
class TlrMatrix {
 public:
  TlrMatrix() = default;
  TlrMatrix(std::int64_t n, int b);

  std::int64_t n = 0;
  int b = 0;
  int nb = 0;
  double eps = 0.0;
  std::vector<DenseTile> diag;
  std::vector<LowRankTile> lower;  // (i,j), i > j at index i*(i-1)/2 + j

  int tile_rows(int i) const {
    std::int64_t r = n - static_cast<std::int64_t>(i) * b;
    return r < b ? static_cast<int>(r) : b;
  }
  std::int64_t block_offset(int i) const { return static_cast<std::int64_t>(i) * b; }

  LowRankTile& tile(int i, int j);
  const LowRankTile& tile(int i, int j) const;
  int rank(int i, int j) const { return tile(i, j).rank(); }

  // Dense expansion of any block: diag, U V^T, or its transpose above.
  DenseTile tile_dense(int i, int j) const;

  // Symmetric pivot swap of tile rows/columns k <-> p; finalized_cols is the
  // number of leading columns already overwritten by factor tiles (their rows
  // swap plainly, the trailing region swaps with low-rank transposes).
  void pivot_swap(int k, int p, int finalized_cols);

  std::vector<uint8_t> finalized;  // overwrite-discipline instrumentation
  void mark_finalized(int col);
  void check_writable(int i, int j) const;
};

TlrMatrix build_tlr(const ProblemSpec& spec, int b, double eps,
                    Compressor compressor, const AraConfig& cfg);

std::vector<double> tlr_matvec(const TlrMatrix& A, std::span<const double> x);
std::vector<double> tlr_matvec_serial(const TlrMatrix& A,
                                      std::span<const double> x);

struct MemoryReport {
  std::uint64_t total_bytes = 0;
  std::uint64_t dense_bytes = 0;
  std::uint64_t low_rank_bytes = 0;
  std::vector<std::int64_t> rank_histogram;  // index = rank, value = count
  std::vector<int> rank_heatmap;             // nb x nb row-major, diag = tile size
};

MemoryReport memory_report(const TlrMatrix& A);

// TLRM binary format (little endian): "TLRM", u32 version, u64 n, u32 b,
// f64 eps, nb x (u32 rows, u32 cols, f64 payload) diagonal tiles, u64
// tileCount, then (u32 i, u32 j, u32 rank, U payload, V payload) records.
void write_tlr(const TlrMatrix& A, const std::string& path);
TlrMatrix read_tlr(const std::string& path);

}  // namespace tlr
