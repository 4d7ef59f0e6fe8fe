#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <vector>

#include "tlr/dense_kernels.hpp"

namespace tlr {

class TlrMatrix;
struct FactorStats;

struct AraConfig {
  int block_samples = 32;   // bs, Gaussian vectors per round
  double eps = 1e-6;        // absolute 2-norm threshold
  int max_rank = 0;         // 0 = tile size
  int window = 0;           // convergence window, 0 = block_samples
  double safety = 10.0;     // eta converting sample norms to a 2-norm bound
  bool recompress = true;   // SVD recompression of the small factor pair
  std::uint64_t seed = 0;
};

struct AraWorkspace {
  int parallel_buffers = 64;  // sampling buffer pool, split across the subset
  int dense_buffers = 20;     // accumulators for diagonal updates
  int subset_capacity = 0;    // 0 = 2x worker threads
  int resolved_subset() const;
};

/// Linear operator that can be sampled from both sides; the access pattern
/// every ARA variant needs.
class SamplerExpr {
 public:
  virtual ~SamplerExpr() = default;
  virtual int rows() const = 0;
  virtual int cols() const = 0;
  virtual DenseTile apply(const DenseTile& omega) const = 0;
  virtual DenseTile apply_transpose(const DenseTile& q) const = 0;
};

class DenseSampler : public SamplerExpr {
 public:
  explicit DenseSampler(const DenseTile& a) : a_(a) {}
  int rows() const override { return a_.rows(); }
  int cols() const override { return a_.cols(); }
  DenseTile apply(const DenseTile& omega) const override {
    return gemm(1.0, a_, Trans::No, omega, Trans::No);
  }
  DenseTile apply_transpose(const DenseTile& q) const override {
    return gemm(1.0, a_, Trans::Yes, q, Trans::No);
  }

 private:
  const DenseTile& a_;
};

enum class SampleMode { Chol, LDL };

// The updated-block expression A(i,k) - sum_{j<k} L(i,j) [D(j,j)] L(k,j)^T
// of a column in a partially factored TLR matrix.
class LeftLookingSampler : public SamplerExpr {
 public:
  LeftLookingSampler(const TlrMatrix& m, const std::vector<BlockDiagonal>* d,
                     int i, int k, SampleMode mode)
      : m_(m), d_(d), i_(i), k_(k), mode_(mode) {}
  int rows() const override;
  int cols() const override;
  DenseTile apply(const DenseTile& omega) const override;
  DenseTile apply_transpose(const DenseTile& q) const override;

 private:
  const TlrMatrix& m_;
  const std::vector<BlockDiagonal>* d_;
  int i_, k_;
  SampleMode mode_;
};

// e = max post-deflation column norm over the last `window` sampled columns;
// converged when e * eta <= eps.
bool convergence_test(const DenseTile& R, double eps, int window,
                      double eta = 10.0);

// Seed used for tile (i, k) inside a column update; exposed so per-tile
// reruns can reproduce the batched draws exactly.
std::uint64_t ara_column_seed(std::uint64_t root, int i, int k);

struct AraResult {
  DenseTile Q;  // orthonormal basis, rows() x rank
  DenseTile B;  // right factor, cols() x rank
  int rank = 0;
  bool converged = false;
  int rounds = 0;
};

AraResult ara_single(const SamplerExpr& op, const AraConfig& cfg);

// Buffered left-looking sampling of Eq-1/Eq-3 expressions for the tiles in
// row_idx of column k. One output sample block per requested tile; partial
// sums accumulate in per-tile buffer slices reduced in a fixed pairwise tree.
std::vector<DenseTile> sample_left(const TlrMatrix& m,
                                   const std::vector<BlockDiagonal>* d, int k,
                                   const std::vector<int>& row_idx,
                                   const AraWorkspace& ws,
                                   const std::vector<DenseTile>& omega,
                                   SampleMode mode);
std::vector<DenseTile> sample_left_transpose(const TlrMatrix& m,
                                             const std::vector<BlockDiagonal>* d,
                                             int k,
                                             const std::vector<int>& row_idx,
                                             const AraWorkspace& ws,
                                             const std::vector<DenseTile>& q,
                                             SampleMode mode);

struct TileApprox {
  int i = 0;
  DenseTile Q;
  DenseTile B;
  bool converged = false;
  int rounds_resident = 0;
};

// Dynamic-subset batched ARA for every tile below the diagonal of column k
// (Alg. 4 scheduling: rank-sorted queue, converged tiles leave, refill).
std::vector<TileApprox> chol_ara_update(const TlrMatrix& m,
                                        const std::vector<BlockDiagonal>* d,
                                        int k, const AraConfig& cfg,
                                        const AraWorkspace& ws, SampleMode mode,
                                        FactorStats* stats = nullptr);

}  // namespace tlr
