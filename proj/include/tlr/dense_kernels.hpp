#pragma once

#include <optional>
#include <vector>

#include "tlr/dense_tile.hpp"

namespace tlr {

enum class Trans { No, Yes };
enum class Side { Left, Right };

// C = alpha * op(A) * op(B) + beta * C
void gemm(double alpha, const DenseTile& A, Trans ta, const DenseTile& B,
          Trans tb, double beta, DenseTile& C);
DenseTile gemm(double alpha, const DenseTile& A, Trans ta, const DenseTile& B,
               Trans tb);

struct CholResult {
  DenseTile L;
  int fail = -1;  // failing column on nonpositive pivot, -1 on success
  bool ok() const { return fail < 0; }
};

CholResult dense_cholesky(const DenseTile& A);

/// Block diagonal with 1x1 and 2x2 symmetric blocks (LDL^T factor D).
class BlockDiagonal {
 public:
  BlockDiagonal() = default;
  explicit BlockDiagonal(int n) : d(n, 0.0), e(n > 0 ? n - 1 : 0, 0.0),
                                  start2x2(n, 0) {}

  int size() const { return static_cast<int>(d.size()); }
  void set_2x2(int k) { start2x2[k] = 1; }
  bool is_2x2(int k) const { return start2x2[k] != 0; }

  std::vector<double> d;        // diagonal entries
  std::vector<double> e;        // subdiagonal, e[k] = D(k+1,k) for a 2x2 at k
  std::vector<uint8_t> start2x2;

  DenseTile materialize() const;
  // W <- D * W (rows of W indexed like D)
  void apply(DenseTile& W) const;
  void apply(double* x) const;
  // W <- D^{-1} W; returns failing block start or -1
  int solve(DenseTile& W) const;
  int solve(double* x) const;
  // Raise every block eigenvalue to at least delta; returns #modified blocks.
  int floor_eigenvalues(double delta);
  bool all_positive() const;
  bool all_negative() const;
  int first_singular_block() const;  // -1 if none
};

struct LdlResult {
  DenseTile L;             // unit lower triangular
  BlockDiagonal D;
  std::vector<int> perm;   // (P A P^T)(i,j) = A(perm[i], perm[j]) = (L D L^T)(i,j)
};

// Bunch-Kaufman symmetric indefinite factorization of a symmetric tile.
LdlResult dense_ldl(const DenseTile& A);

struct ModCholResult {
  DenseTile L;
  bool modified = false;
};

// Cholesky of A when definite, otherwise Cholesky of the eigenvalue-lifted
// reassembly of its LDL^T factorization.
ModCholResult modified_cholesky(const DenseTile& A);

// Triangular solve with a lower-triangular L, in place on B:
//   Left:  op(L) X = B      Right:  X op(L) = B
void trsm(Side side, Trans trans, const DenseTile& L, DenseTile& B);

struct OrthogResult {
  DenseTile R;                    // accumulated panel factor, upper triangular
  std::vector<double> col_norms;  // post-Q-deflation norms (|| R(:,j) ||)
  std::vector<double> new_mass;   // mass beyond earlier panel columns (R(j,j))
};

// Two sweeps of block Gram-Schmidt against Q (may be empty); the panel is
// orthonormalized column by column with one reorthogonalization pass so that
// rank deficiency inside the panel is detected per column. Y is replaced by
// the orthonormal panel. Columns that deflate below ~100*eps_mach*||Y||_F are
// replaced by fresh random directions; their near-zero norms are reported.
OrthogResult orthog(const DenseTile& Q, DenseTile& Y, Rng& rng);

struct SvdTruncation {
  DenseTile U;  // left vectors scaled by singular values
  DenseTile V;
  int rank = 0;
};

// Smallest k with sigma_{k+1} <= eps (absolute threshold); A ~= U V^T.
SvdTruncation svd_truncate(const DenseTile& A, double eps);

std::vector<double> singular_values(const DenseTile& A);
std::vector<double> symmetric_eigenvalues(const DenseTile& A);

struct TiledCholResult {
  DenseTile L;
  int fail = -1;
  bool ok() const { return fail < 0; }
};

// Serial left-looking tiled Cholesky on a full dense matrix; test oracle and
// benchmark reference.
TiledCholResult dense_tiled_cholesky_reference(const DenseTile& A, int b);

// Power iteration estimate of ||A||_2 for a symmetric dense tile.
double power_norm_estimate(const DenseTile& A, int iters, std::uint64_t seed);

// Power iteration on A^T A; 2-norm estimate for any dense tile.
double spectral_norm_estimate(const DenseTile& A, int iters, std::uint64_t seed);

void set_blas_single_threaded();

}  // namespace tlr
