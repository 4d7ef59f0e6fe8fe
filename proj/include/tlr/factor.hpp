#pragma once

#include <optional>
#include <vector>

#include "tlr/ara.hpp"
#include "tlr/stats.hpp"
#include "tlr/tlr_matrix.hpp"

namespace tlr {

enum class FactorMode { Cholesky, PivotedCholesky, LDLT };
enum class PivotNorm { Frobenius, TwoNormPower };

struct FactorOptions {
  bool schur_compensation = true;  // default off for LDL^T
  double diag_shift = 0.0;
  PivotNorm pivot_norm = PivotNorm::Frobenius;
  int pivot_power_iters = 50;
};

/// Lower-triangular TLR factor. Diagonal tiles hold the dense Cholesky factor
/// (Chol modes) or the unit-lower LDL^T factor with D and the intra-tile
/// permutation alongside (LDL mode). perm records inter-tile pivoting.
struct TlrFactor {
  TlrMatrix L;
  FactorMode mode = FactorMode::Cholesky;
  std::vector<BlockDiagonal> D;             // LDL mode, per diagonal tile
  std::vector<std::vector<int>> intra_perm; // LDL mode, per diagonal tile
  std::vector<int> perm;                    // pivoted mode, factor pos -> tile
  double eps = 0.0;
  FactorStats stats;
};

TlrFactor tlr_cholesky(TlrMatrix A, const AraConfig& cfg, const AraWorkspace& ws,
                       const FactorOptions& opts = {});
TlrFactor tlr_cholesky_pivoted(TlrMatrix A, const AraConfig& cfg,
                               const AraWorkspace& ws,
                               const FactorOptions& opts = {});
TlrFactor tlr_ldlt(TlrMatrix A, const AraConfig& cfg, const AraWorkspace& ws,
                   FactorOptions opts = {});

// Diagonal compensation for the compression of a PSD update accumulation:
// diag(rowsum |Dk - truncate(Dk, eps)|), entrywise nonnegative.
DenseTile schur_compensation(const DenseTile& dk, double eps);

// Factor serialization: TLRM payload plus a trailer with mode, D blocks,
// intra permutations and the tile permutation.
void write_factor(const TlrFactor& F, const std::string& path);
TlrFactor read_factor(const std::string& path);

}  // namespace tlr
