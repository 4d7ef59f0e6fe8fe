#pragma once

#include <cstdint>
#include <vector>

namespace tlr {

/// Per-phase wall time and instrumentation collected by a factorization.
struct FactorStats {
  double t_sampling = 0.0;
  double t_projection = 0.0;
  double t_reduction = 0.0;
  double t_dense = 0.0;   // dense expansion of diagonal updates
  double t_orthog = 0.0;
  double t_misc = 0.0;    // diag factorization, trsm, rng, bookkeeping
  double t_pivot_select = 0.0;
  double wall = 0.0;

  std::vector<int> ara_rounds;      // per column, summed over tiles
  std::vector<double> pivot_trace;  // min diagonal pivot per column
  double compensation_frob = 0.0;   // sum of ||D_k - Dbar_k||_F
  int modified_diagonals = 0;
  std::uint64_t tile_rounds_resident = 0;

  double gemm_time() const { return t_sampling + t_projection + t_dense; }
  double gemm_share() const { return wall > 0 ? gemm_time() / wall : 0.0; }
};

}  // namespace tlr
