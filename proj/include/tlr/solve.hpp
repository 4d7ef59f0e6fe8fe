#pragma once

#include <span>
#include <vector>

#include "tlr/factor.hpp"

namespace tlr {

// Forward substitution with the TLR factor: solves L x = y.
std::vector<double> tlr_trsm_lower(const TlrFactor& F, std::span<const double> y);
// Back substitution: solves L^T x = y.
std::vector<double> tlr_trsm_upper(const TlrFactor& F, std::span<const double> y);

// Full solve through the factorization (D and permutations applied per mode).
std::vector<double> factor_solve(const TlrFactor& F, std::span<const double> b);

// y = L L^T x (or L D L^T x), in the pivoted frame when perm is present.
std::vector<double> factor_apply(const TlrFactor& F, std::span<const double> x);

struct CgReport {
  int iterations = 0;
  std::vector<double> rel_residual;  // [0] is the x0 = 0 residual
  bool converged = false;
  double apply_time = 0.0;
  double solve_time = 0.0;
};

// Preconditioned conjugate gradients with M^{-1} = factor_solve(F, .);
// pass F = nullptr for plain CG.
std::pair<std::vector<double>, CgReport> pcg(const TlrMatrix& A,
                                             const TlrFactor* F,
                                             std::span<const double> b,
                                             double tol, int max_iter);

// Power iteration estimate of ||A - L L^T||_2 (mode-adjusted).
double estimate_2norm_diff(const TlrMatrix& A, const TlrFactor& F, int iters,
                           std::uint64_t seed);

// Power iteration estimate of ||A||_2 via TLR matvec.
double estimate_2norm(const TlrMatrix& A, int iters, std::uint64_t seed);

}  // namespace tlr
