#include "tlr/solve.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <cblas.h>
#include <omp.h>

#include "tlr/util.hpp"

namespace tlr {

namespace {

void gemv(const DenseTile& a, Trans trans, const double* x, double beta,
          double* y) {
  if (a.rows() == 0 || a.cols() == 0) {
    if (beta == 0.0) {
      int len = trans == Trans::No ? a.rows() : a.cols();
      std::fill(y, y + len, 0.0);
    }
    return;
  }
  cblas_dgemv(CblasColMajor, trans == Trans::No ? CblasNoTrans : CblasTrans,
              a.rows(), a.cols(), 1.0, a.data(), a.rows(), x, 1, beta, y, 1);
}

void trsv_lower(const DenseTile& l, Trans trans, double* x, int block) {
  for (int i = 0; i < l.rows(); ++i)
    if (l(i, i) == 0.0)
      throw NumericError("triangular solve: singular diagonal block", block);
  cblas_dtrsv(CblasColMajor, CblasLower,
              trans == Trans::No ? CblasNoTrans : CblasTrans, CblasNonUnit,
              l.rows(), l.data(), l.rows(), x, 1);
}

bool is_ldl(const TlrFactor& F) { return F.mode == FactorMode::LDLT; }

// x_k <- (P_k^T L_k)^{-1} x_k  or  L_kk^{-1} x_k
void diag_forward(const TlrFactor& F, int k, double* xk) {
  const DenseTile& l = F.L.diag[k];
  if (is_ldl(F)) {
    const std::vector<int>& p = F.intra_perm[k];
    std::vector<double> t(l.rows());
    for (int i = 0; i < l.rows(); ++i) t[i] = xk[p[i]];
    trsv_lower(l, Trans::No, t.data(), k);
    std::memcpy(xk, t.data(), sizeof(double) * l.rows());
  } else {
    trsv_lower(l, Trans::No, xk, k);
  }
}

// x_k <- (P_k^T L_k)^{-T} x_k  or  L_kk^{-T} x_k
void diag_backward(const TlrFactor& F, int k, double* xk) {
  const DenseTile& l = F.L.diag[k];
  if (is_ldl(F)) {
    std::vector<double> t(xk, xk + l.rows());
    trsv_lower(l, Trans::Yes, t.data(), k);
    const std::vector<int>& p = F.intra_perm[k];
    for (int i = 0; i < l.rows(); ++i) xk[p[i]] = t[i];
  } else {
    trsv_lower(l, Trans::Yes, xk, k);
  }
}

}  // namespace

std::vector<double> tlr_trsm_lower(const TlrFactor& F, std::span<const double> y) {
  const TlrMatrix& L = F.L;
  if ((std::int64_t)y.size() != L.n) throw DimensionError("tlr_trsm_lower: length");
  std::vector<double> x(y.begin(), y.end());
  for (int k = 0; k < L.nb; ++k) {
    double* xk = x.data() + L.block_offset(k);
    diag_forward(F, k, xk);
    // Parallel update of all blocks below: x_i -= U_ik (V_ik^T x_k).
#pragma omp parallel for schedule(dynamic)
    for (int i = k + 1; i < L.nb; ++i) {
      const LowRankTile& t = L.tile(i, k);
      if (t.rank() == 0) continue;
      std::vector<double> w(t.rank());
      gemv(t.V, Trans::Yes, xk, 0.0, w.data());
      std::vector<double> u(t.U.rows());
      gemv(t.U, Trans::No, w.data(), 0.0, u.data());
      double* xi = x.data() + L.block_offset(i);
      for (int r = 0; r < t.U.rows(); ++r) xi[r] -= u[r];
    }
  }
  return x;
}

std::vector<double> tlr_trsm_upper(const TlrFactor& F, std::span<const double> y) {
  const TlrMatrix& L = F.L;
  if ((std::int64_t)y.size() != L.n) throw DimensionError("tlr_trsm_upper: length");
  std::vector<double> x(y.begin(), y.end());
  std::vector<std::vector<double>> contrib(L.nb);
  for (int k = L.nb - 1; k >= 0; --k) {
    double* xk = x.data() + L.block_offset(k);
    int rk = L.tile_rows(k);
    // Gather x_k -= sum_{i>k} V_ik (U_ik^T x_i); contributions are computed in
    // parallel and summed in fixed order.
#pragma omp parallel for schedule(dynamic)
    for (int i = k + 1; i < L.nb; ++i) {
      const LowRankTile& t = L.tile(i, k);
      if (t.rank() == 0) {
        contrib[i].clear();
        continue;
      }
      contrib[i].assign(rk, 0.0);
      std::vector<double> w(t.rank());
      gemv(t.U, Trans::Yes, x.data() + L.block_offset(i), 0.0, w.data());
      gemv(t.V, Trans::No, w.data(), 0.0, contrib[i].data());
    }
    for (int i = k + 1; i < L.nb; ++i)
      if (!contrib[i].empty())
        for (int r = 0; r < rk; ++r) xk[r] -= contrib[i][r];
    diag_backward(F, k, xk);
  }
  return x;
}

namespace {

std::vector<double> apply_tile_perm(const TlrFactor& F,
                                    std::span<const double> v, bool inverse) {
  if (F.perm.empty()) return std::vector<double>(v.begin(), v.end());
  const TlrMatrix& L = F.L;
  std::vector<double> out(v.size());
  for (int k = 0; k < L.nb; ++k) {
    int src = F.perm[k];
    int rk = L.tile_rows(k);
    if (!inverse)
      std::memcpy(out.data() + L.block_offset(k),
                  v.data() + L.block_offset(src), sizeof(double) * rk);
    else
      std::memcpy(out.data() + L.block_offset(src),
                  v.data() + L.block_offset(k), sizeof(double) * rk);
  }
  return out;
}

}  // namespace

std::vector<double> factor_solve(const TlrFactor& F, std::span<const double> b) {
  std::vector<double> z = apply_tile_perm(F, b, false);
  z = tlr_trsm_lower(F, z);
  if (is_ldl(F)) {
    for (int k = 0; k < F.L.nb; ++k) {
      int bad = F.D[k].solve(z.data() + F.L.block_offset(k));
      if (bad >= 0) throw NumericError("factor_solve: singular D block", k);
    }
  }
  z = tlr_trsm_upper(F, z);
  return apply_tile_perm(F, z, true);
}

std::vector<double> factor_apply(const TlrFactor& F, std::span<const double> x) {
  const TlrMatrix& L = F.L;
  if ((std::int64_t)x.size() != L.n) throw DimensionError("factor_apply: length");
  // t = L^T x
  std::vector<double> t(L.n, 0.0);
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < L.nb; ++k) {
    int rk = L.tile_rows(k);
    double* tk = t.data() + L.block_offset(k);
    const double* xk = x.data() + L.block_offset(k);
    if (is_ldl(F)) {
      const std::vector<int>& p = F.intra_perm[k];
      std::vector<double> px(rk);
      for (int r = 0; r < rk; ++r) px[r] = xk[p[r]];
      gemv(L.diag[k], Trans::Yes, px.data(), 0.0, tk);
    } else {
      gemv(L.diag[k], Trans::Yes, xk, 0.0, tk);
    }
    for (int i = k + 1; i < L.nb; ++i) {
      const LowRankTile& lt = L.tile(i, k);
      if (lt.rank() == 0) continue;
      std::vector<double> w(lt.rank());
      gemv(lt.U, Trans::Yes, x.data() + L.block_offset(i), 0.0, w.data());
      std::vector<double> v(rk);
      gemv(lt.V, Trans::No, w.data(), 0.0, v.data());
      for (int r = 0; r < rk; ++r) tk[r] += v[r];
    }
  }
  if (is_ldl(F))
    for (int k = 0; k < L.nb; ++k) F.D[k].apply(t.data() + L.block_offset(k));
  // y = L t
  std::vector<double> y(L.n, 0.0);
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < L.nb; ++k) {
    int rk = L.tile_rows(k);
    double* yk = y.data() + L.block_offset(k);
    std::vector<double> acc(rk, 0.0);
    if (is_ldl(F)) {
      std::vector<double> lt(rk);
      gemv(L.diag[k], Trans::No, t.data() + L.block_offset(k), 0.0, lt.data());
      const std::vector<int>& p = F.intra_perm[k];
      for (int r = 0; r < rk; ++r) acc[p[r]] = lt[r];
    } else {
      gemv(L.diag[k], Trans::No, t.data() + L.block_offset(k), 0.0, acc.data());
    }
    for (int j = 0; j < k; ++j) {
      const LowRankTile& lt = L.tile(k, j);
      if (lt.rank() == 0) continue;
      std::vector<double> w(lt.rank());
      gemv(lt.V, Trans::Yes, t.data() + L.block_offset(j), 0.0, w.data());
      std::vector<double> u(rk);
      gemv(lt.U, Trans::No, w.data(), 0.0, u.data());
      for (int r = 0; r < rk; ++r) acc[r] += u[r];
    }
    std::memcpy(yk, acc.data(), sizeof(double) * rk);
  }
  return y;
}

std::pair<std::vector<double>, CgReport> pcg(const TlrMatrix& A,
                                             const TlrFactor* F,
                                             std::span<const double> b,
                                             double tol, int max_iter) {
  if (tol <= 0) throw ConfigError("pcg: tol must be positive");
  std::int64_t n = A.n;
  if ((std::int64_t)b.size() != n) throw DimensionError("pcg: length");
  CgReport rep;
  std::vector<double> x(n, 0.0);
  std::vector<double> r(b.begin(), b.end());
  double bnorm = cblas_dnrm2(n, b.data(), 1);
  if (bnorm == 0.0) {
    rep.rel_residual.push_back(0.0);
    rep.converged = true;
    return {x, rep};
  }
  rep.rel_residual.push_back(1.0);

  auto precond = [&](const std::vector<double>& v) {
    if (!F) return v;
    double t0 = omp_get_wtime();
    std::vector<double> z = factor_solve(*F, v);
    rep.solve_time += omp_get_wtime() - t0;
    return z;
  };
  auto apply = [&](const std::vector<double>& v) {
    double t0 = omp_get_wtime();
    std::vector<double> w = tlr_matvec(A, v);
    rep.apply_time += omp_get_wtime() - t0;
    return w;
  };

  std::vector<double> z = precond(r);
  std::vector<double> p = z;
  double rz = cblas_ddot(n, r.data(), 1, z.data(), 1);
  for (int it = 0; it < max_iter; ++it) {
    std::vector<double> q = apply(p);
    double pq = cblas_ddot(n, p.data(), 1, q.data(), 1);
    if (pq <= 0.0 || !std::isfinite(pq))
      throw NumericError("pcg: operator not positive definite", it);
    double alpha = rz / pq;
    cblas_daxpy(n, alpha, p.data(), 1, x.data(), 1);
    if ((it + 1) % 50 == 0) {
      // Explicit residual recomputation controls drift on long runs.
      std::vector<double> ax = apply(x);
      for (std::int64_t i = 0; i < n; ++i) r[i] = b[i] - ax[i];
    } else {
      cblas_daxpy(n, -alpha, q.data(), 1, r.data(), 1);
    }
    rep.iterations = it + 1;
    double rel = cblas_dnrm2(n, r.data(), 1) / bnorm;
    rep.rel_residual.push_back(rel);
    if (rel <= tol) {
      rep.converged = true;
      break;
    }
    z = precond(r);
    double rz_new = cblas_ddot(n, r.data(), 1, z.data(), 1);
    double beta = rz_new / rz;
    rz = rz_new;
    for (std::int64_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  return {x, rep};
}

namespace {

std::vector<double> difference_apply(const TlrMatrix& A, const TlrFactor& F,
                                     const std::vector<double>& v) {
  // (P A P^T - L L^T) v in the factor frame.
  std::vector<double> av;
  if (!F.perm.empty()) {
    std::vector<double> pv = apply_tile_perm(F, v, true);
    std::vector<double> apv = tlr_matvec(A, pv);
    av = apply_tile_perm(F, apv, false);
  } else {
    av = tlr_matvec(A, v);
  }
  std::vector<double> lv = factor_apply(F, v);
  for (std::size_t i = 0; i < av.size(); ++i) av[i] -= lv[i];
  return av;
}

}  // namespace

double estimate_2norm_diff(const TlrMatrix& A, const TlrFactor& F, int iters,
                           std::uint64_t seed) {
  if (iters < 1) throw ConfigError("estimate_2norm_diff: iters must be >= 1");
  std::int64_t n = A.n;
  Rng rng(mix64(seed ^ 0x2fULL));
  std::vector<double> v(n);
  for (double& t : v) t = rng.gaussian();
  double nv = cblas_dnrm2(n, v.data(), 1);
  cblas_dscal(n, 1.0 / nv, v.data(), 1);
  double lambda = 0.0;
  for (int t = 0; t < iters; ++t) {
    std::vector<double> w = difference_apply(A, F, v);
    double nw = cblas_dnrm2(n, w.data(), 1);
    lambda = std::fabs(cblas_ddot(n, v.data(), 1, w.data(), 1));
    if (nw < 1e-300) return nw;
    cblas_dscal(n, 1.0 / nw, w.data(), 1);
    v = std::move(w);
  }
  return lambda;
}

double estimate_2norm(const TlrMatrix& A, int iters, std::uint64_t seed) {
  std::int64_t n = A.n;
  Rng rng(mix64(seed ^ 0xa2ULL));
  std::vector<double> v(n);
  for (double& t : v) t = rng.gaussian();
  double nv = cblas_dnrm2(n, v.data(), 1);
  cblas_dscal(n, 1.0 / nv, v.data(), 1);
  double lambda = 0.0;
  for (int t = 0; t < iters; ++t) {
    std::vector<double> w = tlr_matvec(A, v);
    double nw = cblas_dnrm2(n, w.data(), 1);
    lambda = std::fabs(cblas_ddot(n, v.data(), 1, w.data(), 1));
    if (nw < 1e-300) return nw;
    cblas_dscal(n, 1.0 / nw, w.data(), 1);
    v = std::move(w);
  }
  return lambda;
}

}  // namespace tlr
