#include "tlr/dense_kernels.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <mutex>
#include <numeric>

#include <cblas.h>
#include <lapacke.h>

// OpenBLAS runtime dispatch falls back to a pre-AVX kernel when the CPU
// model string is masked (common inside VMs). Pick the kernel family from
// cpuid before the dispatcher initializes; an explicit OPENBLAS_CORETYPE in
// the environment always wins. Tile-level OpenMP owns all parallelism, so
// the BLAS thread pool is pinned to one thread the same way.
__attribute__((constructor(65534))) static void configure_openblas() {
  setenv("OPENBLAS_NUM_THREADS", "1", 0);
  if (getenv("OPENBLAS_CORETYPE")) return;
  if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512vl"))
    setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
  else if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
}

namespace tlr {

void set_blas_single_threaded() {
  setenv("OPENBLAS_NUM_THREADS", "1", 0);
}

namespace {

int op_rows(const DenseTile& A, Trans t) {
  return t == Trans::No ? A.rows() : A.cols();
}
int op_cols(const DenseTile& A, Trans t) {
  return t == Trans::No ? A.cols() : A.rows();
}

}  // namespace

void gemm(double alpha, const DenseTile& A, Trans ta, const DenseTile& B,
          Trans tb, double beta, DenseTile& C) {
  int m = op_rows(A, ta), k = op_cols(A, ta);
  int kb = op_rows(B, tb), n = op_cols(B, tb);
  if (k != kb || C.rows() != m || C.cols() != n)
    throw DimensionError("gemm: nonconformable shapes");
  if (m == 0 || n == 0) return;
  if (k == 0) {
    C.scale(beta);
    return;
  }
  cblas_dgemm(CblasColMajor, ta == Trans::No ? CblasNoTrans : CblasTrans,
              tb == Trans::No ? CblasNoTrans : CblasTrans, m, n, k, alpha,
              A.data(), A.rows(), B.data(), B.rows(), beta, C.data(), C.rows());
}

DenseTile gemm(double alpha, const DenseTile& A, Trans ta, const DenseTile& B,
               Trans tb) {
  DenseTile C(op_rows(A, ta), op_cols(B, tb));
  gemm(alpha, A, ta, B, tb, 0.0, C);
  return C;
}

CholResult dense_cholesky(const DenseTile& A) {
  if (A.rows() != A.cols()) throw DimensionError("dense_cholesky: not square");
  CholResult r;
  r.L = A;
  int n = A.rows();
  if (n == 0) return r;
  int info = LAPACKE_dpotrf(LAPACK_COL_MAJOR, 'L', n, r.L.data(), n);
  if (info < 0) throw NumericError("dpotrf: invalid argument");
  if (info > 0) {
    r.fail = info - 1;
    r.L = DenseTile();
    return r;
  }
  for (int j = 1; j < n; ++j)
    for (int i = 0; i < j; ++i) r.L(i, j) = 0.0;
  return r;
}

DenseTile BlockDiagonal::materialize() const {
  int n = size();
  DenseTile D(n, n);
  for (int k = 0; k < n; ++k) {
    D(k, k) = d[k];
    if (is_2x2(k)) {
      D(k + 1, k) = e[k];
      D(k, k + 1) = e[k];
    }
  }
  return D;
}

void BlockDiagonal::apply(DenseTile& W) const {
  if (W.rows() != size()) throw DimensionError("BlockDiagonal::apply");
  for (int j = 0; j < W.cols(); ++j) apply(W.col(j));
}

void BlockDiagonal::apply(double* x) const {
  int n = size();
  int k = 0;
  while (k < n) {
    if (is_2x2(k)) {
      double a = x[k], b = x[k + 1];
      x[k] = d[k] * a + e[k] * b;
      x[k + 1] = e[k] * a + d[k + 1] * b;
      k += 2;
    } else {
      x[k] *= d[k];
      k += 1;
    }
  }
}

int BlockDiagonal::solve(DenseTile& W) const {
  if (W.rows() != size()) throw DimensionError("BlockDiagonal::solve");
  int bad = first_singular_block();
  if (bad >= 0) return bad;
  for (int j = 0; j < W.cols(); ++j) solve(W.col(j));
  return -1;
}

int BlockDiagonal::solve(double* x) const {
  int n = size();
  int k = 0;
  while (k < n) {
    if (is_2x2(k)) {
      double det = d[k] * d[k + 1] - e[k] * e[k];
      if (det == 0.0) return k;
      double a = x[k], b = x[k + 1];
      x[k] = (d[k + 1] * a - e[k] * b) / det;
      x[k + 1] = (d[k] * b - e[k] * a) / det;
      k += 2;
    } else {
      if (d[k] == 0.0) return k;
      x[k] /= d[k];
      k += 1;
    }
  }
  return -1;
}

int BlockDiagonal::floor_eigenvalues(double delta) {
  int n = size();
  int modified = 0;
  int k = 0;
  while (k < n) {
    if (is_2x2(k)) {
      double a = d[k], b = e[k], c = d[k + 1];
      double mean = 0.5 * (a + c);
      double rad = std::hypot(0.5 * (a - c), b);
      double l1 = mean - rad, l2 = mean + rad;
      if (l1 < delta || l2 < delta) {
        double f1 = std::max(l1, delta), f2 = std::max(l2, delta);
        // eigenvector for l2
        double vx, vy;
        if (std::fabs(b) > 0.0) {
          vx = b;
          vy = l2 - a;
        } else {
          vx = a >= c ? 1.0 : 0.0;
          vy = a >= c ? 0.0 : 1.0;
        }
        double nv = std::hypot(vx, vy);
        vx /= nv;
        vy /= nv;
        d[k] = f2 * vx * vx + f1 * vy * vy;
        e[k] = (f2 - f1) * vx * vy;
        d[k + 1] = f2 * vy * vy + f1 * vx * vx;
        ++modified;
      }
      k += 2;
    } else {
      if (d[k] < delta) {
        d[k] = delta;
        ++modified;
      }
      k += 1;
    }
  }
  return modified;
}

bool BlockDiagonal::all_positive() const {
  int n = size();
  int k = 0;
  while (k < n) {
    if (is_2x2(k)) {
      double det = d[k] * d[k + 1] - e[k] * e[k];
      double tr = d[k] + d[k + 1];
      if (det <= 0.0 || tr <= 0.0) return false;
      k += 2;
    } else {
      if (d[k] <= 0.0) return false;
      k += 1;
    }
  }
  return true;
}

bool BlockDiagonal::all_negative() const {
  int n = size();
  int k = 0;
  while (k < n) {
    if (is_2x2(k)) {
      double det = d[k] * d[k + 1] - e[k] * e[k];
      double tr = d[k] + d[k + 1];
      if (det <= 0.0 || tr >= 0.0) return false;
      k += 2;
    } else {
      if (d[k] >= 0.0) return false;
      k += 1;
    }
  }
  return true;
}

int BlockDiagonal::first_singular_block() const {
  int n = size();
  int k = 0;
  while (k < n) {
    if (is_2x2(k)) {
      if (d[k] * d[k + 1] - e[k] * e[k] == 0.0) return k;
      k += 2;
    } else {
      if (d[k] == 0.0) return k;
      k += 1;
    }
  }
  return -1;
}

LdlResult dense_ldl(const DenseTile& A) {
  if (A.rows() != A.cols()) throw DimensionError("dense_ldl: not square");
  int n = A.rows();
  LdlResult r;
  r.L = DenseTile::identity(n);
  r.D = BlockDiagonal(n);
  r.perm.resize(n);
  std::iota(r.perm.begin(), r.perm.end(), 0);
  if (n == 0) return r;

  DenseTile W = A;
  std::vector<lapack_int> ipiv(n);
  int info = LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', n, W.data(), n, ipiv.data());
  if (info < 0) throw NumericError("dsytrf: invalid argument");
  // info > 0 flags an exactly zero pivot in D; the factorization is complete
  // and the caller decides what to do with the singular block.

  auto swap_rows = [&](int a, int b, int cols) {
    for (int j = 0; j < cols; ++j) std::swap(r.L(a, j), r.L(b, j));
    std::swap(r.perm[a], r.perm[b]);
  };

  int k = 0;
  while (k < n) {
    if (ipiv[k] > 0) {
      r.D.d[k] = W(k, k);
      for (int i = k + 1; i < n; ++i) r.L(i, k) = W(i, k);
      int s = ipiv[k] - 1;
      if (s != k) swap_rows(k, s, k);
      k += 1;
    } else {
      r.D.d[k] = W(k, k);
      r.D.d[k + 1] = W(k + 1, k + 1);
      r.D.e[k] = W(k + 1, k);
      r.D.set_2x2(k);
      for (int i = k + 2; i < n; ++i) {
        r.L(i, k) = W(i, k);
        r.L(i, k + 1) = W(i, k + 1);
      }
      int s = -ipiv[k] - 1;
      if (s != k + 1) swap_rows(k + 1, s, k);
      k += 2;
    }
  }
  return r;
}

ModCholResult modified_cholesky(const DenseTile& A) {
  auto chol = dense_cholesky(A);
  if (chol.ok()) return {std::move(chol.L), false};

  int n = A.rows();
  LdlResult ldl = dense_ldl(A);
  double base = A.frob();
  if (base == 0.0) base = 1.0;
  double delta = std::ldexp(base, -26);
  ldl.D.floor_eigenvalues(delta);

  // Atilde = P^T L (D+F) L^T P
  DenseTile LT = ldl.L.transposed();
  ldl.D.apply(LT);
  DenseTile M = gemm(1.0, ldl.L, Trans::No, LT, Trans::No);
  DenseTile At(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) At(ldl.perm[i], ldl.perm[j]) = M(i, j);

  for (int attempt = 0; attempt < 60; ++attempt) {
    auto c = dense_cholesky(At);
    if (c.ok()) return {std::move(c.L), true};
    At.add_diagonal(delta);
    delta *= 8.0;
  }
  throw NumericError("modified_cholesky: could not repair tile");
}

void trsm(Side side, Trans trans, const DenseTile& L, DenseTile& B) {
  if (L.rows() != L.cols()) throw DimensionError("trsm: L not square");
  int need = side == Side::Left ? B.rows() : B.cols();
  if (L.rows() != need) throw DimensionError("trsm: nonconformable shapes");
  for (int i = 0; i < L.rows(); ++i)
    if (L(i, i) == 0.0) throw NumericError("trsm: singular triangular factor", i);
  if (B.empty()) return;
  cblas_dtrsm(CblasColMajor, side == Side::Left ? CblasLeft : CblasRight,
              CblasLower, trans == Trans::No ? CblasNoTrans : CblasTrans,
              CblasNonUnit, B.rows(), B.cols(), 1.0, L.data(), L.rows(),
              B.data(), B.rows());
}

namespace {

// Column-wise panel orthogonalization with one reorthogonalization pass.
// Writes the panel factor into R (Y_in = Y_out R on the healthy columns) and
// records each column's leftover mass on the diagonal. Columns that deflate
// below tau are replaced by fresh random directions orthogonal to Q and the
// earlier panel columns; their measured (near-zero) norms are kept in tiny[].
void panel_mgs(const DenseTile& Q, DenseTile& Y, DenseTile& R, double tau,
               std::vector<uint8_t>& deficient, std::vector<double>& tiny,
               Rng& rng) {
  int n = Y.rows(), k = Y.cols();
  for (int j = 0; j < k; ++j) {
    double* yj = Y.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      for (int p = 0; p < j; ++p) {
        double c = cblas_ddot(n, Y.col(p), 1, yj, 1);
        cblas_daxpy(n, -c, Y.col(p), 1, yj, 1);
        R(p, j) += c;
      }
    }
    double nj = cblas_dnrm2(n, yj, 1);
    if (!(nj >= tau)) {
      if (!deficient[j]) {
        deficient[j] = 1;
        tiny[j] = std::isfinite(nj) ? nj : 0.0;
      }
      // Replace and restart this column from a fresh random direction.
      for (int i = 0; i < n; ++i) yj[i] = rng.gaussian();
      if (!Q.empty()) {
        std::vector<double> c(Q.cols());
        cblas_dgemv(CblasColMajor, CblasTrans, n, Q.cols(), 1.0, Q.data(), n,
                    yj, 1, 0.0, c.data(), 1);
        cblas_dgemv(CblasColMajor, CblasNoTrans, n, Q.cols(), -1.0, Q.data(),
                    n, c.data(), 1, 1.0, yj, 1);
      }
      for (int pass = 0; pass < 2; ++pass)
        for (int p = 0; p < j; ++p) {
          double c = cblas_ddot(n, Y.col(p), 1, yj, 1);
          cblas_daxpy(n, -c, Y.col(p), 1, yj, 1);
        }
      nj = cblas_dnrm2(n, yj, 1);
      if (nj == 0.0) {  // pathological; keep a unit coordinate direction
        yj[j % n] = 1.0;
        nj = 1.0;
      }
      R(j, j) = 0.0;
    } else {
      R(j, j) = nj;
    }
    cblas_dscal(n, 1.0 / nj, yj, 1);
  }
}

}  // namespace

OrthogResult orthog(const DenseTile& Q, DenseTile& Y, Rng& rng) {
  if (!Q.empty() && Q.rows() != Y.rows())
    throw DimensionError("orthog: Q/Y row mismatch");
  int k = Y.cols();
  OrthogResult out;
  out.col_norms.assign(k, 0.0);
  out.new_mass.assign(k, 0.0);
  if (k == 0) {
    out.R = DenseTile(0, 0);
    return out;
  }

  double tau = 100.0 * DBL_EPSILON * Y.frob();
  if (tau == 0.0) tau = DBL_MIN;
  DenseTile R = DenseTile::identity(k);
  std::vector<uint8_t> deficient(k, 0);
  std::vector<double> tiny(k, 0.0);

  for (int sweep = 0; sweep < 2; ++sweep) {
    if (!Q.empty()) {
      DenseTile C = gemm(1.0, Q, Trans::Yes, Y, Trans::No);
      gemm(-1.0, Q, Trans::No, C, Trans::No, 1.0, Y);
    }
    DenseTile Rp(k, k);
    panel_mgs(Q, Y, Rp, tau, deficient, tiny, rng);
    R = gemm(1.0, Rp, Trans::No, R, Trans::No);
  }

  for (int j = 0; j < k; ++j) {
    if (deficient[j]) {
      for (int i = 0; i < k; ++i) R(i, j) = 0.0;
      R(j, j) = tiny[j];
      out.col_norms[j] = tiny[j];
      out.new_mass[j] = tiny[j];
    } else {
      out.col_norms[j] = cblas_dnrm2(j + 1, R.col(j), 1);
      out.new_mass[j] = std::fabs(R(j, j));
    }
  }
  out.R = std::move(R);
  return out;
}

SvdTruncation svd_truncate(const DenseTile& A, double eps) {
  if (eps <= 0) throw ConfigError("svd_truncate: eps must be positive");
  int m = A.rows(), n = A.cols();
  SvdTruncation out;
  if (m == 0 || n == 0) {
    out.U = DenseTile(m, 0);
    out.V = DenseTile(n, 0);
    return out;
  }
  int mn = std::min(m, n);
  DenseTile W = A;
  DenseTile U(m, mn), VT(mn, n);
  std::vector<double> s(mn);
  int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'S', m, n, W.data(), m, s.data(),
                            U.data(), m, VT.data(), mn);
  if (info != 0) {
    W = A;
    std::vector<double> superb(mn);
    info = LAPACKE_dgesvd(LAPACK_COL_MAJOR, 'S', 'S', m, n, W.data(), m,
                          s.data(), U.data(), m, VT.data(), mn, superb.data());
    if (info != 0) throw NumericError("svd_truncate: SVD failed");
  }
  int k = 0;
  while (k < mn && s[k] > eps) ++k;
  out.rank = k;
  out.U = DenseTile(m, k);
  out.V = DenseTile(n, k);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < m; ++i) out.U(i, j) = U(i, j) * s[j];
    for (int i = 0; i < n; ++i) out.V(i, j) = VT(j, i);
  }
  return out;
}

std::vector<double> singular_values(const DenseTile& A) {
  int m = A.rows(), n = A.cols();
  int mn = std::min(m, n);
  std::vector<double> s(mn, 0.0);
  if (mn == 0) return s;
  DenseTile W = A;
  DenseTile U(1, 1), VT(1, 1);
  int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'N', m, n, W.data(), m, s.data(),
                            U.data(), 1, VT.data(), 1);
  if (info != 0) throw NumericError("singular_values: SVD failed");
  return s;
}

std::vector<double> symmetric_eigenvalues(const DenseTile& A) {
  int n = A.rows();
  std::vector<double> w(n, 0.0);
  if (n == 0) return w;
  DenseTile W = A;
  int info = LAPACKE_dsyev(LAPACK_COL_MAJOR, 'N', 'L', n, W.data(), n, w.data());
  if (info != 0) throw NumericError("symmetric_eigenvalues: dsyev failed");
  return w;
}

TiledCholResult dense_tiled_cholesky_reference(const DenseTile& A, int b) {
  if (A.rows() != A.cols()) throw DimensionError("tiled cholesky: not square");
  if (b < 1) throw ConfigError("tiled cholesky: tile size must be positive");
  int n = A.rows();
  int nb = (n + b - 1) / b;
  DenseTile L = A;
  auto rows_of = [&](int t) { return std::min(b, n - t * b); };

  // Block views operate directly on L with lda = n.
  auto blk = [&](int i, int j) { return L.data() + (std::size_t)j * b * n + (std::size_t)i * b; };

  for (int k = 0; k < nb; ++k) {
    int rk = rows_of(k);
    for (int j = 0; j < k; ++j) {
      int rj = rows_of(j);
      // A(i,k) -= L(i,j) L(k,j)^T for i = k..nb-1
      for (int i = k; i < nb; ++i) {
        int ri = rows_of(i);
        cblas_dgemm(CblasColMajor, CblasNoTrans, CblasTrans, ri, rk, rj, -1.0,
                    blk(i, j), n, blk(k, j), n, 1.0, blk(i, k), n);
      }
    }
    int info = LAPACKE_dpotrf(LAPACK_COL_MAJOR, 'L', rk, blk(k, k), n);
    if (info > 0) return {DenseTile(), k * b + info - 1};
    if (info < 0) throw NumericError("tiled cholesky: dpotrf argument");
    for (int i = k + 1; i < nb; ++i) {
      int ri = rows_of(i);
      cblas_dtrsm(CblasColMajor, CblasRight, CblasLower, CblasTrans,
                  CblasNonUnit, ri, rk, 1.0, blk(k, k), n, blk(i, k), n);
    }
  }
  // Zero the strict upper triangle.
  for (int j = 1; j < n; ++j)
    for (int i = 0; i < j; ++i) L(i, j) = 0.0;
  return {std::move(L), -1};
}

double spectral_norm_estimate(const DenseTile& A, int iters, std::uint64_t seed) {
  int m = A.rows(), n = A.cols();
  if (m == 0 || n == 0) return 0.0;
  Rng rng(seed);
  std::vector<double> v(n), w(m);
  for (double& x : v) x = rng.gaussian();
  double nv = cblas_dnrm2(n, v.data(), 1);
  if (nv == 0.0) v[0] = nv = 1.0;
  cblas_dscal(n, 1.0 / nv, v.data(), 1);
  double sigma = 0.0;
  for (int t = 0; t < iters; ++t) {
    cblas_dgemv(CblasColMajor, CblasNoTrans, m, n, 1.0, A.data(), m, v.data(),
                1, 0.0, w.data(), 1);
    sigma = cblas_dnrm2(m, w.data(), 1);
    if (sigma == 0.0) return 0.0;
    cblas_dgemv(CblasColMajor, CblasTrans, m, n, 1.0, A.data(), m, w.data(), 1,
                0.0, v.data(), 1);
    double nv2 = cblas_dnrm2(n, v.data(), 1);
    if (nv2 == 0.0) return sigma;
    cblas_dscal(n, 1.0 / nv2, v.data(), 1);
    sigma = nv2 / sigma;  // ||A^T w|| / ||w|| with w = Av/||..||
  }
  // Rayleigh refinement: sigma = ||A v|| for the converged right vector.
  cblas_dgemv(CblasColMajor, CblasNoTrans, m, n, 1.0, A.data(), m, v.data(), 1,
              0.0, w.data(), 1);
  return cblas_dnrm2(m, w.data(), 1);
}

double power_norm_estimate(const DenseTile& A, int iters, std::uint64_t seed) {
  int n = A.rows();
  if (n == 0) return 0.0;
  Rng rng(seed);
  std::vector<double> v(n), w(n);
  for (double& x : v) x = rng.gaussian();
  double nv = cblas_dnrm2(n, v.data(), 1);
  if (nv == 0.0) v[0] = nv = 1.0;
  cblas_dscal(n, 1.0 / nv, v.data(), 1);
  double lambda = 0.0;
  for (int t = 0; t < iters; ++t) {
    cblas_dgemv(CblasColMajor, CblasNoTrans, n, n, 1.0, A.data(), n, v.data(),
                1, 0.0, w.data(), 1);
    double nw = cblas_dnrm2(n, w.data(), 1);
    lambda = std::fabs(cblas_ddot(n, v.data(), 1, w.data(), 1));
    if (nw == 0.0) return 0.0;
    cblas_dscal(n, 1.0 / nw, w.data(), 1);
    std::swap(v, w);
  }
  return lambda;
}

}  // namespace tlr
