#include "tlr/factor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <omp.h>

#include "tlr/util.hpp"

namespace tlr {

namespace {

// Dense expansion of L(i,j) [D_j] L(i2,j)^T accumulated into acc.
void expand_update(const LowRankTile& a, const BlockDiagonal* dj,
                   const LowRankTile& b, DenseTile& acc) {
  if (a.rank() == 0 || b.rank() == 0) return;
  DenseTile vb = b.V;  // rows(j) x rank_b
  if (dj) {
    DenseTile dv = b.V;
    dj->apply(dv);
    vb = std::move(dv);
  }
  DenseTile g = gemm(1.0, a.V, Trans::Yes, vb, Trans::No);  // ka x kb
  DenseTile t = gemm(1.0, a.U, Trans::No, g, Trans::No);    // ra x kb
  gemm(1.0, t, Trans::No, b.U, Trans::Yes, 1.0, acc);
}

void symmetrize(DenseTile& a) {
  for (int j = 0; j < a.cols(); ++j)
    for (int i = j + 1; i < a.rows(); ++i) {
      double v = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = v;
      a(j, i) = v;
    }
}

// Accumulated diagonal update D_k = sum_{j<k} L(k,j) [D_j] L(k,j)^T with the
// workspace's dense buffers and a fixed reduction order.
DenseTile diagonal_update(const TlrMatrix& m, const std::vector<BlockDiagonal>* d,
                          int k, const AraWorkspace& ws) {
  int rk = m.tile_rows(k);
  DenseTile acc(rk, rk);
  if (k == 0) return acc;
  int nch = std::max(1, std::min(ws.dense_buffers, k));
  int len = (k + nch - 1) / nch;
  std::vector<DenseTile> bufs(nch);
#pragma omp parallel for schedule(dynamic)
  for (int c = 0; c < nch; ++c) {
    DenseTile w(rk, rk);
    int j1 = std::min(k, (c + 1) * len);
    for (int j = c * len; j < j1; ++j)
      expand_update(m.tile(k, j), d ? &(*d)[j] : nullptr, m.tile(k, j), w);
    bufs[c] = std::move(w);
  }
  for (int s = 1; s < nch; s *= 2)
    for (int i = 0; i + s < nch; i += 2 * s) bufs[i].add(bufs[i + s]);
  acc = std::move(bufs[0]);
  symmetrize(acc);
  return acc;
}

std::pair<DenseTile, double> compensation_with_norm(const DenseTile& dk,
                                                    double eps) {
  SvdTruncation t = svd_truncate(dk, eps);
  DenseTile r = dk;
  if (t.rank > 0) gemm(-1.0, t.U, Trans::No, t.V, Trans::Yes, 1.0, r);
  int n = dk.rows();
  DenseTile corr(n, n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += std::fabs(r(i, j));
    corr(i, i) = s;
  }
  return {std::move(corr), r.frob()};
}

double min_diag_pivot(const DenseTile& l) {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < l.rows(); ++i) m = std::min(m, l(i, i) * l(i, i));
  return m;
}

double min_block_pivot(const BlockDiagonal& d) {
  double m = std::numeric_limits<double>::infinity();
  int k = 0, n = d.size();
  while (k < n) {
    if (d.is_2x2(k)) {
      double mean = 0.5 * (d.d[k] + d.d[k + 1]);
      double rad = std::hypot(0.5 * (d.d[k] - d.d[k + 1]), d.e[k]);
      m = std::min({m, std::fabs(mean - rad), std::fabs(mean + rad)});
      k += 2;
    } else {
      m = std::min(m, std::fabs(d.d[k]));
      k += 1;
    }
  }
  return m;
}

DenseTile permute_rows(const DenseTile& b, const std::vector<int>& perm) {
  DenseTile out(b.rows(), b.cols());
  for (int j = 0; j < b.cols(); ++j)
    for (int i = 0; i < b.rows(); ++i) out(i, j) = b(perm[i], j);
  return out;
}

struct PivotAccumulators {
  std::vector<DenseTile> d;  // running diagonal updates for i >= k
};

TlrFactor factor_driver(TlrMatrix A, const AraConfig& cfg,
                        const AraWorkspace& ws, const FactorOptions& opts,
                        FactorMode mode) {
  if (cfg.eps <= 0) throw ConfigError("factor: eps must be positive");
  if (opts.diag_shift < 0) throw ConfigError("factor: negative diagonal shift");
  bool pivoted = mode == FactorMode::PivotedCholesky;
  bool ldl = mode == FactorMode::LDLT;
  if (pivoted && A.n % A.b != 0)
    throw ConfigError("pivoted factorization requires uniform tiles");

  double wall0 = omp_get_wtime();
  TlrFactor F;
  F.mode = mode;
  F.eps = cfg.eps;
  F.L = std::move(A);
  TlrMatrix& M = F.L;
  int nb = M.nb;
  FactorStats& st = F.stats;
  st.ara_rounds.assign(nb, 0);
  st.pivot_trace.assign(nb, 0.0);

  if (ldl) {
    F.D.resize(nb);
    F.intra_perm.resize(nb);
  }
  if (pivoted) {
    F.perm.resize(nb);
    std::iota(F.perm.begin(), F.perm.end(), 0);
  }

  PivotAccumulators piv;
  if (pivoted) {
    piv.d.resize(nb);
    for (int i = 0; i < nb; ++i) piv.d[i] = DenseTile(M.tile_rows(i), M.tile_rows(i));
  }

  SampleMode smode = ldl ? SampleMode::LDL : SampleMode::Chol;

  for (int k = 0; k < nb; ++k) {
    // Diagonal update accumulation.
    DenseTile dk;
    double t0 = omp_get_wtime();
    if (pivoted) {
      bool frob = opts.pivot_norm == PivotNorm::Frobenius;
      std::vector<double> cand(nb, 0.0);
      double norm_time = 0.0;
      // Fold in the newly finalized column for every remaining tile; the
      // Frobenius candidate norm is a fused pass over the cache-hot tile.
#pragma omp parallel for schedule(dynamic) reduction(+ : norm_time)
      for (int i = k; i < nb; ++i) {
        if (k > 0)
          expand_update(M.tile(i, k - 1), nullptr, M.tile(i, k - 1), piv.d[i]);
        if (frob) {
          double tn = omp_get_wtime();
          const double* pa = M.diag[i].data();
          const double* pd = piv.d[i].data();
          double s = 0.0;
          for (std::size_t t = 0; t < M.diag[i].size(); ++t) {
            double v = pa[t] - pd[t];
            s += v * v;
          }
          cand[i] = std::sqrt(s);
          norm_time += omp_get_wtime() - tn;
        }
      }
      st.t_dense += omp_get_wtime() - t0 - norm_time;

      // Pivot selection on the updated diagonals; the 2-norm variant
      // materializes each candidate and runs power iterations on it.
      t0 = omp_get_wtime();
      int p = k;
      double best = -1.0;
      for (int i = k; i < nb; ++i) {
        double norm;
        if (frob) {
          norm = cand[i];
        } else {
          DenseTile c = M.diag[i];
          c.add(piv.d[i], -1.0);
          norm = power_norm_estimate(c, opts.pivot_power_iters,
                                     tile_seed(cfg.seed, 0x9047ULL, k, i));
        }
        if (norm > best) {
          best = norm;
          p = i;
        }
      }
      st.t_pivot_select += omp_get_wtime() - t0 + norm_time;
      if (p != k) {
        M.pivot_swap(k, p, k);
        std::swap(piv.d[k], piv.d[p]);
        std::swap(F.perm[k], F.perm[p]);
      }
      dk = piv.d[k];
      symmetrize(dk);
    } else {
      dk = diagonal_update(M, ldl ? &F.D : nullptr, k, ws);
      st.t_dense += omp_get_wtime() - t0;
    }

    // Diagonal tile update, compensation, shift.
    t0 = omp_get_wtime();
    DenseTile ak = M.diag[k];
    ak.add(dk, -1.0);
    if (opts.schur_compensation && k > 0) {
      auto [corr, rnorm] = compensation_with_norm(dk, cfg.eps);
      ak.add(corr);
      st.compensation_frob += rnorm;
    }
    if (opts.diag_shift > 0) ak.add_diagonal(opts.diag_shift);

    // Factor the diagonal tile.
    if (ldl) {
      LdlResult ldlr = dense_ldl(ak);
      int bad = ldlr.D.first_singular_block();
      if (bad >= 0)
        throw NumericError("tlr_ldlt: singular D block in column", k);
      M.check_writable(k, k);
      M.diag[k] = std::move(ldlr.L);
      F.D[k] = std::move(ldlr.D);
      F.intra_perm[k] = std::move(ldlr.perm);
      st.pivot_trace[k] = min_block_pivot(F.D[k]);
    } else {
      ModCholResult mc = modified_cholesky(ak);
      if (mc.modified) st.modified_diagonals++;
      M.check_writable(k, k);
      M.diag[k] = std::move(mc.L);
      st.pivot_trace[k] = min_diag_pivot(M.diag[k]);
    }
    st.t_misc += omp_get_wtime() - t0;

    // Compress the updated column tiles.
    std::vector<TileApprox> col =
        chol_ara_update(M, ldl ? &F.D : nullptr, k, cfg, ws, smode, &st);
    for (const TileApprox& t : col) st.ara_rounds[k] += t.rounds_resident;

    // Triangular solve for the right factors, then overwrite the column.
    t0 = omp_get_wtime();
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t t = 0; t < col.size(); ++t) {
      try {
        DenseTile b = std::move(col[t].B);
        if (ldl) {
          b = permute_rows(b, F.intra_perm[k]);
          trsm(Side::Left, Trans::No, M.diag[k], b);
          int bad = F.D[k].solve(b);
          if (bad >= 0) throw NumericError("tlr_ldlt: singular D block", k);
        } else {
          trsm(Side::Left, Trans::No, M.diag[k], b);
        }
        M.check_writable(col[t].i, k);
        LowRankTile& out = M.tile(col[t].i, k);
        out.U = std::move(col[t].Q);
        out.V = std::move(b);
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
    M.mark_finalized(k);
    st.t_misc += omp_get_wtime() - t0;
  }

  st.wall = omp_get_wtime() - wall0;
  return F;
}

}  // namespace

DenseTile schur_compensation(const DenseTile& dk, double eps) {
  return compensation_with_norm(dk, eps).first;
}

TlrFactor tlr_cholesky(TlrMatrix A, const AraConfig& cfg, const AraWorkspace& ws,
                       const FactorOptions& opts) {
  return factor_driver(std::move(A), cfg, ws, opts, FactorMode::Cholesky);
}

TlrFactor tlr_cholesky_pivoted(TlrMatrix A, const AraConfig& cfg,
                               const AraWorkspace& ws,
                               const FactorOptions& opts) {
  return factor_driver(std::move(A), cfg, ws, opts, FactorMode::PivotedCholesky);
}

TlrFactor tlr_ldlt(TlrMatrix A, const AraConfig& cfg, const AraWorkspace& ws,
                   FactorOptions opts) {
  // Schur compensation targets Cholesky breakdown; LDL^T does not need it.
  opts.schur_compensation = false;
  return factor_driver(std::move(A), cfg, ws, opts, FactorMode::LDLT);
}

void write_factor(const TlrFactor& F, const std::string& path) {
  write_tlr(F.L, path);
  std::ofstream f(path, std::ios::binary | std::ios::app);
  if (!f) throw DataError("write_factor: cannot append " + path);
  std::uint8_t mode = F.mode == FactorMode::Cholesky ? 0
                      : F.mode == FactorMode::LDLT   ? 1
                                                     : 2;
  f.write(reinterpret_cast<const char*>(&mode), 1);
  f.write(reinterpret_cast<const char*>(&F.eps), 8);
  if (F.mode == FactorMode::LDLT) {
    for (int k = 0; k < F.L.nb; ++k) {
      const BlockDiagonal& d = F.D[k];
      std::uint32_t n = d.size();
      f.write(reinterpret_cast<const char*>(&n), 4);
      f.write(reinterpret_cast<const char*>(d.d.data()), 8 * n);
      if (n > 1) f.write(reinterpret_cast<const char*>(d.e.data()), 8 * (n - 1));
      f.write(reinterpret_cast<const char*>(d.start2x2.data()), n);
      std::vector<std::uint32_t> p(F.intra_perm[k].begin(), F.intra_perm[k].end());
      f.write(reinterpret_cast<const char*>(p.data()), 4 * n);
    }
  }
  if (F.mode == FactorMode::PivotedCholesky) {
    std::vector<std::uint32_t> p(F.perm.begin(), F.perm.end());
    f.write(reinterpret_cast<const char*>(p.data()), 4 * p.size());
  }
  if (!f) throw DataError("write_factor: write failed");
}

TlrFactor read_factor(const std::string& path) {
  TlrFactor F;
  F.L = read_tlr(path);
  int nb = F.L.nb;

  // The TLRM reader consumed the matrix payload; reopen and seek past it.
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("read_factor: cannot open " + path);
  f.seekg(28, std::ios::beg);
  for (int i = 0; i < nb; ++i) {
    std::uint32_t r = 0, c = 0;
    f.read(reinterpret_cast<char*>(&r), 4);
    f.read(reinterpret_cast<char*>(&c), 4);
    f.seekg((std::int64_t)8 * r * c, std::ios::cur);
  }
  std::uint64_t count = 0;
  f.read(reinterpret_cast<char*>(&count), 8);
  for (std::uint64_t t = 0; t < count; ++t) {
    std::uint32_t i = 0, j = 0, rank = 0;
    f.read(reinterpret_cast<char*>(&i), 4);
    f.read(reinterpret_cast<char*>(&j), 4);
    f.read(reinterpret_cast<char*>(&rank), 4);
    std::int64_t bytes =
        (std::int64_t)8 * rank * (F.L.tile_rows(i) + F.L.tile_rows(j));
    f.seekg(bytes, std::ios::cur);
  }
  std::uint8_t mode = 0;
  f.read(reinterpret_cast<char*>(&mode), 1);
  f.read(reinterpret_cast<char*>(&F.eps), 8);
  if (!f) throw DataError("read_factor: missing trailer");
  F.mode = mode == 0   ? FactorMode::Cholesky
           : mode == 1 ? FactorMode::LDLT
                       : FactorMode::PivotedCholesky;
  if (F.mode == FactorMode::LDLT) {
    F.D.resize(nb);
    F.intra_perm.resize(nb);
    for (int k = 0; k < nb; ++k) {
      std::uint32_t n = 0;
      f.read(reinterpret_cast<char*>(&n), 4);
      if (!f || (int)n != F.L.tile_rows(k))
        throw DataError("read_factor: bad D block size");
      BlockDiagonal d((int)n);
      f.read(reinterpret_cast<char*>(d.d.data()), 8 * n);
      if (n > 1) f.read(reinterpret_cast<char*>(d.e.data()), 8 * (n - 1));
      f.read(reinterpret_cast<char*>(d.start2x2.data()), n);
      std::vector<std::uint32_t> p(n);
      f.read(reinterpret_cast<char*>(p.data()), 4 * n);
      if (!f) throw DataError("read_factor: truncated D block");
      F.D[k] = std::move(d);
      F.intra_perm[k].assign(p.begin(), p.end());
    }
  }
  if (F.mode == FactorMode::PivotedCholesky) {
    std::vector<std::uint32_t> p(nb);
    f.read(reinterpret_cast<char*>(p.data()), 4 * nb);
    if (!f) throw DataError("read_factor: truncated permutation");
    F.perm.assign(p.begin(), p.end());
  }
  return F;
}

}  // namespace tlr
