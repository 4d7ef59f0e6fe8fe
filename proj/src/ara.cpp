#include "tlr/ara.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <omp.h>

#include "tlr/stats.hpp"
#include "tlr/tlr_matrix.hpp"
#include "tlr/util.hpp"

namespace tlr {

int AraWorkspace::resolved_subset() const {
  return subset_capacity > 0 ? subset_capacity : 2 * omp_get_max_threads();
}

std::uint64_t ara_column_seed(std::uint64_t root, int i, int k) {
  return tile_seed(root, 0xfac7ULL, (std::uint64_t)i, (std::uint64_t)k);
}

namespace {

// W += U(i,j) (V(i,j)^T (D_j (V(k,j) (U(k,j)^T X))))
void chain_apply(const TlrMatrix& m, const BlockDiagonal* dj, int i, int k,
                 int j, const DenseTile& x, DenseTile& w) {
  const LowRankTile& lkj = m.tile(k, j);
  const LowRankTile& lij = m.tile(i, j);
  if (lkj.rank() == 0 || lij.rank() == 0) return;
  DenseTile t1 = gemm(1.0, lkj.U, Trans::Yes, x, Trans::No);
  DenseTile t2 = gemm(1.0, lkj.V, Trans::No, t1, Trans::No);
  if (dj) dj->apply(t2);
  DenseTile t3 = gemm(1.0, lij.V, Trans::Yes, t2, Trans::No);
  gemm(1.0, lij.U, Trans::No, t3, Trans::No, 1.0, w);
}

// W += U(k,j) (V(k,j)^T (D_j (V(i,j) (U(i,j)^T X))))
void chain_apply_transpose(const TlrMatrix& m, const BlockDiagonal* dj, int i,
                           int k, int j, const DenseTile& x, DenseTile& w) {
  const LowRankTile& lkj = m.tile(k, j);
  const LowRankTile& lij = m.tile(i, j);
  if (lkj.rank() == 0 || lij.rank() == 0) return;
  DenseTile t1 = gemm(1.0, lij.U, Trans::Yes, x, Trans::No);
  DenseTile t2 = gemm(1.0, lij.V, Trans::No, t1, Trans::No);
  if (dj) dj->apply(t2);
  DenseTile t3 = gemm(1.0, lkj.V, Trans::Yes, t2, Trans::No);
  gemm(1.0, lkj.U, Trans::No, t3, Trans::No, 1.0, w);
}

// Column tile A(i,k) of the in-progress matrix, applied via its factors.
DenseTile column_sample(const TlrMatrix& m, int i, int k, const DenseTile& x,
                        bool transpose) {
  const LowRankTile& t = m.tile(i, k);
  if (!transpose) {
    DenseTile w = gemm(1.0, t.V, Trans::Yes, x, Trans::No);
    return gemm(1.0, t.U, Trans::No, w, Trans::No);
  }
  DenseTile w = gemm(1.0, t.U, Trans::Yes, x, Trans::No);
  return gemm(1.0, t.V, Trans::No, w, Trans::No);
}

const BlockDiagonal* dblock(const std::vector<BlockDiagonal>* d, int j) {
  return d ? &(*d)[j] : nullptr;
}

// Fixed pairwise reduction so the grouping of partial sums never depends on
// thread timing.
DenseTile tree_reduce(std::vector<DenseTile>& bufs) {
  int m = static_cast<int>(bufs.size());
  for (int s = 1; s < m; s *= 2)
    for (int i = 0; i + s < m; i += 2 * s) bufs[i].add(bufs[i + s]);
  return std::move(bufs[0]);
}

struct EvalTimes {
  double items = 0.0;
  double reduce = 0.0;
};

// Shared buffered evaluator for sample_left / sample_left_transpose and the
// batched update. inputs[t] is Omega (apply) or Q (transpose) for tile
// row_idx[t]; pb buffers per tile slice the j < k update range.
std::vector<DenseTile> buffered_eval(const TlrMatrix& m,
                                     const std::vector<BlockDiagonal>* d, int k,
                                     const std::vector<int>& row_idx,
                                     const std::vector<DenseTile>& inputs,
                                     int pb, SampleMode mode, bool transpose,
                                     EvalTimes* times) {
  int nt = static_cast<int>(row_idx.size());
  const std::vector<BlockDiagonal>* dd = mode == SampleMode::LDL ? d : nullptr;

  struct Item {
    int t;      // tile index in row_idx
    int chunk;  // -1 = column sample
    int j0, j1;
  };
  std::vector<Item> items;
  int nch = k > 0 ? std::min(pb, k) : 0;
  int len = nch > 0 ? (k + nch - 1) / nch : 0;
  std::vector<std::vector<DenseTile>> bufs(nt);
  for (int t = 0; t < nt; ++t) {
    items.push_back({t, -1, 0, 0});
    for (int c = 0; c < nch; ++c) {
      int j0 = c * len, j1 = std::min(k, (c + 1) * len);
      if (j0 >= j1) break;
      items.push_back({t, c, j0, j1});
      bufs[t].emplace_back();
    }
  }
  std::vector<DenseTile> col(nt);

  double t0 = omp_get_wtime();
#pragma omp parallel for schedule(dynamic)
  for (std::size_t it = 0; it < items.size(); ++it) {
    const Item& item = items[it];
    int i = row_idx[item.t];
    const DenseTile& x = inputs[item.t];
    if (item.chunk < 0) {
      col[item.t] = column_sample(m, i, k, x, transpose);
    } else {
      int rows = transpose ? m.tile_rows(k) : m.tile_rows(i);
      DenseTile w(rows, x.cols());
      for (int j = item.j0; j < item.j1; ++j) {
        if (transpose)
          chain_apply_transpose(m, dblock(dd, j), i, k, j, x, w);
        else
          chain_apply(m, dblock(dd, j), i, k, j, x, w);
      }
      bufs[item.t][item.chunk] = std::move(w);
    }
  }
  double t1 = omp_get_wtime();

  std::vector<DenseTile> out(nt);
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < nt; ++t) {
    DenseTile y = std::move(col[t]);
    if (!bufs[t].empty()) {
      DenseTile s = tree_reduce(bufs[t]);
      y.add(s, -1.0);
    }
    out[t] = std::move(y);
  }
  double t2 = omp_get_wtime();
  if (times) {
    times->items += t1 - t0;
    times->reduce += t2 - t1;
  }
  return out;
}

// One tile's adaptive compression state, shared by the single-tile and
// batched drivers so both draw identical sample sequences.
struct TileState {
  DenseTile Q;
  Rng rng;
  std::deque<double> recent;
  int bs, window, max_rank;
  double eps, eta;
  bool converged = false;
  int rounds = 0;

  TileState(int rows, const AraConfig& cfg, int cap)
      : Q(rows, 0), rng(cfg.seed), bs(cfg.block_samples),
        window(cfg.window > 0 ? cfg.window : cfg.block_samples), max_rank(cap),
        eps(cfg.eps), eta(cfg.safety) {}

  DenseTile draw(int cols_op) { return DenseTile::gaussian(cols_op, bs, rng); }

  void absorb(DenseTile&& y) {
    ++rounds;
    OrthogResult o = orthog(Q, y, rng);
    for (double nu : o.col_norms) {
      recent.push_back(nu);
      if ((int)recent.size() > window) recent.pop_front();
    }
    // Keep only columns that add mass above the threshold.
    std::vector<int> keep;
    int room = max_rank - Q.cols();
    for (int j = 0; j < (int)o.new_mass.size() && (int)keep.size() < room; ++j)
      if (o.new_mass[j] * eta > eps) keep.push_back(j);
    if (!keep.empty()) {
      DenseTile panel(y.rows(), (int)keep.size());
      for (int c = 0; c < (int)keep.size(); ++c)
        for (int r = 0; r < y.rows(); ++r) panel(r, c) = y(r, keep[c]);
      Q.append_columns(panel);
    }
    double e = 0.0;
    for (double nu : recent) e = std::max(e, nu);
    converged = e * eta <= eps;
  }

  bool done() const { return converged || Q.cols() >= max_rank; }
};

// Rank-minimizing recompression in the small factor space: with the sampled
// basis slightly overshooting the target rank, the k x k core is truncated at
// the remaining error budget. Q keeps orthonormal columns; the singular-value
// scaling lands on the B side.
void recompress_pair(DenseTile& Q, DenseTile& B, double cut, Rng& rng) {
  int k = Q.cols();
  if (k == 0 || cut <= 0.0) return;
  DenseTile Z = B;
  OrthogResult qr = orthog(DenseTile(), Z, rng);  // B = Z R
  // Q B^T = Q core Z^T with core = R^T; svd_truncate of core^T keeps the
  // orthonormal side separate from the scaled side.
  SvdTruncation s = svd_truncate(qr.R, cut);
  Q = gemm(1.0, Q, Trans::No, s.V, Trans::No);
  B = gemm(1.0, Z, Trans::No, s.U, Trans::No);
}

}  // namespace

int LeftLookingSampler::rows() const { return m_.tile_rows(i_); }
int LeftLookingSampler::cols() const { return m_.tile_rows(k_); }

DenseTile LeftLookingSampler::apply(const DenseTile& omega) const {
  DenseTile y = column_sample(m_, i_, k_, omega, false);
  if (k_ > 0) {
    DenseTile w(y.rows(), y.cols());
    for (int j = 0; j < k_; ++j)
      chain_apply(m_, mode_ == SampleMode::LDL ? dblock(d_, j) : nullptr, i_,
                  k_, j, omega, w);
    y.add(w, -1.0);
  }
  return y;
}

DenseTile LeftLookingSampler::apply_transpose(const DenseTile& q) const {
  DenseTile y = column_sample(m_, i_, k_, q, true);
  if (k_ > 0) {
    DenseTile w(y.rows(), y.cols());
    for (int j = 0; j < k_; ++j)
      chain_apply_transpose(m_, mode_ == SampleMode::LDL ? dblock(d_, j) : nullptr,
                            i_, k_, j, q, w);
    y.add(w, -1.0);
  }
  return y;
}

bool convergence_test(const DenseTile& R, double eps, int window, double eta) {
  int k = R.cols();
  int first = std::max(0, k - window);
  double e = 0.0;
  for (int j = first; j < k; ++j) {
    double s = 0.0;
    for (int i = 0; i <= j && i < R.rows(); ++i) s += R(i, j) * R(i, j);
    e = std::max(e, std::sqrt(s));
  }
  return e * eta <= eps;
}

AraResult ara_single(const SamplerExpr& op, const AraConfig& cfg) {
  if (cfg.eps <= 0) throw ConfigError("ara_single: eps must be positive");
  if (cfg.block_samples < 1) throw ConfigError("ara_single: bs must be >= 1");
  int cap = cfg.max_rank > 0 ? cfg.max_rank : std::min(op.rows(), op.cols());
  AraConfig c = cfg;
  TileState st(op.rows(), c, cap);
  while (!st.done()) {
    DenseTile omega = st.draw(op.cols());
    st.absorb(op.apply(omega));
  }
  AraResult r;
  r.converged = st.converged;
  r.rounds = st.rounds;
  r.B = op.apply_transpose(st.Q);
  r.Q = std::move(st.Q);
  if (cfg.recompress)
    recompress_pair(r.Q, r.B, (1.0 - 1.0 / cfg.safety) * cfg.eps, st.rng);
  r.rank = r.Q.cols();
  return r;
}

std::vector<DenseTile> sample_left(const TlrMatrix& m,
                                   const std::vector<BlockDiagonal>* d, int k,
                                   const std::vector<int>& row_idx,
                                   const AraWorkspace& ws,
                                   const std::vector<DenseTile>& omega,
                                   SampleMode mode) {
  if (row_idx.empty()) return {};
  int pb = ws.parallel_buffers / static_cast<int>(row_idx.size());
  if (pb < 1)
    throw ConfigError("sample_left: workspace smaller than one buffer per tile");
  return buffered_eval(m, d, k, row_idx, omega, pb, mode, false, nullptr);
}

std::vector<DenseTile> sample_left_transpose(const TlrMatrix& m,
                                             const std::vector<BlockDiagonal>* d,
                                             int k,
                                             const std::vector<int>& row_idx,
                                             const AraWorkspace& ws,
                                             const std::vector<DenseTile>& q,
                                             SampleMode mode) {
  if (row_idx.empty()) return {};
  int pb = ws.parallel_buffers / static_cast<int>(row_idx.size());
  if (pb < 1)
    throw ConfigError("sample_left: workspace smaller than one buffer per tile");
  return buffered_eval(m, d, k, row_idx, q, pb, mode, true, nullptr);
}

std::vector<TileApprox> chol_ara_update(const TlrMatrix& m,
                                        const std::vector<BlockDiagonal>* d,
                                        int k, const AraConfig& cfg,
                                        const AraWorkspace& ws, SampleMode mode,
                                        FactorStats* stats) {
  int nb = m.nb;
  std::vector<int> order;
  for (int i = k + 1; i < nb; ++i) order.push_back(i);
  if (order.empty()) return {};

  // Large stored ranks first: they tend to stay large in the factor.
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    int ra = m.rank(a, k), rb = m.rank(b, k);
    if (ra != rb) return ra > rb;
    return a < b;
  });

  int capacity = std::min({ws.resolved_subset(), (int)order.size(),
                           std::max(1, ws.parallel_buffers)});
  capacity = std::max(capacity, 1);

  std::vector<std::unique_ptr<TileState>> states(nb);
  std::vector<TileApprox> out;
  out.reserve(order.size());
  std::vector<TileApprox> results(nb);

  // Structurally zero expressions never enter the subset.
  std::vector<int> queue;
  int rk = m.tile_rows(k);
  for (int i : order) {
    bool zero = m.rank(i, k) == 0;
    if (zero)
      for (int j = 0; j < k && zero; ++j)
        if (m.rank(i, j) > 0 && m.rank(k, j) > 0) zero = false;
    if (zero) {
      results[i] = {i, DenseTile(m.tile_rows(i), 0), DenseTile(rk, 0), true, 0};
      continue;
    }
    AraConfig c = cfg;
    c.seed = ara_column_seed(cfg.seed, i, k);
    states[i] = std::make_unique<TileState>(
        m.tile_rows(i), c, std::min(m.tile_rows(i), rk));
    queue.push_back(i);
  }

  std::vector<int> resident(queue.begin(),
                            queue.begin() + std::min<std::size_t>(capacity, queue.size()));
  std::size_t next = resident.size();

  EvalTimes sample_times, project_times;
  double t_orthog = 0.0, t_misc = 0.0;

  while (!resident.empty()) {
    int nri = static_cast<int>(resident.size());
    int pb = std::max(1, ws.parallel_buffers / nri);

    double t0 = omp_get_wtime();
    std::vector<DenseTile> omegas(nri);
    for (int t = 0; t < nri; ++t) omegas[t] = states[resident[t]]->draw(rk);
    t_misc += omp_get_wtime() - t0;

    std::vector<DenseTile> ys =
        buffered_eval(m, d, k, resident, omegas, pb, mode, false, &sample_times);

    t0 = omp_get_wtime();
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < nri; ++t)
      states[resident[t]]->absorb(std::move(ys[t]));
    t_orthog += omp_get_wtime() - t0;

    std::vector<int> exited, stay;
    for (int i : resident) {
      if (states[i]->done())
        exited.push_back(i);
      else
        stay.push_back(i);
    }

    if (!exited.empty()) {
      // Project exiting tiles into their bases.
      std::vector<DenseTile> qs;
      qs.reserve(exited.size());
      for (int i : exited) qs.push_back(states[i]->Q);
      int pb2 = std::max(1, ws.parallel_buffers / (int)exited.size());
      std::vector<DenseTile> bs =
          buffered_eval(m, d, k, exited, qs, pb2, mode, true, &project_times);
      for (std::size_t t = 0; t < exited.size(); ++t) {
        int i = exited[t];
        DenseTile q = std::move(states[i]->Q);
        DenseTile b = std::move(bs[t]);
        if (cfg.recompress)
          recompress_pair(q, b, (1.0 - 1.0 / cfg.safety) * cfg.eps,
                          states[i]->rng);
        results[i] = {i, std::move(q), std::move(b), states[i]->converged,
                      states[i]->rounds};
        states[i].reset();
      }
    }

    resident = std::move(stay);
    while ((int)resident.size() < capacity && next < queue.size())
      resident.push_back(queue[next++]);
  }

  if (stats) {
    stats->t_sampling += sample_times.items;
    stats->t_reduction += sample_times.reduce + project_times.reduce;
    stats->t_projection += project_times.items;
    stats->t_orthog += t_orthog;
    stats->t_misc += t_misc;
  }

  for (int i = k + 1; i < nb; ++i) {
    if (stats) stats->tile_rounds_resident += results[i].rounds_resident;
    out.push_back(std::move(results[i]));
  }
  return out;
}

}  // namespace tlr
