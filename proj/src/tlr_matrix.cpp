#include "tlr/tlr_matrix.hpp"

#include <algorithm>
#include <cassert>
#include <cstring>
#include <fstream>

#include <omp.h>

#include "tlr/ara.hpp"
#include "tlr/util.hpp"

namespace tlr {

TlrMatrix::TlrMatrix(std::int64_t n_, int b_) : n(n_), b(b_) {
  if (n < 1 || b < 1 || b > n) throw ConfigError("TlrMatrix: bad dimensions");
  nb = static_cast<int>((n + b - 1) / b);
  diag.resize(nb);
  lower.resize(static_cast<std::size_t>(nb) * (nb - 1) / 2);
  for (int i = 0; i < nb; ++i) {
    int ri = tile_rows(i);
    diag[i] = DenseTile(ri, ri);
    for (int j = 0; j < i; ++j) {
      tile(i, j).U = DenseTile(ri, 0);
      tile(i, j).V = DenseTile(tile_rows(j), 0);
    }
  }
  finalized.assign(nb, 0);
}

LowRankTile& TlrMatrix::tile(int i, int j) {
  assert(i > j && i < nb && j >= 0);
  return lower[static_cast<std::size_t>(i) * (i - 1) / 2 + j];
}

const LowRankTile& TlrMatrix::tile(int i, int j) const {
  assert(i > j && i < nb && j >= 0);
  return lower[static_cast<std::size_t>(i) * (i - 1) / 2 + j];
}

DenseTile TlrMatrix::tile_dense(int i, int j) const {
  if (i == j) return diag[i];
  if (i > j) {
    const LowRankTile& t = tile(i, j);
    return gemm(1.0, t.U, Trans::No, t.V, Trans::Yes);
  }
  return tile_dense(j, i).transposed();
}

void TlrMatrix::mark_finalized(int col) {
  if (col >= 0 && col < nb) finalized[col] = 1;
}

void TlrMatrix::check_writable(int i, int j) const {
#ifndef NDEBUG
  // Factor overwrite discipline: once a column is finalized its tiles are L.
  assert(!(j < (int)finalized.size() && finalized[j]) &&
         "write to a finalized factor column");
  (void)i;
#else
  (void)i;
  (void)j;
#endif
}

void TlrMatrix::pivot_swap(int k, int p, int finalized_cols) {
  if (k == p) return;
  if (k > p) std::swap(k, p);
  if (tile_rows(k) != tile_rows(p))
    throw ConfigError("pivot_swap: tiles of unequal size");
  std::swap(diag[k], diag[p]);
  for (int j = 0; j < finalized_cols; ++j) std::swap(tile(k, j), tile(p, j));
  for (int m = k + 1; m < p; ++m) {
    LowRankTile a = std::move(tile(m, k));   // old A(m,k)
    LowRankTile c = std::move(tile(p, m));   // old A(p,m)
    tile(m, k) = {std::move(c.V), std::move(c.U)};  // new (m,k) = A(p,m)^T
    tile(p, m) = {std::move(a.V), std::move(a.U)};  // new (p,m) = A(m,k)^T
  }
  for (int m = p + 1; m < nb; ++m) std::swap(tile(m, k), tile(m, p));
  LowRankTile& pk = tile(p, k);
  std::swap(pk.U, pk.V);  // new (p,k) = A(p,k)^T
}

namespace {

DenseTile materialize_block(const ProblemSpec& spec, std::int64_t r0, int nr,
                            std::int64_t c0, int nc) {
  DenseTile T(nr, nc);
  for (int j = 0; j < nc; ++j)
    for (int i = 0; i < nr; ++i)
      T(i, j) = kernel_entry(spec.kernel, spec.points, (int)(r0 + i), (int)(c0 + j));
  if (!T.all_finite()) throw DataError("build_tlr: non-finite kernel entry");
  return T;
}

}  // namespace

TlrMatrix build_tlr(const ProblemSpec& spec, int b, double eps,
                    Compressor compressor, const AraConfig& cfg) {
  if (eps <= 0) throw ConfigError("build_tlr: eps must be positive");
  std::int64_t n = spec.points.size();
  TlrMatrix A(n, b);
  A.eps = eps;

  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < A.nb; ++i) {
    try {
      A.diag[i] = materialize_block(spec, A.block_offset(i), A.tile_rows(i),
                                    A.block_offset(i), A.tile_rows(i));
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  struct IJ { int i, j; };
  std::vector<IJ> tiles;
  tiles.reserve(A.lower.size());
  for (int i = 1; i < A.nb; ++i)
    for (int j = 0; j < i; ++j) tiles.push_back({i, j});

#pragma omp parallel for schedule(dynamic)
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    try {
      int i = tiles[t].i, j = tiles[t].j;
      DenseTile T = materialize_block(spec, A.block_offset(i), A.tile_rows(i),
                                      A.block_offset(j), A.tile_rows(j));
      LowRankTile& out = A.tile(i, j);
      if (compressor == Compressor::SVD) {
        SvdTruncation s = svd_truncate(T, eps);
        out.U = std::move(s.U);
        out.V = std::move(s.V);
      } else {
        AraConfig c = cfg;
        c.eps = eps;
        c.max_rank = std::min(T.rows(), T.cols());
        c.seed = tile_seed(cfg.seed, 0xb11dULL, i, j);
        DenseSampler op(T);
        AraResult r = ara_single(op, c);
        out.U = std::move(r.Q);
        out.V = std::move(r.B);
      }
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return A;
}

std::vector<double> tlr_matvec_serial(const TlrMatrix& A,
                                      std::span<const double> x) {
  if ((std::int64_t)x.size() != A.n) throw DimensionError("tlr_matvec: length");
  std::vector<double> y(A.n, 0.0);
  for (int i = 0; i < A.nb; ++i) {
    int ri = A.tile_rows(i);
    DenseTile xi(ri, 1), yi(ri, 1);
    std::memcpy(xi.data(), x.data() + A.block_offset(i), sizeof(double) * ri);
    gemm(1.0, A.diag[i], Trans::No, xi, Trans::No, 0.0, yi);
    for (int r = 0; r < ri; ++r) y[A.block_offset(i) + r] += yi(r, 0);
    for (int j = 0; j < i; ++j) {
      const LowRankTile& t = A.tile(i, j);
      int rj = A.tile_rows(j);
      DenseTile xj(rj, 1);
      std::memcpy(xj.data(), x.data() + A.block_offset(j), sizeof(double) * rj);
      // y_i += U (V^T x_j)
      DenseTile w = gemm(1.0, t.V, Trans::Yes, xj, Trans::No);
      DenseTile ui = gemm(1.0, t.U, Trans::No, w, Trans::No);
      for (int r = 0; r < ri; ++r) y[A.block_offset(i) + r] += ui(r, 0);
      // y_j += V (U^T x_i)
      DenseTile w2 = gemm(1.0, t.U, Trans::Yes, xi, Trans::No);
      DenseTile vj = gemm(1.0, t.V, Trans::No, w2, Trans::No);
      for (int r = 0; r < rj; ++r) y[A.block_offset(j) + r] += vj(r, 0);
    }
  }
  return y;
}

std::vector<double> tlr_matvec(const TlrMatrix& A, std::span<const double> x) {
  if ((std::int64_t)x.size() != A.n) throw DimensionError("tlr_matvec: length");
  std::vector<double> y(A.n, 0.0);
  // Two sweeps over disjoint output blocks; summation order inside each block
  // is fixed, so the result does not depend on the thread count.
#pragma omp parallel
  {
#pragma omp for schedule(dynamic) nowait
    for (int i = 0; i < A.nb; ++i) {
      int ri = A.tile_rows(i);
      DenseTile xi(ri, 1), acc(ri, 1);
      std::memcpy(xi.data(), x.data() + A.block_offset(i), sizeof(double) * ri);
      gemm(1.0, A.diag[i], Trans::No, xi, Trans::No, 0.0, acc);
      for (int j = 0; j < i; ++j) {
        const LowRankTile& t = A.tile(i, j);
        if (t.rank() == 0) continue;
        int rj = A.tile_rows(j);
        DenseTile xj(rj, 1);
        std::memcpy(xj.data(), x.data() + A.block_offset(j), sizeof(double) * rj);
        DenseTile w = gemm(1.0, t.V, Trans::Yes, xj, Trans::No);
        gemm(1.0, t.U, Trans::No, w, Trans::No, 1.0, acc);
      }
      for (int r = 0; r < ri; ++r) y[A.block_offset(i) + r] = acc(r, 0);
    }
#pragma omp barrier
#pragma omp for schedule(dynamic)
    for (int j = 0; j < A.nb; ++j) {
      int rj = A.tile_rows(j);
      DenseTile acc(rj, 1);
      bool any = false;
      for (int i = j + 1; i < A.nb; ++i) {
        const LowRankTile& t = A.tile(i, j);
        if (t.rank() == 0) continue;
        int ri = A.tile_rows(i);
        DenseTile xi(ri, 1);
        std::memcpy(xi.data(), x.data() + A.block_offset(i), sizeof(double) * ri);
        DenseTile w = gemm(1.0, t.U, Trans::Yes, xi, Trans::No);
        gemm(1.0, t.V, Trans::No, w, Trans::No, 1.0, acc);
        any = true;
      }
      if (any)
        for (int r = 0; r < rj; ++r) y[A.block_offset(j) + r] += acc(r, 0);
    }
  }
  return y;
}

MemoryReport memory_report(const TlrMatrix& A) {
  MemoryReport r;
  r.rank_heatmap.assign(static_cast<std::size_t>(A.nb) * A.nb, 0);
  int max_rank = 0;
  for (int i = 0; i < A.nb; ++i) {
    r.dense_bytes += A.diag[i].size() * sizeof(double);
    r.rank_heatmap[static_cast<std::size_t>(i) * A.nb + i] = A.tile_rows(i);
    for (int j = 0; j < i; ++j) {
      const LowRankTile& t = A.tile(i, j);
      r.low_rank_bytes += (t.U.size() + t.V.size()) * sizeof(double);
      r.rank_heatmap[static_cast<std::size_t>(i) * A.nb + j] = t.rank();
      r.rank_heatmap[static_cast<std::size_t>(j) * A.nb + i] = t.rank();
      max_rank = std::max(max_rank, t.rank());
    }
  }
  r.total_bytes = r.dense_bytes + r.low_rank_bytes;
  r.rank_histogram.assign(max_rank + 1, 0);
  for (int i = 1; i < A.nb; ++i)
    for (int j = 0; j < i; ++j) r.rank_histogram[A.rank(i, j)]++;
  return r;
}

namespace {

void write_tile_payload(std::ofstream& f, const DenseTile& t) {
  std::uint32_t rows = t.rows(), cols = t.cols();
  f.write(reinterpret_cast<const char*>(&rows), 4);
  f.write(reinterpret_cast<const char*>(&cols), 4);
  f.write(reinterpret_cast<const char*>(t.data()), sizeof(double) * t.size());
}

DenseTile read_tile_payload(std::ifstream& f) {
  std::uint32_t rows = 0, cols = 0;
  f.read(reinterpret_cast<char*>(&rows), 4);
  f.read(reinterpret_cast<char*>(&cols), 4);
  if (!f) throw DataError("read_tlr: truncated tile header");
  DenseTile t(rows, cols);
  f.read(reinterpret_cast<char*>(t.data()), sizeof(double) * t.size());
  if (!f) throw DataError("read_tlr: truncated tile payload");
  return t;
}

}  // namespace

void write_tlr(const TlrMatrix& A, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("write_tlr: cannot open " + path);
  std::uint32_t version = 1, b = A.b;
  std::uint64_t n = A.n;
  f.write("TLRM", 4);
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&n), 8);
  f.write(reinterpret_cast<const char*>(&b), 4);
  f.write(reinterpret_cast<const char*>(&A.eps), 8);
  for (int i = 0; i < A.nb; ++i) write_tile_payload(f, A.diag[i]);
  std::uint64_t count = A.lower.size();
  f.write(reinterpret_cast<const char*>(&count), 8);
  for (int i = 1; i < A.nb; ++i)
    for (int j = 0; j < i; ++j) {
      const LowRankTile& t = A.tile(i, j);
      std::uint32_t ii = i, jj = j, rank = t.rank();
      f.write(reinterpret_cast<const char*>(&ii), 4);
      f.write(reinterpret_cast<const char*>(&jj), 4);
      f.write(reinterpret_cast<const char*>(&rank), 4);
      f.write(reinterpret_cast<const char*>(t.U.data()), sizeof(double) * t.U.size());
      f.write(reinterpret_cast<const char*>(t.V.data()), sizeof(double) * t.V.size());
    }
  if (!f) throw DataError("write_tlr: write failed");
}

TlrMatrix read_tlr(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("read_tlr: cannot open " + path);
  char magic[4];
  std::uint32_t version = 0, b = 0;
  std::uint64_t n = 0;
  double eps = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&n), 8);
  f.read(reinterpret_cast<char*>(&b), 4);
  f.read(reinterpret_cast<char*>(&eps), 8);
  if (!f || std::memcmp(magic, "TLRM", 4) != 0)
    throw DataError("read_tlr: bad magic");
  if (version != 1) throw DataError("read_tlr: unsupported version");
  TlrMatrix A(static_cast<std::int64_t>(n), static_cast<int>(b));
  A.eps = eps;
  for (int i = 0; i < A.nb; ++i) {
    DenseTile t = read_tile_payload(f);
    if (t.rows() != A.tile_rows(i) || t.cols() != A.tile_rows(i))
      throw DataError("read_tlr: diagonal tile shape mismatch");
    A.diag[i] = std::move(t);
  }
  std::uint64_t count = 0;
  f.read(reinterpret_cast<char*>(&count), 8);
  if (!f || count != A.lower.size()) throw DataError("read_tlr: bad tile count");
  for (std::uint64_t t = 0; t < count; ++t) {
    std::uint32_t i = 0, j = 0, rank = 0;
    f.read(reinterpret_cast<char*>(&i), 4);
    f.read(reinterpret_cast<char*>(&j), 4);
    f.read(reinterpret_cast<char*>(&rank), 4);
    if (!f || i >= (std::uint32_t)A.nb || j >= i)
      throw DataError("read_tlr: bad tile index");
    LowRankTile& lt = A.tile(i, j);
    lt.U = DenseTile(A.tile_rows(i), rank);
    lt.V = DenseTile(A.tile_rows(j), rank);
    f.read(reinterpret_cast<char*>(lt.U.data()), sizeof(double) * lt.U.size());
    f.read(reinterpret_cast<char*>(lt.V.data()), sizeof(double) * lt.V.size());
    if (!f) throw DataError("read_tlr: truncated tile payload");
  }
  return A;
}

}  // namespace tlr
