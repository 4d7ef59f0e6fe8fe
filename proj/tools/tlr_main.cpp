// Command line driver: generate | build | factor | solve | bench.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "tlr/factor.hpp"
#include "tlr/solve.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SharedFlags {
  std::string out = ".";
  std::uint64_t seed = 0;
  int threads = 0;
  double eps = 1e-6;
  int tile = 512;
  int bs = 32;
  int buffers = 64;
  int dense_buffers = 20;
  int subset = 0;
};

void add_shared(CLI::App* cmd, SharedFlags& f) {
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--threads", f.threads, "worker thread cap (0 = default)");
  cmd->add_option("--eps", f.eps, "absolute 2-norm compression threshold");
  cmd->add_option("--tile", f.tile, "tile size");
  cmd->add_option("--bs", f.bs, "ARA block samples");
  cmd->add_option("--buffers", f.buffers, "parallel sampling buffers");
  cmd->add_option("--dense-buffers", f.dense_buffers, "dense update buffers");
  cmd->add_option("--subset", f.subset, "ARA subset capacity (0 = 2x threads)");
}

tlr::AraConfig ara_config(const SharedFlags& f) {
  tlr::AraConfig cfg;
  cfg.block_samples = f.bs;
  cfg.eps = f.eps;
  cfg.seed = f.seed;
  return cfg;
}

tlr::AraWorkspace ara_workspace(const SharedFlags& f) {
  tlr::AraWorkspace ws;
  ws.parallel_buffers = f.buffers;
  ws.dense_buffers = f.dense_buffers;
  ws.subset_capacity = f.subset;
  return ws;
}

void apply_threads(const SharedFlags& f) {
  if (f.threads > 0) omp_set_num_threads(f.threads);
}

tlr::KernelKind parse_kernel(const std::string& s) {
  if (s == "exp") return tlr::KernelKind::IsotropicExponential;
  if (s == "sqexp") return tlr::KernelKind::SquaredExponential;
  throw tlr::ConfigError("unknown kernel: " + s);
}

tlr::PointKind parse_kind(const std::string& s) {
  if (s == "grid2d") return tlr::PointKind::Grid2D;
  if (s == "grid3d") return tlr::PointKind::Grid3D;
  if (s == "ball3d") return tlr::PointKind::RandomBall3D;
  throw tlr::ConfigError("unknown point kind: " + s);
}

tlr::ProblemSpec load_problem(const SharedFlags& f) {
  fs::path dir(f.out);
  std::ifstream jf(dir / "problem.json");
  if (!jf) throw tlr::DataError("missing problem.json in " + f.out);
  json j;
  jf >> j;
  tlr::ProblemSpec spec;
  spec.points = tlr::read_points((dir / "points.tlrp").string());
  spec.kernel.kind = parse_kernel(j.at("kernel").at("kind").get<std::string>());
  spec.kernel.correlation_length = j.at("kernel").at("ell").get<double>();
  spec.kernel.nugget = j.at("kernel").at("nugget").get<double>();
  return spec;
}

void write_vector(const std::string& path, const std::vector<double>& v) {
  std::ofstream f(path, std::ios::binary);
  std::uint64_t n = v.size();
  f.write("TLRV", 4);
  f.write(reinterpret_cast<const char*>(&n), 8);
  f.write(reinterpret_cast<const char*>(v.data()), 8 * n);
  if (!f) throw tlr::DataError("cannot write " + path);
}

int cmd_generate(const SharedFlags& f, const std::string& kind,
                 const std::string& kernel, int n, double ell, double nugget) {
  apply_threads(f);
  fs::create_directories(f.out);
  tlr::PointSet ps = tlr::generate_points(parse_kind(kind), n, f.seed);
  ps = tlr::kd_order(std::move(ps), f.tile);
  fs::path dir(f.out);
  tlr::write_points(ps, (dir / "points.tlrp").string());
  json j = {{"kind", kind},
            {"n", n},
            {"dim", ps.dim},
            {"seed", f.seed},
            {"tile", f.tile},
            {"ordering", "kdtree"},
            {"kernel", {{"kind", kernel}, {"ell", ell}, {"nugget", nugget}}}};
  std::ofstream jf(dir / "problem.json");
  jf << j.dump(2) << "\n";
  if (!jf) throw tlr::DataError("cannot write problem.json");
  std::printf("generated %d points (dim %d) in %s\n", ps.size(), ps.dim,
              f.out.c_str());
  return 0;
}

int cmd_build(const SharedFlags& f, const std::string& compressor) {
  apply_threads(f);
  if (compressor != "svd" && compressor != "ara")
    throw tlr::ConfigError("unknown compressor: " + compressor);
  tlr::Compressor comp =
      compressor == "svd" ? tlr::Compressor::SVD : tlr::Compressor::ARA;
  tlr::ProblemSpec spec = load_problem(f);
  tlr::TlrMatrix A = tlr::build_tlr(spec, f.tile, f.eps, comp, ara_config(f));
  fs::path dir(f.out);
  tlr::write_tlr(A, (dir / "matrix.tlrm").string());

  tlr::MemoryReport mr = tlr::memory_report(A);
  {
    std::ofstream c(dir / "memory.csv");
    c << "n,b,eps,total_bytes,dense_bytes,lowrank_bytes\n";
    c << A.n << "," << A.b << "," << A.eps << "," << mr.total_bytes << ","
      << mr.dense_bytes << "," << mr.low_rank_bytes << "\n";
  }
  {
    std::ofstream c(dir / "ranks.csv");
    c << "i,j,rank\n";
    for (int i = 0; i < A.nb; ++i)
      for (int j = 0; j < A.nb; ++j)
        c << i << "," << j << "," << mr.rank_heatmap[(std::size_t)i * A.nb + j]
          << "\n";
  }
  {
    std::ofstream c(dir / "rank_hist.csv");
    c << "rank,count\n";
    for (std::size_t r = 0; r < mr.rank_histogram.size(); ++r)
      if (mr.rank_histogram[r] > 0) c << r << "," << mr.rank_histogram[r] << "\n";
  }
  std::printf("built %lld x %lld TLR matrix, tile %d, %.3f MB total\n",
              (long long)A.n, (long long)A.n, A.b, mr.total_bytes / 1.0e6);
  return 0;
}

int cmd_factor(const SharedFlags& f, const std::string& mode,
               const std::string& pivot_norm, const std::string& compensation,
               double diag_shift, int power_iters) {
  apply_threads(f);
  if (mode != "chol" && mode != "pivchol" && mode != "ldl")
    throw tlr::ConfigError("unknown mode: " + mode);
  if (pivot_norm != "frob" && pivot_norm != "power")
    throw tlr::ConfigError("unknown pivot norm: " + pivot_norm);
  if (compensation != "on" && compensation != "off")
    throw tlr::ConfigError("unknown compensation setting: " + compensation);
  fs::path dir(f.out);
  tlr::TlrMatrix A = tlr::read_tlr((dir / "matrix.tlrm").string());
  tlr::AraConfig cfg = ara_config(f);
  cfg.eps = f.eps;
  tlr::AraWorkspace ws = ara_workspace(f);
  tlr::FactorOptions opts;
  opts.diag_shift = diag_shift;
  opts.schur_compensation = compensation != "off";
  opts.pivot_norm = pivot_norm == "power" ? tlr::PivotNorm::TwoNormPower
                                          : tlr::PivotNorm::Frobenius;

  tlr::TlrFactor F;
  // The factorization consumes the matrix; keep a copy for the residual.
  tlr::TlrMatrix Acopy = A;
  if (mode == "chol")
    F = tlr::tlr_cholesky(std::move(A), cfg, ws, opts);
  else if (mode == "pivchol")
    F = tlr::tlr_cholesky_pivoted(std::move(A), cfg, ws, opts);
  else if (mode == "ldl")
    F = tlr::tlr_ldlt(std::move(A), cfg, ws, opts);
  else
    throw tlr::ConfigError("unknown mode: " + mode);

  tlr::write_factor(F, (dir / "factor.tlrf").string());
  {
    std::ofstream c(dir / "phases.csv");
    c << "phase,seconds\n";
    c << "sampling," << F.stats.t_sampling << "\n";
    c << "projection," << F.stats.t_projection << "\n";
    c << "reduction," << F.stats.t_reduction << "\n";
    c << "dense," << F.stats.t_dense << "\n";
    c << "orthog," << F.stats.t_orthog << "\n";
    c << "misc," << F.stats.t_misc << "\n";
    c << "pivot_select," << F.stats.t_pivot_select << "\n";
    c << "wall," << F.stats.wall << "\n";
  }
  double resid = tlr::estimate_2norm_diff(Acopy, F, power_iters, f.seed);
  {
    std::ofstream r(dir / "residual.txt");
    r << std::scientific << resid << "\n";
  }
  if (!F.perm.empty()) {
    std::ofstream c(dir / "pivots.csv");
    c << "k,tile\n";
    for (int k = 0; k < (int)F.perm.size(); ++k)
      c << k << "," << F.perm[k] << "\n";
  }
  std::printf("factored (%s), residual estimate %.3e, wall %.2fs\n",
              mode.c_str(), resid, F.stats.wall);
  return 0;
}

int cmd_solve(const SharedFlags& f, const std::string& rhs, double tol,
              int maxiter) {
  apply_threads(f);
  fs::path dir(f.out);
  tlr::TlrMatrix A = tlr::read_tlr((dir / "matrix.tlrm").string());
  tlr::TlrFactor F = tlr::read_factor((dir / "factor.tlrf").string());

  std::vector<double> b(A.n, 1.0);
  if (rhs.rfind("random", 0) == 0) {
    std::uint64_t s = f.seed;
    auto colon = rhs.find(':');
    if (colon != std::string::npos) s = std::stoull(rhs.substr(colon + 1));
    tlr::Rng rng(tlr::mix64(s ^ 0x5eedULL));
    for (double& v : b) v = rng.gaussian();
  } else if (rhs != "ones") {
    throw tlr::ConfigError("unknown rhs: " + rhs);
  }

  auto [x, rep] = tlr::pcg(A, &F, b, tol, maxiter);
  {
    std::ofstream c(dir / "cg.csv");
    c << "iter,rel_residual\n";
    for (std::size_t i = 0; i < rep.rel_residual.size(); ++i)
      c << i << "," << std::scientific << rep.rel_residual[i] << "\n";
  }
  write_vector((dir / "x.tlrv").string(), x);
  std::printf("pcg: %d iterations, converged=%d, final residual %.3e\n",
              rep.iterations, rep.converged ? 1 : 0, rep.rel_residual.back());
  return 0;
}

int cmd_bench(const SharedFlags& f, int n) {
  apply_threads(f);
  fs::create_directories(f.out);
  tlr::ProblemSpec spec;
  spec.points = tlr::kd_order(
      tlr::generate_points(tlr::PointKind::Grid3D, n, f.seed), f.tile);
  spec.kernel = {tlr::KernelKind::IsotropicExponential, 0.2, 0.0};

  double t0 = omp_get_wtime();
  tlr::TlrMatrix A = tlr::build_tlr(spec, f.tile, f.eps, tlr::Compressor::ARA,
                                    ara_config(f));
  double t_build = omp_get_wtime() - t0;

  std::vector<double> x(A.n);
  tlr::Rng rng(f.seed + 1);
  for (double& v : x) v = rng.gaussian();

  const int reps = 5;
  t0 = omp_get_wtime();
  std::vector<double> y1;
  for (int r = 0; r < reps; ++r) y1 = tlr::tlr_matvec(A, x);
  double t_par = (omp_get_wtime() - t0) / reps;
  t0 = omp_get_wtime();
  std::vector<double> y2;
  for (int r = 0; r < reps; ++r) y2 = tlr::tlr_matvec_serial(A, x);
  double t_ser = (omp_get_wtime() - t0) / reps;
  double diff = 0, ref = 0;
  for (std::size_t i = 0; i < y1.size(); ++i) {
    diff = std::max(diff, std::fabs(y1[i] - y2[i]));
    ref = std::max(ref, std::fabs(y2[i]));
  }

  t0 = omp_get_wtime();
  tlr::TlrFactor F = tlr::tlr_cholesky(std::move(A), ara_config(f),
                                       ara_workspace(f));
  double t_tlr_chol = omp_get_wtime() - t0;

  // Dense serial reference at the same size (only at desk scale).
  double t_dense_chol = -1.0;
  if (n <= 8192) {
    tlr::DenseTile Ad(spec.points.size(), spec.points.size());
    for (int j = 0; j < Ad.cols(); ++j)
      for (int i = 0; i < Ad.rows(); ++i)
        Ad(i, j) = tlr::kernel_entry(spec.kernel, spec.points, i, j);
    t0 = omp_get_wtime();
    auto ref_chol = tlr::dense_tiled_cholesky_reference(Ad, f.tile);
    t_dense_chol = omp_get_wtime() - t0;
    if (!ref_chol.ok()) std::printf("dense reference failed at %d\n", ref_chol.fail);
  }

  std::ofstream c(fs::path(f.out) / "bench.csv");
  c << "kernel,impl,seconds\n";
  c << "build,omp," << t_build << "\n";
  c << "matvec,omp," << t_par << "\n";
  c << "matvec,serial," << t_ser << "\n";
  c << "cholesky,tlr_omp," << t_tlr_chol << "\n";
  if (t_dense_chol >= 0) c << "cholesky,dense_serial," << t_dense_chol << "\n";

  std::printf("n=%lld tile=%d threads=%d\n", (long long)spec.points.size(),
              f.tile, omp_get_max_threads());
  std::printf("  build (ARA, omp)        %8.3fs\n", t_build);
  std::printf("  matvec omp              %8.4fs\n", t_par);
  std::printf("  matvec serial           %8.4fs  (max diff %.2e)\n", t_ser,
              diff / (ref > 0 ? ref : 1.0));
  std::printf("  TLR Cholesky (omp)      %8.3fs\n", t_tlr_chol);
  if (t_dense_chol >= 0)
    std::printf("  dense Cholesky (serial) %8.3fs\n", t_dense_chol);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive-rank tile low rank symmetric factorizations"};
  app.require_subcommand(1);

  SharedFlags f;
  std::string kind = "grid2d", kernel = "exp", compressor = "ara";
  std::string mode = "chol", pivot_norm = "frob", compensation = "on";
  std::string rhs = "ones";
  int n = 0;
  double ell = 0.1, nugget = 0.0, diag_shift = 0.0, tol = 1e-6;
  int maxiter = 300, power_iters = 50;

  CLI::App* g = app.add_subcommand("generate", "generate an ordered point set");
  add_shared(g, f);
  g->add_option("--kind", kind, "grid2d | grid3d | ball3d");
  g->add_option("--n", n, "number of points")->required();
  g->add_option("--kernel", kernel, "exp | sqexp");
  g->add_option("--ell", ell, "correlation length");
  g->add_option("--nugget", nugget, "diagonal nugget");

  CLI::App* b = app.add_subcommand("build", "build the TLR matrix");
  add_shared(b, f);
  b->add_option("--compressor", compressor, "ara | svd");

  CLI::App* fa = app.add_subcommand("factor", "factor a TLR matrix");
  add_shared(fa, f);
  fa->add_option("--mode", mode, "chol | pivchol | ldl");
  fa->add_option("--pivot-norm", pivot_norm, "frob | power");
  fa->add_option("--compensation", compensation, "on | off");
  fa->add_option("--diag-shift", diag_shift, "diagonal shift added to A");
  fa->add_option("--power-iters", power_iters, "residual power iterations");

  CLI::App* s = app.add_subcommand("solve", "preconditioned CG solve");
  add_shared(s, f);
  s->add_option("--rhs", rhs, "ones | random:SEED");
  s->add_option("--tol", tol, "relative residual tolerance");
  s->add_option("--maxiter", maxiter, "CG iteration cap");

  CLI::App* be = app.add_subcommand("bench", "compare OpenMP and serial kernels");
  add_shared(be, f);
  be->add_option("--n", n, "problem size")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (g->parsed()) return cmd_generate(f, kind, kernel, n, ell, nugget);
    if (b->parsed()) return cmd_build(f, compressor);
    if (fa->parsed())
      return cmd_factor(f, mode, pivot_norm, compensation, diag_shift,
                        power_iters);
    if (s->parsed()) return cmd_solve(f, rhs, tol, maxiter);
    if (be->parsed()) return cmd_bench(f, n);
  } catch (const tlr::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const tlr::NumericError& e) {
    std::fprintf(stderr, "numerical abort: %s (index %d)\n", e.what(), e.index);
    return 4;
  } catch (const tlr::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
