// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "fjad/active.hpp"
#include "fjad/types.hpp"

// Coupled Burgers' equations on [0,L]^2:
//   u_t + u u_x + v u_y = (1/R)(u_xx + u_yy)
//   v_t + u v_x + v v_y = (1/R)(v_xx + v_yy)
// discretized with donor-cell upwind convection, centered diffusion and
// explicit Euler time stepping, against the exact solution
//   u(x,y,t) = (x + y - 2xt) / (1 - 2t^2)
//   v(x,y,t) = (x - y - 2yt) / (1 - 2t^2).
// The objective is the discrete L2 norm of the final solution; its gradient
// with respect to the initial interior data is computed by reverse-mode AD
// with the forward pass parallelized over row blocks.
namespace fjad::burgers {

// Thrown when the configured time step fails the stability guard or a field
// value turns non-finite during stepping.
class StabilityError : public std::runtime_error {
 public:
  explicit StabilityError(const std::string& what) : std::runtime_error(what) {}
};

// How reverse-pass adjoint races at block boundaries are handled.
enum class AdjointConfig {
  AtomicAdjoints,        // every adjoint update atomic (no annotations)
  AdjointAccessControl,  // classical everywhere except boundary-adjacent rows
  ClassicalAdjoints,     // two interleaved sweeps + reverse barrier, no atomics
};

const char* toString(AdjointConfig config);
AdjointConfig parseAdjointConfig(const std::string& name);

struct SolverConfig {
  int nx = 64;  // interior cells per axis
  int ny = 64;
  double domain = 1.0;  // [0, domain]^2
  double dt = 1e-4;
  int steps = 10;
  double reynolds = 1.0;
  int threads = 1;
  AdjointConfig adjointConfig = AdjointConfig::AtomicAdjoints;
  int blocksPerThread = 1;  // 2 under ClassicalAdjoints (two-sweep scheme)
  // The stability guard accepts dt <= cflSafety * min(convective, diffusive
  // bound). Values above 1 admit short transients the donor-cell dissipation
  // damps in practice; the non-finite runtime check still backstops them.
  double cflSafety = 2.0;

  double dx() const { return domain / (nx + 1); }
  double dy() const { return domain / (ny + 1); }
  double finalTime() const { return dt * steps; }

  // Reference scale: R=1, [0,50]^2, 2000x2000 cells, 20 steps, dt=1e-4.
  static SolverConfig referenceScale();

  // Throws ContractViolation on inconsistent parameters and StabilityError
  // when dt fails the guard.
  void validate() const;
};

// Closed-form solution used for initial and boundary data.
struct ExactSolution {
  static double u(double x, double y, double t) {
    return (x + y - 2.0 * x * t) / (1.0 - 2.0 * t * t);
  }
  static double v(double x, double y, double t) {
    return (x - y - 2.0 * y * t) / (1.0 - 2.0 * t * t);
  }
};

namespace detail {
inline double valueOf(double x) { return x; }
inline double valueOf(const adouble& x) { return x.value(); }

inline int paddedStride(int nx) {
  // Row padding to a cache-line multiple (8 doubles).
  return ((nx + 2 + 7) / 8) * 8;
}
}  // namespace detail

// Row-major 2D field over (nx+2) x (ny+2) points including the boundary
// ring; rows are padded to cache-line multiples. Index i runs along x within
// a row, j selects the row (y).
template <typename T>
class Field {
 public:
  Field(int nx, int ny)
      : nx_(nx), ny_(ny), stride_(detail::paddedStride(nx)),
        data_(static_cast<std::size_t>(stride_) * (ny + 2), T(0.0)) {}

  T& operator()(int i, int j) { return data_[static_cast<std::size_t>(j) * stride_ + i]; }
  const T& operator()(int i, int j) const {
    return data_[static_cast<std::size_t>(j) * stride_ + i];
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }

 private:
  int nx_;
  int ny_;
  int stride_;
  std::vector<T> data_;
};

template <typename T>
struct FieldPair {
  FieldPair(int nx, int ny) : u(nx, ny), v(nx, ny) {}
  Field<T> u;
  Field<T> v;
};

// All points (ring included) from the exact solution at time t.
template <typename T>
FieldPair<T> initialFields(const SolverConfig& cfg, double t = 0.0) {
  FieldPair<T> fields(cfg.nx, cfg.ny);
  for (int j = 0; j <= cfg.ny + 1; ++j) {
    const double y = j * cfg.dy();
    for (int i = 0; i <= cfg.nx + 1; ++i) {
      const double x = i * cfg.dx();
      fields.u(i, j) = ExactSolution::u(x, y, t);
      fields.v(i, j) = ExactSolution::v(x, y, t);
    }
  }
  return fields;
}

// Refreshes the boundary ring from the exact solution at time t. The values
// are passive: boundary data is prescribed, not part of the input set.
template <typename T>
void setBoundary(FieldPair<T>& fields, const SolverConfig& cfg, double t) {
  const int nx = cfg.nx, ny = cfg.ny;
  for (int i = 0; i <= nx + 1; ++i) {
    const double x = i * cfg.dx();
    fields.u(i, 0) = ExactSolution::u(x, 0.0, t);
    fields.v(i, 0) = ExactSolution::v(x, 0.0, t);
    fields.u(i, ny + 1) = ExactSolution::u(x, cfg.domain, t);
    fields.v(i, ny + 1) = ExactSolution::v(x, cfg.domain, t);
  }
  for (int j = 1; j <= ny; ++j) {
    const double y = j * cfg.dy();
    fields.u(0, j) = ExactSolution::u(0.0, y, t);
    fields.v(0, j) = ExactSolution::v(0.0, y, t);
    fields.u(nx + 1, j) = ExactSolution::u(cfg.domain, y, t);
    fields.v(nx + 1, j) = ExactSolution::v(cfg.domain, y, t);
  }
}

// One explicit Euler step of interior row j: donor-cell upwind convection
// (direction picked by the sign of the advecting velocity component) and
// centered diffusion. Reads `from`, writes the interior of row j in `to`.
template <typename T>
void updateRow(const FieldPair<T>& from, FieldPair<T>& to, const SolverConfig& cfg, int j) {
  const double rdx = 1.0 / cfg.dx();
  const double rdy = 1.0 / cfg.dy();
  const double rdx2 = rdx * rdx;
  const double rdy2 = rdy * rdy;
  const double nu = 1.0 / cfg.reynolds;
  const double dt = cfg.dt;

  for (int i = 1; i <= cfg.nx; ++i) {
    const T& uc = from.u(i, j);
    const T& uw = from.u(i - 1, j);
    const T& ue = from.u(i + 1, j);
    const T& us = from.u(i, j - 1);
    const T& un = from.u(i, j + 1);
    const T& vc = from.v(i, j);
    const T& vw = from.v(i - 1, j);
    const T& ve = from.v(i + 1, j);
    const T& vs = from.v(i, j - 1);
    const T& vn = from.v(i, j + 1);

    const bool windEast = detail::valueOf(uc) > 0.0;
    const bool windNorth = detail::valueOf(vc) > 0.0;

    const T dudx = windEast ? (uc - uw) * rdx : (ue - uc) * rdx;
    const T dudy = windNorth ? (uc - us) * rdy : (un - uc) * rdy;
    const T dvdx = windEast ? (vc - vw) * rdx : (ve - vc) * rdx;
    const T dvdy = windNorth ? (vc - vs) * rdy : (vn - vc) * rdy;

    const T lapU = (ue - 2.0 * uc + uw) * rdx2 + (un - 2.0 * uc + us) * rdy2;
    const T lapV = (ve - 2.0 * vc + vw) * rdx2 + (vn - 2.0 * vc + vs) * rdy2;

    to.u(i, j) = uc + dt * (nu * lapU - uc * dudx - vc * dudy);
    to.v(i, j) = vc + dt * (nu * lapV - uc * dvdx - vc * dvdy);
  }
}

// Discrete L2 norm of the interior: sqrt(dx*dy * sum(u^2 + v^2)).
template <typename T>
T objective(const FieldPair<T>& fields, const SolverConfig& cfg) {
  T sum(0.0);
  for (int j = 1; j <= cfg.ny; ++j) {
    for (int i = 1; i <= cfg.nx; ++i) {
      const T& u = fields.u(i, j);
      const T& v = fields.v(i, j);
      sum += u * u + v * v;
    }
  }
  using std::sqrt;
  return sqrt(cfg.dx() * cfg.dy() * sum);
}

template <typename T>
bool allFinite(const FieldPair<T>& fields, const SolverConfig& cfg) {
  for (int j = 1; j <= cfg.ny; ++j) {
    for (int i = 1; i <= cfg.nx; ++i) {
      if (!std::isfinite(detail::valueOf(fields.u(i, j))) ||
          !std::isfinite(detail::valueOf(fields.v(i, j)))) {
        return false;
      }
    }
  }
  return true;
}

// --- primal path (no AD, serial) -------------------------------------------

// Runs `steps` time steps on plain doubles and returns the objective.
// `perturb`, if provided, is applied to the initial interior data first.
struct Perturbation {
  int field = 0;  // 0 = u, 1 = v
  int i = 1;
  int j = 1;
  double delta = 0.0;
};

double primalObjective(const SolverConfig& cfg);
double primalObjective(const SolverConfig& cfg, const Perturbation& perturb);

// --- AD path ----------------------------------------------------------------

struct GradientResult {
  int nx = 0;
  int ny = 0;
  std::vector<double> du;  // dJ/d u0(i,j), row-major interior, i fastest
  std::vector<double> dv;
  double objectiveValue = 0.0;
  double forwardSeconds = 0.0;
  double reverseSeconds = 0.0;

  double& duAt(int i, int j) { return du[static_cast<std::size_t>(j - 1) * nx + (i - 1)]; }
  double& dvAt(int i, int j) { return dv[static_cast<std::size_t>(j - 1) * nx + (i - 1)]; }
  double duAt(int i, int j) const { return du[static_cast<std::size_t>(j - 1) * nx + (i - 1)]; }
  double dvAt(int i, int j) const { return dv[static_cast<std::size_t>(j - 1) * nx + (i - 1)]; }
};

// Records the full solve (initial interior data registered as inputs, one
// parallel region per time step, rows distributed in contiguous blocks per
// the adjoint configuration), seeds the objective with 1 and reverse-
// evaluates. The engine must be initialized; all engine state this run
// created is reset before returning.
GradientResult recordAndReverse(const SolverConfig& cfg);

// --- finite-difference oracle -----------------------------------------------

struct SampleIndex {
  int field = 0;  // 0 = u, 1 = v
  int i = 1;
  int j = 1;
};

// Central differences (J(x0 + h e_k) - J(x0 - h e_k)) / 2h over the sampled
// initial interior entries, on the primal double path.
std::vector<double> finiteDifferenceGradient(const SolverConfig& cfg,
                                             const std::vector<SampleIndex>& samples, double h);

// Deterministically spread sample points over the interior.
std::vector<SampleIndex> sampleIndices(const SolverConfig& cfg, int count);

// --- benchmark ---------------------------------------------------------------

struct BenchmarkOptions {
  std::vector<AdjointConfig> configs = {AdjointConfig::AtomicAdjoints,
                                        AdjointConfig::AdjointAccessControl,
                                        AdjointConfig::ClassicalAdjoints};
  std::vector<int> threadCounts = {1, 2, 4};
  int repetitions = 20;
  int warmups = 5;
};

struct BenchmarkRow {
  AdjointConfig config = AdjointConfig::AtomicAdjoints;
  int threads = 1;
  std::string pass;  // "forward" | "reverse"
  double meanSeconds = 0.0;
  double minSeconds = 0.0;
  double maxSeconds = 0.0;
  double speedup = 1.0;     // vs 1 thread, same config and pass
  double efficiency = 1.0;  // speedup / threads
};

std::vector<BenchmarkRow> runBenchmark(const SolverConfig& base, const BenchmarkOptions& options);

// Header + one line per row: config,threads,pass,mean_s,min_s,max_s,speedup,efficiency
void writeCsv(std::ostream& out, const std::vector<BenchmarkRow>& rows);

}  // namespace fjad::burgers
