// SPDX-License-Identifier: Apache-2.0
#include "fjad/burgers.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <utility>

#include "fjad/engine.hpp"
#include "fjad/runtime.hpp"
#include "fjad/tool.hpp"

namespace fjad::burgers {

namespace {

using Clock = std::chrono::steady_clock;

double seconds(Clock::time_point from, Clock::time_point to) {
  return std::chrono::duration<double>(to - from).count();
}

// Mirrors the static-schedule default split of the worksharing loop: member
// k updates rows [1 + k*chunk, 1 + (k+1)*chunk) of [1, ny+1).
int staticChunk(int ny, int team) { return std::max(1, (ny + team - 1) / team); }

// Whether row j records atomically under AdjointAccessControl: the adjoint
// slot of row r is written by the updates of rows r-1..r+1, so the slots of
// the two rows meeting at a block boundary are shared between threads, and
// every row writing them — the two rows on each side of the boundary — must
// use atomic updates.
bool rowNeedsAtomic(int j, int ny, int team) {
  const int chunk = staticChunk(ny, team);
  for (int b = 1 + chunk; b <= ny; b += chunk) {
    if (j >= b - 2 && j <= b + 1) return true;
  }
  return false;
}

// Near-equal split of interior rows [1, ny+1) into `count` blocks.
std::vector<std::pair<int, int>> rowBlocks(int ny, int count) {
  std::vector<std::pair<int, int>> blocks;
  blocks.reserve(count);
  const int base = ny / count;
  const int rem = ny % count;
  int row = 1;
  for (int b = 0; b < count; ++b) {
    const int height = base + (b < rem ? 1 : 0);
    blocks.emplace_back(row, row + height);
    row += height;
  }
  return blocks;
}

void runStepRegion(const FieldPair<adouble>& from, FieldPair<adouble>& to,
                   const SolverConfig& cfg) {
  switch (cfg.adjointConfig) {
    case AdjointConfig::AtomicAdjoints:
      rt::parallelRegion(cfg.threads, [&](rt::TeamContext& ctx) {
        rt::forLoop(ctx, 1, cfg.ny + 1,
                    [&](std::int64_t j) { updateRow(from, to, cfg, static_cast<int>(j)); });
      });
      break;

    case AdjointConfig::AdjointAccessControl:
      rt::parallelRegion(cfg.threads, [&](rt::TeamContext& ctx) {
        rt::forLoop(ctx, 1, cfg.ny + 1, [&](std::int64_t j) {
          const bool atomic = rowNeedsAtomic(static_cast<int>(j), cfg.ny, ctx.actual);
          logic().setAdjointAccessMode(atomic ? AdjointAccessMode::Atomic
                                              : AdjointAccessMode::Classical);
          updateRow(from, to, cfg, static_cast<int>(j));
        });
      });
      break;

    case AdjointConfig::ClassicalAdjoints:
      // Two interleaved blocks per thread, updated in two sweeps with a
      // reverse-only barrier between them. Reversal then processes all odd
      // blocks concurrently, syncs, and processes all even blocks; blocks of
      // height >= 2 keep the written adjoint rows of concurrent sweeps
      // disjoint, so no update needs atomics.
      rt::parallelRegion(cfg.threads, [&](rt::TeamContext& ctx) {
        logic().setAdjointAccessMode(AdjointAccessMode::Classical);
        const auto blocks = rowBlocks(cfg.ny, 2 * ctx.actual);
        const auto [lo1, hi1] = blocks[2 * ctx.index];
        for (int j = lo1; j < hi1; ++j) updateRow(from, to, cfg, j);
        logic().addReverseBarrier();
        const auto [lo2, hi2] = blocks[2 * ctx.index + 1];
        for (int j = lo2; j < hi2; ++j) updateRow(from, to, cfg, j);
      });
      break;
  }
}

std::string stabilityMessage(const SolverConfig& cfg, double dtConv, double dtDiff) {
  std::ostringstream msg;
  msg << "time step dt=" << cfg.dt << " exceeds the stability guard "
      << cfg.cflSafety << " * min(convective " << dtConv << ", diffusive " << dtDiff
      << ") for dx=" << cfg.dx() << ", R=" << cfg.reynolds;
  return msg.str();
}

}  // namespace

const char* toString(AdjointConfig config) {
  switch (config) {
    case AdjointConfig::AtomicAdjoints: return "atomic";
    case AdjointConfig::AdjointAccessControl: return "access-control";
    case AdjointConfig::ClassicalAdjoints: return "classical";
  }
  return "?";
}

AdjointConfig parseAdjointConfig(const std::string& name) {
  if (name == "atomic") return AdjointConfig::AtomicAdjoints;
  if (name == "access-control") return AdjointConfig::AdjointAccessControl;
  if (name == "classical") return AdjointConfig::ClassicalAdjoints;
  throw ContractViolation("unknown adjoint configuration: " + name);
}

SolverConfig SolverConfig::referenceScale() {
  SolverConfig cfg;
  cfg.nx = 2000;
  cfg.ny = 2000;
  cfg.domain = 50.0;
  cfg.dt = 1e-4;
  cfg.steps = 20;
  cfg.reynolds = 1.0;
  return cfg;
}

void SolverConfig::validate() const {
  namespace fd = fjad::detail;
  fd::require(nx >= 4 && ny >= 4, "SolverConfig: grid must be at least 4x4");
  fd::require(steps >= 0, "SolverConfig: steps must be >= 0");
  fd::require(dt > 0.0, "SolverConfig: dt must be positive");
  fd::require(domain > 0.0, "SolverConfig: domain must be positive");
  fd::require(reynolds > 0.0, "SolverConfig: reynolds must be positive");
  fd::require(threads >= 1, "SolverConfig: threads must be >= 1");
  fd::require(blocksPerThread == 1 || blocksPerThread == 2,
              "SolverConfig: blocksPerThread must be 1 or 2");
  fd::require(cflSafety > 0.0, "SolverConfig: cflSafety must be positive");
  if (adjointConfig == AdjointConfig::ClassicalAdjoints) {
    fd::require(ny >= 4 * threads,
                "SolverConfig: classical adjoints need ny >= 4*threads (block height >= 2)");
  }

  // The exact solution blows up at t = 1/sqrt(2); stay well inside.
  const double tEnd = finalTime();
  fd::require(2.0 * tEnd * tEnd < 0.5, "SolverConfig: final time too close to 1/sqrt(2)");

  const double h = std::min(dx(), dy());
  const double umax = 2.0 * domain * (1.0 + tEnd) / (1.0 - 2.0 * tEnd * tEnd);
  const double dtConv = h / umax;
  const double dtDiff = reynolds * h * h / 4.0;
  if (dt > cflSafety * std::min(dtConv, dtDiff)) {
    throw StabilityError(stabilityMessage(*this, dtConv, dtDiff));
  }
}

double primalObjective(const SolverConfig& cfg) { return primalObjective(cfg, Perturbation{}); }

double primalObjective(const SolverConfig& cfg, const Perturbation& perturb) {
  cfg.validate();
  FieldPair<double> cur = initialFields<double>(cfg);
  if (perturb.delta != 0.0) {
    Field<double>& f = perturb.field == 0 ? cur.u : cur.v;
    f(perturb.i, perturb.j) += perturb.delta;
  }
  FieldPair<double> next(cfg.nx, cfg.ny);
  for (int s = 0; s < cfg.steps; ++s) {
    for (int j = 1; j <= cfg.ny; ++j) updateRow(cur, next, cfg, j);
    setBoundary(next, cfg, (s + 1) * cfg.dt);
    if (!allFinite(next, cfg)) {
      throw StabilityError("non-finite field value at step " + std::to_string(s + 1) +
                           "; reduce dt (see the stability guard)");
    }
    std::swap(cur, next);
  }
  return objective(cur, cfg);
}

GradientResult recordAndReverse(const SolverConfig& raw) {
  SolverConfig cfg = raw;
  cfg.blocksPerThread = cfg.adjointConfig == AdjointConfig::ClassicalAdjoints ? 2 : 1;
  cfg.validate();
  fjad::detail::require(fjad::initialized(), "recordAndReverse: call fjad::init first");

  const int nx = cfg.nx;
  const int ny = cfg.ny;
  GradientResult result;
  result.nx = nx;
  result.ny = ny;

  Tape* master = createTape();
  setCurrentTape(master);

  try {
    auto cur = std::make_unique<FieldPair<adouble>>(initialFields<adouble>(cfg));
    auto next = std::make_unique<FieldPair<adouble>>(nx, ny);

    std::vector<Identifier> idsU(static_cast<std::size_t>(nx) * ny);
    std::vector<Identifier> idsV(static_cast<std::size_t>(nx) * ny);
    for (int j = 1; j <= ny; ++j) {
      for (int i = 1; i <= nx; ++i) {
        const std::size_t k = static_cast<std::size_t>(j - 1) * nx + (i - 1);
        registerInput(cur->u(i, j));
        registerInput(cur->v(i, j));
        idsU[k] = cur->u(i, j).id();
        idsV[k] = cur->v(i, j).id();
      }
    }

    master->setActive(true);
    const auto forwardStart = Clock::now();
    for (int s = 0; s < cfg.steps; ++s) {
      runStepRegion(*cur, *next, cfg);
      setBoundary(*next, cfg, (s + 1) * cfg.dt);
      if (!allFinite(*next, cfg)) {
        throw StabilityError("non-finite field value at step " + std::to_string(s + 1) +
                             "; reduce dt (see the stability guard)");
      }
      std::swap(cur, next);
    }
    adouble J = objective(*cur, cfg);
    registerOutput(J);
    master->setActive(false);
    result.forwardSeconds = seconds(forwardStart, Clock::now());
    result.objectiveValue = J.value();

    seedAdjoint(J, 1.0);
    Position start = master->position();
    Position end{0, master->id()};
    const bool useAtomics = cfg.adjointConfig != AdjointConfig::ClassicalAdjoints;
    const auto reverseStart = Clock::now();
    tool().evaluate(master, &start, &end, useAtomics);
    result.reverseSeconds = seconds(reverseStart, Clock::now());

    result.du.resize(idsU.size());
    result.dv.resize(idsV.size());
    AdjointVector& adj = adjoints();
    for (std::size_t k = 0; k < idsU.size(); ++k) {
      result.du[k] = adj.get(idsU[k]);
      result.dv[k] = adj.get(idsV[k]);
    }
  } catch (...) {
    master->setActive(false);
    setCurrentTape(nullptr);
    deleteTape(master);
    resetAll();
    throw;
  }

  setCurrentTape(nullptr);
  deleteTape(master);
  resetAll();
  return result;
}

std::vector<SampleIndex> sampleIndices(const SolverConfig& cfg, int count) {
  std::mt19937 rng(12345);
  std::uniform_int_distribution<int> pickField(0, 1);
  std::uniform_int_distribution<int> pickI(1, cfg.nx);
  std::uniform_int_distribution<int> pickJ(1, cfg.ny);
  std::vector<SampleIndex> samples;
  samples.reserve(count);
  for (int k = 0; k < count; ++k) {
    samples.push_back(SampleIndex{pickField(rng), pickI(rng), pickJ(rng)});
  }
  return samples;
}

std::vector<double> finiteDifferenceGradient(const SolverConfig& cfg,
                                             const std::vector<SampleIndex>& samples, double h) {
  fjad::detail::require(h > 0.0, "finiteDifferenceGradient: h must be positive");
  std::vector<double> gradient;
  gradient.reserve(samples.size());
  for (const SampleIndex& s : samples) {
    const double plus = primalObjective(cfg, Perturbation{s.field, s.i, s.j, +h});
    const double minus = primalObjective(cfg, Perturbation{s.field, s.i, s.j, -h});
    gradient.push_back((plus - minus) / (2.0 * h));
  }
  return gradient;
}

std::vector<BenchmarkRow> runBenchmark(const SolverConfig& base, const BenchmarkOptions& options) {
  std::vector<BenchmarkRow> rows;
  for (AdjointConfig config : options.configs) {
    // mean seconds at threads == 1, for speedup: [pass] -> mean
    std::map<std::string, double> baseline;
    for (int threads : options.threadCounts) {
      SolverConfig cfg = base;
      cfg.adjointConfig = config;
      cfg.threads = threads;
      cfg.blocksPerThread = config == AdjointConfig::ClassicalAdjoints ? 2 : 1;
      if (config == AdjointConfig::ClassicalAdjoints && cfg.ny < 4 * threads) continue;

      std::vector<double> forward;
      std::vector<double> reverse;
      for (int r = 0; r < options.warmups + options.repetitions; ++r) {
        GradientResult g = recordAndReverse(cfg);
        if (r >= options.warmups) {
          forward.push_back(g.forwardSeconds);
          reverse.push_back(g.reverseSeconds);
        }
      }

      const auto makeRow = [&](const char* pass, const std::vector<double>& times) {
        BenchmarkRow row;
        row.config = config;
        row.threads = threads;
        row.pass = pass;
        row.minSeconds = *std::min_element(times.begin(), times.end());
        row.maxSeconds = *std::max_element(times.begin(), times.end());
        double sum = 0.0;
        for (double t : times) sum += t;
        row.meanSeconds = sum / static_cast<double>(times.size());
        if (threads == 1) baseline[pass] = row.meanSeconds;
        const auto it = baseline.find(pass);
        if (it != baseline.end() && row.meanSeconds > 0.0) {
          row.speedup = it->second / row.meanSeconds;
          row.efficiency = row.speedup / threads;
        } else {
          row.speedup = 0.0;
          row.efficiency = 0.0;
        }
        return row;
      };
      rows.push_back(makeRow("forward", forward));
      rows.push_back(makeRow("reverse", reverse));
    }
  }
  return rows;
}

void writeCsv(std::ostream& out, const std::vector<BenchmarkRow>& rows) {
  out << "config,threads,pass,mean_s,min_s,max_s,speedup,efficiency\n";
  for (const BenchmarkRow& row : rows) {
    out << toString(row.config) << ',' << row.threads << ',' << row.pass << ','
        << row.meanSeconds << ',' << row.minSeconds << ',' << row.maxSeconds << ','
        << row.speedup << ',' << row.efficiency << '\n';
  }
}

}  // namespace fjad::burgers
