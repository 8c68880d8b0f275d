// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance gate. Each test case checks one shipping criterion
// and prints exactly one "criterion N: PASS/FAIL/SKIP" line with the measured
// numbers, so a transcript of this binary is the release record.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fcntl.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "fjad/burgers.hpp"
#include "fjad/fjad.hpp"

namespace rt = fjad::rt;
namespace bg = fjad::burgers;
using Clock = std::chrono::steady_clock;

namespace {

struct EngineFixture {
  explicit EngineFixture(fjad::Config config = {}) { fjad::init(std::move(config)); }
  ~EngineFixture() {
    try {
      fjad::finalize();
    } catch (...) {
    }
  }
};

// One master tape recording scope: create, install, activate.
struct Recording {
  fjad::Tape* tape;
  Recording() : tape(fjad::createTape()) {
    fjad::setCurrentTape(tape);
    tape->setActive(true);
  }
  ~Recording() {
    fjad::setCurrentTape(nullptr);
    fjad::deleteTape(tape);
    fjad::resetAll();
  }
  void sweep() {
    fjad::Position start = tape->position();
    fjad::Position end{0, tape->id()};
    fjad::tool().evaluate(tape, &start, &end);
  }
};

struct TraceCapture {
  std::mutex lock;
  std::vector<std::string> lines;
  fjad::Config config() {
    fjad::Config c;
    c.traceSink = [this](const std::string& line) {
      std::lock_guard<std::mutex> g(lock);
      lines.push_back(line);
    };
    return c;
  }
  std::size_t count(const std::string& needle) {
    std::lock_guard<std::mutex> g(lock);
    std::size_t n = 0;
    for (const auto& l : lines)
      if (l.find(needle) != std::string::npos) ++n;
    return n;
  }
};

double secondsSince(Clock::time_point from) {
  return std::chrono::duration<double>(Clock::now() - from).count();
}

// Largest componentwise relative difference over both gradient fields.
double maxRelDiff(const bg::GradientResult& got, const bg::GradientResult& ref) {
  double worst = 0.0;
  for (std::size_t k = 0; k < ref.du.size(); ++k) {
    worst = std::max(worst, std::abs(got.du[k] - ref.du[k]) /
                                std::max(std::abs(ref.du[k]), 1e-300));
    worst = std::max(worst, std::abs(got.dv[k] - ref.dv[k]) /
                                std::max(std::abs(ref.dv[k]), 1e-300));
  }
  return worst;
}

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s — %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::string format(const char* fmt, ...) {
  char buffer[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buffer, sizeof(buffer), fmt, args);
  va_end(args);
  return buffer;
}

}  // namespace

TEST_CASE("criterion 1: gradient vs finite differences on the 32x32 benchmark") {
  const auto t0 = Clock::now();
  EngineFixture fx;
  bg::SolverConfig cfg;
  cfg.nx = 32;
  cfg.ny = 32;
  cfg.steps = 3;
  cfg.dt = 1e-4;
  cfg.domain = 1.0;
  cfg.threads = 4;
  cfg.adjointConfig = bg::AdjointConfig::AtomicAdjoints;

  const auto samples = bg::sampleIndices(cfg, 10);
  const auto fd = bg::finiteDifferenceGradient(cfg, samples, 1e-6);
  const bg::GradientResult g = bg::recordAndReverse(cfg);

  double worst = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const double got = samples[k].field == 0 ? g.duAt(samples[k].i, samples[k].j)
                                             : g.dvAt(samples[k].i, samples[k].j);
    worst = std::max(worst, std::abs(got - fd[k]) / std::max(std::abs(fd[k]), 1e-300));
  }
  const double elapsed = secondsSince(t0);
  const bool pass = worst < 1e-4 && elapsed < 10.0;
  report(1, pass,
         format("max relative error %.3e over 10 sampled entries (tolerance 1e-4), %.2f s "
                "(limit 10 s)",
                worst, elapsed));
  CHECK(worst < 1e-4);
  CHECK(elapsed < 10.0);
}

TEST_CASE("criterion 2: serial and parallel gradients agree on 64x64 x 5 steps") {
  EngineFixture fx;
  bg::SolverConfig cfg;
  cfg.nx = 64;
  cfg.ny = 64;
  cfg.steps = 5;
  cfg.dt = 1e-4;

  cfg.adjointConfig = bg::AdjointConfig::ClassicalAdjoints;
  cfg.threads = 1;
  const bg::GradientResult serial = bg::recordAndReverse(cfg);
  cfg.threads = 4;
  const bg::GradientResult parallel = bg::recordAndReverse(cfg);
  const double dClassical = maxRelDiff(parallel, serial);

  cfg.adjointConfig = bg::AdjointConfig::AtomicAdjoints;
  const double dAtomic = maxRelDiff(bg::recordAndReverse(cfg), serial);
  cfg.adjointConfig = bg::AdjointConfig::AdjointAccessControl;
  const double dAccess = maxRelDiff(bg::recordAndReverse(cfg), serial);

  const bool pass = dClassical < 1e-12 && dAtomic < 1e-10 && dAccess < 1e-10;
  report(2, pass,
         format("componentwise relative differences vs 1-thread classical: classical@4 %.3e "
                "(< 1e-12), atomic@4 %.3e, access-control@4 %.3e (< 1e-10)",
                dClassical, dAtomic, dAccess));
  CHECK(dClassical < 1e-12);
  CHECK(dAtomic < 1e-10);
  CHECK(dAccess < 1e-10);
}

TEST_CASE("criterion 3: reverse pass inverts the critical-section order exactly") {
  constexpr int kThreads = 8;
  constexpr int kAcquisitions = 100;
  constexpr int kRepetitions = 50;

  EngineFixture fx;
  int exactRepetitions = 0;
  for (int rep = 0; rep < kRepetitions; ++rep) {
    Recording rec;
    std::mutex forwardLock;
    std::vector<int> forwardLog;
    auto reverseLock = std::make_shared<std::mutex>();
    auto reverseLog = std::make_shared<std::vector<int>>();

    rt::parallelRegion(kThreads, [&](rt::TeamContext& ctx) {
      std::mt19937 rng(static_cast<unsigned>(rep * kThreads + ctx.index));
      std::uniform_int_distribution<int> pause(0, 20);
      for (int k = 0; k < kAcquisitions; ++k) {
        if (k % 16 == 0)
          std::this_thread::sleep_for(std::chrono::microseconds(pause(rng)));
        rt::critical("inversion-gate", [&] {
          const int token = ctx.index * 1000 + k;
          {
            std::lock_guard<std::mutex> g(forwardLock);
            forwardLog.push_back(token);
          }
          fjad::currentTape()->pushExternalFunction(
              fjad::makeExternalFunction([token, reverseLock, reverseLog](fjad::AdjointVector&) {
                std::lock_guard<std::mutex> g(*reverseLock);
                reverseLog->push_back(token);
              }));
        });
      }
    });
    rec.sweep();

    std::vector<int> expected(forwardLog.rbegin(), forwardLog.rend());
    if (*reverseLog == expected) ++exactRepetitions;
  }
  const bool pass = exactRepetitions == kRepetitions;
  report(3, pass,
         format("%d/%d repetitions with the reverse section order strictly equal to the "
                "reversed forward log (8 threads x 100 acquisitions)",
                exactRepetitions, kRepetitions));
  CHECK(exactRepetitions == kRepetitions);
}

TEST_CASE("criterion 4: the reversed barrier separates the reversed phases") {
  constexpr int kThreads = 8;
  constexpr int kRepetitions = 1000;

  EngineFixture fx;
  auto violations = std::make_shared<std::atomic<int>>(0);
  for (int rep = 0; rep < kRepetitions; ++rep) {
    Recording rec;
    auto bActive = std::make_shared<std::atomic<int>>(0);
    rt::parallelRegion(kThreads, [&](rt::TeamContext& ctx) {
      const unsigned spin = 200 + static_cast<unsigned>((rep * kThreads + ctx.index) % 800);
      // Phase A: in reverse this runs after the reversed barrier, and must
      // never observe phase B still in progress.
      fjad::currentTape()->pushExternalFunction(
          fjad::makeExternalFunction([violations, bActive](fjad::AdjointVector&) {
            if (bActive->load(std::memory_order_acquire) > 0)
              violations->fetch_add(1, std::memory_order_relaxed);
          }));
      rt::barrier(ctx);
      // Phase B: reversed before the barrier; holds bActive high for a while
      // to widen any overlap window.
      fjad::currentTape()->pushExternalFunction(
          fjad::makeExternalFunction([bActive, spin](fjad::AdjointVector&) {
            bActive->fetch_add(1, std::memory_order_acq_rel);
            const auto until = Clock::now() + std::chrono::nanoseconds(spin);
            while (Clock::now() < until) {
            }
            bActive->fetch_sub(1, std::memory_order_acq_rel);
          }));
    });
    rec.sweep();
  }
  const int seen = violations->load();
  report(4, seen == 0,
         format("%d phase-overlap observations in %d repetitions x %d threads (must be 0)",
                seen, kRepetitions, kThreads));
  CHECK(seen == 0);
}

TEST_CASE("criterion 5: declared sum reduction, gradient and triple acquisition") {
  constexpr int kThreads = 8;
  TraceCapture capture;
  double worst = 0.0;
  std::size_t acquisitions = 0;
  {
    EngineFixture fx(capture.config());
    Recording rec;

    std::vector<fjad::adouble> x;
    x.reserve(kThreads);
    for (int i = 0; i < kThreads; ++i) x.emplace_back(0.25 + 0.5 * i);
    for (auto& xi : x) fjad::registerInput(xi);
    fjad::adouble total = 0.0;
    auto sum = rt::declareReduction<fjad::adouble>(
        [](const fjad::adouble& a, const fjad::adouble& b) { return a + b; },
        fjad::adouble(0.0));

    rt::parallelRegion(kThreads, [&](rt::TeamContext& ctx) {
      fjad::adouble mine = x[ctx.index] * x[ctx.index];  // f(x) = x^2
      rt::reduce(ctx, sum, mine, total);
    });
    fjad::registerOutput(total);
    fjad::seedAdjoint(total, 1.0);
    rec.sweep();

    for (int i = 0; i < kThreads; ++i) {
      const double expected = 2.0 * (0.25 + 0.5 * i);
      worst = std::max(worst,
                       std::abs(fjad::gradientOf(x[i]) - expected) / std::abs(expected));
    }
    acquisitions = capture.count("event=MutexAcquired key=nested_lock:");
  }
  const bool pass = worst < 1e-14 && acquisitions == 3 * kThreads;
  report(5, pass,
         format("adj(x_i) vs 2*x_i max relative error %.3e (< 1e-14); %zu guard acquisitions "
                "for %d reduction statements (3 per statement expected)",
                worst, acquisitions, kThreads));
  CHECK(worst < 1e-14);
  CHECK(acquisitions == static_cast<std::size_t>(3 * kThreads));
}

TEST_CASE("criterion 6: nested 2x2 regions with imbalance share no tapes") {
  constexpr int kRepetitions = 500;

  struct TapeAudit {
    std::mutex lock;
    std::multiset<const void*> live;
    int violations = 0;
    void enter(const void* tape) {
      std::lock_guard<std::mutex> g(lock);
      if (live.count(tape) != 0) ++violations;
      live.insert(tape);
    }
    void leave(const void* tape) {
      std::lock_guard<std::mutex> g(lock);
      const auto it = live.find(tape);
      if (it != live.end()) live.erase(it);
    }
  };

  EngineFixture fx;
  int auditViolations = 0;
  int gradientFailures = 0;
  const double xv[4] = {0.6, 1.1, 1.7, 2.3};
  const double expected[4] = {2.0 * 0.6, std::cos(1.1), 3.0 * 1.7 * 1.7,
                              0.5 / std::sqrt(2.3)};

  for (int rep = 0; rep < kRepetitions; ++rep) {
    Recording rec;
    TapeAudit audit;
    std::vector<fjad::adouble> x(xv, xv + 4);
    for (auto& xi : x) fjad::registerInput(xi);
    std::vector<fjad::adouble> y(4);

    rt::parallelRegion(2, [&](rt::TeamContext& outer) {
      audit.enter(fjad::currentTape());
      const int o = outer.index;
      rt::parallelRegion(2, [&](rt::TeamContext& inner) {
        audit.enter(fjad::currentTape());
        const int leaf = o * 2 + inner.index;
        if (leaf == 0) {
          // Imbalanced first worker: its siblings begin and finish while it
          // still holds its tape.
          std::mt19937 rng(static_cast<unsigned>(rep));
          std::this_thread::sleep_for(
              std::chrono::microseconds(std::uniform_int_distribution<int>(50, 200)(rng)));
        }
        switch (leaf) {
          case 0: y[0] = x[0] * x[0]; break;
          case 1: y[1] = sin(x[1]); break;
          case 2: y[2] = x[2] * x[2] * x[2]; break;
          case 3: y[3] = sqrt(x[3]); break;
        }
        audit.leave(fjad::currentTape());
      });
      audit.leave(fjad::currentTape());
    });

    fjad::adouble J = y[0] + y[1] + y[2] + y[3];
    fjad::registerOutput(J);
    fjad::seedAdjoint(J, 1.0);
    rec.sweep();

    auditViolations += audit.violations;
    for (int i = 0; i < 4; ++i) {
      if (std::abs(fjad::gradientOf(x[i]) - expected[i]) > 1e-13 * std::abs(expected[i]))
        ++gradientFailures;
    }
  }
  const auto busy = fjad::diagnostics().tapeBusyViolations.load();
  const bool pass = auditViolations == 0 && gradientFailures == 0 && busy == 0;
  report(6, pass,
         format("%d repetitions: %d concurrently-shared-tape observations, %llu pool busy "
                "violations, %d leaf-gradient mismatches vs the hand-derived values",
                kRepetitions, auditViolations, static_cast<unsigned long long>(busy),
                gradientFailures));
  CHECK(auditViolations == 0);
  CHECK(gradientFailures == 0);
  CHECK(busy == 0);
}

TEST_CASE("criterion 7: state export and recovery enable positional evaluation") {
  // Oracle: the same first segment recorded alone, fully evaluated.
  double oracle0 = 0.0;
  double oracle1 = 0.0;
  auto recordFirstSegment = [](std::vector<fjad::adouble>& x, fjad::adouble& z) {
    rt::parallelRegion(2, [&](rt::TeamContext& ctx) {
      rt::critical("recovery-gate", [&] { z += x[ctx.index] * x[ctx.index]; });
    });
  };
  {
    EngineFixture fx;
    Recording rec;
    std::vector<fjad::adouble> x{0.7, 1.3};
    for (auto& xi : x) fjad::registerInput(xi);
    fjad::adouble z = 0.0;
    recordFirstSegment(x, z);
    fjad::registerOutput(z);
    fjad::seedAdjoint(z, 1.0);
    rec.sweep();
    oracle0 = fjad::gradientOf(x[0]);
    oracle1 = fjad::gradientOf(x[1]);
  }

  // Workflow: record the same segment, export, record more traffic on the
  // same mutex plus a lock, recover, and evaluate just the first segment by
  // position.
  double got0 = 0.0;
  double got1 = 0.0;
  std::uint64_t forwardAfter = 0;
  std::uint64_t reverseAfterRecover = 0;
  bool criticalKeyFound = false;
  {
    EngineFixture fx;
    Recording rec;
    std::vector<fjad::adouble> x{0.7, 1.3};
    for (auto& xi : x) fjad::registerInput(xi);
    fjad::adouble z = 0.0;
    recordFirstSegment(x, z);
    fjad::registerOutput(z);

    const fjad::Position firstSegmentEnd = rec.tape->position();
    const fjad::LogicState state = fjad::logic().exportState();

    // Extra recording beyond the export point: two more acquisitions of the
    // same critical and a lock acquisition, none of which may disturb the
    // positional evaluation after recovery.
    fjad::adouble w = 0.0;
    rt::LockHandle lock = rt::lockInit();
    rt::parallelRegion(2, [&](rt::TeamContext& ctx) {
      rt::critical("recovery-gate", [&] { w += 3.0 * x[ctx.index]; });
      if (ctx.index == 0) {
        rt::lockSet(lock);
        w += 1.0;
        rt::lockUnset(lock);
      }
    });
    rt::lockDestroy(lock);

    fjad::MutexKey criticalKey;
    for (const auto& [key, value] : state.mutexCounters) {
      if (key.kind == fjad::MutexKind::Critical && value == 2) {
        criticalKey = key;
        criticalKeyFound = true;
      }
    }
    forwardAfter = criticalKeyFound ? fjad::logic().forwardMutexCounter(criticalKey) : 0;

    fjad::logic().recoverState(state);
    reverseAfterRecover = criticalKeyFound ? fjad::logic().reverseMutexCounter(criticalKey) : 0;

    fjad::seedAdjoint(z, 1.0);
    fjad::Position begin = firstSegmentEnd;
    fjad::Position end{0, rec.tape->id()};
    fjad::tool().evaluate(rec.tape, &begin, &end);
    got0 = fjad::gradientOf(x[0]);
    got1 = fjad::gradientOf(x[1]);
  }

  const bool gradientsExact = got0 == oracle0 && got1 == oracle1;
  const bool countersSane = criticalKeyFound && forwardAfter == 4 && reverseAfterRecover == 2;
  report(7, gradientsExact && countersSane,
         format("positional gradient (%.17g, %.17g) vs isolated recording (%.17g, %.17g), "
                "exact match %s; critical counter forward %llu (4 expected), reverse after "
                "recovery %llu (2 expected)",
                got0, got1, oracle0, oracle1, gradientsExact ? "yes" : "no",
                static_cast<unsigned long long>(forwardAfter),
                static_cast<unsigned long long>(reverseAfterRecover)));
  CHECK(got0 == oracle0);
  CHECK(got1 == oracle1);
  CHECK(countersSane);
}

TEST_CASE("criterion 8: reverse-pass scaling on a multi-core machine") {
  const unsigned cores = std::thread::hardware_concurrency();
  EngineFixture fx;

  auto meanReverse = [](bg::SolverConfig cfg, int reps, int warmups) {
    double sum = 0.0;
    for (int r = 0; r < warmups + reps; ++r) {
      const bg::GradientResult g = bg::recordAndReverse(cfg);
      if (r >= warmups) sum += g.reverseSeconds;
    }
    return sum / reps;
  };

  if (cores >= 4) {
    bg::SolverConfig cfg;
    cfg.nx = 512;
    cfg.ny = 512;
    cfg.steps = 10;
    cfg.dt = 5e-7;
    cfg.adjointConfig = bg::AdjointConfig::ClassicalAdjoints;
    cfg.threads = 1;
    const double serial = meanReverse(cfg, 2, 1);
    cfg.threads = 4;
    const double parallel = meanReverse(cfg, 2, 1);
    const double efficiency = serial / (parallel * 4.0);
    report(8, efficiency >= 0.5,
           format("classical reverse 512x512 x 10: 1 thread %.3fs, 4 threads %.3fs, parallel "
                  "efficiency %.2f (>= 0.5 required)",
                  serial, parallel, efficiency));
    CHECK(efficiency >= 0.5);
  } else {
    // A scaling assertion is meaningless without hardware parallelism; the
    // reduced-size figures are reported unasserted.
    bg::SolverConfig cfg;
    cfg.nx = 64;
    cfg.ny = 64;
    cfg.steps = 5;
    cfg.dt = 1e-4;
    cfg.adjointConfig = bg::AdjointConfig::ClassicalAdjoints;
    cfg.threads = 1;
    const double classical1 = meanReverse(cfg, 3, 1);
    cfg.threads = 2;
    const double classical2 = meanReverse(cfg, 3, 1);
    cfg.adjointConfig = bg::AdjointConfig::AtomicAdjoints;
    cfg.threads = 1;
    const double atomic1 = meanReverse(cfg, 3, 1);
    std::printf(
        "criterion 8: SKIP (%u hardware thread(s); a scaling assertion needs >= 4) — "
        "reduced 64x64 x 5 report, unasserted: classical reverse 1 thread %.4fs, 2 threads "
        "%.4fs (speedup %.2f, efficiency %.2f); atomic/classical serial reverse ratio %.2f\n",
        cores, classical1, classical2, classical1 / classical2, classical1 / classical2 / 2.0,
        atomic1 / classical1);
    std::fflush(stdout);
  }
}

TEST_CASE("criterion 9: atomic and classical runs have matching memory peaks") {
#ifndef FJAD_BURGERS_BIN
  report(9, false, "benchmark binary path not configured at build time");
  CHECK(false);
#else
  auto peakRssKb = [](const char* mode) -> long {
    const pid_t pid = fork();
    if (pid == 0) {
      // Child: run one full record-and-reverse at the pinned size, quietly.
      const int devnull = open("/dev/null", O_WRONLY);
      if (devnull >= 0) {
        dup2(devnull, STDOUT_FILENO);
        dup2(devnull, STDERR_FILENO);
      }
      execl(FJAD_BURGERS_BIN, "fjad-burgers", "--nx", "128", "--ny", "128", "--steps", "10",
            "--dt", "1e-5", "--threads", "1", "--adjoint-mode", mode,
            static_cast<char*>(nullptr));
      _exit(127);
    }
    int status = 0;
    struct rusage usage {};
    if (wait4(pid, &status, 0, &usage) != pid) return -1;
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return -1;
    return usage.ru_maxrss;  // kilobytes on Linux
  };

  const long atomicKb = peakRssKb("atomic");
  const long classicalKb = peakRssKb("classical");
  const bool ran = atomicKb > 0 && classicalKb > 0;
  const double diff =
      ran ? std::abs(static_cast<double>(atomicKb - classicalKb)) /
                static_cast<double>(std::max(atomicKb, classicalKb))
          : 1.0;
  const bool pass = ran && diff < 0.05;
  report(9, pass,
         format("peak RSS on 128x128 x 10: atomic %ld KB, classical %ld KB, relative "
                "difference %.2f%% (< 5%% required)",
                atomicKb, classicalKb, diff * 100.0));
  CHECK(ran);
  CHECK(diff < 0.05);
#endif
}
