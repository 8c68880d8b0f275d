// SPDX-License-Identifier: Apache-2.0
//
// Benchmark and validation driver for the parallel-reverse-AD Burgers solver.
//
//   fjad-burgers                         solve + gradient, print a summary
//   fjad-burgers --check-gradient        validate against finite differences
//   fjad-burgers --bench --threads 4     timing table over 1..4 threads
//
// Exit codes: 0 success, 1 usage/contract error, 2 gradient-check failure,
// 3 stability abort.
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <vector>

#include "CLI11.hpp"
#include "fjad/burgers.hpp"
#include "fjad/fjad.hpp"

namespace {

struct TraceFile {
  std::ofstream out;
  std::mutex lock;
};

std::vector<int> benchThreadCounts(int maxThreads) {
  std::vector<int> counts;
  for (int t = 1; t < maxThreads; t *= 2) counts.push_back(t);
  counts.push_back(maxThreads);
  return counts;
}

}  // namespace

int main(int argc, char** argv) {
  namespace bg = fjad::burgers;

  CLI::App app{"Coupled Burgers' equations: parallel recording, reverse AD, benchmarks"};

  bg::SolverConfig cfg;
  std::string adjointMode = "atomic";
  bool checkGradient = false;
  double fdStep = 1e-6;
  int samples = 10;
  bool bench = false;
  int repetitions = 20;
  int warmups = 5;
  std::string csvPath;
  std::string tracePath;
  bool referenceScale = false;

  auto* nxOpt = app.add_option("--nx", cfg.nx, "Interior cells in x");
  auto* nyOpt = app.add_option("--ny", cfg.ny, "Interior cells in y");
  auto* stepsOpt = app.add_option("--steps", cfg.steps, "Time steps");
  auto* dtOpt = app.add_option("--dt", cfg.dt, "Time step size");
  auto* domainOpt = app.add_option("--domain-size", cfg.domain, "Domain edge length L");
  auto* reynoldsOpt = app.add_option("--reynolds", cfg.reynolds, "Reynolds-like parameter R");
  app.add_option("--threads", cfg.threads, "Team size (benchmark: largest team)");
  app.add_option("--adjoint-mode", adjointMode,
                 "Adjoint configuration: atomic | access-control | classical");
  app.add_flag("--check-gradient", checkGradient,
               "Compare the reverse gradient against central finite differences");
  app.add_option("--fd-h", fdStep, "Finite-difference step");
  app.add_option("--samples", samples, "Sampled initial-condition entries for the check");
  app.add_flag("--bench", bench, "Run the timing benchmark over all adjoint configurations");
  app.add_option("--reps", repetitions, "Benchmark repetitions per configuration");
  app.add_option("--warmups", warmups, "Discarded benchmark warm-up runs");
  app.add_option("--csv", csvPath, "Write benchmark results to this CSV file");
  app.add_option("--trace", tracePath, "Write the AD event trace to this file");
  app.add_flag("--reference-scale", referenceScale,
               "Reference scale (R=1, [0,50]^2, 2000x2000, 20 steps) unless overridden");

  CLI11_PARSE(app, argc, argv);

  if (referenceScale) {
    bg::SolverConfig reference = bg::SolverConfig::referenceScale();
    if (nxOpt->count() == 0) cfg.nx = reference.nx;
    if (nyOpt->count() == 0) cfg.ny = reference.ny;
    if (stepsOpt->count() == 0) cfg.steps = reference.steps;
    if (dtOpt->count() == 0) cfg.dt = reference.dt;
    if (domainOpt->count() == 0) cfg.domain = reference.domain;
    if (reynoldsOpt->count() == 0) cfg.reynolds = reference.reynolds;
  }

  std::shared_ptr<TraceFile> trace;
  fjad::Config engineConfig;
  if (!tracePath.empty()) {
    trace = std::make_shared<TraceFile>();
    trace->out.open(tracePath);
    if (!trace->out) {
      std::cerr << "error: cannot open trace file " << tracePath << "\n";
      return 1;
    }
    engineConfig.traceSink = [trace](const std::string& line) {
      std::lock_guard<std::mutex> lock(trace->lock);
      trace->out << line << '\n';
    };
  }

  int exitCode = 0;
  try {
    cfg.adjointConfig = bg::parseAdjointConfig(adjointMode);
    cfg.blocksPerThread = cfg.adjointConfig == bg::AdjointConfig::ClassicalAdjoints ? 2 : 1;

    fjad::init(engineConfig);

    if (bench) {
      bg::BenchmarkOptions options;
      options.threadCounts = benchThreadCounts(cfg.threads);
      options.repetitions = repetitions;
      options.warmups = warmups;
      const auto rows = bg::runBenchmark(cfg, options);

      if (!csvPath.empty()) {
        std::ofstream csv(csvPath);
        if (!csv) {
          std::cerr << "error: cannot open CSV file " << csvPath << "\n";
          fjad::finalize();
          return 1;
        }
        bg::writeCsv(csv, rows);
        std::cout << "wrote " << rows.size() << " benchmark rows to " << csvPath << "\n";
      } else {
        bg::writeCsv(std::cout, rows);
      }

      // Serial reverse cost of always-atomic updates relative to the
      // classical two-sweep scheme (hardware-dependent; reported only).
      double atomicSerial = 0.0;
      double classicalSerial = 0.0;
      for (const auto& row : rows) {
        if (row.threads == 1 && row.pass == "reverse") {
          if (row.config == bg::AdjointConfig::AtomicAdjoints) atomicSerial = row.meanSeconds;
          if (row.config == bg::AdjointConfig::ClassicalAdjoints) {
            classicalSerial = row.meanSeconds;
          }
        }
      }
      if (atomicSerial > 0.0 && classicalSerial > 0.0) {
        std::printf("atomic/classical serial reverse ratio: %.2f\n",
                    atomicSerial / classicalSerial);
      }
    } else if (checkGradient) {
      const auto sampleSet = bg::sampleIndices(cfg, samples);
      const auto fd = bg::finiteDifferenceGradient(cfg, sampleSet, fdStep);
      const auto result = bg::recordAndReverse(cfg);

      constexpr double kTolerance = 1e-4;
      double worst = 0.0;
      for (std::size_t k = 0; k < sampleSet.size(); ++k) {
        const auto& s = sampleSet[k];
        const double ad =
            s.field == 0 ? result.duAt(s.i, s.j) : result.dvAt(s.i, s.j);
        const double scale = std::max({std::abs(fd[k]), std::abs(ad), 1e-12});
        const double relative = std::abs(ad - fd[k]) / scale;
        worst = std::max(worst, relative);
        std::printf("sample %-2zu %s(%3d,%3d)  reverse % .10e  fd % .10e  rel %.3e\n", k,
                    s.field == 0 ? "u" : "v", s.i, s.j, ad, fd[k], relative);
      }
      std::printf("objective J = %.12e\n", result.objectiveValue);
      std::printf("max relative error %.3e (tolerance %.0e): %s\n", worst, kTolerance,
                  worst < kTolerance ? "PASS" : "FAIL");
      if (worst >= kTolerance) exitCode = 2;
    } else {
      const auto result = bg::recordAndReverse(cfg);
      double norm = 0.0;
      for (double g : result.du) norm += g * g;
      for (double g : result.dv) norm += g * g;
      std::printf("grid %dx%d, %d steps, dt=%g, %d thread(s), %s adjoints\n", cfg.nx, cfg.ny,
                  cfg.steps, cfg.dt, cfg.threads, bg::toString(cfg.adjointConfig));
      std::printf("objective J = %.12e\n", result.objectiveValue);
      std::printf("|dJ/d(initial data)| = %.12e\n", std::sqrt(norm));
      std::printf("forward %.3fs  reverse %.3fs\n", result.forwardSeconds,
                  result.reverseSeconds);
    }

    fjad::finalize();
  } catch (const bg::StabilityError& e) {
    std::cerr << "stability abort: " << e.what() << "\n";
    if (fjad::initialized()) fjad::finalize();
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  return exitCode;
}
