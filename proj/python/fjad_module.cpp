// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the forward/reverse solver entry points. The AD engine
// is initialized lazily on first use and stays alive for the process.
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "fjad/burgers.hpp"
#include "fjad/fjad.hpp"

namespace py = pybind11;
namespace bg = fjad::burgers;

namespace {

void ensureEngine() {
  static std::once_flag once;
  std::call_once(once, [] { fjad::init(); });
}

bg::SolverConfig makeConfig(int nx, int ny, int steps, double dt, double domain,
                            double reynolds, int threads, const std::string& adjointMode,
                            double cflSafety) {
  bg::SolverConfig cfg;
  cfg.nx = nx;
  cfg.ny = ny;
  cfg.steps = steps;
  cfg.dt = dt;
  cfg.domain = domain;
  cfg.reynolds = reynolds;
  cfg.threads = threads;
  cfg.adjointConfig = bg::parseAdjointConfig(adjointMode);
  cfg.blocksPerThread = cfg.adjointConfig == bg::AdjointConfig::ClassicalAdjoints ? 2 : 1;
  cfg.cflSafety = cflSafety;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Reverse-mode AD with parallel tape recording and evaluation, driven by a "
      "coupled Burgers' equations solver.";

  py::register_exception<bg::StabilityError>(m, "StabilityError", PyExc_RuntimeError);
  py::register_exception<fjad::ContractViolation>(m, "ContractViolation", PyExc_RuntimeError);

  m.def(
      "solve_primal",
      [](int nx, int ny, int steps, double dt, double domain, double reynolds,
         double cflSafety) {
        bg::SolverConfig cfg =
            makeConfig(nx, ny, steps, dt, domain, reynolds, 1, "atomic", cflSafety);
        py::gil_scoped_release release;
        return bg::primalObjective(cfg);
      },
      py::arg("nx") = 64, py::arg("ny") = 64, py::arg("steps") = 10, py::arg("dt") = 1e-4,
      py::arg("domain") = 1.0, py::arg("reynolds") = 1.0, py::arg("cfl_safety") = 2.0,
      "Run the forward solver without taping and return the objective J.");

  m.def(
      "gradient",
      [](int nx, int ny, int steps, double dt, double domain, double reynolds, int threads,
         const std::string& adjointMode, double cflSafety) {
        bg::SolverConfig cfg = makeConfig(nx, ny, steps, dt, domain, reynolds, threads,
                                          adjointMode, cflSafety);
        ensureEngine();
        bg::GradientResult result = [&] {
          py::gil_scoped_release release;
          return bg::recordAndReverse(cfg);
        }();
        py::dict out;
        out["objective"] = result.objectiveValue;
        out["du"] = result.du;
        out["dv"] = result.dv;
        out["nx"] = result.nx;
        out["ny"] = result.ny;
        out["forward_seconds"] = result.forwardSeconds;
        out["reverse_seconds"] = result.reverseSeconds;
        return out;
      },
      py::arg("nx") = 64, py::arg("ny") = 64, py::arg("steps") = 10, py::arg("dt") = 1e-4,
      py::arg("domain") = 1.0, py::arg("reynolds") = 1.0, py::arg("threads") = 1,
      py::arg("adjoint_mode") = "atomic", py::arg("cfl_safety") = 2.0,
      "Record the solve on tapes (in parallel for threads > 1), reverse it, and "
      "return the gradient of J with respect to the initial interior data. The "
      "entry for interior cell (i, j) is du[(j-1)*nx + (i-1)].");

  m.def(
      "gradient_check",
      [](int nx, int ny, int steps, double dt, double domain, double reynolds, int threads,
         const std::string& adjointMode, int samples, double fdStep, double cflSafety) {
        bg::SolverConfig cfg = makeConfig(nx, ny, steps, dt, domain, reynolds, threads,
                                          adjointMode, cflSafety);
        ensureEngine();
        const auto sampleSet = bg::sampleIndices(cfg, samples);
        double maxRelative = 0.0;
        std::vector<py::dict> rows;
        {
          std::vector<double> fd;
          bg::GradientResult result;
          {
            py::gil_scoped_release release;
            fd = bg::finiteDifferenceGradient(cfg, sampleSet, fdStep);
            result = bg::recordAndReverse(cfg);
          }
          for (std::size_t k = 0; k < sampleSet.size(); ++k) {
            const auto& s = sampleSet[k];
            const double ad =
                s.field == 0 ? result.duAt(s.i, s.j) : result.dvAt(s.i, s.j);
            const double scale = std::max({std::abs(fd[k]), std::abs(ad), 1e-12});
            const double relative = std::abs(ad - fd[k]) / scale;
            maxRelative = std::max(maxRelative, relative);
            py::dict row;
            row["field"] = s.field == 0 ? "u" : "v";
            row["i"] = s.i;
            row["j"] = s.j;
            row["reverse"] = ad;
            row["finite_difference"] = fd[k];
            row["relative_error"] = relative;
            rows.push_back(std::move(row));
          }
        }
        py::dict out;
        out["max_relative_error"] = maxRelative;
        out["passed"] = maxRelative < 1e-4;
        out["samples"] = rows;
        return out;
      },
      py::arg("nx") = 32, py::arg("ny") = 32, py::arg("steps") = 3, py::arg("dt") = 1e-4,
      py::arg("domain") = 1.0, py::arg("reynolds") = 1.0, py::arg("threads") = 1,
      py::arg("adjoint_mode") = "atomic", py::arg("samples") = 10,
      py::arg("fd_step") = 1e-6, py::arg("cfl_safety") = 2.0,
      "Compare the reverse-mode gradient against central finite differences on "
      "randomly sampled initial-condition entries.");

  m.def(
      "benchmark",
      [](int nx, int ny, int steps, double dt, double domain, double reynolds,
         const std::vector<int>& threadCounts, int repetitions, int warmups,
         const std::string& csvPath, double cflSafety) {
        bg::SolverConfig cfg =
            makeConfig(nx, ny, steps, dt, domain, reynolds, 1, "atomic", cflSafety);
        ensureEngine();
        bg::BenchmarkOptions options;
        options.threadCounts = threadCounts;
        options.repetitions = repetitions;
        options.warmups = warmups;
        std::vector<bg::BenchmarkRow> rows;
        {
          py::gil_scoped_release release;
          rows = bg::runBenchmark(cfg, options);
          if (!csvPath.empty()) {
            std::ofstream csv(csvPath);
            if (!csv) throw std::runtime_error("cannot open CSV file " + csvPath);
            bg::writeCsv(csv, rows);
          }
        }
        std::vector<py::dict> out;
        for (const auto& row : rows) {
          py::dict r;
          r["config"] = bg::toString(row.config);
          r["threads"] = row.threads;
          r["pass"] = row.pass;
          r["mean_seconds"] = row.meanSeconds;
          r["min_seconds"] = row.minSeconds;
          r["max_seconds"] = row.maxSeconds;
          r["speedup"] = row.speedup;
          r["efficiency"] = row.efficiency;
          out.push_back(std::move(r));
        }
        return out;
      },
      py::arg("nx") = 64, py::arg("ny") = 64, py::arg("steps") = 5, py::arg("dt") = 1e-4,
      py::arg("domain") = 1.0, py::arg("reynolds") = 1.0,
      py::arg("thread_counts") = std::vector<int>{1, 2, 4}, py::arg("repetitions") = 5,
      py::arg("warmups") = 1, py::arg("csv_path") = std::string{},
      py::arg("cfl_safety") = 2.0,
      "Time forward recording and reverse evaluation for every adjoint "
      "configuration and thread count; optionally write a CSV table.");

  m.def("adjoint_modes", [] {
    return std::vector<std::string>{"atomic", "access-control", "classical"};
  });
}
