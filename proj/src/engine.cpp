// SPDX-License-Identifier: Apache-2.0
#include "fjad/engine.hpp"

#include <limits>
#include <memory>

#include "fjad/active.hpp"
#include "fjad/logic.hpp"

namespace fjad {

namespace {

struct Engine {
  Config config;
  // 64-bit so exhaustion of the 32-bit identifier space is detected instead
  // of wrapping into live identifiers.
  std::atomic<std::uint64_t> nextId{1};
  std::atomic<std::uint64_t> nextTapeId{1};
  std::atomic<std::size_t> liveTapes{0};
  AdjointVector adjoints;
  Diagnostics diagnostics;
};

std::unique_ptr<Engine> g_engine;

Engine& engine() {
  detail::require(g_engine != nullptr, "fjad: not initialized, call fjad::init first");
  return *g_engine;
}

thread_local Tape* t_currentTape = nullptr;

}  // namespace

void init(Config config) {
  detail::require(g_engine == nullptr, "init: already initialized");
  detail::require(config.maxTeamSize >= 1, "init: maxTeamSize must be >= 1");
  detail::require(config.spinBudget >= 0, "init: spinBudget must be >= 0");
  g_engine = std::make_unique<Engine>();
  g_engine->config = std::move(config);
  detail::logicInit();
}

void finalize() {
  detail::require(g_engine != nullptr, "finalize: not initialized");
  // Returns the pooled task tapes first so only user leaks remain counted.
  detail::logicShutdown();
  const std::size_t live = g_engine->liveTapes.load(std::memory_order_acquire);
  if (live != 0) {
    g_engine.reset();
    throw ContractViolation("finalize: user-created tapes still alive");
  }
  t_currentTape = nullptr;
  g_engine.reset();
}

bool initialized() { return g_engine != nullptr; }

const Config& config() { return engine().config; }

Identifier newIdentifier() {
  const std::uint64_t id = engine().nextId.fetch_add(1, std::memory_order_relaxed);
  if (id > std::numeric_limits<Identifier>::max()) {
    throw ResourceError("newIdentifier: identifier space exhausted");
  }
  return static_cast<Identifier>(id);
}

Identifier maxIdentifier() {
  const std::uint64_t handedOut = engine().nextId.load(std::memory_order_relaxed) - 1;
  const std::uint64_t cap = std::numeric_limits<Identifier>::max();
  return static_cast<Identifier>(handedOut > cap ? cap : handedOut);
}

AdjointVector& adjoints() { return engine().adjoints; }

Diagnostics& diagnostics() { return engine().diagnostics; }

Tape* createTape() {
  Engine& e = engine();
  Tape* tape = new Tape(e.nextTapeId.fetch_add(1, std::memory_order_relaxed));
  e.liveTapes.fetch_add(1, std::memory_order_acq_rel);
  return tape;
}

void deleteTape(Tape* tape) {
  if (tape == nullptr) return;
  Engine& e = engine();
  delete tape;
  e.liveTapes.fetch_sub(1, std::memory_order_acq_rel);
}

std::size_t liveTapeCount() { return engine().liveTapes.load(std::memory_order_acquire); }

Tape* currentTape() { return t_currentTape; }

void setCurrentTape(Tape* tape) { t_currentTape = tape; }

void resetIdentifiers() { engine().nextId.store(1, std::memory_order_relaxed); }

void clearAdjoints() { engine().adjoints.clear(); }

void resetAll() {
  logic().reset();
  resetIdentifiers();
  clearAdjoints();
}

void registerInput(adouble& x) {
  Tape* tape = currentTape();
  detail::require(tape != nullptr, "registerInput: no tape installed on this thread");
  const Identifier id = newIdentifier();
  const double partials[1] = {1.0};
  const Identifier args[1] = {id};
  tape->appendStatement(id, partials, args);
  x = adouble(x.value(), id);
}

void registerOutput(adouble& x) {
  if (!x.isActive()) return;
  Tape* tape = currentTape();
  detail::require(tape != nullptr, "registerOutput: no tape installed on this thread");
  const Identifier id = newIdentifier();
  const double partials[1] = {1.0};
  const Identifier args[1] = {x.id()};
  tape->appendStatement(id, partials, args);
  x = adouble(x.value(), id);
}

void seedAdjoint(const adouble& x, double value) {
  detail::require(x.isActive(), "seedAdjoint: value is passive, register it first");
  adjoints().set(x.id(), value);
}

double gradientOf(const adouble& x) { return adjoints().get(x.id()); }

}  // namespace fjad
