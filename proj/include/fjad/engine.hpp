// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <string>

#include "fjad/adjoints.hpp"
#include "fjad/tape.hpp"
#include "fjad/types.hpp"

namespace fjad {

// Global configuration, fixed at init().
struct Config {
  // Upper bound applied to requested team sizes of parallel regions.
  int maxTeamSize = 1024;
  // Spins before a reverse-pass wait loop starts yielding the processor.
  int spinBudget = 64;
  // Optional event-trace sink. Receives one formatted record per event; must
  // be callable from any thread. Lines look like
  //   seq=<n> thread=<t> event=<name> [key=<kind>:<id>] [value=<v>] [...]
  std::function<void(const std::string&)> traceSink;
};

// Monotone counters for conditions that are tolerated but worth surfacing.
struct Diagnostics {
  // Overloaded operations whose recording was rejected (non-finite partial).
  std::atomic<std::uint64_t> rejectedStatements{0};
  // AD events ignored because no active tape was installed or the event
  // arrived outside the construct it belongs to.
  std::atomic<std::uint64_t> ignoredEvents{0};
  // addReverseBarrier calls outside a parallel region (nothing was pushed).
  std::atomic<std::uint64_t> misplacedReverseBarriers{0};
  // Tape pool handed out a tape that was still marked in use (must stay 0).
  std::atomic<std::uint64_t> tapeBusyViolations{0};

  void clear() {
    rejectedStatements = 0;
    ignoredEvents = 0;
    misplacedReverseBarriers = 0;
    tapeBusyViolations = 0;
  }
};

// Engine lifetime. init constructs the global identifier source, adjoint
// vector and event logic; finalize tears everything down and fails if user
// tapes are still alive. Calling init twice without finalize is an error.
void init(Config config = {});
void finalize();
bool initialized();
const Config& config();

// Fresh, globally unique identifier; first call after init returns 1.
// Thread-safe. Throws ResourceError when the identifier space is exhausted.
Identifier newIdentifier();

// Largest identifier handed out so far (0 if none).
Identifier maxIdentifier();

// The process-wide adjoint vector shared by all evaluations.
AdjointVector& adjoints();

Diagnostics& diagnostics();

// Tape lifecycle with live accounting (finalize checks the count).
Tape* createTape();
void deleteTape(Tape* tape);
std::size_t liveTapeCount();

// Per-thread recording slot. A thread with no tape installed (or an inactive
// one) records nothing.
Tape* currentTape();
void setCurrentTape(Tape* tape);

// Resets the identifier counter and clears all adjoints. Only valid between
// recordings: every previously recorded tape and every live active value is
// invalidated. Used together with Logic::reset() via resetAll().
void resetIdentifiers();

// Clears all adjoint slots.
void clearAdjoints();

// Convenience: Logic::reset() + resetIdentifiers() + clearAdjoints(). The
// caller must have reset or deleted its own tapes first.
void resetAll();

}  // namespace fjad
