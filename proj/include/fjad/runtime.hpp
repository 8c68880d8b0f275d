// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fjad/logic.hpp"
#include "fjad/types.hpp"

// Structured fork-join runtime. Every construct raises the AD events the
// differentiation logic needs, so code written against this runtime records
// parallel tapes that reverse-evaluate with the forward synchronization
// replayed inversely.
//
// Contracts (mirroring the usual fork-join rules):
//  - Worksharing constructs (forLoop, sections, single) and barriers must be
//    encountered by all team members in the same order.
//  - All members keep the same tape-activity state across a barrier;
//    reverse barriers count the whole team.
namespace fjad::rt {

namespace detail {
class Team;
struct WorkShare;
struct LockImpl;
}  // namespace detail

// Per-member view of a team. Passed by reference into region bodies; not
// copyable because it tracks the member's position in the construct sequence.
struct TeamContext {
  TeamContext(int index, int actual, detail::Team* team)
      : index(index), actual(actual), team(team) {}
  TeamContext(const TeamContext&) = delete;
  TeamContext& operator=(const TeamContext&) = delete;

  const int index;   // this member's index, 0 = encountering thread
  const int actual;  // resolved team size

  // internal
  detail::Team* const team;
  std::uint64_t constructCount = 0;
  std::shared_ptr<detail::WorkShare> currentLoop;
};

// Iteration distribution of a worksharing loop.
struct Schedule {
  enum class Kind { Static, Dynamic };
  Kind kind = Kind::Static;
  // Static: chunk 0 gives each member one contiguous block of ceil(n/actual)
  // iterations; chunk > 0 deals chunks round-robin. Dynamic: members grab
  // chunks (default 1) from a shared cursor.
  std::int64_t chunk = 0;

  static Schedule staticChunked(std::int64_t chunk = 0) { return {Kind::Static, chunk}; }
  static Schedule dynamicChunked(std::int64_t chunk = 1) { return {Kind::Dynamic, chunk}; }
};

// Largest team a region may resolve to (from the engine configuration).
int maxTeamSize();

// Runs body on min(numThreads, maxTeamSize()) concurrent members; the
// encountering thread executes index 0. Blocks until the team completes,
// including the implicit ending barrier. An exception in any member aborts
// the region and is rethrown here after teardown (first one wins); the
// recording is unusable afterwards until tapes and logic are reset.
void parallelRegion(int numThreads, const std::function<void(TeamContext&)>& body);

// Worksharing loop over [lo, hi). Every iteration runs exactly once across
// the team. Ends with a team barrier unless nowait.
void forLoop(TeamContext& ctx, std::int64_t lo, std::int64_t hi, Schedule schedule, bool nowait,
             const std::function<void(std::int64_t)>& body);
inline void forLoop(TeamContext& ctx, std::int64_t lo, std::int64_t hi,
                    const std::function<void(std::int64_t)>& body) {
  forLoop(ctx, lo, hi, Schedule{}, false, body);
}

// Each body runs exactly once, first-come arbitration. Barrier unless nowait.
void sections(TeamContext& ctx, const std::vector<std::function<void()>>& bodies,
              bool nowait = false);

// Exactly one member executes body; returns whether this member did.
// Barrier unless nowait.
bool single(TeamContext& ctx, const std::function<void()>& body, bool nowait = false);
inline bool singleNowait(TeamContext& ctx, const std::function<void()>& body) {
  return single(ctx, body, true);
}

// Index 0 executes body. No events, no synchronization.
void master(TeamContext& ctx, const std::function<void()>& body);

// Explicit team barrier.
void barrier(TeamContext& ctx);

// Mutual exclusion by name; same name = same mutex, process-wide. The
// unnamed overload uses one shared mutex.
void critical(const std::string& name, const std::function<void()>& body);
void critical(const std::function<void()>& body);

// Lock objects. Plain locks are not reentrant (setting one twice from the
// same thread is a contract violation); nested locks are. Handles are
// move-only; the mutex identity assigned at init is stable for the handle's
// lifetime.
class LockHandle {
 public:
  LockHandle() noexcept;
  ~LockHandle();
  LockHandle(LockHandle&& other) noexcept;
  LockHandle& operator=(LockHandle&& other) noexcept;

  bool initialized() const { return impl_ != nullptr; }

 private:
  explicit LockHandle(std::unique_ptr<detail::LockImpl> impl);

  friend LockHandle lockInit();
  friend LockHandle nestedLockInit();
  friend void lockDestroy(LockHandle& handle);
  friend void lockSet(LockHandle& handle);
  friend void lockUnset(LockHandle& handle);
  friend void nestedLockSet(LockHandle& handle);
  friend void nestedLockUnset(LockHandle& handle);
  friend MutexKey getLockIdentifier(const LockHandle& handle);

  std::unique_ptr<detail::LockImpl> impl_;
};

LockHandle lockInit();
LockHandle nestedLockInit();
void lockDestroy(LockHandle& handle);
void lockSet(LockHandle& handle);
void lockUnset(LockHandle& handle);
void nestedLockSet(LockHandle& handle);
void nestedLockUnset(LockHandle& handle);

// Stable mutex key of an initialized handle.
MutexKey getLockIdentifier(const LockHandle& handle);

// Runs body for loop iterations in ascending iteration order. Must be called
// inside a worksharing loop, with `iteration` the body's loop index; every
// iteration of the loop must pass through it exactly once.
void ordered(TeamContext& ctx, std::int64_t iteration, const std::function<void()>& body);

// A declared reduction: associative combine with identity, plus the guard
// that serializes contributions to the shared target.
template <typename T>
struct ReductionDecl {
  std::function<T(const T&, const T&)> combine;
  T identity;
  LockHandle guard;
};

template <typename T, typename F>
ReductionDecl<T> declareReduction(F&& combine, T identity) {
  return ReductionDecl<T>{std::forward<F>(combine), std::move(identity), nestedLockInit()};
}

namespace detail {
// Team barrier with SyncRegion events of the given kind.
void teamBarrier(TeamContext& ctx, SyncRegionKind kind);
}  // namespace detail

namespace detail {

// Guarded view of a value participating in a reduction statement. Every
// access to reduction data goes through one of these; the constructor takes
// the declaration's nested lock and the destructor releases it. The lock is
// reentrant, so the three views of one contribution statement (shared input,
// private input, assignment target) hold it jointly from the first access to
// the last — the statement executes atomically while each access still
// records its own acquisition.
template <typename T>
class Reducer {
 public:
  Reducer(LockHandle& guard, T& value) : guard_(guard), value_(value) { nestedLockSet(guard_); }
  ~Reducer() { nestedLockUnset(guard_); }
  Reducer(const Reducer&) = delete;
  Reducer& operator=(const Reducer&) = delete;

  T& get() { return value_; }

 private:
  LockHandle& guard_;
  T& value_;
};

}  // namespace detail

// Folds each member's private value into the shared target: a barrier
// separates the private phase from the contribution phase, each contribution
// is guarded by decl.guard, and an ending barrier publishes the result.
template <typename T>
void reduce(TeamContext& ctx, ReductionDecl<T>& decl, const T& privateValue, T& target) {
  detail::teamBarrier(ctx, SyncRegionKind::BarrierReduction);
  {
    T contribution = privateValue;
    detail::Reducer<T> shared(decl.guard, target);
    detail::Reducer<T> mine(decl.guard, contribution);
    detail::Reducer<T> out(decl.guard, target);
    out.get() = decl.combine(shared.get(), mine.get());
  }
  detail::teamBarrier(ctx, SyncRegionKind::BarrierImplicitWorkshare);
}

}  // namespace fjad::rt
