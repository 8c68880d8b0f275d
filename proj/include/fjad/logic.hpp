// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <barrier>
#include <cstdint>
#include <latch>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "fjad/tape.hpp"
#include "fjad/types.hpp"

namespace fjad {

enum class MutexKind : std::uint8_t { Critical, Lock, NestedLock, Ordered, Reduction };
enum class SyncRegionKind : std::uint8_t {
  BarrierExplicit,
  BarrierImplicitParallel,
  BarrierImplicitWorkshare,
  BarrierReduction
};
enum class WorkKind : std::uint8_t { Loop, Sections, Single };

const char* toString(MutexKind kind);
const char* toString(SyncRegionKind kind);
const char* toString(WorkKind kind);

// (kind, id) uniquely identifies one mutex for the program lifetime.
struct MutexKey {
  MutexKind kind = MutexKind::Critical;
  std::uint64_t id = 0;

  friend bool operator==(const MutexKey& a, const MutexKey& b) {
    return a.kind == b.kind && a.id == b.id;
  }
  friend bool operator<(const MutexKey& a, const MutexKey& b) {
    return a.kind != b.kind ? a.kind < b.kind : a.id < b.id;
  }
};

std::string toString(const MutexKey& key);

// Snapshot of the logic state needed to restart a positional evaluation:
// forward mutex counters and the calling thread's adjoint access mode.
struct LogicState {
  std::vector<std::pair<MutexKey, std::uint64_t>> mutexCounters;
  AdjointAccessMode callerMode = AdjointAccessMode::Atomic;
};

// Per-region AD data. Created at ParallelBegin on the encountering thread,
// filled in by the implicit tasks, and kept alive by the reverse external
// functions that reference it.
class ParallelData {
 public:
  ParallelData(int requested, std::string parentPath, AdjointAccessMode entryMode, bool active)
      : requested_(requested),
        parentPath_(std::move(parentPath)),
        entryMode_(entryMode),
        active_(active) {}

  bool active() const { return active_; }
  int requested() const { return requested_; }
  int actual() const { return actual_; }
  const std::string& parentPath() const { return parentPath_; }
  AdjointAccessMode entryMode() const { return entryMode_; }

  Tape* taskTape(int index) const { return taskTapes_[index]; }
  const Position& startPosition(int index) const { return startPositions_[index]; }
  const Position& endPosition(int index) const { return endPositions_[index]; }
  AdjointAccessMode taskAccessMode(int index) const { return taskAccessModes_[index]; }
  AdjointAccessMode endAccessMode(int index) const { return endAccessModes_[index]; }

  // Blocks until every implicit task of the region has ended.
  void completionLatchWait() const { completion_->wait(); }
  // Reverse counterpart of a forward barrier; counts `actual()` arrivals.
  void reverseBarrierWait() { reverseBarrier_->arrive_and_wait(); }

 private:
  friend class Logic;

  // First task to begin resolves the actual team size and sizes the arrays.
  void ensureActual(int actual);

  int requested_;
  std::string parentPath_;
  AdjointAccessMode entryMode_;
  bool active_;

  std::once_flag actualOnce_;
  int actual_ = 0;
  std::vector<Tape*> taskTapes_;
  std::vector<Position> startPositions_;
  std::vector<Position> endPositions_;
  std::vector<AdjointAccessMode> taskAccessModes_;
  std::vector<AdjointAccessMode> endAccessModes_;

  // Counted down by every implicit task end; the reverse action waits on it,
  // which keeps evaluation correct for backends that deliver task-end events
  // after ParallelEnd.
  std::optional<std::latch> completion_;
  // Reverse counterpart of the region's forward barriers.
  std::optional<std::barrier<>> reverseBarrier_;
};

// Logic-side view of one implicit task, returned by onImplicitTaskBegin and
// consumed by onImplicitTaskEnd on the same thread.
struct TaskData {
  int index = 0;
  std::shared_ptr<ParallelData> parallel;
  Tape* tape = nullptr;
  std::string path;
  Tape* previousTape = nullptr;
  std::string previousPath;
  AdjointAccessMode previousMode = AdjointAccessMode::Atomic;
  TaskData* previousTask = nullptr;
  std::thread::id owner;
};

// Event-based differentiation logic for fork-join parallelism. Forward
// actions run inside the event handlers while the program records; reverse
// actions are pushed onto the recording tapes as external functions, so a
// plain reverse evaluation of the master tape recreates the parallelism,
// synchronization and mutual exclusion of the forward pass in reverse.
class Logic {
 public:
  Logic();
  ~Logic();

  // --- execution model events -------------------------------------------
  std::shared_ptr<ParallelData> onParallelBegin(int requested);
  std::unique_ptr<TaskData> onImplicitTaskBegin(int actual, int index,
                                                const std::shared_ptr<ParallelData>& pd);
  void onImplicitTaskEnd(TaskData* task);
  void onParallelEnd(const std::shared_ptr<ParallelData>& pd);

  void onSyncRegionBegin(SyncRegionKind kind);
  void onSyncRegionEnd(SyncRegionKind kind);

  void onMutexAcquired(const MutexKey& key);
  void onMutexReleased(const MutexKey& key);

  void onWorkBegin(WorkKind kind);
  void onWorkEnd(WorkKind kind);

  // --- user tools ---------------------------------------------------------
  void setAdjointAccessMode(AdjointAccessMode mode);
  AdjointAccessMode getAdjointAccessMode() const;

  // Pushes a reverse-only team barrier onto the calling task's tape. Outside
  // a region: diagnostic, nothing pushed.
  void addReverseBarrier();
  // Pushes a reverse-only sequentially consistent memory fence.
  void addReverseFlush();

  // Prospective filter: events for this key are ignored from now on. Has no
  // effect on already recorded events.
  void registerInactiveMutex(const MutexKey& key);

  LogicState exportState() const;
  void recoverState(const LogicState& state);

  // Fresh mutex identifier for backend-side constructs (locks, named
  // criticals, ordered gates, reduction guards).
  std::uint64_t newMutexId();

  // Distinguishes this logic instance from those of earlier init/finalize
  // cycles, so process-lifetime registries can re-resolve their mutex ids.
  std::uint64_t epoch() const { return epoch_; }

  // Drops all pooled task tapes and zeroes mutex counters. Only valid between
  // recordings, after the master tape has been reset.
  void reset();

  // --- introspection (tests, diagnostics) ---------------------------------
  std::size_t pooledTapeCount() const;
  std::uint64_t forwardMutexCounter(const MutexKey& key) const;
  std::uint64_t reverseMutexCounter(const MutexKey& key) const;
  bool insideRegion() const;

 private:
  struct MutexState {
    std::atomic<std::uint64_t> forward{0};
    std::atomic<std::uint64_t> reverse{0};
  };
  struct PoolEntry {
    Tape* tape = nullptr;
    std::atomic<bool> busy{false};
  };

  bool recordingActive() const;
  Tape* activeTape() const;
  MutexState& mutexState(const MutexKey& key);
  const MutexState* mutexStateIfPresent(const MutexKey& key) const;
  PoolEntry& acquirePoolEntry(const std::string& path);

  mutable std::mutex poolLock_;
  std::map<std::string, std::unique_ptr<PoolEntry>> pool_;

  mutable std::mutex mutexTableLock_;
  std::map<MutexKey, std::unique_ptr<MutexState>> mutexTable_;
  std::set<MutexKey> inactiveMutexes_;

  std::atomic<std::uint64_t> nextMutexId_{1};
  std::uint64_t epoch_ = 0;
};

Logic& logic();

namespace detail {
void logicInit();
void logicShutdown();
// Trace emission shared with the runtime layer (no-op without a sink).
bool traceEnabled();
void traceEvent(const char* name, const std::string& payload);
}  // namespace detail

}  // namespace fjad
