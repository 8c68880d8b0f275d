// SPDX-License-Identifier: Apache-2.0
#include "fjad/logic.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <unordered_map>

#include "fjad/engine.hpp"
#include "fjad/tool.hpp"

namespace fjad {

namespace {

// Recording-side state of one OS thread.
struct AcquireRecord {
  std::uint64_t value = 0;  // counter value of this thread's latest acquisition
  int depth = 0;            // nesting depth (reentrant locks)
};

struct ThreadState {
  std::string path;  // nesting path of the implicit task running on this thread
  AdjointAccessMode mode = AdjointAccessMode::Atomic;
  TaskData* task = nullptr;
  std::map<MutexKey, AcquireRecord> acquired;
};

ThreadState& tls() {
  static thread_local ThreadState state;
  return state;
}

std::string joinPath(const std::string& parent, int index) {
  return parent.empty() ? std::to_string(index) : parent + "/" + std::to_string(index);
}

std::atomic<std::uint64_t> g_traceSeq{0};
std::atomic<int> g_nextThreadTag{0};

int threadTag() {
  static thread_local int tag = g_nextThreadTag.fetch_add(1, std::memory_order_relaxed);
  return tag;
}

// Bounded spin, then yields, then naps. Reverse waits can be long on
// oversubscribed machines; never burn a core on them.
template <typename Pred>
void spinWaitUntil(Pred pred) {
  const int budget = initialized() ? config().spinBudget : 64;
  int spins = 0;
  int yields = 0;
  while (!pred()) {
    if (spins < budget) {
      ++spins;
    } else if (yields < 4096) {
      ++yields;
      std::this_thread::yield();
    } else {
      std::this_thread::sleep_for(std::chrono::microseconds(50));
    }
  }
}

std::unique_ptr<Logic> g_logic;

}  // namespace

namespace detail {

bool traceEnabled() { return initialized() && static_cast<bool>(config().traceSink); }

void traceEvent(const char* name, const std::string& payload) {
  if (!traceEnabled()) return;
  char head[96];
  std::snprintf(head, sizeof(head), "seq=%llu thread=%d event=%s",
                static_cast<unsigned long long>(g_traceSeq.fetch_add(1)), threadTag(), name);
  std::string line(head);
  if (!payload.empty()) {
    line += ' ';
    line += payload;
  }
  config().traceSink(line);
}

void logicInit() {
  // Thread-local state of the initializing thread must not leak across
  // engine lifetimes (a previous engine's access mode or task pointer).
  tls() = ThreadState{};
  g_logic = std::make_unique<Logic>();
}
void logicShutdown() { g_logic.reset(); }

}  // namespace detail

namespace {

void traceMutex(const char* name, const MutexKey& key, std::uint64_t value) {
  if (!detail::traceEnabled()) return;
  detail::traceEvent(name, "key=" + toString(key) + " value=" + std::to_string(value));
}

}  // namespace

const char* toString(MutexKind kind) {
  switch (kind) {
    case MutexKind::Critical: return "critical";
    case MutexKind::Lock: return "lock";
    case MutexKind::NestedLock: return "nested_lock";
    case MutexKind::Ordered: return "ordered";
    case MutexKind::Reduction: return "reduction";
  }
  return "?";
}

const char* toString(SyncRegionKind kind) {
  switch (kind) {
    case SyncRegionKind::BarrierExplicit: return "explicit";
    case SyncRegionKind::BarrierImplicitParallel: return "implicit_parallel";
    case SyncRegionKind::BarrierImplicitWorkshare: return "implicit_workshare";
    case SyncRegionKind::BarrierReduction: return "reduction";
  }
  return "?";
}

const char* toString(WorkKind kind) {
  switch (kind) {
    case WorkKind::Loop: return "loop";
    case WorkKind::Sections: return "sections";
    case WorkKind::Single: return "single";
  }
  return "?";
}

std::string toString(const MutexKey& key) {
  return std::string(toString(key.kind)) + ":" + std::to_string(key.id);
}

Logic& logic() {
  detail::require(g_logic != nullptr, "logic(): not initialized, call fjad::init first");
  return *g_logic;
}

void ParallelData::ensureActual(int actual) {
  std::call_once(actualOnce_, [&] {
    detail::require(actual >= 1 && actual <= requested_,
                    "implicit task: actual parallelism out of range");
    actual_ = actual;
    taskTapes_.assign(actual, nullptr);
    startPositions_.assign(actual, Position{});
    endPositions_.assign(actual, Position{});
    taskAccessModes_.assign(actual, entryMode_);
    endAccessModes_.assign(actual, entryMode_);
    completion_.emplace(actual);
    reverseBarrier_.emplace(actual);
  });
  detail::require(actual == actual_, "implicit task: inconsistent actual parallelism");
}

Logic::Logic() {
  static std::atomic<std::uint64_t> nextEpoch{1};
  epoch_ = nextEpoch.fetch_add(1, std::memory_order_relaxed);
  // Key reserved for the logic's internal locking, registered inactive so no
  // internal lock use can ever feed back into the event stream.
  inactiveMutexes_.insert(MutexKey{MutexKind::Lock, 0});
}

Logic::~Logic() {
  std::lock_guard<std::mutex> lock(poolLock_);
  for (auto& [path, entry] : pool_) {
    tool().deleteTape(entry->tape);
  }
  pool_.clear();
}

bool Logic::recordingActive() const {
  Tape* t = static_cast<Tape*>(tool().getThreadLocalTape());
  return t != nullptr && t->isActive();
}

Tape* Logic::activeTape() const { return static_cast<Tape*>(tool().getThreadLocalTape()); }

Logic::MutexState& Logic::mutexState(const MutexKey& key) {
  std::lock_guard<std::mutex> lock(mutexTableLock_);
  auto& slot = mutexTable_[key];
  if (!slot) slot = std::make_unique<MutexState>();
  return *slot;
}

const Logic::MutexState* Logic::mutexStateIfPresent(const MutexKey& key) const {
  std::lock_guard<std::mutex> lock(mutexTableLock_);
  auto it = mutexTable_.find(key);
  return it == mutexTable_.end() ? nullptr : it->second.get();
}

Logic::PoolEntry& Logic::acquirePoolEntry(const std::string& path) {
  std::lock_guard<std::mutex> lock(poolLock_);
  auto& slot = pool_[path];
  if (!slot) {
    slot = std::make_unique<PoolEntry>();
    slot->tape = static_cast<Tape*>(tool().createTape());
  }
  return *slot;
}

std::shared_ptr<ParallelData> Logic::onParallelBegin(int requested) {
  detail::require(requested >= 1, "onParallelBegin: requested parallelism must be >= 1");
  const bool active = recordingActive();
  auto pd = std::make_shared<ParallelData>(requested, tls().path, tls().mode, active);
  if (active) detail::traceEvent("ParallelBegin", "requested=" + std::to_string(requested));
  return pd;
}

std::unique_ptr<TaskData> Logic::onImplicitTaskBegin(int actual, int index,
                                                     const std::shared_ptr<ParallelData>& pd) {
  if (!pd || !pd->active()) return nullptr;
  pd->ensureActual(actual);
  detail::require(index >= 0 && index < actual, "onImplicitTaskBegin: index out of range");

  auto task = std::make_unique<TaskData>();
  task->index = index;
  task->parallel = pd;
  task->path = joinPath(pd->parentPath(), index);
  task->previousTape = static_cast<Tape*>(tool().getThreadLocalTape());
  task->previousPath = tls().path;
  task->previousMode = tls().mode;
  task->previousTask = tls().task;
  task->owner = std::this_thread::get_id();

  PoolEntry& entry = acquirePoolEntry(task->path);
  if (entry.busy.exchange(true, std::memory_order_acq_rel)) {
    diagnostics().tapeBusyViolations.fetch_add(1, std::memory_order_relaxed);
  }
  Tape* tape = entry.tape;
  task->tape = tape;

  tool().setThreadLocalTape(tape);
  tls().path = task->path;
  tls().task = task.get();
  tls().mode = pd->entryMode();
  // Tasks start in the parent's access mode; align the pooled tape if its
  // previous use ended in a different one.
  if (tape->recordingMode() != pd->entryMode()) tape->setAccessModeMarker(pd->entryMode());

  pd->taskTapes_[index] = tape;
  pd->taskAccessModes_[index] = pd->entryMode();
  pd->startPositions_[index] = tape->position();
  tape->setActive(true);

  detail::traceEvent("ImplicitTaskBegin",
                     "index=" + std::to_string(index) + " actual=" + std::to_string(actual));
  return task;
}

void Logic::onImplicitTaskEnd(TaskData* task) {
  if (task == nullptr) return;
  detail::require(task->owner == std::this_thread::get_id(),
                  "onImplicitTaskEnd: event raised on a different thread than the begin");
  auto pd = task->parallel;
  Tape* tape = task->tape;

  pd->endPositions_[task->index] = tape->position();
  // The tape's current mode is authoritative for evaluating this segment.
  pd->endAccessModes_[task->index] = tape->recordingMode();
  tape->setActive(false);

  {
    std::lock_guard<std::mutex> lock(poolLock_);
    auto it = pool_.find(task->path);
    if (it != pool_.end()) it->second->busy.store(false, std::memory_order_release);
  }

  tool().setThreadLocalTape(task->previousTape);
  tls().path = task->previousPath;
  tls().mode = task->previousMode;
  tls().task = task->previousTask;

  detail::traceEvent("ImplicitTaskEnd", "index=" + std::to_string(task->index));
  pd->completion_->count_down();
}

namespace {

// Reverse action of a parallel region: once every implicit task has ended,
// spawn one worker per task and evaluate the recorded segments concurrently.
// Joining before returning makes everything the encountering thread recorded
// before the region reverse strictly after the region.
void reverseParallelRegion(const std::shared_ptr<ParallelData>& pd) {
  pd->completionLatchWait();
  const int n = pd->actual();
  if (detail::traceEnabled()) {
    detail::traceEvent("ReverseParallel", "actual=" + std::to_string(n));
  }
  std::vector<std::thread> workers;
  workers.reserve(n);
  std::mutex errorLock;
  std::exception_ptr firstError;
  for (int i = 0; i < n; ++i) {
    workers.emplace_back([&, i] {
      try {
        Position start = pd->endPosition(i);
        Position end = pd->startPosition(i);
        const bool useAtomics = pd->endAccessMode(i) == AdjointAccessMode::Atomic;
        tool().evaluate(pd->taskTape(i), &start, &end, useAtomics);
      } catch (...) {
        std::lock_guard<std::mutex> lock(errorLock);
        if (!firstError) firstError = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  if (firstError) std::rethrow_exception(firstError);
}

}  // namespace

void Logic::onParallelEnd(const std::shared_ptr<ParallelData>& pd) {
  if (!pd || !pd->active()) return;
  Tape* parent = activeTape();
  detail::require(parent != nullptr, "onParallelEnd: no tape to embed the reverse region into");
  detail::traceEvent("ParallelEnd", "requested=" + std::to_string(pd->requested()));
  parent->pushExternalFunction(
      makeExternalFunction([pd](AdjointVector&) { reverseParallelRegion(pd); }));
}

void Logic::onSyncRegionBegin(SyncRegionKind kind) {
  if (tool().getThreadLocalTape() == nullptr || tls().task == nullptr) {
    diagnostics().ignoredEvents.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  if (!recordingActive()) return;
  detail::traceEvent("SyncRegionBegin", std::string("kind=") + toString(kind));
}

void Logic::onSyncRegionEnd(SyncRegionKind kind) {
  if (tool().getThreadLocalTape() == nullptr || tls().task == nullptr) {
    diagnostics().ignoredEvents.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  if (!recordingActive()) return;
  detail::traceEvent("SyncRegionEnd", std::string("kind=") + toString(kind));
  auto pd = tls().task->parallel;
  // The reverse counterpart of a barrier is a barrier: every task tape gets
  // this entry, so the reverse workers synchronize at the same cut.
  activeTape()->pushExternalFunction(makeExternalFunction([pd](AdjointVector&) {
    pd->reverseBarrierWait();
    detail::traceEvent("ReverseBarrier", "");
  }));
}

void Logic::onMutexAcquired(const MutexKey& key) {
  if (!recordingActive()) return;
  {
    std::lock_guard<std::mutex> lock(mutexTableLock_);
    if (inactiveMutexes_.count(key) != 0) return;
  }
  MutexState& st = mutexState(key);
  // The caller still holds the mutex, so the increment is totally ordered
  // with all other acquisitions of this key.
  const std::uint64_t v = st.forward.fetch_add(1, std::memory_order_relaxed) + 1;
  st.reverse.store(v, std::memory_order_relaxed);
  AcquireRecord& record = tls().acquired[key];
  record.value = v;
  ++record.depth;
  traceMutex("MutexAcquired", key, v);

  MutexState* state = &st;
  activeTape()->pushExternalFunction(makeExternalFunction([key, v, state](AdjointVector&) {
    state->reverse.store(v - 1, std::memory_order_release);
    traceMutex("MutexReverseAcquire", key, v);
  }));
}

void Logic::onMutexReleased(const MutexKey& key) {
  if (!recordingActive()) return;
  {
    std::lock_guard<std::mutex> lock(mutexTableLock_);
    if (inactiveMutexes_.count(key) != 0) return;
  }
  auto it = tls().acquired.find(key);
  if (it == tls().acquired.end() || it->second.depth == 0) {
    throw ContractViolation("onMutexReleased: no matching MutexAcquired on this thread");
  }
  // Release handling runs after the mutex is already unlocked, so it must not
  // read the shared counter; the thread-local latest acquisition value is
  // what makes reentrant acquisition groups unwind as one exclusive span.
  const std::uint64_t v = it->second.value;
  --it->second.depth;
  traceMutex("MutexReleased", key, v);

  MutexState* state = &mutexState(key);
  activeTape()->pushExternalFunction(makeExternalFunction([key, v, state](AdjointVector&) {
    spinWaitUntil([state, v] { return state->reverse.load(std::memory_order_acquire) == v; });
    traceMutex("MutexReverseRelease", key, v);
  }));
}

void Logic::onWorkBegin(WorkKind kind) {
  detail::traceEvent("WorkBegin", std::string("kind=") + toString(kind));
}

void Logic::onWorkEnd(WorkKind kind) {
  detail::traceEvent("WorkEnd", std::string("kind=") + toString(kind));
}

void Logic::setAdjointAccessMode(AdjointAccessMode mode) {
  tls().mode = mode;
  Tape* t = activeTape();
  if (t != nullptr && t->recordingMode() != mode) t->setAccessModeMarker(mode);
  detail::traceEvent("SetAdjointAccessMode", std::string("mode=") + toString(mode));
}

AdjointAccessMode Logic::getAdjointAccessMode() const { return tls().mode; }

void Logic::addReverseBarrier() {
  if (tls().task == nullptr) {
    diagnostics().misplacedReverseBarriers.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  if (!recordingActive()) return;
  auto pd = tls().task->parallel;
  activeTape()->pushExternalFunction(makeExternalFunction([pd](AdjointVector&) {
    pd->reverseBarrierWait();
    detail::traceEvent("ReverseBarrier", "");
  }));
  detail::traceEvent("AddReverseBarrier", "");
}

void Logic::addReverseFlush() {
  if (!recordingActive()) return;
  activeTape()->pushExternalFunction(makeExternalFunction([](AdjointVector&) {
    std::atomic_thread_fence(std::memory_order_seq_cst);
    detail::traceEvent("ReverseFlush", "");
  }));
  detail::traceEvent("AddReverseFlush", "");
}

void Logic::registerInactiveMutex(const MutexKey& key) {
  std::lock_guard<std::mutex> lock(mutexTableLock_);
  inactiveMutexes_.insert(key);
}

LogicState Logic::exportState() const {
  LogicState state;
  {
    std::lock_guard<std::mutex> lock(mutexTableLock_);
    state.mutexCounters.reserve(mutexTable_.size());
    for (const auto& [key, st] : mutexTable_) {
      state.mutexCounters.emplace_back(key, st->forward.load(std::memory_order_relaxed));
    }
  }
  state.callerMode = tls().mode;
  return state;
}

void Logic::recoverState(const LogicState& state) {
  std::map<MutexKey, std::uint64_t> snapshot(state.mutexCounters.begin(),
                                             state.mutexCounters.end());
  {
    std::lock_guard<std::mutex> lock(mutexTableLock_);
    for (auto& [key, st] : mutexTable_) {
      auto it = snapshot.find(key);
      // Keys unknown to the snapshot did not exist at export time.
      st->reverse.store(it == snapshot.end() ? 0 : it->second, std::memory_order_relaxed);
    }
  }
  tls().mode = state.callerMode;
  detail::traceEvent("RecoverState", "");
}

std::uint64_t Logic::newMutexId() {
  return nextMutexId_.fetch_add(1, std::memory_order_relaxed);
}

void Logic::reset() {
  {
    std::lock_guard<std::mutex> lock(poolLock_);
    for (auto& [path, entry] : pool_) {
      detail::require(!entry->busy.load(std::memory_order_acquire),
                      "Logic::reset: a pooled tape is still in use");
      tool().deleteTape(entry->tape);
    }
    pool_.clear();
  }
  std::lock_guard<std::mutex> lock(mutexTableLock_);
  for (auto& [key, st] : mutexTable_) {
    st->forward.store(0, std::memory_order_relaxed);
    st->reverse.store(0, std::memory_order_relaxed);
  }
}

std::size_t Logic::pooledTapeCount() const {
  std::lock_guard<std::mutex> lock(poolLock_);
  return pool_.size();
}

std::uint64_t Logic::forwardMutexCounter(const MutexKey& key) const {
  const MutexState* st = mutexStateIfPresent(key);
  return st == nullptr ? 0 : st->forward.load(std::memory_order_relaxed);
}

std::uint64_t Logic::reverseMutexCounter(const MutexKey& key) const {
  const MutexState* st = mutexStateIfPresent(key);
  return st == nullptr ? 0 : st->reverse.load(std::memory_order_relaxed);
}

bool Logic::insideRegion() const { return tls().task != nullptr; }

}  // namespace fjad
