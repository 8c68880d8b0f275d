// SPDX-License-Identifier: Apache-2.0
#include "fjad/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "fjad/engine.hpp"

namespace fjad::rt {

namespace {

template <typename Pred>
void spinWaitUntil(Pred pred) {
  const int budget = fjad::initialized() ? fjad::config().spinBudget : 64;
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

}  // namespace

namespace detail {

// Shared state of one worksharing construct instance.
struct WorkShare {
  explicit WorkShare(std::int64_t lo) : cursor(lo), orderedNext(lo) {}

  std::atomic<std::int64_t> cursor;       // dynamic schedule / sections arbitration
  std::atomic<std::int64_t> orderedNext;  // next iteration admitted through ordered()
  std::atomic<bool> claimed{false};       // single arbitration
  std::atomic<int> done{0};               // members that left the construct
};

class Team {
 public:
  Team(int actual, std::uint64_t orderedKeyId)
      : actual_(actual), barrier_(actual), orderedKey_{MutexKind::Ordered, orderedKeyId} {}

  void arriveAndWait() { barrier_.arrive_and_wait(); }
  void arriveAndDrop() { barrier_.arrive_and_drop(); }

  const MutexKey& orderedKey() const { return orderedKey_; }

  // Find-or-create the shared state of the construct all members are
  // entering; all members pass the same per-member construct counter because
  // they encounter constructs in the same order.
  std::shared_ptr<WorkShare> share(std::uint64_t key, std::int64_t lo) {
    std::lock_guard<std::mutex> lock(sharesLock_);
    auto& slot = shares_[key];
    if (!slot) slot = std::make_shared<WorkShare>(lo);
    return slot;
  }

  void leaveShare(std::uint64_t key, const std::shared_ptr<WorkShare>& ws) {
    if (ws->done.fetch_add(1, std::memory_order_acq_rel) + 1 == actual_) {
      std::lock_guard<std::mutex> lock(sharesLock_);
      shares_.erase(key);
    }
  }

 private:
  const int actual_;
  std::barrier<> barrier_;
  const MutexKey orderedKey_;
  std::mutex sharesLock_;
  std::unordered_map<std::uint64_t, std::shared_ptr<WorkShare>> shares_;
};

void teamBarrier(TeamContext& ctx, SyncRegionKind kind) {
  logic().onSyncRegionBegin(kind);
  ctx.team->arriveAndWait();
  logic().onSyncRegionEnd(kind);
}

}  // namespace detail

int maxTeamSize() { return config().maxTeamSize; }

void parallelRegion(int numThreads, const std::function<void(TeamContext&)>& body) {
  fjad::detail::require(numThreads >= 1, "parallelRegion: numThreads must be >= 1");
  const int actual = std::min(numThreads, config().maxTeamSize);

  auto pd = logic().onParallelBegin(numThreads);
  detail::Team team(actual, logic().newMutexId());

  std::mutex errorLock;
  std::exception_ptr firstError;

  auto runMember = [&](int index) {
    TeamContext ctx(index, actual, &team);
    std::unique_ptr<TaskData> task;
    bool taskBegun = false;
    try {
      task = logic().onImplicitTaskBegin(actual, index, pd);
      taskBegun = true;
      body(ctx);
      detail::teamBarrier(ctx, SyncRegionKind::BarrierImplicitParallel);
    } catch (...) {
      {
        std::lock_guard<std::mutex> lock(errorLock);
        if (!firstError) firstError = std::current_exception();
      }
      // Leave the barrier protocol so surviving members cannot deadlock on
      // this member's missing arrivals.
      team.arriveAndDrop();
    }
    if (taskBegun) logic().onImplicitTaskEnd(task.get());
  };

  std::vector<std::thread> workers;
  workers.reserve(actual - 1);
  for (int index = 1; index < actual; ++index) workers.emplace_back(runMember, index);
  runMember(0);
  for (auto& worker : workers) worker.join();

  logic().onParallelEnd(pd);
  if (firstError) std::rethrow_exception(firstError);
}

void forLoop(TeamContext& ctx, std::int64_t lo, std::int64_t hi, Schedule schedule, bool nowait,
             const std::function<void(std::int64_t)>& body) {
  fjad::detail::require(lo <= hi, "forLoop: empty or inverted range");
  fjad::detail::require(
      static_cast<std::uint64_t>(hi - lo) <= std::uint64_t{std::numeric_limits<std::int64_t>::max()},
      "forLoop: range length overflows");
  const std::int64_t n = hi - lo;

  logic().onWorkBegin(WorkKind::Loop);
  const std::uint64_t key = ++ctx.constructCount;
  auto ws = ctx.team->share(key, lo);
  ctx.currentLoop = ws;

  if (schedule.kind == Schedule::Kind::Static) {
    std::int64_t chunk = schedule.chunk;
    if (chunk <= 0) chunk = std::max<std::int64_t>(1, (n + ctx.actual - 1) / ctx.actual);
    if (schedule.chunk > 0) {
      // Chunks dealt round-robin: member k runs chunks k, k+actual, ...
      const std::int64_t stride = chunk * ctx.actual;
      for (std::int64_t base = lo + ctx.index * chunk; base < hi; base += stride) {
        const std::int64_t stop = std::min(base + chunk, hi);
        for (std::int64_t i = base; i < stop; ++i) body(i);
      }
    } else {
      // One contiguous block per member.
      const std::int64_t begin = std::min(lo + ctx.index * chunk, hi);
      const std::int64_t stop = std::min(begin + chunk, hi);
      for (std::int64_t i = begin; i < stop; ++i) body(i);
    }
  } else {
    const std::int64_t chunk = schedule.chunk > 0 ? schedule.chunk : 1;
    for (;;) {
      const std::int64_t begin = ws->cursor.fetch_add(chunk, std::memory_order_relaxed);
      if (begin >= hi) break;
      const std::int64_t stop = std::min(begin + chunk, hi);
      for (std::int64_t i = begin; i < stop; ++i) body(i);
    }
  }

  ctx.currentLoop.reset();
  ctx.team->leaveShare(key, ws);
  logic().onWorkEnd(WorkKind::Loop);
  if (!nowait) detail::teamBarrier(ctx, SyncRegionKind::BarrierImplicitWorkshare);
}

void sections(TeamContext& ctx, const std::vector<std::function<void()>>& bodies, bool nowait) {
  logic().onWorkBegin(WorkKind::Sections);
  const std::uint64_t key = ++ctx.constructCount;
  auto ws = ctx.team->share(key, 0);
  const auto count = static_cast<std::int64_t>(bodies.size());
  for (;;) {
    const std::int64_t s = ws->cursor.fetch_add(1, std::memory_order_relaxed);
    if (s >= count) break;
    bodies[static_cast<std::size_t>(s)]();
  }
  ctx.team->leaveShare(key, ws);
  logic().onWorkEnd(WorkKind::Sections);
  if (!nowait) detail::teamBarrier(ctx, SyncRegionKind::BarrierImplicitWorkshare);
}

bool single(TeamContext& ctx, const std::function<void()>& body, bool nowait) {
  logic().onWorkBegin(WorkKind::Single);
  const std::uint64_t key = ++ctx.constructCount;
  auto ws = ctx.team->share(key, 0);
  const bool executor = !ws->claimed.exchange(true, std::memory_order_acq_rel);
  if (executor) body();
  ctx.team->leaveShare(key, ws);
  logic().onWorkEnd(WorkKind::Single);
  if (!nowait) detail::teamBarrier(ctx, SyncRegionKind::BarrierImplicitWorkshare);
  return executor;
}

void master(TeamContext& ctx, const std::function<void()>& body) {
  if (ctx.index == 0) body();
}

void barrier(TeamContext& ctx) { detail::teamBarrier(ctx, SyncRegionKind::BarrierExplicit); }

namespace {

struct CriticalEntry {
  std::mutex mutex;
  std::uint64_t id = 0;
  std::uint64_t epoch = 0;
};

// Append-only: critical identities must outlive every tape that recorded
// them. Entries re-resolve their id after an engine init/finalize cycle so
// stale ids cannot collide with fresh ones. The registry's own lock never
// raises events.
CriticalEntry& criticalEntry(const std::string& name) {
  static std::mutex registryLock;
  static auto* registry = new std::map<std::string, std::unique_ptr<CriticalEntry>>();
  std::lock_guard<std::mutex> lock(registryLock);
  auto& slot = (*registry)[name];
  if (!slot) slot = std::make_unique<CriticalEntry>();
  if (slot->epoch != logic().epoch()) {
    slot->id = logic().newMutexId();
    slot->epoch = logic().epoch();
  }
  return *slot;
}

}  // namespace

void critical(const std::string& name, const std::function<void()>& body) {
  CriticalEntry& entry = criticalEntry(name);
  const MutexKey key{MutexKind::Critical, entry.id};
  entry.mutex.lock();
  logic().onMutexAcquired(key);
  try {
    body();
  } catch (...) {
    entry.mutex.unlock();
    logic().onMutexReleased(key);
    throw;
  }
  entry.mutex.unlock();
  logic().onMutexReleased(key);
}

void critical(const std::function<void()>& body) { critical(std::string(), body); }

namespace detail {

struct LockImpl {
  std::recursive_mutex mutex;
  MutexKey key;
  std::atomic<std::thread::id> owner{};
  int depth = 0;  // modified only while holding the mutex
};

}  // namespace detail

namespace {

// Set/unset over the underlying recursive mutex with owner and depth
// tracking, so misuse is a reported contract violation instead of a
// deadlock or undefined behavior.
void setImpl(detail::LockImpl& impl, MutexKind kind) {
  fjad::detail::require(impl.key.kind == kind, "lock set: handle kind mismatch");
  const auto self = std::this_thread::get_id();
  if (kind == MutexKind::Lock && impl.owner.load(std::memory_order_acquire) == self &&
      impl.depth > 0) {
    throw ContractViolation("lockSet: plain lock is not reentrant");
  }
  impl.mutex.lock();
  impl.owner.store(self, std::memory_order_release);
  ++impl.depth;
  logic().onMutexAcquired(impl.key);
}

void unsetImpl(detail::LockImpl& impl, MutexKind kind) {
  fjad::detail::require(impl.key.kind == kind, "lock unset: handle kind mismatch");
  const auto self = std::this_thread::get_id();
  if (impl.owner.load(std::memory_order_acquire) != self || impl.depth <= 0) {
    throw ContractViolation("lockUnset: lock is not held by this thread");
  }
  const MutexKey key = impl.key;
  if (--impl.depth == 0) impl.owner.store(std::thread::id{}, std::memory_order_release);
  impl.mutex.unlock();
  logic().onMutexReleased(key);
}

}  // namespace

LockHandle::LockHandle() noexcept = default;
LockHandle::~LockHandle() = default;
LockHandle::LockHandle(LockHandle&& other) noexcept = default;
LockHandle& LockHandle::operator=(LockHandle&& other) noexcept = default;
LockHandle::LockHandle(std::unique_ptr<detail::LockImpl> impl) : impl_(std::move(impl)) {}

LockHandle lockInit() {
  auto impl = std::make_unique<detail::LockImpl>();
  impl->key = MutexKey{MutexKind::Lock, logic().newMutexId()};
  return LockHandle(std::move(impl));
}

LockHandle nestedLockInit() {
  auto impl = std::make_unique<detail::LockImpl>();
  impl->key = MutexKey{MutexKind::NestedLock, logic().newMutexId()};
  return LockHandle(std::move(impl));
}

void lockDestroy(LockHandle& handle) {
  fjad::detail::require(handle.initialized(), "lockDestroy: handle is not initialized");
  handle.impl_.reset();
}

void lockSet(LockHandle& handle) {
  fjad::detail::require(handle.initialized(), "lockSet: handle is not initialized");
  setImpl(*handle.impl_, MutexKind::Lock);
}

void lockUnset(LockHandle& handle) {
  fjad::detail::require(handle.initialized(), "lockUnset: handle is not initialized");
  unsetImpl(*handle.impl_, MutexKind::Lock);
}

void nestedLockSet(LockHandle& handle) {
  fjad::detail::require(handle.initialized(), "nestedLockSet: handle is not initialized");
  setImpl(*handle.impl_, MutexKind::NestedLock);
}

void nestedLockUnset(LockHandle& handle) {
  fjad::detail::require(handle.initialized(), "nestedLockUnset: handle is not initialized");
  unsetImpl(*handle.impl_, MutexKind::NestedLock);
}

MutexKey getLockIdentifier(const LockHandle& handle) {
  fjad::detail::require(handle.initialized(), "getLockIdentifier: handle is not initialized");
  return handle.impl_->key;
}

void ordered(TeamContext& ctx, std::int64_t iteration, const std::function<void()>& body) {
  fjad::detail::require(ctx.currentLoop != nullptr, "ordered: no worksharing loop is active");
  detail::WorkShare& ws = *ctx.currentLoop;
  spinWaitUntil(
      [&] { return ws.orderedNext.load(std::memory_order_acquire) == iteration; });
  const MutexKey key = ctx.team->orderedKey();
  logic().onMutexAcquired(key);
  try {
    body();
  } catch (...) {
    ws.orderedNext.store(iteration + 1, std::memory_order_release);
    logic().onMutexReleased(key);
    throw;
  }
  ws.orderedNext.store(iteration + 1, std::memory_order_release);
  logic().onMutexReleased(key);
}

}  // namespace fjad::rt
