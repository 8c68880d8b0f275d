// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <mutex>

#include "fjad/types.hpp"

namespace fjad {

// Growable adjoint storage indexed by Identifier.
//
// Storage is chunked with stable addresses: growing never moves existing
// entries, so one thread may extend the vector while others read or update
// slots that already exist. Chunks are zero-initialized on allocation.
// Callers still pre-grow to the maximum identifier before an evaluation
// (ensureSize), so the hot evaluation path never takes the growth lock.
//
// Atomic accessors may be freely mixed with plain ones as long as plain
// accesses to a slot are exclusive (that is the Classical access-mode
// contract); atomic accesses are safe concurrently.
class AdjointVector {
 public:
  AdjointVector();
  ~AdjointVector();

  AdjointVector(const AdjointVector&) = delete;
  AdjointVector& operator=(const AdjointVector&) = delete;

  // Guarantees slots [0, n) exist. Thread-safe; never invalidates slots.
  void ensureSize(std::size_t n);

  // Number of slots guaranteed to exist.
  std::size_t size() const { return size_.load(std::memory_order_acquire); }

  // Plain read; slots that were never allocated read as 0.
  double get(Identifier id) const;

  // Plain write. Writes to identifier 0 are ignored.
  void set(Identifier id, double value);

  // Plain read-modify-write (Classical mode). Caller guarantees exclusivity.
  void add(Identifier id, double value);

  // Atomic accumulate, relaxed order (Atomic mode).
  void atomicAdd(Identifier id, double value);

  // Atomic exchange, relaxed order. Returns the previous value.
  double exchange(Identifier id, double value);

  // Zeroes every allocated slot. Not thread-safe against concurrent access.
  void clear();

 private:
  static constexpr unsigned kChunkBits = 16;
  static constexpr std::size_t kChunkSize = std::size_t(1) << kChunkBits;
  static constexpr std::size_t kIndexMask = kChunkSize - 1;
  // Identifiers are 32 bit, so the chunk directory has a fixed maximum size.
  static constexpr std::size_t kMaxChunks = (std::size_t(1) << 32) >> kChunkBits;

  double* chunkAt(std::size_t chunk) const {
    return chunks_[chunk].load(std::memory_order_acquire);
  }
  double* ensureChunk(std::size_t chunk);
  double& slot(Identifier id);
  const double* slotIfPresent(Identifier id) const;

  std::unique_ptr<std::atomic<double*>[]> chunks_;
  std::atomic<std::size_t> size_{0};
  std::mutex growth_;
};

}  // namespace fjad
