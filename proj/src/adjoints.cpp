// SPDX-License-Identifier: Apache-2.0
#include "fjad/adjoints.hpp"

#include <cstring>

namespace fjad {

AdjointVector::AdjointVector()
    : chunks_(new std::atomic<double*>[kMaxChunks]) {
  for (std::size_t i = 0; i < kMaxChunks; ++i) {
    chunks_[i].store(nullptr, std::memory_order_relaxed);
  }
}

AdjointVector::~AdjointVector() {
  for (std::size_t i = 0; i < kMaxChunks; ++i) {
    delete[] chunks_[i].load(std::memory_order_relaxed);
  }
}

double* AdjointVector::ensureChunk(std::size_t chunk) {
  double* p = chunkAt(chunk);
  if (p != nullptr) return p;
  std::lock_guard<std::mutex> lock(growth_);
  p = chunks_[chunk].load(std::memory_order_relaxed);
  if (p == nullptr) {
    p = new double[kChunkSize]();
    chunks_[chunk].store(p, std::memory_order_release);
  }
  return p;
}

void AdjointVector::ensureSize(std::size_t n) {
  if (n == 0) return;
  std::size_t lastChunk = (n - 1) >> kChunkBits;
  for (std::size_t c = 0; c <= lastChunk; ++c) ensureChunk(c);
  std::size_t current = size_.load(std::memory_order_relaxed);
  while (current < n &&
         !size_.compare_exchange_weak(current, n, std::memory_order_acq_rel)) {
  }
}

double& AdjointVector::slot(Identifier id) {
  return ensureChunk(std::size_t(id) >> kChunkBits)[std::size_t(id) & kIndexMask];
}

const double* AdjointVector::slotIfPresent(Identifier id) const {
  const double* chunk = chunkAt(std::size_t(id) >> kChunkBits);
  return chunk == nullptr ? nullptr : chunk + (std::size_t(id) & kIndexMask);
}

double AdjointVector::get(Identifier id) const {
  const double* p = slotIfPresent(id);
  return p == nullptr ? 0.0 : *p;
}

void AdjointVector::set(Identifier id, double value) {
  if (id == 0) return;
  slot(id) = value;
}

void AdjointVector::add(Identifier id, double value) {
  if (id == 0) return;
  slot(id) += value;
}

void AdjointVector::atomicAdd(Identifier id, double value) {
  if (id == 0) return;
  std::atomic_ref<double>(slot(id)).fetch_add(value, std::memory_order_relaxed);
}

double AdjointVector::exchange(Identifier id, double value) {
  if (id == 0) return 0.0;
  return std::atomic_ref<double>(slot(id)).exchange(value, std::memory_order_relaxed);
}

void AdjointVector::clear() {
  for (std::size_t c = 0; c < kMaxChunks; ++c) {
    double* p = chunks_[c].load(std::memory_order_relaxed);
    if (p != nullptr) std::memset(p, 0, kChunkSize * sizeof(double));
  }
}

}  // namespace fjad
