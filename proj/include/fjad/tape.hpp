// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fjad/adjoints.hpp"
#include "fjad/types.hpp"

namespace fjad {

enum class EntryKind : std::uint8_t { Statement = 0, ExternalFunction = 1, AccessModeMarker = 2 };

// Reverse callback embedded in a tape. The payload keeps whatever state the
// callback needs alive for as long as any tape entry references the handle
// (handles are copied on append, so payloads are shared).
struct ExternalFunctionHandle {
  using ReverseFunc = void (*)(void* payload, AdjointVector& adjoints);

  ReverseFunc reverse = nullptr;
  std::shared_ptr<void> payload;
};

// Wraps an arbitrary callable (signature void(AdjointVector&)) into a handle.
template <typename F>
ExternalFunctionHandle makeExternalFunction(F func) {
  auto payload = std::make_shared<F>(std::move(func));
  ExternalFunctionHandle h;
  h.reverse = [](void* p, AdjointVector& adjoints) { (*static_cast<F*>(p))(adjoints); };
  h.payload = std::move(payload);
  return h;
}

// Append-only tape of statements, external functions and access-mode markers.
//
// A statement stores the left-hand-side identifier of one overloaded
// operation together with the partial derivatives and identifiers of its
// arguments. Reverse evaluation walks entries strictly backwards and, per
// statement, performs
//     w = adjoint[lhs]; adjoint[lhs] = 0;
//     adjoint[arg_j] += partial_j * w      (args with identifier 0 skipped)
// using atomic or plain accesses depending on the access mode in effect.
//
// Not thread-safe: a tape is recorded by one thread at a time and evaluated
// by one thread at a time. Distinct tapes may be recorded and evaluated
// concurrently against a shared AdjointVector.
class Tape {
 public:
  explicit Tape(std::uint64_t tapeId) : tapeId_(tapeId) {}

  std::uint64_t id() const { return tapeId_; }

  bool isActive() const { return active_; }
  void setActive(bool active) { active_ = active; }

  // Mode that statements recorded right now would be evaluated under.
  AdjointAccessMode recordingMode() const { return recordMode_; }

  Position position() const { return Position{entries_.size(), tapeId_}; }

  // Appends one statement. Ignored while the tape is inactive. The spans must
  // have equal length; every partial must be finite (callers enforce this and
  // reject the whole operation otherwise).
  void recordStatement(Identifier lhs, std::span<const double> partials,
                       std::span<const Identifier> args);

  // Same as recordStatement but bypasses the activity flag. Used for input /
  // output registration and by the event logic.
  void appendStatement(Identifier lhs, std::span<const double> partials,
                       std::span<const Identifier> args);

  // Appends an external function entry. Not activity-gated: the event logic
  // must be able to embed reverse actions around activity edges.
  void pushExternalFunction(const ExternalFunctionHandle& handle);

  // Appends a marker switching the recording mode. The marker remembers the
  // mode it replaced so reverse evaluation can restore it.
  void setAccessModeMarker(AdjointAccessMode mode);

  // Reverse-evaluates entries [end.entryIndex, start.entryIndex) from start
  // down to end. defaultMode is the access mode in effect at `start`; markers
  // encountered on the way switch to the mode that preceded them in forward
  // order. Both positions must stem from this tape and satisfy start >= end.
  void evaluate(const Position& start, const Position& end, AdjointVector& adjoints,
                AdjointAccessMode defaultMode = AdjointAccessMode::Atomic) const;

  // Discards all entries at or above `to`. With clearAdjoints, zeroes the
  // adjoint slot of every discarded statement's lhs identifier.
  void reset(const Position& to, bool clearAdjoints, AdjointVector& adjoints);

  // Removes the half-open entry range [start, end) and compacts the tape.
  void erase(const Position& start, const Position& end);

  // Copies the entry range [start, end) of src onto the end of this tape.
  // Statement identifiers are preserved; external function handles share
  // their payloads with the source.
  void append(const Tape& src, const Position& start, const Position& end);

  // Introspection (tests, memory accounting).
  std::size_t entryCount() const { return entries_.size(); }
  std::size_t statementCount() const { return statementCount_; }
  EntryKind entryKindAt(std::size_t index) const;
  struct StatementView {
    Identifier lhs;
    std::span<const double> partials;
    std::span<const Identifier> args;
  };
  StatementView statementAt(std::size_t index) const;
  std::size_t memoryUsage() const;

 private:
  // 16 bytes. dataOffset is the partials/args stream offset at this entry
  // (for any kind, so truncation can restore stream sizes); `a` holds the
  // statement lhs or the external function index.
  struct Entry {
    std::uint64_t dataOffset;
    std::uint32_t a;
    EntryKind kind;
    std::uint8_t arity;
    AdjointAccessMode modeBefore;
    AdjointAccessMode modeAfter;
  };
  static_assert(sizeof(std::uint32_t) >= sizeof(Identifier), "lhs must fit Entry::a");

  void checkOwned(const Position& p, const char* what) const;
  void appendStatementImpl(Identifier lhs, std::span<const double> partials,
                           std::span<const Identifier> args);

  std::vector<Entry> entries_;
  std::vector<double> partials_;
  std::vector<Identifier> args_;
  std::vector<ExternalFunctionHandle> externalFunctions_;
  std::uint64_t tapeId_;
  std::size_t statementCount_ = 0;
  bool active_ = false;
  AdjointAccessMode recordMode_ = AdjointAccessMode::Atomic;
};

}  // namespace fjad
