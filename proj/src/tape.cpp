// SPDX-License-Identifier: Apache-2.0
#include "fjad/tape.hpp"

namespace fjad {

std::string toString(const Position& p) {
  return std::to_string(p.tapeId) + ":" + std::to_string(p.entryIndex);
}

const char* toString(AdjointAccessMode mode) {
  return mode == AdjointAccessMode::Atomic ? "Atomic" : "Classical";
}

void Tape::checkOwned(const Position& p, const char* what) const {
  if (p.tapeId != tapeId_) {
    throw ContractViolation(std::string(what) + ": position belongs to another tape");
  }
  if (p.entryIndex > entries_.size()) {
    throw ContractViolation(std::string(what) + ": position out of range");
  }
}

void Tape::appendStatementImpl(Identifier lhs, std::span<const double> partials,
                               std::span<const Identifier> args) {
  detail::require(partials.size() == args.size(),
                  "recordStatement: partials and args length mismatch");
  detail::require(partials.size() <= 255, "recordStatement: arity too large");
  Entry e;
  e.dataOffset = partials_.size();
  e.a = lhs;
  e.kind = EntryKind::Statement;
  e.arity = static_cast<std::uint8_t>(partials.size());
  e.modeBefore = recordMode_;
  e.modeAfter = recordMode_;
  partials_.insert(partials_.end(), partials.begin(), partials.end());
  args_.insert(args_.end(), args.begin(), args.end());
  entries_.push_back(e);
  ++statementCount_;
}

void Tape::recordStatement(Identifier lhs, std::span<const double> partials,
                           std::span<const Identifier> args) {
  if (!active_) return;
  appendStatementImpl(lhs, partials, args);
}

void Tape::appendStatement(Identifier lhs, std::span<const double> partials,
                           std::span<const Identifier> args) {
  appendStatementImpl(lhs, partials, args);
}

void Tape::pushExternalFunction(const ExternalFunctionHandle& handle) {
  detail::require(handle.reverse != nullptr, "pushExternalFunction: null handle");
  detail::require(externalFunctions_.size() < UINT32_MAX, "too many external functions");
  Entry e;
  e.dataOffset = partials_.size();
  e.a = static_cast<std::uint32_t>(externalFunctions_.size());
  e.kind = EntryKind::ExternalFunction;
  e.arity = 0;
  e.modeBefore = recordMode_;
  e.modeAfter = recordMode_;
  externalFunctions_.push_back(handle);
  entries_.push_back(e);
}

void Tape::setAccessModeMarker(AdjointAccessMode mode) {
  Entry e;
  e.dataOffset = partials_.size();
  e.a = 0;
  e.kind = EntryKind::AccessModeMarker;
  e.arity = 0;
  e.modeBefore = recordMode_;
  e.modeAfter = mode;
  entries_.push_back(e);
  recordMode_ = mode;
}

void Tape::evaluate(const Position& start, const Position& end, AdjointVector& adjoints,
                    AdjointAccessMode defaultMode) const {
  checkOwned(start, "evaluate");
  checkOwned(end, "evaluate");
  detail::require(start.entryIndex >= end.entryIndex, "evaluate: start precedes end");

  AdjointAccessMode mode = defaultMode;
  for (std::size_t i = start.entryIndex; i-- > end.entryIndex;) {
    const Entry& e = entries_[i];
    switch (e.kind) {
      case EntryKind::Statement: {
        const Identifier lhs = e.a;
        if (lhs == 0) break;
        const double* partials = partials_.data() + e.dataOffset;
        const Identifier* args = args_.data() + e.dataOffset;
        if (mode == AdjointAccessMode::Atomic) {
          const double w = adjoints.exchange(lhs, 0.0);
          if (w != 0.0) {
            for (std::uint8_t j = 0; j < e.arity; ++j) {
              if (args[j] != 0) adjoints.atomicAdd(args[j], partials[j] * w);
            }
          }
        } else {
          const double w = adjoints.get(lhs);
          adjoints.set(lhs, 0.0);
          if (w != 0.0) {
            for (std::uint8_t j = 0; j < e.arity; ++j) {
              if (args[j] != 0) adjoints.add(args[j], partials[j] * w);
            }
          }
        }
        break;
      }
      case EntryKind::ExternalFunction: {
        const ExternalFunctionHandle& h = externalFunctions_[e.a];
        h.reverse(h.payload.get(), adjoints);
        break;
      }
      case EntryKind::AccessModeMarker:
        // Entries below this marker were recorded under the mode it replaced.
        mode = e.modeBefore;
        break;
    }
  }
}

void Tape::reset(const Position& to, bool clearAdjoints, AdjointVector& adjoints) {
  checkOwned(to, "reset");
  const std::size_t keep = to.entryIndex;
  if (keep == entries_.size()) return;

  std::size_t removedStatements = 0;
  for (std::size_t i = keep; i < entries_.size(); ++i) {
    const Entry& e = entries_[i];
    if (e.kind == EntryKind::Statement) {
      ++removedStatements;
      if (clearAdjoints) adjoints.set(e.a, 0.0);
    }
  }

  const std::uint64_t dataSize = entries_[keep].dataOffset;
  std::size_t externalCount = externalFunctions_.size();
  for (std::size_t i = entries_.size(); i-- > keep;) {
    if (entries_[i].kind == EntryKind::ExternalFunction) externalCount = entries_[i].a;
  }
  // Restore the recording mode in effect at the cut point.
  AdjointAccessMode mode = recordMode_;
  for (std::size_t i = entries_.size(); i-- > keep;) {
    if (entries_[i].kind == EntryKind::AccessModeMarker) mode = entries_[i].modeBefore;
  }
  recordMode_ = mode;

  entries_.resize(keep);
  partials_.resize(dataSize);
  args_.resize(dataSize);
  externalFunctions_.resize(externalCount);
  statementCount_ -= removedStatements;
}

void Tape::erase(const Position& start, const Position& end) {
  checkOwned(start, "erase");
  checkOwned(end, "erase");
  detail::require(start.entryIndex <= end.entryIndex, "erase: start must not exceed end");
  const std::size_t lo = start.entryIndex;
  const std::size_t hi = end.entryIndex;
  if (lo == hi) return;

  // Rebuild the three streams without the erased range. erase is a rare
  // editing operation; linear rebuild keeps the invariants simple.
  std::vector<Entry> entries;
  std::vector<double> partials;
  std::vector<Identifier> args;
  std::vector<ExternalFunctionHandle> externals;
  entries.reserve(entries_.size() - (hi - lo));
  std::size_t statements = 0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (i >= lo && i < hi) continue;
    Entry e = entries_[i];
    switch (e.kind) {
      case EntryKind::Statement: {
        const std::uint64_t offset = partials.size();
        partials.insert(partials.end(), partials_.begin() + e.dataOffset,
                        partials_.begin() + e.dataOffset + e.arity);
        args.insert(args.end(), args_.begin() + e.dataOffset,
                    args_.begin() + e.dataOffset + e.arity);
        e.dataOffset = offset;
        ++statements;
        break;
      }
      case EntryKind::ExternalFunction:
        externals.push_back(externalFunctions_[e.a]);
        e.a = static_cast<std::uint32_t>(externals.size() - 1);
        e.dataOffset = partials.size();
        break;
      case EntryKind::AccessModeMarker:
        e.dataOffset = partials.size();
        break;
    }
    entries.push_back(e);
  }
  entries_ = std::move(entries);
  partials_ = std::move(partials);
  args_ = std::move(args);
  externalFunctions_ = std::move(externals);
  statementCount_ = statements;
}

void Tape::append(const Tape& src, const Position& start, const Position& end) {
  src.checkOwned(start, "append");
  src.checkOwned(end, "append");
  detail::require(start.entryIndex <= end.entryIndex, "append: start must not exceed end");
  detail::require(&src != this, "append: source and destination must differ");
  for (std::size_t i = start.entryIndex; i < end.entryIndex; ++i) {
    const Entry& e = src.entries_[i];
    switch (e.kind) {
      case EntryKind::Statement:
        appendStatementImpl(
            e.a, std::span<const double>(src.partials_.data() + e.dataOffset, e.arity),
            std::span<const Identifier>(src.args_.data() + e.dataOffset, e.arity));
        break;
      case EntryKind::ExternalFunction:
        pushExternalFunction(src.externalFunctions_[e.a]);
        break;
      case EntryKind::AccessModeMarker:
        setAccessModeMarker(e.modeAfter);
        break;
    }
  }
}

EntryKind Tape::entryKindAt(std::size_t index) const {
  detail::require(index < entries_.size(), "entryKindAt: out of range");
  return entries_[index].kind;
}

Tape::StatementView Tape::statementAt(std::size_t index) const {
  detail::require(index < entries_.size(), "statementAt: out of range");
  const Entry& e = entries_[index];
  detail::require(e.kind == EntryKind::Statement, "statementAt: not a statement");
  return StatementView{
      e.a, std::span<const double>(partials_.data() + e.dataOffset, e.arity),
      std::span<const Identifier>(args_.data() + e.dataOffset, e.arity)};
}

std::size_t Tape::memoryUsage() const {
  return entries_.capacity() * sizeof(Entry) + partials_.capacity() * sizeof(double) +
         args_.capacity() * sizeof(Identifier) +
         externalFunctions_.capacity() * sizeof(ExternalFunctionHandle);
}

}  // namespace fjad
