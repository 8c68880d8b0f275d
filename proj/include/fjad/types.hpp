// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fjad {

// Identifier of an active value. 0 is reserved for passive values: it never
// receives adjoint updates and always reads an adjoint of zero.
using Identifier = std::uint32_t;

// How reverse-pass adjoint updates are performed for a tape segment.
// Atomic is always safe; Classical uses plain loads/stores and requires the
// caller to guarantee exclusive access to every adjoint touched.
enum class AdjointAccessMode : std::uint8_t { Atomic = 0, Classical = 1 };

const char* toString(AdjointAccessMode mode);

// A position on a specific tape. entryIndex counts tape entries from the
// start; tapeId ties the position to the tape that produced it.
struct Position {
  std::uint64_t entryIndex = 0;
  std::uint64_t tapeId = 0;

  friend bool operator==(const Position& a, const Position& b) {
    return a.entryIndex == b.entryIndex && a.tapeId == b.tapeId;
  }
  friend bool operator!=(const Position& a, const Position& b) { return !(a == b); }
};

// "tapeId:entryIndex"
std::string toString(const Position& p);

// Thrown on API misuse (mismatched positions, unbalanced events, ...).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Thrown when a hard resource limit is hit (identifier space, ...).
class ResourceError : public std::runtime_error {
 public:
  explicit ResourceError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void require(bool condition, const char* message) {
  if (!condition) throw ContractViolation(message);
}
}  // namespace detail

}  // namespace fjad
