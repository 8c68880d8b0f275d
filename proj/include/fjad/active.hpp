// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "fjad/engine.hpp"
#include "fjad/types.hpp"

namespace fjad {

// Operator-overloading active scalar. Carries the primal value and the
// identifier of the statement that produced it (0 = passive constant).
//
// Copies alias the identifier without recording: identifiers are globally
// unique and never redistributed, so aliased uses accumulate into the same
// adjoint slot, which is exactly the derivative of a copy. Arithmetic with
// any active argument on an active thread-local tape appends one statement
// and yields a fresh identifier.
class adouble {
 public:
  adouble() = default;
  adouble(double value) : v_(value) {}  // NOLINT: implicit passive lift
  adouble(double value, Identifier id) : v_(value), id_(id) {}

  double value() const { return v_; }
  Identifier id() const { return id_; }
  bool isActive() const { return id_ != 0; }

  // Reads this value's adjoint (meaningful after an evaluation).
  double getGradient() const { return adjoints().get(id_); }

  adouble& operator+=(const adouble& rhs);
  adouble& operator-=(const adouble& rhs);
  adouble& operator*=(const adouble& rhs);
  adouble& operator/=(const adouble& rhs);

 private:
  double v_ = 0.0;
  Identifier id_ = 0;
};

namespace detail {

// Records w = f(a) with the given partial; returns the passive result (and
// counts a rejected statement) if the partial is not finite.
inline adouble recordUnary(double value, double partial, const adouble& a) {
  Tape* tape = currentTape();
  if (tape == nullptr || !tape->isActive() || !a.isActive()) return adouble(value);
  if (!std::isfinite(partial)) {
    diagnostics().rejectedStatements.fetch_add(1, std::memory_order_relaxed);
    return adouble(value);
  }
  const Identifier lhs = newIdentifier();
  const double partials[1] = {partial};
  const Identifier args[1] = {a.id()};
  tape->recordStatement(lhs, partials, args);
  return adouble(value, lhs);
}

inline adouble recordBinary(double value, double pa, const adouble& a, double pb,
                            const adouble& b) {
  Tape* tape = currentTape();
  if (tape == nullptr || !tape->isActive() || (!a.isActive() && !b.isActive())) {
    return adouble(value);
  }
  // Only active arguments are stored; partials of active arguments must all
  // be finite or the whole statement is rejected and the result passivized.
  double partials[2];
  Identifier args[2];
  std::size_t k = 0;
  if (a.isActive()) {
    partials[k] = pa;
    args[k] = a.id();
    ++k;
  }
  if (b.isActive()) {
    partials[k] = pb;
    args[k] = b.id();
    ++k;
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (!std::isfinite(partials[j])) {
      diagnostics().rejectedStatements.fetch_add(1, std::memory_order_relaxed);
      return adouble(value);
    }
  }
  const Identifier lhs = newIdentifier();
  tape->recordStatement(lhs, std::span<const double>(partials, k),
                        std::span<const Identifier>(args, k));
  return adouble(value, lhs);
}

}  // namespace detail

inline adouble operator+(const adouble& a, const adouble& b) {
  return detail::recordBinary(a.value() + b.value(), 1.0, a, 1.0, b);
}
inline adouble operator-(const adouble& a, const adouble& b) {
  return detail::recordBinary(a.value() - b.value(), 1.0, a, -1.0, b);
}
inline adouble operator*(const adouble& a, const adouble& b) {
  return detail::recordBinary(a.value() * b.value(), b.value(), a, a.value(), b);
}
inline adouble operator/(const adouble& a, const adouble& b) {
  const double r = a.value() / b.value();
  return detail::recordBinary(r, 1.0 / b.value(), a, -r / b.value(), b);
}

inline adouble operator+(const adouble& a, double b) {
  return detail::recordUnary(a.value() + b, 1.0, a);
}
inline adouble operator+(double a, const adouble& b) {
  return detail::recordUnary(a + b.value(), 1.0, b);
}
inline adouble operator-(const adouble& a, double b) {
  return detail::recordUnary(a.value() - b, 1.0, a);
}
inline adouble operator-(double a, const adouble& b) {
  return detail::recordUnary(a - b.value(), -1.0, b);
}
inline adouble operator*(const adouble& a, double b) {
  return detail::recordUnary(a.value() * b, b, a);
}
inline adouble operator*(double a, const adouble& b) {
  return detail::recordUnary(a * b.value(), a, b);
}
inline adouble operator/(const adouble& a, double b) {
  return detail::recordUnary(a.value() / b, 1.0 / b, a);
}
inline adouble operator/(double a, const adouble& b) {
  const double r = a / b.value();
  return detail::recordUnary(r, -r / b.value(), b);
}

inline adouble operator-(const adouble& a) { return detail::recordUnary(-a.value(), -1.0, a); }
inline adouble operator+(const adouble& a) { return a; }

inline adouble sin(const adouble& a) {
  return detail::recordUnary(std::sin(a.value()), std::cos(a.value()), a);
}
inline adouble cos(const adouble& a) {
  return detail::recordUnary(std::cos(a.value()), -std::sin(a.value()), a);
}
inline adouble exp(const adouble& a) {
  const double e = std::exp(a.value());
  return detail::recordUnary(e, e, a);
}
inline adouble sqrt(const adouble& a) {
  const double s = std::sqrt(a.value());
  return detail::recordUnary(s, 0.5 / s, a);
}
// Subgradient 0 at the kink.
inline adouble abs(const adouble& a) {
  const double sign = a.value() > 0.0 ? 1.0 : (a.value() < 0.0 ? -1.0 : 0.0);
  return detail::recordUnary(std::abs(a.value()), sign, a);
}
inline adouble fabs(const adouble& a) { return abs(a); }

inline adouble& adouble::operator+=(const adouble& rhs) { return *this = *this + rhs; }
inline adouble& adouble::operator-=(const adouble& rhs) { return *this = *this - rhs; }
inline adouble& adouble::operator*=(const adouble& rhs) { return *this = *this * rhs; }
inline adouble& adouble::operator/=(const adouble& rhs) { return *this = *this / rhs; }

inline bool operator<(const adouble& a, const adouble& b) { return a.value() < b.value(); }
inline bool operator>(const adouble& a, const adouble& b) { return a.value() > b.value(); }
inline bool operator<=(const adouble& a, const adouble& b) { return a.value() <= b.value(); }
inline bool operator>=(const adouble& a, const adouble& b) { return a.value() >= b.value(); }
inline bool operator==(const adouble& a, const adouble& b) { return a.value() == b.value(); }
inline bool operator!=(const adouble& a, const adouble& b) { return a.value() != b.value(); }

// Assigns a fresh identifier and records a self-referential unit statement on
// the thread-local tape (bypassing the activity flag, so inputs can be
// registered before setActive). The self-reference makes reverse evaluation
// re-add the adjoint it consumed, so input gradients survive a full-tape
// evaluation, and a later reset(clearAdjoints=true) zeroes the slot.
void registerInput(adouble& x);

// Gives x a fresh identifier fed by a unit copy statement, so seeding the
// output cannot alias an input identifier. No-op for passive values.
void registerOutput(adouble& x);

// Seeds / reads adjoints by value handle.
void seedAdjoint(const adouble& x, double value);
double gradientOf(const adouble& x);

}  // namespace fjad
