// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

#include "fjad/tape.hpp"
#include "fjad/types.hpp"

namespace fjad {

// Universal AD-tool facade. The event logic drives every tape interaction
// through this interface so an alternate tape engine can be slotted in by
// implementing it; tapes and positions cross the boundary as opaque handles.
class ToolInterface {
 public:
  virtual ~ToolInterface() = default;

  virtual void init() = 0;
  virtual void finalize() = 0;

  virtual void* createTape() = 0;
  virtual void deleteTape(void* tape) = 0;
  virtual void* getThreadLocalTape() = 0;
  virtual void setThreadLocalTape(void* tape) = 0;

  virtual void* allocPosition() = 0;
  virtual void freePosition(void* position) = 0;
  virtual std::size_t getPositionSize() = 0;
  virtual std::string positionToString(void* position) = 0;
  virtual void getTapePosition(void* tape, void* position) = 0;

  virtual bool isActive(void* tape) = 0;
  virtual void setActive(void* tape, bool active) = 0;

  // Reverse-evaluates [end, start) from start down to end against the global
  // adjoint vector, growing it to the maximum identifier first. useAtomics
  // selects the access mode in effect at `start`.
  virtual void evaluate(void* tape, void* start, void* end, bool useAtomics = true) = 0;

  virtual void reset(void* tape, bool clearAdjoints = true) = 0;
  virtual void reset(void* tape, void* position, bool clearAdjoints = true) = 0;

  virtual void pushExternalFunction(void* tape, const ExternalFunctionHandle* handle) = 0;

  virtual void erase(void* tape, void* start, void* end) = 0;
  virtual void append(void* dstTape, void* srcTape, void* start, void* end) = 0;
};

// Concrete facade over the tape engine in this library. Stateless; handles
// are Tape* and Position*.
class TapeTool final : public ToolInterface {
 public:
  void init() override;
  void finalize() override;

  void* createTape() override;
  void deleteTape(void* tape) override;
  void* getThreadLocalTape() override;
  void setThreadLocalTape(void* tape) override;

  void* allocPosition() override;
  void freePosition(void* position) override;
  std::size_t getPositionSize() override;
  std::string positionToString(void* position) override;
  void getTapePosition(void* tape, void* position) override;

  bool isActive(void* tape) override;
  void setActive(void* tape, bool active) override;

  void evaluate(void* tape, void* start, void* end, bool useAtomics = true) override;

  void reset(void* tape, bool clearAdjoints = true) override;
  void reset(void* tape, void* position, bool clearAdjoints = true) override;

  void pushExternalFunction(void* tape, const ExternalFunctionHandle* handle) override;

  void erase(void* tape, void* start, void* end) override;
  void append(void* dstTape, void* srcTape, void* start, void* end) override;
};

// The facade instance the event logic talks to.
ToolInterface& tool();

}  // namespace fjad
