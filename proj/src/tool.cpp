// SPDX-License-Identifier: Apache-2.0
#include "fjad/tool.hpp"

#include "fjad/engine.hpp"

namespace fjad {

namespace {
Tape* asTape(void* tape) { return static_cast<Tape*>(tape); }
Position* asPosition(void* position) { return static_cast<Position*>(position); }
}  // namespace

void TapeTool::init() {}

void TapeTool::finalize() {}

void* TapeTool::createTape() { return fjad::createTape(); }

void TapeTool::deleteTape(void* tape) { fjad::deleteTape(asTape(tape)); }

void* TapeTool::getThreadLocalTape() { return currentTape(); }

void TapeTool::setThreadLocalTape(void* tape) { setCurrentTape(asTape(tape)); }

void* TapeTool::allocPosition() { return new Position{}; }

void TapeTool::freePosition(void* position) { delete asPosition(position); }

std::size_t TapeTool::getPositionSize() { return sizeof(Position); }

std::string TapeTool::positionToString(void* position) { return toString(*asPosition(position)); }

void TapeTool::getTapePosition(void* tape, void* position) {
  *asPosition(position) = asTape(tape)->position();
}

bool TapeTool::isActive(void* tape) { return asTape(tape)->isActive(); }

void TapeTool::setActive(void* tape, bool active) { asTape(tape)->setActive(active); }

void TapeTool::evaluate(void* tape, void* start, void* end, bool useAtomics) {
  AdjointVector& adj = adjoints();
  adj.ensureSize(static_cast<std::size_t>(maxIdentifier()) + 1);
  asTape(tape)->evaluate(*asPosition(start), *asPosition(end), adj,
                         useAtomics ? AdjointAccessMode::Atomic : AdjointAccessMode::Classical);
}

void TapeTool::reset(void* tape, bool clearAdjoints) {
  Tape* t = asTape(tape);
  t->reset(Position{0, t->id()}, clearAdjoints, adjoints());
}

void TapeTool::reset(void* tape, void* position, bool clearAdjoints) {
  asTape(tape)->reset(*asPosition(position), clearAdjoints, adjoints());
}

void TapeTool::pushExternalFunction(void* tape, const ExternalFunctionHandle* handle) {
  asTape(tape)->pushExternalFunction(*handle);
}

void TapeTool::erase(void* tape, void* start, void* end) {
  asTape(tape)->erase(*asPosition(start), *asPosition(end));
}

void TapeTool::append(void* dstTape, void* srcTape, void* start, void* end) {
  asTape(dstTape)->append(*asTape(srcTape), *asPosition(start), *asPosition(end));
}

ToolInterface& tool() {
  static TapeTool instance;
  return instance;
}

}  // namespace fjad
