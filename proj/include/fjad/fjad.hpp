// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fjad/active.hpp"
#include "fjad/adjoints.hpp"
#include "fjad/engine.hpp"
#include "fjad/logic.hpp"
#include "fjad/runtime.hpp"
#include "fjad/tape.hpp"
#include "fjad/tool.hpp"
#include "fjad/types.hpp"
