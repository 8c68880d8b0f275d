# SPDX-License-Identifier: Apache-2.0
"""Reverse-mode AD with parallel tape recording and evaluation.

The heavy lifting lives in the C++ extension ``fjad._core``: a coupled
Burgers' equations solver whose forward sweep is recorded concurrently by a
thread team and whose reverse sweep replays the recording in parallel,
including the reversal of barriers, critical sections, and locks.
"""

from ._core import (
    ContractViolation,
    StabilityError,
    adjoint_modes,
    benchmark,
    gradient,
    gradient_check,
    solve_primal,
)

__all__ = [
    "ContractViolation",
    "StabilityError",
    "adjoint_modes",
    "benchmark",
    "gradient",
    "gradient_check",
    "solve_primal",
]
