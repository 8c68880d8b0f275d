# SPDX-License-Identifier: Apache-2.0
"""End-to-end smoke tests for the Python bindings.

Run with the built extension on the path, e.g.
    PYTHONPATH=build/python python3 -m pytest tests/python -q
"""

import math

import pytest

import fjad


def test_adjoint_modes():
    assert fjad.adjoint_modes() == ["atomic", "access-control", "classical"]


def test_solve_primal_deterministic():
    a = fjad.solve_primal(nx=16, ny=16, steps=3)
    b = fjad.solve_primal(nx=16, ny=16, steps=3)
    assert a == b
    assert a > 0.0


def test_gradient_shape_and_objective():
    result = fjad.gradient(nx=16, ny=16, steps=3, threads=2)
    assert result["nx"] == 16 and result["ny"] == 16
    assert len(result["du"]) == 16 * 16
    assert len(result["dv"]) == 16 * 16
    assert result["objective"] == fjad.solve_primal(nx=16, ny=16, steps=3)
    assert result["forward_seconds"] >= 0.0
    assert result["reverse_seconds"] >= 0.0


def test_zero_step_gradient_matches_closed_form():
    # With no time steps J = sqrt(dx dy sum(u0^2 + v0^2)) over the interior,
    # where u0 = x + y and v0 = x - y, so dJ/du0(i,j) = dx dy u0(i,j) / J.
    nx = ny = 8
    result = fjad.gradient(nx=nx, ny=ny, steps=0)
    dx = dy = 1.0 / (nx + 1)
    J = result["objective"]
    for j in (1, 3, 8):
        for i in (1, 5, 8):
            x, y = i * dx, j * dy
            expected_u = dx * dy * (x + y) / J
            expected_v = dx * dy * (x - y) / J
            k = (j - 1) * nx + (i - 1)
            assert result["du"][k] == pytest.approx(expected_u, rel=1e-12)
            assert result["dv"][k] == pytest.approx(expected_v, rel=1e-12, abs=1e-18)


def test_parallel_gradients_agree():
    serial = fjad.gradient(nx=16, ny=16, steps=2, adjoint_mode="classical", threads=1)
    parallel = fjad.gradient(nx=16, ny=16, steps=2, adjoint_mode="classical", threads=2)
    assert serial["objective"] == parallel["objective"]
    worst = max(
        abs(a - b) / max(abs(b), 1e-300)
        for a, b in zip(serial["du"] + serial["dv"], parallel["du"] + parallel["dv"])
    )
    assert worst < 1e-12


def test_gradient_check_passes():
    report = fjad.gradient_check(nx=16, ny=16, steps=2, threads=2, samples=5)
    assert report["passed"] is True
    assert report["max_relative_error"] < 1e-4
    assert len(report["samples"]) == 5
    for row in report["samples"]:
        assert row["field"] in ("u", "v")
        assert math.isfinite(row["reverse"])


def test_stability_error():
    with pytest.raises(fjad.StabilityError):
        fjad.solve_primal(nx=16, ny=16, steps=1, dt=0.1)


def test_contract_violation():
    with pytest.raises(fjad.ContractViolation):
        fjad.gradient(nx=16, ny=16, steps=1, adjoint_mode="hexagonal")
