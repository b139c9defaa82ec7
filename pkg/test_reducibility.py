#!/usr/bin/env python3
"""
Test: KAM reducibility

Diagonalization of D_omega + D + R with a small angle-dependent remainder,
the smallness guard, Melnikov membership and the Floquet picture.
"""

import sys

import numpy as np

from src.kam_mkdv.errors import NumericalFailureError
from src.kam_mkdv.operators import OperatorGrid, grid_d_omega
from src.kam_mkdv.reducibility import (
    diagonal_solve,
    fit_floquet_constants,
    floquet_evolve,
    initial_state,
    melnikov_membership,
    reduce_to_constant,
    stability_report,
)
from src.kam_mkdv.reduction import conjugate

MODES = np.array([-4, -3, -2, 2, 3, 4])
OMEGA = np.array([np.sqrt(2.0)])
GAMMA = 1e-2
TAU = 3.0
M = 15


def create_sample_diagonal() -> np.ndarray:
    j = MODES.astype(float)
    return 1j * (-j ** 3 + 0.1 * j)


def create_sample_operator(size: float = 1e-4, seed: int = 2) -> OperatorGrid:
    """diag(i(-j^3 + 0.1 j)) plus i size (S0 + cos(phi) S1), S0 and S1 real symmetric.

    Only same-sign neighbours are coupled, so every step stays anti-Hermitian.
    """
    rng = np.random.default_rng(seed)
    k = len(MODES)
    couple = (np.abs(MODES[:, None] - MODES[None, :]) <= 1) & (np.sign(MODES[:, None]) == np.sign(MODES[None, :]))
    s0 = rng.normal(size=(k, k))
    s1 = rng.normal(size=(k, k))
    s0 = np.where(couple, s0 + s0.T, 0.0)
    s1 = np.where(couple, s1 + s1.T, 0.0)
    phi = 2.0 * np.pi * np.arange(M) / M
    values = np.diag(create_sample_diagonal())[None, :, :] + 1j * size * (s0[None] + np.cos(phi)[:, None, None] * s1[None])
    return OperatorGrid(1, MODES, values.astype(complex))


def test_constant_operator_needs_no_step():
    op = OperatorGrid.diagonal(1, MODES, M, create_sample_diagonal())
    state = reduce_to_constant(op, OMEGA, GAMMA, TAU)
    assert state.step == 0
    assert np.max(np.abs(state.mu - create_sample_diagonal())) < 1e-14
    print("  ✓ A constant diagonal operator is already reduced")


def test_reduction_converges():
    op = create_sample_operator()
    state = reduce_to_constant(op, OMEGA, GAMMA, TAU, max_steps=8, tol=1e-12)
    assert 1 <= state.step <= 5
    assert state.remainder_size() < 1e-11
    sizes = [row["remainder_after"] for row in state.history]
    assert all(b < a for a, b in zip(sizes, sizes[1:]))
    # Phi_inf conjugates the original operator to diag(mu)
    full = conjugate(op, state.transform, state.transform_inv, OMEGA)
    assert np.max(np.abs(full.values - np.diag(state.mu))) < 1e-9
    assert np.max(np.abs(state.mu - create_sample_diagonal())) < 1e-3
    print(f"  ✓ Remainder {state.remainder_size():.1e} after {state.step} steps")


def test_large_remainder_rejected():
    op = create_sample_operator(size=0.05)
    try:
        reduce_to_constant(op, OMEGA, GAMMA, TAU)
        raise AssertionError("remainder of size |R| / gamma > 1 accepted")
    except NumericalFailureError as exc:
        assert exc.diagnostics["remainder_over_gamma"] > 1.0
    print("  ✓ Smallness |R| / gamma checked before the first step")


def test_melnikov_membership():
    modes = np.array([2, 3])
    mu = 1j * -(modes.astype(float) ** 3)
    ok, witnesses = melnikov_membership([19.0], modes, mu, 1e-3, 3.0, band=2)
    # -19 + (27 - 8) = 0
    assert not ok
    assert any(w.l == (-1,) and (w.j, w.k) == (2, 3) for w in witnesses)
    ok, witnesses = melnikov_membership(OMEGA, modes, mu, 1e-3, 3.0, band=3)
    assert ok and witnesses == []
    print("  ✓ Second Melnikov resonance reported with (l, j, k)")


def test_floquet_fit():
    j = MODES.astype(float)
    mu = 1j * (-1.01 * j ** 3 + 0.3 * j)
    fit = fit_floquet_constants(MODES, mu)
    assert abs(fit.m3 - 1.01) < 1e-12
    assert abs(fit.m1 - 0.3) < 1e-10
    assert fit.weighted_residual() < 1e-9
    print("  ✓ m3 and m1 recovered from mu")


def test_floquet_evolve():
    mu = create_sample_diagonal()
    v0 = np.linspace(0.1, 0.6, len(MODES)) + 0.2j
    times = np.linspace(0.0, 3.0, 7)
    free = floquet_evolve(mu, v0, times)
    assert np.max(np.abs(np.abs(free) - np.abs(v0)[None, :])) < 1e-13

    forcing = np.zeros((3, len(MODES)), dtype=complex)
    forcing[0], forcing[2] = 0.1, 0.1
    t, step = 0.7, 1e-5
    v = floquet_evolve(mu, v0, np.array([0.0, t - step, t, t + step]), forcing, OMEGA)
    assert np.max(np.abs(v[0] - v0)) < 1e-13
    f_t = 0.2 * np.cos(OMEGA[0] * t)
    derivative = (v[3] - v[1]) / (2.0 * step)
    assert np.max(np.abs(derivative + mu * v[2] - f_t)) < 1e-4
    print("  ✓ Exact Floquet solution with quasi-periodic forcing")


def test_diagonal_solve():
    mu = create_sample_diagonal()
    rng = np.random.default_rng(9)
    h = rng.normal(size=(M, len(MODES))) + 1j * rng.normal(size=(M, len(MODES)))
    rhs = grid_d_omega(h, 1, OMEGA) + mu * h
    assert np.max(np.abs(diagonal_solve(rhs, OMEGA, mu) - h)) < 1e-10
    print("  ✓ (D_omega + diag(mu))^-1 on grid samples")


def test_stability_report():
    state = reduce_to_constant(create_sample_operator(), OMEGA, GAMMA, TAU)
    report = stability_report(state)
    assert report["linearly_stable"]
    assert report["max_real_part"] < 1e-10
    assert abs(report["m3"] - 1.0) < 1e-3
    fresh = initial_state(OperatorGrid.diagonal(1, MODES, M, create_sample_diagonal() + 0.5))
    assert not stability_report(fresh)["linearly_stable"]
    print("  ✓ Purely imaginary mu reported as linearly stable")


def main():
    """Run all reducibility tests."""
    print("\n" + "=" * 70)
    print("REDUCIBILITY TESTS".center(70))
    print("=" * 70)

    tests = [
        test_constant_operator_needs_no_step,
        test_reduction_converges,
        test_large_remainder_rejected,
        test_melnikov_membership,
        test_floquet_fit,
        test_floquet_evolve,
        test_diagonal_solve,
        test_stability_report,
    ]
    failed = 0
    for test in tests:
        try:
            test()
        except Exception as e:
            failed += 1
            print(f"  ❌ {test.__name__}: {e}")

    print("\n" + "=" * 70)
    if failed:
        print(f"❌ {failed} of {len(tests)} tests failed")
        return 1
    print(f"✅ ALL {len(tests)} TESTS PASSED")
    return 0


if __name__ == "__main__":
    sys.exit(main())
