#!/usr/bin/env python3
"""
Test: Measure estimates

Decomposition of the second-Melnikov divisors, xi and omega grids, the
excluded fraction and its power law, and the empty resonance shell.
"""

import sys

import numpy as np

from src.kam_mkdv.errors import DomainError
from src.kam_mkdv.measure import (
    a_jk,
    analytic_eigenvalues,
    b_ljk,
    empty_shell_check,
    excluded_fraction,
    fit_slope,
    omega_grid,
    q_jk,
    unperturbed_divisor,
    xi_grid,
)
from src.kam_mkdv.sites import SiteSet
from src.kam_mkdv.torus import freq_amp


def create_sample_triples():
    return [((1, 0), 3, -2), ((0, 2), 5, 4), ((-2, 1), -3, 6), ((1, -1), 0, 7)]


def test_divisor_decomposition():
    sites = SiteSet((1, 2))
    xi = np.array([1.3, 1.7])
    for sign in (1, -1):
        for lv in (False, True):
            omega = freq_amp(sites, sign, 0.05, xi, lv)
            for l, j, k in create_sample_triples():
                mu = analytic_eigenvalues(sites, sign, 0.05, xi, np.array([j, k]), lv)
                divisor = 1j * float(np.dot(l, omega)) + mu[0] - mu[1]
                a = a_jk(sites, j, k, lv)
                b = b_ljk(sites, sign, l, j, k, lv)
                assert abs(q_jk(divisor, a, b, omega)) < 1e-10
    print("  ✓ q_jk = 0 at the analytic eigenvalues")


def test_grids():
    xis = xi_grid(2, 9)
    assert xis.shape == (9, 2)
    assert xis.min() == 1.0 and xis.max() == 2.0
    sites = SiteSet((1, 2))
    omegas = omega_grid(sites, 1, 0.1, 9)
    assert omegas.shape == (9, 2)
    assert np.allclose(omegas[0], freq_amp(sites, 1, 0.1, xis[0]))
    print("  ✓ xi and omega grids")


def test_fit_slope():
    gammas = [1e-3, 1e-2, 1e-1]
    assert abs(fit_slope(gammas, [3.0 * g for g in gammas]) - 1.0) < 1e-12
    assert fit_slope(gammas, [0.0, 0.0, 0.2]) is None
    print("  ✓ Power-law slope")


def test_excluded_fraction():
    sites = SiteSet((1,))
    report = excluded_fraction(sites, 1, 0.1, [1e-4, 1.0, 10.0], tau=3.0, points=8, band=4, jmax=6)
    assert report.samples == 8 and len(report.rows) == 8
    assert report.fractions[0] == 0.0
    assert report.fractions[-1] == 1.0
    assert all(b >= a for a, b in zip(report.fractions, report.fractions[1:]))
    row = report.rows[0]
    assert row["witness"] is not None and row["witness"]["j"] != row["witness"]["k"]
    try:
        excluded_fraction(sites, 1, 0.1, [0.1], tau=0.0, points=4, band=2, jmax=4)
        raise AssertionError("tau = 0 accepted")
    except DomainError:
        pass
    print(f"  ✓ Excluded fractions {report.fractions}")


def test_empty_shell():
    report = empty_shell_check(SiteSet((1,)), 1, 0.05, [1.5], gamma=1e-2, tau=3.0, band=6, jmax=8)
    assert report.c1 > 0.5
    assert report.checked > 0
    assert report.empty
    print(f"  ✓ No resonance in the shell (C1 = {report.c1:.3f}, {report.checked} divisors)")


def test_unperturbed_divisor():
    sites = SiteSet((1, 2))
    # (3, 1) . (1, 8) + 1 - 27
    assert unperturbed_divisor(sites, (3, 1), 3, 1) == -15
    assert unperturbed_divisor(sites, (0, 0), 4, 4) == 0
    print("  ✓ Integer divisors at eps = 0")


def main():
    """Run all measure tests."""
    print("\n" + "=" * 70)
    print("MEASURE ESTIMATE TESTS".center(70))
    print("=" * 70)

    tests = [
        test_divisor_decomposition,
        test_grids,
        test_fit_slope,
        test_excluded_fraction,
        test_empty_shell,
        test_unperturbed_divisor,
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
