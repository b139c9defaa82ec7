#!/usr/bin/env python3
"""
Test: Sites and weak Birkhoff normal form

Cube identity, site admissibility, the twist matrix and the quartic
generator with its time-1 flow, on x-only and torus fields, and the check of
the normal form on S+ = {1} and {1, 2}.
"""

import sys

import numpy as np

from src.kam_mkdv.birkhoff import (
    bracket_identity,
    build_generator,
    check_cube_identity_on_support,
    normal_form_test_point,
    resonant_quartic_sum,
    restrict_to_E,
    symplectic_defect,
    transform_coeffs,
    verify_normal_form,
    weak_bnf_flow,
)
from src.kam_mkdv.errors import DomainError
from src.kam_mkdv.fourier import TorusField
from src.kam_mkdv.hamiltonian import Model
from src.kam_mkdv.sites import (
    SiteSet,
    admissible,
    cube_identity,
    exhaustive_cube_check,
    find_violating_sets,
)
from src.kam_mkdv.torus import twist_inverse, twist_matrix


def create_sample_state(n_x: int, seed: int = 3, size: float = 0.05) -> np.ndarray:
    """Small real x-coefficient array on the band n_x."""
    rng = np.random.default_rng(seed)
    modes = {(j,): size * (rng.normal() + 1j * rng.normal()) for j in range(1, n_x + 1)}
    return TorusField.from_modes(0, 0, n_x, modes).coeffs


def test_cube_identity():
    assert cube_identity(1, 2, -4, 1) == 1 + 8 - 64 + 1
    assert exhaustive_cube_check(1) == 19
    assert exhaustive_cube_check(6) > 0
    try:
        cube_identity(1, 1, 1, 1)
        raise AssertionError("nonzero sum accepted")
    except DomainError:
        pass
    print("  ✓ Cube identity on zero-sum quadruples")


def test_site_validation():
    for bad in ((), (0, 2), (-1, 3), (2, 2)):
        try:
            SiteSet(bad)
            raise AssertionError(f"accepted {bad}")
        except DomainError:
            pass
    sites = SiteSet((5, 2))
    assert sites.plus == (2, 5)
    assert sites.full == (-5, -2, 2, 5)
    assert sites.birkhoff_cutoff() == 16
    assert list(sites.ell(-5)) == [0, -1]
    assert not sites.in_complement(0) and sites.in_complement(3)
    print("  ✓ Site sets")


def test_single_site_always_admissible():
    for j in range(1, 21):
        assert admissible(SiteSet((j,))).admissible
    print("  ✓ Every single site is admissible")


def test_inadmissible_pair():
    result = admissible(SiteSet((3, 15)))
    # target 2 (9 + 225) / 3 = 156 = 10^2 + 10 * 4 + 4^2
    assert not result.admissible
    j, k = result.witness
    assert j * j + j * k + k * k == 156
    assert j != k and abs(j) not in (3, 15) and abs(k) not in (3, 15)
    assert admissible(SiteSet((1, 2))).admissible
    assert admissible(SiteSet((3, 15)), lambda_variant=True).skipped
    print("  ✓ Inadmissible pair found with its witness")


def test_find_violating_sets():
    found = find_violating_sets(15, 2)
    assert any(sites.plus == (3, 15) for sites, _ in found)
    for sites, (j, k) in found:
        target = 2 * sites.square_sum() // 3
        assert j * j + j * k + k * k == target
    print(f"  ✓ {len(found)} violating pair(s) up to 15")


def test_twist_inverse():
    for plus in ((1,), (1, 2), (2, 3, 7)):
        sites = SiteSet(plus)
        for sign in (1, -1):
            product = twist_matrix(sites, sign) @ twist_inverse(sites, sign)
            assert np.max(np.abs(product - np.eye(sites.nu))) < 1e-12
    print("  ✓ A A^-1 = I")


def test_generator_support():
    gen = build_generator(SiteSet((1,)), 1)
    # three tangential entries force the fourth to -+3
    assert gen.support_size == 8
    assert gen.size == 8
    assert abs(gen.coefficient(1, 1, 1, -3) - (-1j / 96.0)) < 1e-15
    assert gen.coefficient(1, -1, 1, -1) == 0.0
    assert check_cube_identity_on_support(gen)
    print("  ✓ Generator support and coefficients")


def test_flow_is_symplectic_and_invertible():
    gen = build_generator(SiteSet((1, 2)), -1)
    uc = create_sample_state(gen.cutoff + 1)
    x = restrict_to_E(gen, uc)[None, :]
    assert symplectic_defect(gen, x) < 1e-8
    forward, _ = transform_coeffs(gen, uc, 1)
    back, _ = transform_coeffs(gen, forward, -1)
    assert np.max(np.abs(back - uc)) < 1e-9
    print("  ✓ Time-1 flow is symplectic and inverted by the backward flow")


def test_normal_form_check():
    cases = (
        ((1,), [1.2], 1e-6, 1e-8, 4.9, 1e-9),
        ((1, 2), [1.2, 0.7], 1e-5, 1e-6, 4.5, 1e-8),
    )
    for plus, xi, rel_tol, v3z_tol, min_slope, sym_tol in cases:
        model = Model(1, SiteSet(plus))
        gen = build_generator(model.sites, model.sign)
        vc, zc = normal_form_test_point(model.sites, xi, np.random.default_rng(0))
        assert np.allclose(np.abs(vc[gen.cutoff + np.array(plus)]) ** 2, xi)
        report = verify_normal_form(model, gen, vc, zc)
        assert report.relative_error <= rel_tol, (plus, report)
        assert report.v3z_defect <= v3z_tol, (plus, report)
        assert report.residual_slope >= min_slope, (plus, report)
        assert report.symplectic_defect <= sym_tol, (plus, report)
        print(f"  ✓ S+ = {plus}: quartic rel. error {report.relative_error:.1e}, "
              f"slope {report.residual_slope:.2f}")


def test_flow_on_torus_fields():
    gen = build_generator(SiteSet((1,)), 1)
    n = gen.cutoff
    uc = create_sample_state(n)
    flowed, _ = transform_coeffs(gen, uc, 1)
    u = TorusField.from_coeffs(0, 0, n, uc)
    forward = weak_bnf_flow(gen, u)
    assert np.max(np.abs(forward.coeffs - flowed)) < 1e-14
    assert np.max(np.abs(weak_bnf_flow(gen, forward, "inverse").coeffs - uc)) < 1e-9

    # u(phi, x) = w(x + phi) is carried to (Phi_B w)(x + phi)
    travelling = TorusField.from_modes(1, n, n, {(j, j): uc[n + j] for j in range(1, n + 1)})
    expected = np.zeros((2 * n + 1, 2 * n + 1), dtype=complex)
    for j in range(-n, n + 1):
        expected[n + j, n + j] = flowed[n + j]
    assert np.max(np.abs(weak_bnf_flow(gen, travelling).coeffs - expected)) < 1e-10
    try:
        weak_bnf_flow(gen, u, "backward")
        raise AssertionError("accepted an unknown direction")
    except DomainError:
        pass
    print("  ✓ Phi_B on x-only and travelling torus fields")


def test_homological_equation():
    for sign in (1, -1):
        model = Model(sign, SiteSet((1, 2)))
        gen = build_generator(model.sites, sign)
        uc = create_sample_state(gen.cutoff + 1, seed=11, size=0.3)
        value, expected = bracket_identity(model, gen, uc)
        assert abs(value - expected) <= 1e-9 * max(1.0, abs(expected))
    print("  ✓ {H_2, F} + H_4 equals the quartic normal form")


def test_resonant_quartic_sum():
    sites = SiteSet((1, 3))
    uc = create_sample_state(4, seed=5, size=0.5)
    direct, closed = resonant_quartic_sum(sites, uc)
    assert abs(direct.imag) < 1e-12
    assert abs(direct.real - closed) < 1e-12
    print("  ✓ Resonant quartic sum in closed form")


def main():
    """Run all site and Birkhoff tests."""
    print("\n" + "=" * 70)
    print("SITES AND BIRKHOFF NORMAL FORM TESTS".center(70))
    print("=" * 70)

    tests = [
        test_cube_identity,
        test_site_validation,
        test_single_site_always_admissible,
        test_inadmissible_pair,
        test_find_violating_sets,
        test_twist_inverse,
        test_generator_support,
        test_flow_is_symplectic_and_invertible,
        test_normal_form_check,
        test_flow_on_torus_fields,
        test_homological_equation,
        test_resonant_quartic_sum,
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
