#!/usr/bin/env python3
"""
Test: Fourier core

Sobolev norms, truncation, the inverse of omega . d_phi with its small
divisor guards, reality and the Lipschitz norm over parameter samples.
"""

import sys

import numpy as np

from src.kam_mkdv.errors import DomainError, ExcisionError, LipschitzUndefinedError
from src.kam_mkdv.fourier import (
    ParamFamily,
    TorusField,
    convolve,
    d_omega,
    d_omega_inv,
    dx,
    dx_inv,
    enforce_reality,
    field_from_dict,
    lip_gamma_norm,
    multiply,
    project,
    reality_defect,
    sobolev_norm,
    truncate,
)


def create_sample_field() -> TorusField:
    """One real mode pair (l, j) = +-(1, 2) on T^2."""
    return TorusField.from_modes(1, 2, 3, {(1, 2): 1.0 + 0.0j})


def test_sobolev_norm():
    u = create_sample_field()
    # <l, j>^2 = 1 + 1 + 4
    assert abs(sobolev_norm(u, 0) - np.sqrt(2.0)) < 1e-12
    assert abs(sobolev_norm(u, 1) - np.sqrt(12.0)) < 1e-12
    assert abs(u.norm(2) - np.sqrt(72.0)) < 1e-10
    try:
        sobolev_norm(u, -1)
        raise AssertionError("negative Sobolev index accepted")
    except DomainError:
        pass
    print("  ✓ Sobolev norms")


def test_truncate():
    u = create_sample_field()
    assert truncate(u, 2.0).norm() == 0.0
    assert abs(truncate(u, 3.0).norm() - u.norm()) < 1e-14
    print("  ✓ Truncation by <l, j>")


def test_d_omega_inverse():
    u = TorusField.from_modes(1, 3, 4, {(1, 1): 0.5 - 0.2j, (-2, 3): 0.1j})
    omega = [np.sqrt(2.0)]
    back = d_omega(d_omega_inv(u, omega), omega)
    assert np.max(np.abs(back.coeffs - u.coeffs)) < 1e-13
    print("  ✓ omega . d_phi inverted on zero angle average")


def test_d_omega_inverse_rejects_average():
    u = TorusField.from_modes(1, 2, 3, {(0, 1): 1.0})
    try:
        d_omega_inv(u, [1.3])
        raise AssertionError("nonzero angle average accepted")
    except DomainError:
        pass
    print("  ✓ Nonzero angle average rejected")


def test_exact_resonance():
    u = TorusField.from_modes(2, 1, 2, {(1, 0, 1): 1.0})
    try:
        d_omega_inv(u, [1.0, 1.0])
        raise AssertionError("resonant frequency accepted")
    except ExcisionError as exc:
        ls = {w.l for w in exc.witnesses}
        assert (1, -1) in ls or (-1, 1) in ls
    print("  ✓ Exact resonance reported with its witnesses")


def test_diophantine_guard():
    u = TorusField.from_modes(2, 2, 2, {(1, 0, 1): 1.0})
    try:
        d_omega_inv(u, [1.0, 1.001], gamma=0.1, tau=2.0)
        raise AssertionError("near resonance passed the guard")
    except ExcisionError as exc:
        assert exc.stage == "d_omega_inv"
    print("  ✓ Diophantine guard")


def test_reality():
    u = create_sample_field()
    assert u.is_real()
    coeffs = u.coeffs.copy()
    coeffs[3, 5] += 0.5j
    broken = u.with_coeffs(coeffs)
    assert reality_defect(broken) > 0.4
    assert not broken.is_real()
    assert enforce_reality(broken).is_real()
    print("  ✓ Reality defect and its projection")


def test_dx_primitive():
    u = TorusField.from_modes(1, 1, 4, {(0, 2): 1.0, (1, -3): 0.2 + 0.1j})
    assert np.max(np.abs(dx_inv(dx(u)).coeffs - u.coeffs)) < 1e-14
    assert np.max(np.abs(dx(u, -2).coeffs - dx_inv(dx_inv(u)).coeffs)) < 1e-14
    print("  ✓ d_x and its primitive")


def test_project():
    u = TorusField.from_modes(1, 1, 4, {(0, 1): 1.0, (0, 3): 2.0})
    tangential = project(u, "S", (-1, 1))
    normal = project(u, "S_perp", (-1, 1))
    assert abs(tangential.coefficient((0,), 1) - 1.0) < 1e-15
    assert normal.coefficient((0,), 1) == 0.0
    assert np.max(np.abs((tangential + normal).coeffs - u.coeffs)) < 1e-15
    print("  ✓ Tangential / normal projection")


def test_multiply():
    cos_x = TorusField.from_modes(0, 0, 3, {(1,): 0.5})
    square = multiply([cos_x, cos_x])
    # cos^2 x = 1/2 + cos(2x) / 2
    assert abs(square.coefficient((), 0) - 0.5) < 1e-13
    assert abs(square.coefficient((), 2) - 0.25) < 1e-13
    assert abs(square.coefficient((), 1)) < 1e-13
    print("  ✓ Alias-free products")


def test_convolve_matches_grid_product():
    u = create_sample_field()
    v = TorusField.from_modes(1, 1, 2, {(0, 1): 0.5j, (1, -2): 0.25})
    product = convolve(u, v)
    assert (product.n_phi, product.n_x) == (3, 5)
    grid = u.to_grid(7, 11) * v.to_grid(7, 11)
    assert np.max(np.abs(product.to_grid(7, 11) - grid)) < 1e-13
    assert np.max(np.abs(multiply([u, v], 3, 5).coeffs - product.coeffs)) < 1e-15
    try:
        convolve(u, TorusField.from_modes(0, 0, 2, {(1,): 1.0}))
        raise AssertionError("fields on different tori accepted")
    except DomainError:
        pass
    print("  ✓ Convolution of coefficients is the product of values")


def test_param_family():
    u = create_sample_field()
    try:
        ParamFamily([(np.array([1.0]), u), (np.array([1.0]), u)], gamma=0.1)
        raise AssertionError("duplicate samples accepted")
    except DomainError:
        pass
    try:
        ParamFamily([(np.array([1.0]), u)], gamma=0.0)
        raise AssertionError("gamma = 0 accepted")
    except DomainError:
        pass
    try:
        lip_gamma_norm(ParamFamily([(np.array([1.0]), u)], gamma=0.1), 1)
        raise AssertionError("Lipschitz norm of a single sample")
    except LipschitzUndefinedError:
        pass
    family = ParamFamily([(np.array([1.0]), u * 1.0), (np.array([2.0]), u * 2.0)], gamma=0.1)
    expected = 2.0 * u.norm(1) + 0.1 * u.norm(1)
    assert abs(lip_gamma_norm(family, 1) - expected) < 1e-12
    print("  ✓ Lipschitz-gamma norm")


def test_field_box_check():
    data = {"nu": 1, "box": [1, 2], "phase_space": True, "entries": [[2, 1, 1.0, 0.0]]}
    try:
        field_from_dict(data)
        raise AssertionError("entry outside the box accepted")
    except DomainError:
        pass
    print("  ✓ Serialized entries checked against the box")


def main():
    """Run all Fourier core tests."""
    print("\n" + "=" * 70)
    print("FOURIER CORE TESTS".center(70))
    print("=" * 70)

    tests = [
        test_sobolev_norm,
        test_truncate,
        test_d_omega_inverse,
        test_d_omega_inverse_rejects_average,
        test_exact_resonance,
        test_diophantine_guard,
        test_reality,
        test_dx_primitive,
        test_project,
        test_multiply,
        test_convolve_matches_grid_product,
        test_param_family,
        test_field_box_check,
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
