#!/usr/bin/env python3
"""
Test: Hamiltonian

Energy and mass of reference states, the gradient against central
differences, the symplectic form and the validation of density monomials.
"""

import sys

import numpy as np

from src.kam_mkdv.errors import DomainError
from src.kam_mkdv.fourier import TorusField
from src.kam_mkdv.hamiltonian import (
    Model,
    Monomial,
    N4,
    PolynomialDensity,
    dx_pairing,
    eval_H,
    grad_H,
    mass,
    poisson_bracket,
    symplectic_form,
    vector_field_X,
)
from src.kam_mkdv.sites import SiteSet


def create_sample_model(density: bool = True) -> Model:
    """Focusing model on S+ = {1, 2} with one x-dependent quasi-linear monomial."""
    specs = [{"c": 0.2, "kind": "cos", "m": 1, "p": 3, "q": 2}, {"c": -0.1, "p": 6}] if density else []
    return Model(1, SiteSet((1, 2)), PolynomialDensity.from_specs(specs))


def create_sample_state(n_x: int = 6) -> TorusField:
    return TorusField.from_modes(0, 0, n_x, {(1,): 0.3 - 0.1j, (2,): 0.15j, (4,): 0.05})


def test_energy_of_cosine():
    model = create_sample_model(density=False)
    u = TorusField.from_modes(0, 0, 4, {(1,): 1.0})
    # u = 2 cos x: int u_x^2 / 2 = 2 pi, int u^4 / 4 = 3 pi
    assert abs(eval_H(model, u) + np.pi) < 1e-10
    assert abs(mass(u) - 4.0 * np.pi) < 1e-12
    print("  ✓ H(2 cos x) = -pi, M(2 cos x) = 4 pi")


def test_lambda_variant_energy():
    sites = SiteSet((1, 2))
    u = TorusField.from_modes(0, 0, 4, {(1,): 1.0})
    plain = eval_H(Model(1, sites), u)
    shifted = eval_H(Model.with_lambda_variant(1, sites), u)
    # 2 pi lambda (sum |u_j|^2)^2 with lambda = 3/4 and sum = 2
    assert abs(shifted - plain - 6.0 * np.pi) < 1e-10
    print("  ✓ lambda M^2 term")


def test_gradient_matches_differences():
    model = create_sample_model()
    u = create_sample_state()
    h = TorusField.from_modes(0, 0, 6, {(1,): 0.2, (3,): -0.1 + 0.3j, (5,): 0.05j})
    step = 1e-5
    numeric = (eval_H(model, u + h * step) - eval_H(model, u - h * step)) / (2.0 * step)
    exact = float(dx_pairing(grad_H(model, u).coeffs, h.coeffs).real)
    assert abs(numeric - exact) <= 1e-6 * max(1.0, abs(exact))
    print("  ✓ grad H against central differences")


def test_vector_field_is_hamiltonian():
    model = create_sample_model()
    u = create_sample_state()
    h = TorusField.from_modes(0, 0, 6, {(2,): 0.4, (3,): 0.1j})
    lhs = symplectic_form(vector_field_X(model, u), h)
    rhs = float(dx_pairing(grad_H(model, u).coeffs, h.coeffs).real)
    assert abs(lhs - rhs) < 1e-10
    print("  ✓ Omega(X_H, h) = dH[h]")


def test_antisymmetry():
    model = create_sample_model()
    u = create_sample_state()
    v = TorusField.from_modes(0, 0, 6, {(1,): 0.1j, (2,): 0.3})
    assert abs(symplectic_form(u, v) + symplectic_form(v, u)) < 1e-12
    gu, gv = grad_H(model, u), grad_H(model, v)
    assert abs(poisson_bracket(gu, gv) + poisson_bracket(gv, gu)) < 1e-10
    assert abs(poisson_bracket(gu, gu)) < 1e-10
    print("  ✓ Antisymmetry of Omega and of the bracket")


def test_quasi_linear_part():
    u = create_sample_state()
    assert N4(create_sample_model(density=False), u).norm() == 0.0
    assert N4(create_sample_model(), u).norm() > 0.0
    print("  ✓ Quasi-linear part vanishes without a density")


def test_monomial_validation():
    for bad in ({"c": 1.0, "p": 3, "q": 1}, {"c": 1.0, "kind": "tan", "p": 5}, {"c": 1.0, "p": -1, "q": 6}):
        try:
            Monomial(**bad)
            raise AssertionError(f"accepted {bad}")
        except DomainError:
            pass
    try:
        Model(0, SiteSet((1,)))
        raise AssertionError("sign 0 accepted")
    except DomainError:
        pass
    print("  ✓ Density monomials must vanish to order five")


def main():
    """Run all Hamiltonian tests."""
    print("\n" + "=" * 70)
    print("HAMILTONIAN TESTS".center(70))
    print("=" * 70)

    tests = [
        test_energy_of_cosine,
        test_lambda_variant_energy,
        test_gradient_matches_differences,
        test_vector_field_is_hamiltonian,
        test_antisymmetry,
        test_quasi_linear_part,
        test_monomial_validation,
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
