#!/usr/bin/env python3
"""
Test: Approximate inverse

Isotropic correction, the triangular solve of the linearized system in the
symplectic chart and the defect of T0 near a torus of small residual.
"""

import sys

import numpy as np

from src.kam_mkdv.approx_inverse import (
    ApproximateInverse,
    ChartGeometry,
    DSolution,
    MAX_DIRECT_UNKNOWNS,
    approx_inverse_defect,
    isotropic_correction,
    isotropy_data,
    k_taylor,
    neglected_terms,
    symplectic_form_W,
)
from src.kam_mkdv.errors import NumericalFailureError
from src.kam_mkdv.hamiltonian import Model
from src.kam_mkdv.sites import SiteSet
from src.kam_mkdv.torus import Params, TorusEmbedding, TorusProblem, trivial_embedding


def create_sample_problem(plus=(1,), mode: str = "H", n_phi: int = 2, eps: float = 0.05) -> TorusProblem:
    sites = SiteSet(plus)
    params = Params(eps=eps, a=0.1, tau=float(len(plus) + 2), n_phi=n_phi, n_x=sites.birkhoff_cutoff())
    return TorusProblem(Model(1, sites), params, np.linspace(1.2, 1.6, len(plus)), mode=mode)


def real_angle(coeffs: np.ndarray, nu: int) -> np.ndarray:
    return 0.5 * (coeffs + np.conj(coeffs[(slice(None, None, -1),) * nu]))


def create_sample_rhs(problem: TorusProblem, seed: int = 7):
    """Real right-hand sides (g1, g2, g3) of the triangular system."""
    rng = np.random.default_rng(seed)
    nu, band, k = problem.nu, problem.params.n_phi, len(problem.normal)
    shape = (2 * band + 1,) * nu
    noise = lambda comps: 0.1 * (rng.normal(size=shape + (comps,)) + 1j * rng.normal(size=shape + (comps,)))
    g1 = real_angle(noise(nu), nu)
    g2 = real_angle(noise(nu), nu)
    g3 = real_angle(noise(k), nu + 1)
    return g1, g2, g3


def create_sample_increment(problem: TorusProblem) -> TorusEmbedding:
    """A small real embedding with one angle harmonic in theta, y and z."""
    g = trivial_embedding(problem)
    theta, y, z = g.theta.copy(), g.y.copy(), g.z.coeffs.copy()
    n = problem.params.n_x
    theta[3, 0], theta[1, 0] = 0.02j, -0.02j
    y[4, 0], y[0, 0] = 0.01, 0.01
    z[3, n + 2], z[1, n - 2] = 0.03, 0.03
    return TorusEmbedding(theta, y, g.z.with_coeffs(z), np.zeros(1))


def test_trivial_torus_is_isotropic():
    problem = create_sample_problem(plus=(1, 2), n_phi=2)
    emb = trivial_embedding(problem)
    assert isotropy_data(problem, emb).defect() == 0.0
    corrected, _ = isotropic_correction(problem, emb)
    assert np.max(np.abs(corrected.y - emb.y)) < 1e-15
    print("  ✓ Trivial torus is isotropic")


def test_isotropic_correction():
    problem = create_sample_problem(plus=(1, 2), n_phi=2)
    emb = trivial_embedding(problem)
    y = emb.y.copy()
    # y_1 = cos(phi_2)
    y[2, 3, 0], y[2, 1, 0] = 0.5, 0.5
    skewed = TorusEmbedding(emb.theta, y, emb.z, emb.zeta)
    assert isotropy_data(problem, skewed).defect() > 0.1
    corrected, _ = isotropic_correction(problem, skewed)
    assert isotropy_data(problem, corrected).defect() < 1e-12
    print("  ✓ Isotropic correction closes the pull-back form")


def test_chart_is_symplectic():
    problem = create_sample_problem(eps=0.02)
    k = len(problem.normal)
    rng = np.random.default_rng(1)
    a = (rng.normal(size=(5, 1)), rng.normal(size=(5, 1)), np.zeros((5, k)))
    b = (rng.normal(size=(5, 1)), rng.normal(size=(5, 1)), np.zeros((5, k)))
    assert np.allclose(symplectic_form_W(problem.normal, a, b), a[0][:, 0] * b[1][:, 0] - a[1][:, 0] * b[0][:, 0])
    assert np.allclose(symplectic_form_W(problem.normal, a, b), -symplectic_form_W(problem.normal, b, a))

    # every embedding of a one-dimensional torus is isotropic
    assert ChartGeometry(problem, create_sample_increment(problem)).symplectic_defect() < 1e-12
    assert ApproximateInverse(problem, trivial_embedding(problem), problem.alpha).chart_defect < 1e-12

    pair = create_sample_problem(plus=(1, 2), n_phi=2)
    y = trivial_embedding(pair).y.copy()
    y[2, 3, 0], y[2, 1, 0] = 0.5, 0.5
    skewed = TorusEmbedding(trivial_embedding(pair).theta, y, trivial_embedding(pair).z, np.zeros(2))
    assert ChartGeometry(pair, skewed).symplectic_defect() > 1e-2
    corrected, _ = isotropic_correction(pair, skewed)
    assert ChartGeometry(pair, corrected).symplectic_defect() < 1e-10
    print("  ✓ DG_delta preserves W on isotropic tori only")


def test_triangular_solve():
    problem = create_sample_problem()
    emb = trivial_embedding(problem)
    inverse = ApproximateInverse(problem, emb, problem.alpha)
    g1, g2, g3 = create_sample_rhs(problem)
    sol = inverse.solve_D(g1, g2, g3)
    assert isinstance(sol, DSolution)
    back = inverse.apply_D(sol)
    for got, want in zip(back, (g1, g2, g3)):
        assert np.max(np.abs(got - want)) < 1e-9
    assert inverse.last_cond > 0.0
    assert inverse.linv.diagnostics()["unknowns"] <= MAX_DIRECT_UNKNOWNS
    print("  ✓ Triangular system solved in the order zeta, eta, w, psi")


def test_normal_form_chart_terms():
    problem = create_sample_problem(mode="N")
    emb = trivial_embedding(problem)
    taylor = k_taylor(problem, ChartGeometry(problem, emb), with_value=False)
    assert neglected_terms(taylor, problem.alpha) < 1e-12
    assert taylor.symmetry_defect() < 1e-12
    # N carries no twist in y, so the averaged block <M1> is singular
    inverse = ApproximateInverse(problem, emb, problem.alpha)
    try:
        inverse.solve_D(*create_sample_rhs(problem))
        raise AssertionError("degenerate twist accepted")
    except NumericalFailureError:
        pass
    print("  ✓ K10 = omega and K01 = 0 at an exact normal-form torus")


def test_inverse_defect_at_trivial_torus():
    problem = create_sample_problem(eps=0.02)
    emb = trivial_embedding(problem)
    g = create_sample_increment(problem)
    assert approx_inverse_defect(problem, emb, problem.alpha, g, mu_num=0.0) < 0.05
    print("  ✓ dF o T0 - I is small near a torus of small residual")


def main():
    """Run all approximate inverse tests."""
    print("\n" + "=" * 70)
    print("APPROXIMATE INVERSE TESTS".center(70))
    print("=" * 70)

    tests = [
        test_trivial_torus_is_isotropic,
        test_isotropic_correction,
        test_chart_is_symplectic,
        test_triangular_solve,
        test_normal_form_chart_terms,
        test_inverse_defect_at_trivial_torus,
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
