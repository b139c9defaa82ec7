#!/usr/bin/env python3
"""
Test: Action-angle variables and the torus functional

Frequency-amplitude map, parameter validation, embeddings, the gradients
of H_eps against central differences, the residual of the trivial torus and
the solution u(t, x) it carries.
"""

import sys

import numpy as np

from src.kam_mkdv.birkhoff import weak_bnf_flow
from src.kam_mkdv.errors import DomainError
from src.kam_mkdv.fourier import TorusField, x_points, x_to_grid
from src.kam_mkdv.hamiltonian import Model
from src.kam_mkdv.sites import SiteSet
from src.kam_mkdv.torus import (
    F_operator,
    Params,
    TorusEmbedding,
    TorusProblem,
    embed_A_eps,
    embedding_from_dict,
    embedding_to_dict,
    freq_amp,
    residual_norm,
    solution_coeffs,
    solution_field,
    trivial_embedding,
    unperturbed_frequencies,
    xi_of_omega,
)


def create_sample_problem(plus=(1,), mode: str = "H", n_phi: int = 2, eps: float = 0.05) -> TorusProblem:
    sites = SiteSet(plus)
    params = Params(eps=eps, a=0.1, tau=float(len(plus) + 2), n_phi=n_phi, n_x=sites.birkhoff_cutoff())
    xi = np.linspace(1.2, 1.6, len(plus))
    return TorusProblem(Model(1, sites), params, xi, mode=mode)


def test_frequency_amplitude_map():
    sites = SiteSet((1, 2))
    for sign in (1, -1):
        xi = np.array([1.3, 1.7])
        omega = freq_amp(sites, sign, 0.1, xi)
        assert np.max(np.abs(xi_of_omega(sites, sign, 0.1, omega) - xi)) < 1e-10
    assert list(unperturbed_frequencies(sites)) == [1.0, 8.0]
    try:
        freq_amp(sites, 1, 0.1, [1.0, -0.5])
        raise AssertionError("negative amplitude accepted")
    except DomainError:
        pass
    print("  ✓ alpha and its inverse")


def test_params():
    params = Params(eps=0.1, a=0.1, tau=3.0, n_phi=4, n_x=8)
    assert abs(params.b - 1.05) < 1e-15
    assert abs(params.gamma - 0.1 ** 2.1) < 1e-15
    for kwargs in ({"eps": 0.0}, {"a": 0.2}, {"n_phi": 0}):
        data = {"eps": 0.1, "a": 0.1, "tau": 3.0, "n_phi": 4, "n_x": 8, **kwargs}
        try:
            Params(**data)
            raise AssertionError(f"accepted {kwargs}")
        except DomainError:
            pass
    print("  ✓ Parameter validation")


def test_problem_needs_birkhoff_space():
    sites = SiteSet((1, 2))
    params = Params(eps=0.1, a=0.1, tau=4.0, n_phi=2, n_x=6)
    try:
        TorusProblem(Model(1, sites), params, [1.0, 1.0])
        raise AssertionError("n_x below the Birkhoff cutoff accepted")
    except DomainError:
        pass
    print("  ✓ n_x must contain the Birkhoff space")


def test_embedding_algebra_and_serialization():
    problem = create_sample_problem()
    emb = trivial_embedding(problem)
    theta = emb.theta.copy()
    theta[3, 0], theta[1, 0] = 0.1 - 0.2j, 0.1 + 0.2j
    z = emb.z.coeffs.copy()
    z[4, problem.params.n_x + 2], z[0, problem.params.n_x - 2] = 0.05j, -0.05j
    shaped = TorusEmbedding(theta, emb.y, emb.z.with_coeffs(z), np.array([0.01]))
    assert (shaped - shaped).norm(1.0) == 0.0
    assert abs((shaped * 2.0).norm(0.0) - 2.0 * shaped.norm(0.0)) < 1e-14
    assert shaped.smooth(1.5).outside_support(1.5) == 0.0
    assert shaped.outside_support(1.5) > 0.0

    data = embedding_to_dict(shaped, omega=[1.1], xi=[1.2])
    assert data["box"] == [2, problem.params.n_x] and data["omega"] == [1.1]
    back = embedding_from_dict(data)
    assert (back - shaped).norm(2.0) < 1e-15
    print("  ✓ Embedding algebra and its JSON form")


def test_normal_form_torus_is_exact():
    problem = create_sample_problem(plus=(1, 2), mode="N")
    emb = trivial_embedding(problem)
    assert residual_norm(F_operator(problem, emb, problem.alpha)) < 1e-12
    shifted = problem.alpha + np.array([1e-3, 0.0])
    assert abs(residual_norm(F_operator(problem, emb, shifted)) - 1e-3) < 1e-12
    print("  ✓ The trivial torus solves the normal form at omega = alpha")


def test_gradients_match_differences():
    problem = create_sample_problem()
    n = problem.params.n_x
    theta = np.array([[0.7]])
    y = np.array([[0.2]])
    zc = np.zeros((1, 2 * n + 1), dtype=complex)
    zc[0, n + 2], zc[0, n - 2] = 0.3 + 0.1j, 0.3 - 0.1j
    dtheta, dy, gz = problem.gradients(theta, y, zc)
    step = 1e-4

    def diff(dt=0.0, dyv=0.0, dz=None):
        dz = np.zeros_like(zc) if dz is None else dz
        plus = problem.value(theta + dt, y + dyv, zc + dz)
        minus = problem.value(theta - dt, y - dyv, zc - dz)
        return float((plus - minus)[0]) / 2.0

    scale = max(1.0, float(np.max(np.abs(dy))))
    assert abs(diff(dt=step) / step - dtheta[0, 0]) < 1e-6 * scale
    assert abs(diff(dyv=step) / step - dy[0, 0]) < 1e-6 * scale
    h = np.zeros_like(zc)
    h[0, n + 3], h[0, n - 3] = 0.2, 0.2
    expected = float(np.sum(gz[0] * h[0, ::-1]).real)
    assert abs(diff(dz=step * h) / step - expected) < 1e-6 * scale
    print("  ✓ d_theta, d_y and grad_z of H_eps against central differences")


def test_embedding_and_solution_field():
    problem = create_sample_problem()
    n = problem.params.n_x
    eps, b = problem.params.eps, problem.params.b
    z = TorusField.from_modes(0, 0, n, {(1,): 0.5, (2,): 0.3 + 0.1j})
    u = embed_A_eps(problem, [0.7], [0.0], z)
    # the tangential component of z is replaced by the action-angle part
    assert abs(u.coefficient((), 1) - eps * np.sqrt(1.2) * np.exp(0.7j)) < 1e-15
    assert abs(u.coefficient((), -2) - eps ** b * (0.3 - 0.1j)) < 1e-15
    try:
        embed_A_eps(problem, [0.7], [0.0], TorusField.zeros(1, 2, n))
        raise AssertionError("accepted a torus field")
    except DomainError:
        pass

    emb, omega, t = trivial_embedding(problem), problem.alpha, 0.3
    x = x_points(64)
    plain = solution_field(problem, emb, omega, t, m_x=64, original=False)
    assert np.max(np.abs(plain - 2.0 * eps * np.sqrt(1.2) * np.cos(x + omega[0] * t))) < 1e-14
    full = solution_coeffs(problem, emb, omega, t)
    assert np.max(np.abs(solution_field(problem, emb, omega, t, m_x=64) - x_to_grid(full, 64).real)) < 1e-14
    back = weak_bnf_flow(problem.generator, TorusField.from_coeffs(0, 0, n, full), "inverse")
    assert np.max(np.abs(back.coeffs - solution_coeffs(problem, emb, omega, t, original=False))) < 1e-9
    print("  ✓ A_eps and u(t, x) in both coordinate systems")


def main():
    """Run all torus tests."""
    print("\n" + "=" * 70)
    print("TORUS FUNCTIONAL TESTS".center(70))
    print("=" * 70)

    tests = [
        test_frequency_amplitude_map,
        test_params,
        test_problem_needs_birkhoff_space,
        test_embedding_algebra_and_serialization,
        test_normal_form_torus_is_exact,
        test_gradients_match_differences,
        test_embedding_and_solution_field,
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
