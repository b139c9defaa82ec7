#!/usr/bin/env python3
"""
Test: Time integration

Small data follow the Airy flow, the invariants drift slowly under both
schemes, and the torus defect starts at zero.
"""

import sys

import numpy as np

from src.kam_mkdv.errors import DomainError
from src.kam_mkdv.evolve import EvolutionSettings, airy_solution, integrate, phase_frequency, torus_defect
from src.kam_mkdv.fourier import TorusField
from src.kam_mkdv.hamiltonian import Model
from src.kam_mkdv.sites import SiteSet
from src.kam_mkdv.torus import Params, TorusProblem, trivial_embedding


def create_sample_model() -> Model:
    return Model(1, SiteSet((1,)))


def create_sample_data(size: float, n_x: int = 8) -> np.ndarray:
    return TorusField.from_modes(0, 0, n_x, {(1,): size, (2,): 0.5j * size}).coeffs


def test_small_data_follow_airy():
    u0 = create_sample_data(1e-6)
    # the Cayley form of the linear part carries an O(dt^2) phase error
    for scheme, tol, freq_tol in (("exponential", 1e-14, 1e-6), ("midpoint", 1e-10, 1e-3)):
        settings = EvolutionSettings(dt=1e-3, t_final=0.5, scheme=scheme, snapshot_every=0.1)
        traj = integrate(create_sample_model(), u0, settings)
        assert abs(traj.times[-1] - 0.5) < 1e-12
        exact = airy_solution(u0, traj.times[-1])
        assert np.max(np.abs(traj.snapshots[-1] - exact)) < tol
        assert abs(phase_frequency(traj, 2) - 8.0) < freq_tol
    print("  ✓ Linear limit: u_t + u_xxx = 0")


def test_invariants_drift():
    u0 = create_sample_data(0.3)
    for scheme, energy_tol in (("exponential", 1e-8), ("midpoint", 1e-7)):
        settings = EvolutionSettings(dt=5e-4, t_final=1.0, scheme=scheme, snapshot_every=0.25)
        drift = integrate(create_sample_model(), u0, settings).drift()
        assert drift["energy"] < energy_tol, (scheme, drift)
        assert drift["mass"] < 1e-5, (scheme, drift)
    print("  ✓ Energy and mass conserved to the scheme accuracy")


def test_settings_validation():
    for kwargs in ({"scheme": "euler"}, {"dt": 0.0}, {"t_final": -1.0}):
        try:
            EvolutionSettings(**kwargs)
            raise AssertionError(f"accepted {kwargs}")
        except DomainError:
            pass
    print("  ✓ Scheme and step validation")


def test_torus_defect_starts_on_torus():
    sites = SiteSet((1,))
    params = Params(eps=0.05, a=0.1, tau=3.0, n_phi=2, n_x=sites.birkhoff_cutoff())
    problem = TorusProblem(Model(1, sites), params, [1.4])
    settings = EvolutionSettings(dt=1e-3, t_final=0.05, snapshot_every=0.01)
    defect = torus_defect(problem, trivial_embedding(problem), problem.alpha, settings, samples=16)
    assert len(defect.times) == len(defect.phase_error) == len(defect.distance)
    assert defect.phase_error[0] < 1e-14
    assert defect.distance[0] < 1e-14
    print(f"  ✓ Torus defect over {len(defect.times)} snapshots")


def main():
    """Run all time integration tests."""
    print("\n" + "=" * 70)
    print("TIME INTEGRATION TESTS".center(70))
    print("=" * 70)

    tests = [
        test_small_data_follow_airy,
        test_invariants_drift,
        test_settings_validation,
        test_torus_defect_starts_on_torus,
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
