"""Measure estimates: divisor decomposition, excluded fractions and the empty-shell check."""

import logging
from dataclasses import dataclass, field
from itertools import product
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .errors import DomainError, ResonantWitness
from .fourier import lattice
from .hamiltonian import Model
from .reducibility import fit_floquet_constants, reduce_to_constant
from .reduction import assemble_L_omega, i_dispersion, reduce_operator, surviving_coefficient
from .sites import SiteSet
from .torus import Params, TorusProblem, freq_amp, trivial_embedding, twist_inverse, unperturbed_frequencies

logger = logging.getLogger(__name__)

EigenProvider = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# Divisor decomposition phi(omega) = a_jk + b_ljk . omega + q_jk(omega)
# ---------------------------------------------------------------------------

def a_jk(sites: SiteSet, j: int, k: int, lambda_variant: bool = False) -> complex:
    """Constant part of i omega.l + mu_j - mu_k at the analytic eigenvalues."""
    shift = 0.0 if lambda_variant else 2.0 * sites.square_sum() / (2 * sites.nu - 1)
    return -1j * (j - k) * (j * j + j * k + k * k - shift)


def b_ljk(sites: SiteSet, sign: int, l: Sequence[int], j: int, k: int,
          lambda_variant: bool = False) -> np.ndarray:
    """Linear part b with b . omega the omega-dependent divisor term: i(l + 6 sign (j - k) A^-T 1)."""
    l = np.asarray(l, dtype=float)
    if lambda_variant:
        return 1j * l
    tilt = twist_inverse(sites, sign).T @ np.ones(sites.nu)
    return 1j * (l + 6.0 * sign * (j - k) * tilt)


def q_jk(divisor: complex, a: complex, b: np.ndarray, omega: Sequence[float]) -> complex:
    """Remainder of the decomposition for a computed divisor."""
    return divisor - a - complex(b @ np.asarray(omega, dtype=float))


# ---------------------------------------------------------------------------
# Frequency grids and eigenvalues
# ---------------------------------------------------------------------------

def xi_grid(nu: int, points: int) -> np.ndarray:
    """Uniform samples of [1, 2]^nu with about `points` entries in total."""
    per_dim = max(2, int(round(points ** (1.0 / nu))))
    axis = np.linspace(1.0, 2.0, per_dim)
    return np.array(list(product(axis, repeat=nu)), dtype=float)


def omega_grid(sites: SiteSet, sign: int, eps: float, points: int,
               lambda_variant: bool = False) -> np.ndarray:
    """omega = alpha(xi) over the xi grid; one row per sample."""
    xis = xi_grid(sites.nu, points)
    return np.array([freq_amp(sites, sign, eps, xi, lambda_variant) for xi in xis])


def analytic_eigenvalues(sites: SiteSet, sign: int, eps: float, xi: Sequence[float], modes: np.ndarray,
                         lambda_variant: bool = False) -> np.ndarray:
    """i(-j^3 + eps^2 c(xi) j)."""
    c = surviving_coefficient(sites, sign, xi, lambda_variant)
    return i_dispersion(modes, 1.0, eps ** 2 * c)


def melnikov_modes(sites: SiteSet, jmax: int) -> np.ndarray:
    """S^c together with the zero mode, truncated at jmax."""
    return np.array([j for j in range(-jmax, jmax + 1) if not sites.contains(j)], dtype=int)


def reduced_eigen_provider(model: Model, params: Params) -> EigenProvider:
    """Eigenvalues from the reducibility scheme at the trivial torus of each xi.

    Modes the reduced operator does not carry (the zero mode, |j| > n_x) take
    the fitted dispersion i(-m3 j^3 + m1 j).
    """
    def provider(xi: np.ndarray, modes: np.ndarray) -> np.ndarray:
        problem = TorusProblem(model, params, xi)
        omega = problem.alpha
        reduction = reduce_operator(assemble_L_omega(problem, trivial_embedding(problem), omega), problem,
                                    check=False)
        state = reduce_to_constant(reduction.op, omega, params.gamma, params.tau)
        fit = fit_floquet_constants(state.modes, state.mu)
        mu = i_dispersion(modes, fit.m3, fit.m1)
        lookup = {int(j): a for a, j in enumerate(state.modes)}
        for idx, j in enumerate(modes):
            if int(j) in lookup:
                mu[idx] = state.mu[lookup[int(j)]]
        return mu

    return provider


# ---------------------------------------------------------------------------
# Excluded fraction
# ---------------------------------------------------------------------------

def exclusion_witness(omega: np.ndarray, mu: np.ndarray, modes: np.ndarray, gamma: float,
                      tau: float, band: int) -> Optional[ResonantWitness]:
    """First (l, j, k), j != k, with |i omega.l + mu_j - mu_k| < 2 gamma |j^3 - k^3| <l>^-tau."""
    nu = omega.size
    lat = lattice(nu, band).reshape(-1, nu)
    wl = lat @ omega
    weight = (1.0 + np.sum(lat ** 2, axis=-1)) ** (-tau / 2.0)
    cubes = modes.astype(float) ** 3
    gap = np.abs(cubes[:, None] - cubes[None, :])
    off = gap > 0
    diff = mu[:, None] - mu[None, :]
    for l, wl_i, w_i in zip(lat, wl, weight):
        div = np.abs(1j * wl_i + diff)
        bound = 2.0 * gamma * gap * w_i
        hits = np.argwhere(off & (div < bound))
        if len(hits):
            a, b = hits[0]
            return ResonantWitness(tuple(int(v) for v in l), int(modes[a]), int(modes[b]),
                                   float(div[a, b]), float(bound[a, b]))
    return None


@dataclass
class MeasureReport:
    gammas: List[float]
    fractions: List[float]
    tau: float
    samples: int
    slope: Optional[float] = None
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tau": self.tau,
            "samples": self.samples,
            "slope": self.slope,
            "fractions": [{"gamma": g, "fraction": f} for g, f in zip(self.gammas, self.fractions)],
        }


def fit_slope(gammas: Sequence[float], fractions: Sequence[float]) -> Optional[float]:
    """Slope of log(fraction) against log(gamma) over the nonzero fractions."""
    pts = [(np.log(g), np.log(f)) for g, f in zip(gammas, fractions) if f > 0 and g > 0]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def excluded_fraction(sites: SiteSet, sign: int, eps: float, gammas: Sequence[float], tau: float,
                      points: int, band: int, jmax: int, lambda_variant: bool = False,
                      eigen_provider: Optional[EigenProvider] = None) -> MeasureReport:
    """Fraction of the omega grid failing the second Melnikov condition, for every gamma.

    eigen_provider(xi, modes) replaces the analytic eigenvalues (the "final" source).
    """
    if tau <= 0:
        raise DomainError("tau must be positive")
    xis = xi_grid(sites.nu, points)
    modes = melnikov_modes(sites, jmax)
    excluded = np.zeros((len(gammas), len(xis)), dtype=bool)
    rows = []
    for s, xi in enumerate(xis):
        omega = freq_amp(sites, sign, eps, xi, lambda_variant)
        if eigen_provider is None:
            mu = analytic_eigenvalues(sites, sign, eps, xi, modes, lambda_variant)
        else:
            mu = eigen_provider(xi, modes)
        witness = None
        for g, gamma in enumerate(gammas):
            found = exclusion_witness(omega, mu, modes, gamma, tau, band)
            excluded[g, s] = found is not None
            witness = witness or found
        if witness is not None:
            witness.a_jk = a_jk(sites, witness.j, witness.k, lambda_variant)
            witness.b_ljk = tuple(complex(v) for v in b_ljk(sites, sign, witness.l, witness.j, witness.k,
                                                            lambda_variant))
        rows.append({"xi": xi.tolist(), "omega": omega.tolist(),
                     "excluded": [bool(v) for v in excluded[:, s]],
                     "witness": witness.to_dict() if witness else None})
    fractions = [float(np.mean(excluded[g])) for g in range(len(gammas))]
    report = MeasureReport(list(map(float, gammas)), fractions, tau, len(xis), fit_slope(gammas, fractions), rows)
    logger.info(f"excluded fractions {dict(zip(report.gammas, fractions))}, slope {report.slope}")
    return report


# ---------------------------------------------------------------------------
# Empty shell
# ---------------------------------------------------------------------------

@dataclass
class ShellReport:
    c1: float
    checked: int
    witnesses: List[ResonantWitness]

    @property
    def empty(self) -> bool:
        return not self.witnesses

    def to_dict(self) -> Dict[str, Any]:
        return {"c1": self.c1, "checked": self.checked, "empty": self.empty,
                "witnesses": [w.to_dict() for w in self.witnesses]}


def empty_shell_check(sites: SiteSet, sign: int, eps: float, xi: Sequence[float], gamma: float,
                      tau: float, band: int, jmax: int, lambda_variant: bool = False) -> ShellReport:
    """Show that no resonance sits in |l| < C1 |j^3 - k^3| / 2.

    C1 comes from cubic dominance: |omega.l + m1 (j - k) + k^3 - j^3| > 0 whenever
    |omega| |l| < |j^3 - k^3| - |m1| |j - k|.
    """
    omega = freq_amp(sites, sign, eps, xi, lambda_variant)
    modes = melnikov_modes(sites, jmax)
    mu = analytic_eigenvalues(sites, sign, eps, xi, modes, lambda_variant)
    m1 = eps ** 2 * surviving_coefficient(sites, sign, xi, lambda_variant)
    norm = float(np.linalg.norm(omega))
    ratios = [(abs(j ** 3 - k ** 3) - abs(m1) * abs(j - k)) / (norm * abs(j ** 3 - k ** 3))
              for j in modes for k in modes if j != k]
    c1 = max(0.0, min(ratios)) if ratios else 0.0
    witnesses = []
    checked = 0
    nu = sites.nu
    for l in lattice(nu, band).reshape(-1, nu):
        size = float(np.linalg.norm(l))
        weight = (1.0 + float(l @ l)) ** (-tau / 2.0)
        for a, j in enumerate(modes):
            for b, k in enumerate(modes):
                gap = abs(int(j) ** 3 - int(k) ** 3)
                if j == k or size >= 0.5 * c1 * gap:
                    continue
                checked += 1
                div = abs(1j * float(l @ omega) + mu[a] - mu[b])
                bound = gamma * gap * weight
                if div < bound:
                    witnesses.append(ResonantWitness(tuple(int(v) for v in l), int(j), int(k), div, bound))
    return ShellReport(c1, checked, witnesses)


def unperturbed_divisor(sites: SiteSet, l: Sequence[int], j: int, k: int) -> int:
    """omega_bar . l + k^3 - j^3 in exact integers."""
    return int(np.asarray(l, dtype=np.int64) @ unperturbed_frequencies(sites).astype(np.int64)) + k ** 3 - j ** 3
