"""
KAM reducibility of D_omega + D + R to a constant diagonal operator.

Each step solves the homological equation D_omega W + [D, W] + Pi_N R = [R]
entry by entry, conjugates by exp(W) and accumulates the transformation.
The second-Melnikov divisors are checked before every division.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .approx_inverse import KTaylor, LinearInverse
from .config import CHI, SMALLNESS_THRESHOLD, s0_for
from .errors import ExcisionError, NumericalFailureError, ResonantWitness
from .fourier import lattice, phi_from_grid, phi_to_grid
from .operators import OperatorGrid, _angle_frequencies, series_expm
from .reduction import Reduction, conjugate, linearized_from_taylor, reduce_operator

logger = logging.getLogger(__name__)

MAX_WITNESSES = 20


@dataclass
class ReducibilityState:
    """mu_j, the remainder R = M - diag(mu) and the accumulated transformation Phi_inf on the grid."""
    modes: np.ndarray
    mu: np.ndarray
    remainder: OperatorGrid
    transform: np.ndarray
    transform_inv: np.ndarray
    step: int = 0
    history: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def operator(self) -> OperatorGrid:
        return self.remainder.with_values(self.remainder.values + np.diag(self.mu))

    def remainder_size(self) -> float:
        return self.remainder.max_abs()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "steps": self.step,
            "remainder": self.remainder_size(),
            "mu": [[int(j), float(v.real), float(v.imag)] for j, v in zip(self.modes, self.mu)],
            "history": self.history,
        }


def initial_state(op: OperatorGrid) -> ReducibilityState:
    """Split M into its angle-averaged diagonal and the rest."""
    mu = np.mean(np.diagonal(op.values, axis1=-2, axis2=-1).reshape(-1, op.size), axis=0)
    eye = np.broadcast_to(np.eye(op.size, dtype=complex), op.values.shape).copy()
    return ReducibilityState(op.modes, mu, op.with_values(op.values - np.diag(mu)), eye, eye.copy())


def kam_cutoff(step: int, n0: float, chi: float = CHI) -> float:
    """N_n = N_0^(chi^n)."""
    return n0 ** (chi ** step)


def _melnikov_bound(modes: np.ndarray, lnorm2: np.ndarray, gamma: float, tau: float) -> np.ndarray:
    cubes = np.abs(modes.astype(float)[:, None] ** 3 - modes.astype(float)[None, :] ** 3)
    weight = np.where(cubes > 0, cubes, 1.0)
    return gamma * weight * (1.0 + lnorm2)[..., None, None] ** (-tau / 2.0)


def kam_step(state: ReducibilityState, omega: Sequence[float], gamma: float, tau: float,
             cutoff: float) -> ReducibilityState:
    """One reducibility step on the window |l| <= N, |j - k| <= N."""
    omega = np.asarray(omega, dtype=float)
    rem = state.remainder
    nu, m, modes = rem.nu, rem.m, state.modes
    axes = tuple(range(nu))
    spectrum = np.fft.fftn(rem.values, axes=axes) / m ** nu
    freqs = _angle_frequencies(nu, m)
    wl = freqs @ omega
    lnorm2 = np.sum(freqs ** 2, axis=-1).astype(float)
    linf = np.max(np.abs(freqs), axis=-1)
    jdiff = np.abs(modes[:, None] - modes[None, :])
    window = (linf <= cutoff)[..., None, None] & (jdiff <= cutoff)[None, :, :]
    zero = (0,) * nu
    window[zero] &= ~np.eye(len(modes), dtype=bool)
    denom = 1j * wl[..., None, None] + state.mu[:, None] - state.mu[None, :]
    bound = _melnikov_bound(modes, lnorm2, gamma, tau)
    bad = window & (np.abs(denom) < bound)
    if np.any(bad):
        witnesses = []
        for pos in zip(*np.nonzero(bad)):
            pos = tuple(int(v) for v in pos)
            l = tuple(int(v) for v in freqs[pos[:nu]])
            witnesses.append(ResonantWitness(l=l, j=int(modes[pos[nu]]), k=int(modes[pos[nu + 1]]),
                                             divisor=float(abs(denom[pos])), bound=float(bound[pos])))
            if len(witnesses) >= MAX_WITNESSES:
                break
        raise ExcisionError("second Melnikov condition fails in a reducibility step", witnesses,
                            stage=f"kam_step_{state.step}")
    safe = np.where(window, denom, 1.0)
    gen_spec = np.where(window, -spectrum / safe, 0.0)
    gen = np.fft.ifftn(gen_spec * m ** nu, axes=axes)
    expo = series_expm(gen)
    expo_inv = series_expm(-gen)
    full = conjugate(state.operator, expo, expo_inv, omega)
    new = initial_state(full)
    before = state.remainder_size()
    new.transform = state.transform @ expo
    new.transform_inv = expo_inv @ state.transform_inv
    new.step = state.step + 1
    new.history = state.history + [{
        "step": new.step,
        "cutoff": float(cutoff),
        "remainder_before": before,
        "remainder_after": new.remainder_size(),
        "generator": float(np.max(np.abs(gen), initial=0.0)),
        "min_divisor_ratio": float(np.min(np.abs(denom[window]) / bound[window], initial=np.inf)),
    }]
    logger.debug(f"reducibility step {new.step}: |R| {before:.3e} -> {new.remainder_size():.3e}")
    return new


def reduce_to_constant(op: OperatorGrid, omega: Sequence[float], gamma: float, tau: float,
                       max_steps: int = 8, tol: float = 1e-12, n0: Optional[float] = None,
                       chi: float = CHI, threshold: float = SMALLNESS_THRESHOLD) -> ReducibilityState:
    """Iterate kam_step until the remainder drops below tol or max_steps is reached."""
    state = initial_state(op)
    band = (op.m - 1) // 2
    n0 = max(2.0, band / 2.0) if n0 is None else n0
    smallness = state.remainder_size() / gamma
    if smallness > threshold:
        raise NumericalFailureError("remainder too large for the reducibility scheme",
                                    {"remainder_over_gamma": smallness, "threshold": threshold})
    for step in range(max_steps):
        if state.remainder_size() <= tol:
            break
        state = kam_step(state, omega, gamma, tau, min(float(band), kam_cutoff(step, n0, chi)))
    logger.info(f"reducibility: {state.step} steps, remainder {state.remainder_size():.3e}")
    return state


# ---------------------------------------------------------------------------
# Cantor membership
# ---------------------------------------------------------------------------

def melnikov_membership(omega: Sequence[float], modes: np.ndarray, mu: np.ndarray, gamma: float,
                        tau: float, band: int) -> Tuple[bool, List[ResonantWitness]]:
    """First and second Melnikov conditions over |l|_inf <= band.

    |i omega . l + mu_j| >= gamma |j|^3 <l>^-tau and, for j != k,
    |i omega . l + mu_j - mu_k| >= gamma |j^3 - k^3| <l>^-tau.
    """
    omega = np.asarray(omega, dtype=float)
    modes = np.asarray(modes)
    mu = np.asarray(mu, dtype=complex)
    nu = omega.size
    cubes = modes.astype(float) ** 3
    gap = np.abs(cubes[:, None] - cubes[None, :])
    off = ~np.eye(len(modes), dtype=bool)
    witnesses: List[ResonantWitness] = []
    for l in lattice(nu, band).reshape(-1, nu):
        weight = (1.0 + float(l @ l)) ** (-tau / 2.0)
        wl = float(l @ omega)
        first = np.abs(1j * wl + mu)
        first_bound = gamma * np.abs(cubes) * weight
        for a in np.nonzero(first < first_bound)[0]:
            witnesses.append(ResonantWitness(tuple(int(v) for v in l), int(modes[a]), int(modes[a]),
                                             float(first[a]), float(first_bound[a])))
        second = np.abs(1j * wl + mu[:, None] - mu[None, :])
        second_bound = gamma * gap * weight
        for a, c in zip(*np.nonzero(off & (second < second_bound))):
            witnesses.append(ResonantWitness(tuple(int(v) for v in l), int(modes[a]), int(modes[c]),
                                             float(second[a, c]), float(second_bound[a, c])))
        if len(witnesses) >= MAX_WITNESSES:
            break
    return not witnesses, witnesses[:MAX_WITNESSES]


# ---------------------------------------------------------------------------
# The inverse of L_omega
# ---------------------------------------------------------------------------

def diagonal_solve(g: np.ndarray, omega: Sequence[float], mu: np.ndarray) -> np.ndarray:
    """h with (D_omega + diag(mu)) h = g for grid samples g of shape (m,)*nu + (k,)."""
    nu = len(omega)
    m = g.shape[0]
    axes = tuple(range(nu))
    wl = _angle_frequencies(nu, m) @ np.asarray(omega, dtype=float)
    denom = 1j * wl[..., None] + mu
    if np.any(np.abs(denom) == 0.0):
        raise NumericalFailureError("zero divisor in the diagonal solve")
    return np.fft.ifftn(np.fft.fftn(g, axes=axes) / denom, axes=axes)


def invert_L_omega(reduction: Reduction, state: ReducibilityState, g: np.ndarray) -> np.ndarray:
    """h with L_omega h = g on grid samples, through the reduction chain and Phi_inf."""
    omega = reduction.linearized.omega
    r = reduction.chain.to_reduced(g)
    r = np.einsum("...ab,...b->...a", state.transform_inv, r)
    h = diagonal_solve(r, omega, state.mu)
    h = np.einsum("...ab,...b->...a", state.transform, h)
    return reduction.chain.from_reduced(h)


class ReducedInverse(LinearInverse):
    """L_omega^-1 from the five-stage reduction and the reducibility scheme."""

    name = "reduced"

    def __init__(self, reduction: Reduction, state: ReducibilityState, band: int):
        self.logger = logging.getLogger(__name__)
        self.reduction = reduction
        self.state = state
        self.band = band
        self.nu = reduction.op.nu
        self.m = reduction.op.m

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        g = phi_to_grid(rhs, self.nu, self.m)
        return phi_from_grid(invert_L_omega(self.reduction, self.state, g), self.nu, self.band)

    def diagnostics(self) -> Dict[str, float]:
        return {"m3": self.reduction.m3, "m1": self.reduction.m1,
                "remainder": self.state.remainder_size(), "kam_steps": self.state.step}


def reduced_factory(taylor: KTaylor, omega: Sequence[float]) -> ReducedInverse:
    """SolverFactory building the reduced inverse at the embedding of `taylor`."""
    problem = taylor.geometry.problem
    params = problem.params
    reduction = reduce_operator(linearized_from_taylor(taylor, omega), problem, check=False)
    state = reduce_to_constant(reduction.op, omega, params.gamma, params.tau)
    return ReducedInverse(reduction, state, taylor.geometry.band)


# ---------------------------------------------------------------------------
# Floquet picture
# ---------------------------------------------------------------------------

@dataclass
class FloquetFit:
    """mu_j = i(-m3 j^3 + m1 j) + r_j, least squares over the listed modes."""
    m3: float
    m1: float
    residual: np.ndarray
    modes: np.ndarray

    def weighted_residual(self) -> float:
        """sup_j |j| |r_j|."""
        return float(np.max(np.abs(self.modes) * np.abs(self.residual), initial=0.0))

    def to_dict(self) -> Dict[str, Any]:
        return {"m3": self.m3, "m1": self.m1, "sup_j_r": self.weighted_residual()}


def fit_floquet_constants(modes: np.ndarray, mu: np.ndarray) -> FloquetFit:
    modes = np.asarray(modes, dtype=float)
    design = np.stack([-modes ** 3, modes], axis=-1)
    (m3, m1), *_ = np.linalg.lstsq(design, np.asarray(mu).imag, rcond=None)
    residual = np.asarray(mu) - 1j * (design @ np.array([m3, m1]))
    return FloquetFit(float(m3), float(m1), residual, modes)


def floquet_evolve(mu: np.ndarray, v0: np.ndarray, times: np.ndarray,
                   forcing: Optional[np.ndarray] = None, omega: Optional[Sequence[float]] = None) -> np.ndarray:
    """Exact solution of v_j' + mu_j v_j = f_j(omega t), shape (len(times), k).

    forcing holds angle coefficients of shape box + (k,); the quasi-periodic
    particular solution is sum_l f_j(l) e^(i omega.l t) / (i omega.l + mu_j).
    """
    mu = np.asarray(mu, dtype=complex)
    times = np.asarray(times, dtype=float)
    v0 = np.asarray(v0, dtype=complex)
    if forcing is None:
        return np.exp(-np.outer(times, mu)) * v0
    omega = np.asarray(omega, dtype=float)
    nu = omega.size
    band = (forcing.shape[0] - 1) // 2
    wl = (lattice(nu, band) @ omega).reshape(-1)
    f = forcing.reshape(-1, mu.size)
    denom = 1j * wl[:, None] + mu[None, :]
    if np.any(np.abs(denom) == 0.0):
        raise NumericalFailureError("resonant forcing in the Floquet solution")
    amp = f / denom
    particular = np.exp(1j * np.outer(times, wl)) @ amp
    start = np.sum(amp, axis=0)
    return np.exp(-np.outer(times, mu)) * (v0 - start) + particular


def stability_report(state: ReducibilityState, fit: Optional[FloquetFit] = None) -> Dict[str, Any]:
    """Largest real part of mu (zero for a linearly stable torus) and the fitted dispersion."""
    fit = fit or fit_floquet_constants(state.modes, state.mu)
    real = float(np.max(np.abs(state.mu.real), initial=0.0))
    return {
        "max_real_part": real,
        "linearly_stable": real < 1e-8 * max(1.0, float(np.max(np.abs(state.mu)))),
        "remainder": state.remainder_size(),
        "decay_norm_s0": state.remainder.to_decay((state.remainder.m - 1) // 2,
                                                  int(np.max(np.abs(state.modes)))).decay_norm(
            s0_for(state.remainder.nu)),
        **fit.to_dict(),
    }
