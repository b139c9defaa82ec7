"""
Nash-Moser iteration for the embedded invariant torus.

    U_(n+1) = U_n - Pi_n T0(U_n) Pi_n F(U_n)

with Pi_n the angle smoothing at scale N_n and T0 the approximate inverse
rebuilt at every step. The frequency is kept in the shrinking Cantor sets
G_n; an exclusion ends the run with status EXCLUDED and its witnesses.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .approx_inverse import ApproximateInverse, direct_factory
from .config import C1_STANDIN, CHI, s0_for
from .errors import ConfigValidationError, ExcisionError, NumericalFailureError, ResonantWitness, RunStatus
from .fourier import diophantine_violations, lattice
from .reducibility import ReducedInverse, melnikov_membership, reduced_factory
from .reduction import i_dispersion, surviving_coefficient
from .torus import F_operator, Params, TorusEmbedding, TorusProblem, embedding_to_dict, residual_norm, \
    trivial_embedding

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Constants and scales
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NMConstants:
    tau: float
    rho: float
    mu: float
    mu1: float
    alpha: float
    alpha1: float
    kappa: float
    beta1: float
    n0: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def rho_upper_bound(a: float, c1: float = C1_STANDIN) -> float:
    return (1.0 - 3.0 * a) / (c1 * (2.0 + 3.0 * a))


def nm_constants(params: Params, rho: Optional[float] = None, c1: float = C1_STANDIN) -> NMConstants:
    """Exponents of the scheme; rho defaults to half its admissible bound."""
    bound = rho_upper_bound(params.a, c1)
    rho = 0.5 * bound if rho is None else rho
    if not 0.0 < rho < bound:
        raise ConfigValidationError("run.rho", f"rho must lie in (0, {bound:.6g})")
    mu = params.tau + 2.0
    mu1 = 3.0 * mu + 9.0
    alpha = 3.0 * mu1 + 1.0
    return NMConstants(
        tau=params.tau,
        rho=rho,
        mu=mu,
        mu1=mu1,
        alpha=alpha,
        alpha1=(alpha - 3.0 * mu) / 2.0,
        kappa=3.0 * (mu1 + 1.0 / rho) + 1.0,
        beta1=6.0 * mu1 + 3.0 / rho + 3.0,
        n0=(params.eps ** 4 * params.gamma ** -3) ** rho,
    )


def scale_sequence(constants: NMConstants, n_phi: int, steps: int, chi: float = CHI, nu: int = 1) -> List[float]:
    """N_n = N_0^(chi^n), floored at n_phi / 2.

    The cap is the largest <l> of the angle box |l|_inf <= n_phi, so the last
    scales keep every angle mode, corners included.
    """
    base = max(constants.n0, n_phi / 2.0)
    cap = math.sqrt(1.0 + nu * n_phi ** 2)
    return [min(cap, base ** (chi ** n)) for n in range(steps + 1)]


def gamma_n(gamma: float, n: int) -> float:
    return gamma * (1.0 + 2.0 ** -n)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass
class NewtonStepRecord:
    step: int
    scale: float
    residual: float
    residual_high: float
    zeta: float
    gamma_n: float
    cantor: str
    cond_M1: float = 0.0
    solver: str = ""
    margin: float = math.inf

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["margin"] = None if not math.isfinite(self.margin) else self.margin
        return data


@dataclass
class NMResult:
    embedding: TorusEmbedding
    omega: np.ndarray
    xi: np.ndarray
    status: RunStatus
    constants: NMConstants
    history: List[NewtonStepRecord] = field(default_factory=list)
    witnesses: List[ResonantWitness] = field(default_factory=list)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == RunStatus.CONVERGED

    @property
    def residuals(self) -> List[float]:
        return [rec.residual for rec in self.history]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "message": self.message,
            "omega": self.omega.tolist(),
            "xi": self.xi.tolist(),
            "constants": self.constants.to_dict(),
            "history": [rec.to_dict() for rec in self.history],
            "witnesses": [w.to_dict() for w in self.witnesses],
            "convergence_orders": convergence_orders(self.residuals),
        }

    def embedding_dict(self) -> Dict[str, Any]:
        return embedding_to_dict(self.embedding, self.omega, self.xi)


def convergence_orders(residuals: Sequence[float]) -> List[float]:
    """Empirical orders log(r_(n+1) / r_n) / log(r_n / r_(n-1))."""
    orders = []
    for a, b, c in zip(residuals, residuals[1:], residuals[2:]):
        if min(a, b, c) <= 0 or a == b:
            continue
        orders.append(math.log(c / b) / math.log(b / a))
    return orders


# ---------------------------------------------------------------------------
# Cantor checks
# ---------------------------------------------------------------------------

def analytic_eigenvalues(problem: TorusProblem) -> np.ndarray:
    """mu_j = i(-j^3 + eps^2 c(xi) j) on the normal modes."""
    c = surviving_coefficient(problem.sites, problem.model.sign, problem.xi, problem.model.lambda_variant)
    return i_dispersion(problem.normal, 1.0, problem.params.eps ** 2 * c)


def cantor_check(problem: TorusProblem, omega: Sequence[float], step: int,
                 eigenvalues: Optional[np.ndarray] = None) -> float:
    """Membership in G_step; returns the diophantine margin, raises ExcisionError otherwise."""
    params = problem.params
    g = gamma_n(params.gamma, step)
    omega = np.asarray(omega, dtype=float)
    bad = diophantine_violations(omega, params.n_phi, g, params.tau)
    if bad:
        raise ExcisionError("omega leaves the diophantine set", bad, stage=f"G_{step}")
    margin = _diophantine_margin(omega, params.n_phi, g, params.tau)
    if step == 0:
        return margin
    mu = analytic_eigenvalues(problem) if eigenvalues is None else eigenvalues
    ok, witnesses = melnikov_membership(omega, problem.normal, mu, g, params.tau, params.n_phi)
    if not ok:
        raise ExcisionError("omega leaves the Melnikov set", witnesses, stage=f"G_{step}")
    return margin


def _diophantine_margin(omega: np.ndarray, band: int, gamma: float, tau: float) -> float:
    ls = lattice(omega.size, band).reshape(-1, omega.size)
    ls = ls[np.any(ls != 0, axis=-1)]
    if not len(ls):
        return math.inf
    bound = gamma * (1.0 + np.sum(ls ** 2, axis=-1)) ** (-tau / 2.0)
    return float(np.min(np.abs(ls @ omega) / bound))


# ---------------------------------------------------------------------------
# The iteration
# ---------------------------------------------------------------------------

def nm_iterate(problem: TorusProblem, omega: Sequence[float], max_steps: int = 6, solver: str = "direct",
               tol: float = 1e-11, initial: Optional[TorusEmbedding] = None, rho: Optional[float] = None,
               eigen_source: str = "analytic") -> NMResult:
    """Run the scheme from `initial` (the trivial torus by default)."""
    omega = np.asarray(omega, dtype=float)
    params = problem.params
    s0 = s0_for(problem.nu)
    constants = nm_constants(params, rho)
    scales = scale_sequence(constants, params.n_phi, max_steps, nu=problem.nu)
    factory = reduced_factory if solver == "reduced" else direct_factory
    emb = initial if initial is not None else trivial_embedding(problem)
    history: List[NewtonStepRecord] = []
    eigenvalues = None
    increases = 0
    previous = math.inf
    logger.info(f"Nash-Moser start: omega {omega}, eps {params.eps}, solver {solver}, N0 {constants.n0:.4g}")

    def finish(status: RunStatus, message: str = "", witnesses=None) -> NMResult:
        logger.info(f"Nash-Moser end: {status.value} after {len(history)} record(s) {message}")
        return NMResult(emb, omega, problem.xi.copy(), status, constants, history, list(witnesses or []), message)

    for n in range(max_steps + 1):
        try:
            margin = cantor_check(problem, omega, n, eigenvalues if eigen_source == "final" else None)
        except ExcisionError as exc:
            return finish(RunStatus.EXCLUDED, f"{exc.stage}: {exc}", exc.witnesses)
        residual = F_operator(problem, emb, omega)
        r = residual_norm(residual, s0)
        record = NewtonStepRecord(
            step=n, scale=scales[n], residual=r, residual_high=residual_norm(residual, s0 + constants.mu),
            zeta=float(np.max(np.abs(emb.zeta), initial=0.0)), gamma_n=gamma_n(params.gamma, n),
            cantor="G_0" if n == 0 else f"G_{n}", margin=margin, solver=solver)
        history.append(record)
        logger.info(f"step {n}: ||F||_s0 = {r:.3e}, N_n = {scales[n]:.3g}")
        if r <= tol:
            return finish(RunStatus.CONVERGED)
        increases = increases + 1 if r > previous else 0
        if increases >= 2:
            raise NumericalFailureError("Nash-Moser residual grew twice in a row",
                                        {"history": [rec.to_dict() for rec in history]})
        previous = r
        if n == max_steps:
            break
        try:
            inverse = ApproximateInverse(problem, emb, omega, factory)
            correction = inverse.apply(residual.smooth(scales[n]))
        except ExcisionError as exc:
            return finish(RunStatus.EXCLUDED, f"{exc.stage}: {exc}", exc.witnesses)
        record.cond_M1 = inverse.last_cond
        if isinstance(inverse.linv, ReducedInverse):
            eigenvalues = inverse.linv.state.mu
        emb = (emb - correction).smooth(scales[n])
    return finish(RunStatus.MAX_STEPS)


def cantor_trace(result: NMResult) -> List[Dict[str, Any]]:
    """Per step: the Cantor set checked, gamma_n and the diophantine margin."""
    trace = [{"step": rec.step, "set": rec.cantor, "gamma_n": rec.gamma_n,
              "margin": rec.to_dict()["margin"], "passed": True} for rec in result.history]
    if result.status == RunStatus.EXCLUDED:
        trace.append({"step": len(result.history), "set": result.message.split(":")[0], "passed": False,
                      "witnesses": [w.to_dict() for w in result.witnesses]})
    return trace
