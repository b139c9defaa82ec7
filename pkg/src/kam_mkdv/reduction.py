"""
Reduction of the linearized normal operator to constant coefficients.

The operator L = D_omega + M(phi) acts on coefficient vectors over the normal
modes and M is held on the angle collocation grid. Five stages conjugate it:

    1. space reparametrization     top coefficient independent of x
    2. time reparametrization      top coefficient constant m3
    3. translation                 x-average of the d_x coefficient constant m1
    4. linear Birkhoff step        O(eps^2) terms reduced to c(xi) d_x
    5. descent                     d_x coefficient constant

Every stage keeps the maps between the solutions of consecutive operators,
so a solve of the final operator lifts back to the original one.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .approx_inverse import ChartGeometry, KTaylor, isotropic_correction, k_taylor
from .birkhoff import transform_coeffs
from .config import TRANSPORT_TOL, s0_for
from .errors import NumericalFailureError, StageStatus
from .fourier import d_omega_inv_coeffs, lattice, mode_range, phi_from_grid, phi_points, phi_to_grid, \
    x_from_grid, x_to_grid
from .hamiltonian import hessian_coefficients
from .operators import OperatorGrid, _angle_frequencies, grid_d_omega, series_expm
from .sites import SiteSet
from .torus import TorusEmbedding, TorusProblem

logger = logging.getLogger(__name__)

# smallest admissible |omega . l + m3 (j'^3 - j^3)| off the resonant set of the linear Birkhoff step
BNF_DIVISOR_FLOOR = 0.5

# target x-variation of the d_x coefficient after the descent
DESCENT_TOL = 1e-10
DESCENT_MAX_PASSES = 40


# ---------------------------------------------------------------------------
# The linearized operator
# ---------------------------------------------------------------------------

@dataclass
class LinearizedOperator:
    """L_omega = D_omega + M with the coefficients a1, a0 of the underlying Hessian.

    a1 and a0 are x-coefficients per flattened grid point, shape (m^nu, 2K + 1).
    """
    omega: np.ndarray
    op: OperatorGrid
    a1: np.ndarray
    a0: np.ndarray
    band: int
    exclude: int

    def apply(self, h: np.ndarray) -> np.ndarray:
        return apply_grid_operator(self.op, self.omega, h)


def apply_grid_operator(op: OperatorGrid, omega: Sequence[float], h: np.ndarray) -> np.ndarray:
    """(D_omega + M) h on grid samples h of shape (m,)*nu + (k,)."""
    return grid_d_omega(h, op.nu, omega) + op.apply(h)


def assemble_L_omega(problem: TorusProblem, emb: TorusEmbedding, omega: Sequence[float]) -> LinearizedOperator:
    """L_omega at the isotropic correction of emb."""
    corrected, _ = isotropic_correction(problem, emb)
    geometry = ChartGeometry(problem, corrected)
    return linearized_from_taylor(k_taylor(problem, geometry, with_value=False), omega)


def linearized_from_taylor(taylor: KTaylor, omega: Sequence[float]) -> LinearizedOperator:
    geometry = taylor.geometry
    problem = geometry.problem
    state = problem.sample(geometry.embedding, geometry.m)
    n = problem.params.n_x
    span = 2 * n
    batch = state.theta.shape[0]
    if problem.mode == "N":
        a1 = np.zeros((batch, 2 * span + 1), dtype=complex)
        a1[:, span] = 1.0
        a0 = 3.0 * problem.model.sign * problem.params.eps ** 2 * problem._v_squared(state.theta, span)
    else:
        u = problem.embed(state.theta, state.y, state.z)
        w, _ = transform_coeffs(problem.generator, u, 1)
        a1, a0 = hessian_coefficients(problem.model, w, span)
    exclude = problem.sites.birkhoff_cutoff() if problem.mode == "H" else problem.sites.max_site
    return LinearizedOperator(np.asarray(omega, dtype=float), taylor.operator(), a1, a0,
                              geometry.band, exclude)


# ---------------------------------------------------------------------------
# Symbol fits
# ---------------------------------------------------------------------------

@dataclass
class SymbolFit:
    """M[j, j'] ~ sum_p c_p(phi)_(j - j') (i j')^p on mid-range rows.

    coeffs has shape (m^nu, degree + 1, 2D + 1): x-coefficients of c_p per grid point.
    """
    coeffs: np.ndarray
    offsets: int
    relative_residual: float

    def coefficient(self, p: int) -> np.ndarray:
        return self.coeffs[:, p, :]

    def x_average(self, p: int) -> np.ndarray:
        return self.coeffs[:, p, self.offsets].real

    def x_variation(self, p: int) -> float:
        """Largest non-constant x-coefficient of c_p."""
        c = self.coeffs[:, p, :].copy()
        c[:, self.offsets] = 0.0
        return float(np.max(np.abs(c), initial=0.0))


def fit_symbol(op: OperatorGrid, degree: int = 3, offsets: Optional[int] = None,
               exclude: int = 0, lower: int = 2) -> SymbolFit:
    """Least-squares fit of the differential symbol of op, row offset by row offset.

    Rows are the j' with N/4 <= |j'| <= N/2 and |j|, |j'| > exclude, where
    the truncation at the band edge does not reach. The powers (i j')^-1 ..
    (i j')^-lower are fitted as well and dropped, so smoothing terms do not
    leak into the kept coefficients.
    """
    modes = op.modes
    k = len(modes)
    n = int(np.max(np.abs(modes)))
    offsets = max(1, n // 4) if offsets is None else offsets
    lo = max(n // 4, exclude + 1)
    hi = min(n, max(n // 2, lo + 2 * degree))
    values = op.values.reshape(-1, k, k)
    lookup = {int(j): a for a, j in enumerate(modes)}
    out = np.zeros((values.shape[0], degree + 1, 2 * offsets + 1), dtype=complex)
    powers = np.arange(-lower, degree + 1)
    kept = powers >= 0
    worst = 0.0
    for d in range(-offsets, offsets + 1):
        rows = [(lookup[int(jp) + d], lookup[int(jp)], int(jp)) for jp in modes
                if lo <= abs(jp) <= hi and (int(jp) + d) in lookup and abs(int(jp) + d) > exclude]
        if len(rows) < powers.size:
            continue
        a_idx = [r[0] for r in rows]
        b_idx = [r[1] for r in rows]
        jp = np.array([r[2] for r in rows], dtype=float)
        scale = float(np.max(np.abs(jp)))
        design = (1j * jp[:, None] / scale) ** powers
        target = values[:, a_idx, b_idx].T
        sol, *_ = np.linalg.lstsq(design, target, rcond=None)
        fitted = design @ sol
        size = max(float(np.max(np.abs(target), initial=0.0)), 1e-300)
        worst = max(worst, float(np.max(np.abs(fitted - target), initial=0.0)) / size)
        out[:, :, d + offsets] = (sol[kept] / scale ** powers[kept][:, None]).T
    return SymbolFit(out, offsets, worst)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

@dataclass
class ReductionStage:
    """One conjugation step; maps solutions of the reduced operator back and forth."""
    name: str
    op: OperatorGrid
    to_reduced: Callable[[np.ndarray], np.ndarray]
    from_reduced: Callable[[np.ndarray], np.ndarray]
    status: StageStatus = StageStatus.SUCCESS
    info: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"stage": self.name, "status": self.status.value, **self.info}


def _apply_pointwise(mat: np.ndarray, h: np.ndarray) -> np.ndarray:
    return np.einsum("...ab,...b->...a", mat, h)


def conjugate(op: OperatorGrid, phi: np.ndarray, phi_inv: np.ndarray, omega: Sequence[float]) -> OperatorGrid:
    """M' with Phi^-1 (D_omega + M) Phi = D_omega + M' for a pointwise Phi(phi)."""
    d_phi = grid_d_omega(phi, op.nu, omega)
    return op.with_values(phi_inv @ (op.values @ phi + d_phi))


def pointwise_stage(name: str, op: OperatorGrid, phi: np.ndarray, phi_inv: np.ndarray,
                    omega: Sequence[float], info: Dict[str, Any]) -> ReductionStage:
    return ReductionStage(
        name=name,
        op=conjugate(op, phi, phi_inv, omega),
        to_reduced=lambda g: _apply_pointwise(phi_inv, g),
        from_reduced=lambda h: _apply_pointwise(phi, h),
        info=info,
    )


def identity_stage(name: str, op: OperatorGrid, info: Dict[str, Any]) -> ReductionStage:
    return ReductionStage(name, op, lambda g: g, lambda h: h, StageStatus.SKIPPED, info)


def _grid_shape(op: OperatorGrid) -> Tuple[int, ...]:
    return (op.m,) * op.nu


def _center(nu: int, band: int) -> Tuple[int, ...]:
    return (band,) * nu


# -- step 1 -------------------------------------------------------------------------

def top_coefficient(a1: np.ndarray, m_x: int) -> Tuple[np.ndarray, np.ndarray]:
    """(b3, a1^-1/3 on the x-grid) with b3 = (mean_x a1^-1/3)^-3."""
    values = x_to_grid(a1, m_x).real
    if np.min(values) <= 0:
        raise NumericalFailureError("top coefficient a1 is not positive", {"min_a1": float(np.min(values))})
    inv_cbrt = values ** (-1.0 / 3.0)
    b3 = np.mean(inv_cbrt, axis=-1) ** -3
    return b3, inv_cbrt


def step1_space(lin: LinearizedOperator, op: OperatorGrid) -> Tuple[ReductionStage, np.ndarray]:
    """Conjugate by the time-1 flow of d_tau u = d_x(b(tau) u), b = beta / (1 + tau beta_x)."""
    span = (lin.a1.shape[-1] - 1) // 2
    m_x = 4 * span + 1
    b3, inv_cbrt = top_coefficient(lin.a1, m_x)
    rhs = b3[:, None] ** (1.0 / 3.0) * inv_cbrt - 1.0
    j = mode_range(span)
    bx_c = x_from_grid(rhs, span)
    bx_c[:, span] = 0.0
    inv_j = np.zeros(j.shape, dtype=complex)
    inv_j[j != 0] = 1.0 / (1j * j[j != 0])
    beta_c = bx_c * inv_j
    beta = x_to_grid(beta_c, m_x).real
    beta_x = x_to_grid(bx_c, m_x).real
    w1 = float(np.max(np.abs(beta), initial=0.0) + np.max(np.abs(beta_x), initial=0.0))
    info = {"beta_w1inf": w1, "b3_min": float(np.min(b3)), "b3_max": float(np.max(b3))}
    b3_grid = b3.reshape(_grid_shape(op))
    if w1 >= 0.5:
        raise NumericalFailureError("space reparametrization is not a small diffeomorphism", info)
    if np.max(np.abs(beta_c), initial=0.0) < 1e-14:
        return identity_stage("space", op, info), b3_grid

    modes = op.modes
    k = len(modes)
    batch = beta.shape[0]
    diff = modes[:, None] - modes[None, :]
    inside = np.abs(diff) <= span
    idx = np.clip(diff + span, 0, 2 * span)
    ij = (1j * modes)[:, None]

    def generator(tau: float) -> np.ndarray:
        b = x_from_grid(beta / (1.0 + tau * beta_x), span)
        return ij * np.where(inside, b[:, idx], 0.0)

    def rhs_flow(tau, state):
        phi = state.reshape(batch, k, k)
        return (generator(tau) @ phi).reshape(-1)

    start = np.broadcast_to(np.eye(k, dtype=complex), (batch, k, k)).reshape(-1)
    sol = solve_ivp(rhs_flow, (0.0, 1.0), start, method="DOP853", rtol=TRANSPORT_TOL, atol=TRANSPORT_TOL)
    if not sol.success:
        raise NumericalFailureError("transport flow integration failed", {"message": sol.message})
    phi = sol.y[:, -1].reshape(_grid_shape(op) + (k, k))
    phi_inv = np.linalg.inv(phi)
    info["flow_steps"] = int(sol.t.size)
    return pointwise_stage("space", op, phi, phi_inv, lin.omega, info), b3_grid


# -- step 2 -------------------------------------------------------------------------

def interpolate_grid(values: np.ndarray, nu: int, points: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Trigonometric interpolation of grid samples at arbitrary angle points (P, nu)."""
    m = values.shape[0]
    axes = tuple(range(nu))
    rest = values.shape[nu:]
    spectrum = (np.fft.fftn(values, axes=axes) / m ** nu).reshape(m ** nu, -1)
    freqs = _angle_frequencies(nu, m).reshape(-1, nu)
    out = np.empty((points.shape[0], spectrum.shape[1]), dtype=complex)
    for s in range(0, points.shape[0], chunk):
        phases = np.exp(1j * points[s:s + chunk] @ freqs.T)
        out[s:s + chunk] = phases @ spectrum
    return out.reshape((points.shape[0],) + rest)


def _eval_angle(coeffs: np.ndarray, nu: int, points: np.ndarray) -> np.ndarray:
    band = (coeffs.shape[0] - 1) // 2
    lat = lattice(nu, band).reshape(-1, nu)
    return (np.exp(1j * points @ lat.T) @ coeffs.reshape(-1)).real


def inverse_shift(alpha_c: np.ndarray, omega: np.ndarray, points: np.ndarray,
                  tol: float = 1e-14, max_iter: int = 500) -> np.ndarray:
    """alpha~ with alpha~(t) = -alpha(t + omega alpha~(t)) at every point, by fixed-point iteration."""
    nu = omega.size
    at = np.zeros(points.shape[0])
    for _ in range(max_iter):
        new = -_eval_angle(alpha_c, nu, points + omega[None, :] * at[:, None])
        if np.max(np.abs(new - at), initial=0.0) < tol:
            return new
        at = new
    raise NumericalFailureError("inverse time reparametrization did not converge",
                                {"increment": float(np.max(np.abs(new - at)))})


def step2_time(lin: LinearizedOperator, op: OperatorGrid, b3: np.ndarray) -> Tuple[ReductionStage, float]:
    """phi -> phi + omega alpha(phi) with m3 D_omega alpha = b3 - m3 on the whole grid band."""
    nu, omega = op.nu, lin.omega
    band = (op.m - 1) // 2
    m3 = float(np.mean(b3))
    rhs = phi_from_grid(b3 - m3, nu, band)
    rhs[_center(nu, band)] = 0.0
    alpha_c = d_omega_inv_coeffs(rhs, omega, band) / m3
    info = {"m3": m3, "alpha_max": float(np.max(np.abs(alpha_c), initial=0.0))}
    if info["alpha_max"] < 1e-15:
        return identity_stage("time", op, info), m3
    m = op.m
    points = phi_points(nu, m).reshape(-1, nu)
    at = inverse_shift(alpha_c, omega, points)
    shifted = points + omega[None, :] * at[:, None]
    forward = points + omega[None, :] * _eval_angle(alpha_c, nu, points)[:, None]
    dalpha_c = alpha_c * 1j * (lattice(nu, band) @ omega)
    rho = 1.0 + _eval_angle(dalpha_c, nu, shifted)
    if np.min(rho) <= 0:
        raise NumericalFailureError("time reparametrization is not monotone", {"min_rho": float(np.min(rho))})
    shape = _grid_shape(op)
    k = op.size
    moved = interpolate_grid(op.values, nu, shifted).reshape(shape + (k, k))
    rho_grid = rho.reshape(shape)
    new_op = op.with_values(moved / rho_grid[..., None, None])
    info["rho_min"] = float(np.min(rho))

    def to_reduced(g: np.ndarray) -> np.ndarray:
        return interpolate_grid(g, nu, shifted).reshape(g.shape) / rho_grid[..., None]

    def from_reduced(h: np.ndarray) -> np.ndarray:
        return interpolate_grid(h, nu, forward).reshape(h.shape)

    return ReductionStage("time", new_op, to_reduced, from_reduced, info=info), m3


# -- step 3 -------------------------------------------------------------------------

def step3_translate(lin: LinearizedOperator, op: OperatorGrid) -> Tuple[ReductionStage, float]:
    """x -> x + p(phi) with D_omega p = m1 - <c1>_x on the whole grid band."""
    nu = op.nu
    band = (op.m - 1) // 2
    fit = fit_symbol(op, exclude=lin.exclude)
    c1 = fit.x_average(1)
    m1 = float(np.mean(c1))
    rhs = phi_from_grid((m1 - c1).reshape(_grid_shape(op)), nu, band)
    rhs[_center(nu, band)] = 0.0
    p_c = d_omega_inv_coeffs(rhs, lin.omega, band)
    info = {"m1": m1, "fit_residual": fit.relative_residual,
            "p_max": float(np.max(np.abs(p_c), initial=0.0))}
    if info["p_max"] < 1e-15:
        return identity_stage("translation", op, info), m1
    p = phi_to_grid(p_c, nu, op.m).real
    phase = np.exp(1j * p[..., None] * op.modes)
    eye = np.eye(op.size)
    phi = phase[..., :, None] * eye
    phi_inv = np.conj(phase)[..., :, None] * eye
    return pointwise_stage("translation", op, phi, phi_inv, lin.omega, info), m1


# -- step 4 -------------------------------------------------------------------------

def vbar_squared(sites: SiteSet, xi: Sequence[float], band_l: int = 2,
                 lambda_variant: bool = False) -> np.ndarray:
    """(l, d) coefficients of vbar^2 for vbar = sum_j sqrt(xi_j) e^(i l(j) . phi) e^(i j x).

    Shape (2 band_l + 1,)*nu + (4 max S + 1,); the x-average is removed for the lambda-variant.
    """
    nu = sites.nu
    span = 2 * sites.max_site
    out = np.zeros((2 * band_l + 1,) * nu + (2 * span + 1,))
    xi = np.asarray(xi, dtype=float)
    for j1 in sites.full:
        for j2 in sites.full:
            l = sites.ell(j1) + sites.ell(j2)
            if np.max(np.abs(l)) > band_l:
                continue
            weight = np.sqrt(xi[sites.index(j1)] * xi[sites.index(j2)])
            out[tuple(l + band_l) + (j1 + j2 + span,)] += weight
    if lambda_variant:
        out[..., span] = 0.0
    return out


def surviving_coefficient(sites: SiteSet, sign: int, xi: Sequence[float], lambda_variant: bool = False) -> float:
    """c(xi) in the diagonal part i j c(xi) left by the linear Birkhoff step."""
    if lambda_variant:
        return 0.0
    return 6.0 * sign * float(np.sum(xi))


def bnf_block(sites: SiteSet, sign: int, xi: Sequence[float], modes: np.ndarray,
              lambda_variant: bool = False, band_l: int = 2) -> np.ndarray:
    """B_j^j'(l) = 3 sign (i j) (vbar^2)(l, j - j'), shape (2 band_l + 1,)*nu + (k, k)."""
    v2 = vbar_squared(sites, xi, band_l, lambda_variant)
    span = (v2.shape[-1] - 1) // 2
    diff = modes[:, None] - modes[None, :]
    inside = np.abs(diff) <= span
    idx = np.clip(diff + span, 0, 2 * span)
    return 3.0 * sign * (1j * modes)[:, None] * np.where(inside, v2[..., idx], 0.0)


def linear_bnf_resonances(sites: SiteSet, modes: np.ndarray, band_l: int = 2) -> List[Tuple[Tuple[int, ...], int, int]]:
    """Supported entries of B on the resonant set jbar^3 . l + j'^3 - j^3 = 0 other than l = 0, j = j'.

    Exact integer enumeration; xi = 1 only fixes the support.
    """
    ones = np.ones(sites.nu)
    block = bnf_block(sites, 1, ones, modes, band_l=band_l)
    wbar = np.array(sites.plus, dtype=np.int64) ** 3
    lat = lattice(sites.nu, band_l)
    cubes = modes.astype(np.int64) ** 3
    found = []
    for pos in np.ndindex(lat.shape[:-1]):
        l = lat[pos]
        res = int(wbar @ l) + cubes[None, :] - cubes[:, None]
        hit = (res == 0) & (np.abs(block[pos]) > 0)
        for a, c in zip(*np.nonzero(hit)):
            if np.any(l) or a != c:
                found.append((tuple(int(v) for v in l), int(modes[a]), int(modes[c])))
    return found


def step4_linear_bnf(lin: LinearizedOperator, op: OperatorGrid, problem: TorusProblem,
                     m3: float, band_l: int = 2) -> ReductionStage:
    """Phi2 = exp(eps^2 A) with D_omega A + [m3 d_x^3, A] = -B off the resonant set."""
    sites, sign = problem.sites, problem.model.sign
    nu, modes, omega = op.nu, op.modes, lin.omega
    eps = problem.params.eps
    block = bnf_block(sites, sign, problem.xi, modes, problem.model.lambda_variant, band_l)
    lat = lattice(nu, band_l)
    wl = lat @ omega
    wbar_l = lat @ (np.array(sites.plus, dtype=np.int64) ** 3)
    cubes = modes.astype(np.int64) ** 3
    resonant = (wbar_l[..., None, None] + cubes[None, :] - cubes[:, None]) == 0
    denom = wl[..., None, None] + m3 * (cubes[None, :] - cubes[:, None]).astype(float)
    active = ~resonant & (np.abs(block) > 0)
    info: Dict[str, Any] = {"c_xi": surviving_coefficient(sites, sign, problem.xi, problem.model.lambda_variant)}
    if np.any(active):
        smallest = float(np.min(np.abs(denom[active])))
        info["min_divisor"] = smallest
        if smallest < BNF_DIVISOR_FLOOR:
            raise NumericalFailureError("linear Birkhoff step has a divisor below 1/2; reduce eps", info)
    safe = np.where(active, denom, 1.0)
    gen = np.where(active, -block / (1j * safe), 0.0)
    if not np.any(gen):
        return identity_stage("linear_bnf", op, info)
    gen_grid = phi_to_grid(gen, nu, op.m) * eps ** 2
    phi = series_expm(gen_grid)
    phi_inv = series_expm(-gen_grid)
    info["generator_max"] = float(np.max(np.abs(gen_grid)))
    return pointwise_stage("linear_bnf", op, phi, phi_inv, omega, info)


# -- step 5 -------------------------------------------------------------------------

def _descent_generator(op: OperatorGrid, fit: SymbolFit, m3: float) -> Optional[np.ndarray]:
    """w d_x^-1 on the grid with 3 m3 w_x = -pi_0 q; None when q has no x-variation."""
    q = fit.coefficient(1)
    d = fit.offsets
    shifts = mode_range(d)
    w = np.zeros_like(q)
    nz = shifts != 0
    w[:, nz] = -q[:, nz] / (3.0 * m3 * 1j * shifts[nz])
    if np.max(np.abs(w), initial=0.0) < 1e-15:
        return None
    modes = op.modes
    diff = modes[:, None] - modes[None, :]
    inside = np.abs(diff) <= d
    idx = np.clip(diff + d, 0, 2 * d)
    gen = np.where(inside, w[:, idx], 0.0) / (1j * modes)[None, None, :]
    return gen.reshape(_grid_shape(op) + gen.shape[1:])


def step5_descent(lin: LinearizedOperator, op: OperatorGrid, m3: float) -> Tuple[ReductionStage, float]:
    """S = exp(w_1 d_x^-1) ... exp(w_n d_x^-1), each pass removing the x-variation of q.

    One pass leaves the lower-order terms of the conjugation in the fitted
    d_x coefficient; passes repeat on the conjugated operator until that
    variation is below DESCENT_TOL or DESCENT_MAX_PASSES is reached.
    """
    fit = fit_symbol(op, exclude=lin.exclude)
    info: Dict[str, Any] = {"q_variation_initial": fit.x_variation(1), "variation_tol": DESCENT_TOL}
    current, phi, phi_inv = op, None, None
    passes = 0
    while fit.x_variation(1) > DESCENT_TOL and passes < DESCENT_MAX_PASSES:
        gen = _descent_generator(current, fit, m3)
        if gen is None:
            break
        step, step_inv = series_expm(gen), series_expm(-gen)
        current = conjugate(current, step, step_inv, lin.omega)
        phi = step if phi is None else phi @ step
        phi_inv = step_inv if phi_inv is None else step_inv @ phi_inv
        passes += 1
        fit = fit_symbol(current, exclude=lin.exclude)
    m1 = float(np.mean(fit.x_average(1)))
    info.update({"m1": m1, "passes": passes, "q_variation": fit.x_variation(1),
                 "fit_residual": fit.relative_residual})
    if phi is None:
        return identity_stage("descent", op, info), m1
    status = StageStatus.SUCCESS
    if info["q_variation"] > DESCENT_TOL:
        status = StageStatus.WARNING
        logger.warning(f"descent stopped after {passes} passes with d_x variation {info['q_variation']:.3e}")
    stage = ReductionStage(
        name="descent",
        op=current,
        to_reduced=lambda g: _apply_pointwise(phi_inv, g),
        from_reduced=lambda h: _apply_pointwise(phi, h),
        status=status,
        info=info,
    )
    return stage, m1


# ---------------------------------------------------------------------------
# Chain
# ---------------------------------------------------------------------------

class TransformChain:
    """Composition of the reduction stages."""

    def __init__(self, stages: Sequence[ReductionStage]):
        self.stages = list(stages)

    def to_reduced(self, g: np.ndarray) -> np.ndarray:
        for stage in self.stages:
            g = stage.to_reduced(g)
        return g

    def from_reduced(self, h: np.ndarray) -> np.ndarray:
        for stage in reversed(self.stages):
            h = stage.from_reduced(h)
        return h


def random_test_field(op: OperatorGrid, seed: int = 0, band: int = 2) -> np.ndarray:
    """Smooth real random field on the grid: angle band `band`, decaying in j."""
    rng = np.random.default_rng(seed)
    nu, k = op.nu, op.size
    coeffs = rng.normal(size=(2 * band + 1,) * nu + (k,)) + 1j * rng.normal(size=(2 * band + 1,) * nu + (k,))
    coeffs *= (1.0 + np.abs(op.modes)) ** -4.0
    neg = op.neg_index()
    coeffs = 0.5 * (coeffs + np.conj(coeffs[(slice(None, None, -1),) * nu][..., neg]))
    return phi_to_grid(coeffs, nu, op.m)


def conjugation_residual(prev: OperatorGrid, stage: ReductionStage, omega: Sequence[float], seed: int = 0) -> float:
    """||to_reduced(L_prev from_reduced h) - L_next h|| / ||L_next h|| on a smooth test field."""
    h = random_test_field(stage.op, seed)
    lhs = stage.to_reduced(apply_grid_operator(prev, omega, stage.from_reduced(h)))
    rhs = apply_grid_operator(stage.op, omega, h)
    return float(np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1e-300))


@dataclass
class Reduction:
    """Result of reduce_operator: the chain, the final operator and the constants m3, m1."""
    linearized: LinearizedOperator
    chain: TransformChain
    op: OperatorGrid
    m3: float
    m1: float
    c_xi: float

    @property
    def stages(self) -> List[ReductionStage]:
        return self.chain.stages

    def diagonal(self) -> np.ndarray:
        return i_dispersion(self.op.modes, self.m3, self.m1)

    def remainder(self) -> OperatorGrid:
        """M_5 minus its constant-coefficient part i(-m3 j^3 + m1 j)."""
        return self.op.with_values(self.op.values - np.diag(self.diagonal()))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "m3": self.m3,
            "m1": self.m1,
            "c_xi": self.c_xi,
            "remainder_max": self.remainder().max_abs(),
            "stages": [stage.to_dict() for stage in self.stages],
        }


def i_dispersion(modes: np.ndarray, m3: float, m1: float) -> np.ndarray:
    modes = np.asarray(modes, dtype=float)
    return 1j * (-m3 * modes ** 3 + m1 * modes)


def reduce_operator(lin: LinearizedOperator, problem: TorusProblem, check: bool = True,
                    seed: int = 0) -> Reduction:
    """Run the five stages; per-stage diagnostics land in each stage's info."""
    stages: List[ReductionStage] = []
    current = lin.op

    def record(stage: ReductionStage, prev: OperatorGrid) -> OperatorGrid:
        if check and stage.status != StageStatus.SKIPPED:
            stage.info["conjugation_residual"] = conjugation_residual(prev, stage, lin.omega, seed)
        stage.info["hamiltonian_defect"] = stage.op.hamiltonian_defect()
        stages.append(stage)
        logger.debug(f"reduction stage {stage.name}: {stage.status.value} {stage.info}")
        return stage.op

    stage, b3 = step1_space(lin, current)
    current = record(stage, current)
    stage, m3 = step2_time(lin, current, b3)
    current = record(stage, current)
    stage, _ = step3_translate(lin, current)
    current = record(stage, current)
    stage = step4_linear_bnf(lin, current, problem, m3)
    current = record(stage, current)
    stage, m1 = step5_descent(lin, current, m3)
    current = record(stage, current)
    final_fit = fit_symbol(current, exclude=lin.exclude)
    stages[-1].info["final_order1_variation"] = final_fit.x_variation(1)
    c_xi = surviving_coefficient(problem.sites, problem.model.sign, problem.xi, problem.model.lambda_variant)
    logger.info(f"reduction done: m3 = {m3:.12f}, m1 = {m1:.6e}")
    return Reduction(lin, TransformChain(stages), current, m3, m1, c_xi)


def stage_report(reduction: Reduction) -> List[Dict[str, Any]]:
    """One row per stage: constants, coefficient variations, residuals and the remainder decay norm."""
    exclude = reduction.linearized.exclude
    diag = np.diag(reduction.diagonal())
    rows = []
    for stage in reduction.stages:
        op = stage.op
        fit = fit_symbol(op, exclude=exclude)
        rest = op.with_values(op.values - diag)
        decay = rest.to_decay((op.m - 1) // 2, int(np.max(np.abs(op.modes)))).decay_norm(s0_for(op.nu))
        rows.append({
            "stage": stage.name,
            "status": stage.status.value,
            "m3": stage.info.get("m3", reduction.m3),
            "m1": stage.info.get("m1"),
            "order3_variation": fit.x_variation(3),
            "order1_variation": fit.x_variation(1),
            "conjugation_residual": stage.info.get("conjugation_residual"),
            "hamiltonian_defect": stage.info.get("hamiltonian_defect"),
            "remainder_decay_norm": decay,
        })
    return rows
