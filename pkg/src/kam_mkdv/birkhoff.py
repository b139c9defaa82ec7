"""
Weak Birkhoff normal form.

The quartic generator F removes every monomial of H_4 with at least three
tangential indices and a nonzero cube sum. Its time-1 flow acts only on the
finite space E = {0 < |j| <= C}, C = 3 max(S) + 1, and is integrated with
scipy's adaptive RK45 together with its first and second variations, so the
composed Hamiltonian H o Phi_B has exact gradients and Hessians.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp

from .config import FLOW_TOL
from .errors import DomainError, NumericalFailureError
from .fourier import TorusField, grid_size, mode_range, phi_from_grid, x_to_grid
from .hamiltonian import (
    Model,
    TWO_PI,
    energy_coeffs,
    grad_coeffs,
    hessian_matrix,
    pairing,
)
from .sites import SiteSet, admissible, cube_identity

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BirkhoffGenerator:
    """F(u) = 2 pi sum_A F_(j1 j2 j3 j4) u_j1 u_j2 u_j3 u_j4 with F = i sign / (4 (j1^3 + ... + j4^3)).

    ``quads`` lists every ordered quadruple of the support A, so the
    coefficient tensor is symmetric by construction.
    """
    sites: SiteSet
    sign: int
    modes: np.ndarray
    quads: np.ndarray
    coeffs: np.ndarray

    @property
    def cutoff(self) -> int:
        return self.sites.birkhoff_cutoff()

    @property
    def size(self) -> int:
        return len(self.modes)

    @property
    def support_size(self) -> int:
        return len(self.quads)

    def coefficient(self, j1: int, j2: int, j3: int, j4: int) -> complex:
        hit = np.all(self.quads == np.array([j1, j2, j3, j4]), axis=1)
        return complex(self.coeffs[hit][0]) if np.any(hit) else 0.0j

    def index(self, j: int) -> int:
        return int(j + self.cutoff - (1 if j > 0 else 0))

    def neg(self) -> np.ndarray:
        return self.size - 1 - np.arange(self.size)

    # -- tensors of X_F on E --------------------------------------------------

    def _scatter(self):
        cached = self.__dict__.get("_scatter_cache")
        if cached is not None:
            return cached
        n, nq = self.size, len(self.quads)
        pos = np.vectorize(self.index)(self.quads) if nq else np.zeros((0, 4), dtype=int)
        tgt = self.neg()[pos[:, 0]] if nq else np.zeros(0, dtype=int)
        coef = 4j * (-self.quads[:, 0]) * self.coeffs if nq else np.zeros(0, dtype=complex)
        i1, i2, i3 = (pos[:, k] for k in (1, 2, 3)) if nq else (np.zeros(0, dtype=int),) * 3
        cols = np.arange(nq)
        s1 = sparse.csr_matrix((np.ones(nq), (tgt, cols)), shape=(n, nq))
        rows2 = np.concatenate([tgt * n + i1, tgt * n + i2, tgt * n + i3])
        s2 = sparse.csr_matrix((np.ones(3 * nq), (rows2, np.arange(3 * nq))), shape=(n * n, 3 * nq))
        pairs = [(i1, i2), (i2, i1), (i1, i3), (i3, i1), (i2, i3), (i3, i2)]
        rows3 = np.concatenate([(tgt * n + b) * n + c for b, c in pairs])
        s3 = sparse.csr_matrix((np.ones(6 * nq), (rows3, np.arange(6 * nq))), shape=(n ** 3, 6 * nq))
        cache = (coef, i1, i2, i3, s1, s2, s3)
        object.__setattr__(self, "_scatter_cache", cache)
        return cache

    def vector_field(self, x: np.ndarray) -> np.ndarray:
        """X_F on E for a batch x of shape (B, |E|)."""
        coef, i1, i2, i3, s1, _, _ = self._scatter()
        vals = coef * x[:, i1] * x[:, i2] * x[:, i3]
        return np.asarray((s1 @ vals.T).T)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        coef, i1, i2, i3, _, s2, _ = self._scatter()
        vals = np.concatenate([coef * x[:, i2] * x[:, i3], coef * x[:, i1] * x[:, i3],
                               coef * x[:, i1] * x[:, i2]], axis=1)
        n = self.size
        return np.asarray((s2 @ vals.T).T).reshape(-1, n, n)

    def second_derivative(self, x: np.ndarray) -> np.ndarray:
        coef, i1, i2, i3, _, _, s3 = self._scatter()
        vals = np.concatenate([coef * x[:, i3], coef * x[:, i3], coef * x[:, i2],
                               coef * x[:, i2], coef * x[:, i1], coef * x[:, i1]], axis=1)
        n = self.size
        return np.asarray((s3 @ vals.T).T).reshape(-1, n, n, n)

    def value(self, uc: np.ndarray) -> np.ndarray:
        """F(u) for x-coefficient arrays (batch axes leading)."""
        x = restrict_to_E(self, uc)
        pos = np.vectorize(self.index)(self.quads)
        prod = x[..., pos[:, 0]] * x[..., pos[:, 1]] * x[..., pos[:, 2]] * x[..., pos[:, 3]]
        return TWO_PI * np.sum(prod * self.coeffs, axis=-1)


def build_generator(sites: SiteSet, sign: int, lambda_variant: bool = False) -> BirkhoffGenerator:
    """Quartic generator on the support A (>= 3 tangential indices, nonzero cube sum)."""
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1")
    if not lambda_variant and not admissible(sites).admissible:
        logger.warning(f"Sites {sites.plus} fail the admissibility test; the generator is built anyway")
    bound = 3 * sites.max_site
    r = np.arange(-bound, bound + 1)
    j1, j2, j3 = (g.ravel() for g in np.meshgrid(r, r, r, indexing="ij"))
    j4 = -(j1 + j2 + j3)
    quads = np.stack([j1, j2, j3, j4], axis=1)
    quads = quads[(np.abs(j4) <= bound) & np.all(quads != 0, axis=1)]
    in_s = np.isin(np.abs(quads), np.array(sites.plus))
    quads = quads[np.sum(in_s, axis=1) >= 3]
    cubes = np.sum(quads ** 3, axis=1)
    quads, cubes = quads[cubes != 0], cubes[cubes != 0]
    coeffs = 1j * sign / (4.0 * cubes)
    cut = sites.birkhoff_cutoff()
    modes = np.array([j for j in range(-cut, cut + 1) if j != 0])
    logger.debug(f"Birkhoff generator for S+ = {sites.plus}: |A| = {len(quads)}, |E| = {len(modes)}")
    return BirkhoffGenerator(sites, sign, modes, quads, coeffs.astype(complex))


# ---------------------------------------------------------------------------
# Time-1 flow on E
# ---------------------------------------------------------------------------

@dataclass
class FlowResult:
    x: np.ndarray
    jac: Optional[np.ndarray] = None
    hess: Optional[np.ndarray] = None
    nfev: int = 0


def restrict_to_E(gen: BirkhoffGenerator, uc: np.ndarray) -> np.ndarray:
    n = (uc.shape[-1] - 1) // 2
    if n < gen.cutoff:
        raise DomainError(f"band {n} does not contain the Birkhoff space E (cutoff {gen.cutoff})")
    return uc[..., n + gen.modes]


def flow_E(gen: BirkhoffGenerator, x: np.ndarray, direction: int = 1, order: int = 0,
           tol: float = FLOW_TOL) -> FlowResult:
    """Time-(+-1) flow of X_F for a batch x of shape (B, |E|), with variations up to `order`."""
    x = np.atleast_2d(np.asarray(x, dtype=complex))
    batch, n = x.shape
    sizes = [n, n * n, n ** 3][:order + 1]
    y0 = [x.ravel()]
    if order >= 1:
        y0.append(np.broadcast_to(np.eye(n, dtype=complex), (batch, n, n)).ravel())
    if order >= 2:
        y0.append(np.zeros(batch * n ** 3, dtype=complex))
    splits = np.cumsum([batch * s for s in sizes])[:-1]

    def rhs(_t, y):
        parts = np.split(y, splits)
        xs = parts[0].reshape(batch, n)
        out = [gen.vector_field(xs).ravel()]
        if order >= 1:
            jac = parts[1].reshape(batch, n, n)
            dx = gen.jacobian(xs)
            out.append((dx @ jac).ravel())
            if order >= 2:
                hess = parts[2].reshape(batch, n, n, n)
                d2 = gen.second_derivative(xs)
                dk = np.einsum("zabc,zbe,zcf->zaef", d2, jac, jac, optimize=True)
                dk += np.einsum("zab,zbef->zaef", dx, hess, optimize=True)
                out.append(dk.ravel())
        return np.concatenate(out)

    sol = solve_ivp(rhs, (0.0, float(direction)), np.concatenate(y0), method="RK45",
                    rtol=tol, atol=tol * 1e-2)
    if not sol.success:
        raise NumericalFailureError("Birkhoff flow integration failed",
                                    {"message": sol.message, "nfev": int(sol.nfev), "batch": batch})
    parts = np.split(sol.y[:, -1], splits)
    result = FlowResult(parts[0].reshape(batch, n), nfev=int(sol.nfev))
    if order >= 1:
        result.jac = parts[1].reshape(batch, n, n)
    if order >= 2:
        result.hess = parts[2].reshape(batch, n, n, n)
    return result


def transform_coeffs(gen: BirkhoffGenerator, uc: np.ndarray, direction: int = 1,
                     order: int = 0) -> Tuple[np.ndarray, FlowResult]:
    """Phi_B (or its inverse) on x-coefficient arrays with batch axes leading."""
    uc = np.asarray(uc, dtype=complex)
    batch_shape = uc.shape[:-1]
    n = (uc.shape[-1] - 1) // 2
    x = restrict_to_E(gen, uc).reshape(-1, gen.size)
    flow = flow_E(gen, x, direction, order)
    out = uc.copy()
    out[..., n + gen.modes] = flow.x.reshape(batch_shape + (gen.size,))
    return out, flow


def weak_bnf_flow(gen: BirkhoffGenerator, u: TorusField, direction: str = "forward") -> TorusField:
    """Phi_B(u) or Phi_B^-1(u); on a torus the flow is applied pointwise on the angle grid."""
    if direction not in ("forward", "inverse"):
        raise DomainError(f"unknown flow direction {direction!r}")
    sgn = 1 if direction == "forward" else -1
    if u.nu == 0:
        out, _ = transform_coeffs(gen, u.coeffs, sgn)
        return u.with_coeffs(out)
    m = grid_size(u.n_phi, 3)
    mixed = u.phi_grid_modes(m)
    out, _ = transform_coeffs(gen, mixed, sgn)
    return u.with_coeffs(phi_from_grid(out, u.nu, u.n_phi))


# ---------------------------------------------------------------------------
# The composed Hamiltonian H o Phi_B
# ---------------------------------------------------------------------------

def composed_energy(model: Model, gen: BirkhoffGenerator, uc: np.ndarray) -> np.ndarray:
    w, _ = transform_coeffs(gen, uc)
    return energy_coeffs(model, w)


def composed_gradient(model: Model, gen: BirkhoffGenerator, uc: np.ndarray,
                      n_out: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """(grad (H o Phi_B)(u), Phi_B(u)) on the band n_out.

    On E the gradient is pulled back by the pairing transpose of the Jacobian.
    """
    n = (uc.shape[-1] - 1) // 2
    n_out = n if n_out is None else n_out
    w, flow = transform_coeffs(gen, uc, 1, order=1)
    g = grad_coeffs(model, w, n_out)
    sel = n_out + gen.modes
    g_e = g[..., sel].reshape(-1, gen.size)
    neg = gen.neg()
    pulled = np.einsum("za,zab->zb", g_e[:, neg], flow.jac)[:, neg]
    g[..., sel] = pulled.reshape(g.shape[:-1] + (gen.size,))
    return g, w


def composed_hessian(model: Model, gen: BirkhoffGenerator, uc: np.ndarray,
                     modes: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """(Hess (H o Phi_B)(u) on `modes`, Phi_B(u)); modes must be symmetric and contain E."""
    modes = np.asarray(modes)
    n = (uc.shape[-1] - 1) // 2
    batch_shape = uc.shape[:-1]
    w, flow = transform_coeffs(gen, uc, 1, order=2)
    k = len(modes)
    lookup = {int(j): a for a, j in enumerate(modes)}
    try:
        pos = np.array([lookup[int(j)] for j in gen.modes])
    except KeyError:
        raise DomainError("Hessian modes must contain the Birkhoff space E")
    neg_modes = np.array([lookup[-int(j)] for j in modes])
    batch = flow.x.shape[0]

    jfull = np.broadcast_to(np.eye(k, dtype=complex), (batch, k, k)).copy()
    jfull[:, pos[:, None], pos[None, :]] = flow.jac
    jt = np.swapaxes(jfull[:, neg_modes[:, None], neg_modes[None, :]], -1, -2)
    h2 = hessian_matrix(model, w, modes).reshape(batch, k, k)
    hess = jt @ h2 @ jfull

    n_g = max(n, gen.cutoff)
    g = grad_coeffs(model, w, n_g).reshape(batch, -1)
    g_neg = g[:, n_g - gen.modes]
    d2 = np.einsum("za,zabc->zcb", g_neg, flow.hess)
    neg_e = gen.neg()
    hess[:, pos[neg_e][:, None], pos[None, :]] += d2
    return hess.reshape(batch_shape + (k, k)), w


# ---------------------------------------------------------------------------
# Normal-form verification
# ---------------------------------------------------------------------------

def _quartic_grid(uc: np.ndarray, vc: np.ndarray, p: int) -> float:
    """int u^p v^(4-p) dx for x-coefficient arrays."""
    n = (uc.shape[-1] - 1) // 2
    m = 8 * n + 1
    u = x_to_grid(uc, m).real
    v = x_to_grid(vc, m).real
    return float(TWO_PI * np.mean(u ** p * v ** (4 - p)))


def normal_form_quartic(model: Model, vc: np.ndarray, zc: np.ndarray) -> float:
    """Expected quartic part of H o Phi_B at u = v + z (dx normalisation).

    v^4: 2 pi (3 sign / 4)(sum_S |u_j|^4 - (sum_S |u_j|^2)^2); v^3 z: none;
    v^2 z^2, v z^3, z^4: those of -(sign/4) int u^4; plus the lambda term.
    """
    n = (vc.shape[-1] - 1) // 2
    sites = model.sites
    s_idx = np.array([n + j for j in sites.full])
    mod2 = np.abs(vc[s_idx]) ** 2
    value = TWO_PI * 0.75 * model.sign * (np.sum(mod2 ** 2) - np.sum(mod2) ** 2)
    value += -0.25 * model.sign * (6 * _quartic_grid(vc, zc, 2) + 4 * _quartic_grid(vc, zc, 1)
                                   + _quartic_grid(vc, zc, 0))
    if model.lambda_:
        mass = np.sum(np.abs(vc) ** 2) + np.sum(np.abs(zc) ** 2)
        value += TWO_PI * model.lambda_ * mass ** 2
    return float(value)


def resonant_quartic_sum(sites: SiteSet, uc: np.ndarray) -> Tuple[complex, float]:
    """(direct sum over zero-cube-sum quadruples in S, 3 (sum |u_j|^2)^2 - 3 sum |u_j|^4)."""
    n = (uc.shape[-1] - 1) // 2
    full = np.array(sites.full)
    g = np.meshgrid(full, full, full, full, indexing="ij")
    q = np.stack([a.ravel() for a in g], axis=1)
    q = q[np.sum(q, axis=1) == 0]
    q = q[np.sum(q ** 3, axis=1) == 0]
    direct = np.sum(np.prod(uc[n + q], axis=1))
    mod2 = np.abs(uc[n + full]) ** 2
    return complex(direct), float(3 * np.sum(mod2) ** 2 - 3 * np.sum(mod2 ** 2))


def symplectic_defect(gen: BirkhoffGenerator, x: np.ndarray) -> float:
    """max |DPhi^T W DPhi - W| for the form Omega restricted to E, W[a, b] = 2 pi / (i j_a) [j_b = -j_a]."""
    flow = flow_E(gen, x, 1, order=1)
    n = gen.size
    w = np.zeros((n, n), dtype=complex)
    neg = gen.neg()
    w[np.arange(n), neg] = TWO_PI / (1j * gen.modes)
    jac = flow.jac
    pulled = np.swapaxes(jac, -1, -2) @ w @ jac
    return float(np.max(np.abs(pulled - w)) / np.max(np.abs(w)))


@dataclass
class NormalFormReport:
    amplitudes: List[float]
    quartic_fitted: float
    quartic_expected: float
    relative_error: float
    v3z_defect: float
    residual_slope: float
    fit_condition: float
    symplectic_defect: float

    def to_dict(self) -> Dict[str, float]:
        return dict(vars(self))


def _quartic_coefficient(model: Model, gen: BirkhoffGenerator, uc: np.ndarray,
                         amps: np.ndarray) -> Tuple[float, np.ndarray, float, float]:
    """Quartic Taylor coefficient of H o Phi_B along a -> a u, extrapolated to a = 0.

    The quadratic part of H o Phi_B is the unperturbed H_2, so the samples
    (H o Phi_B(a u) - a^2 H_2(u)) / a^4 are fitted by a polynomial in a.
    """
    n = (uc.shape[-1] - 1) // 2
    h2 = float(TWO_PI * 0.5 * np.sum(mode_range(n) ** 2 * np.abs(uc) ** 2))
    values = np.array([float(composed_energy(model, gen, a * uc)) for a in amps])
    samples = (values - amps ** 2 * h2) / amps ** 4
    design = np.vander(amps, min(len(amps), 4), increasing=True)
    cond = float(np.linalg.cond(design))
    if cond > 1e12:
        raise NumericalFailureError("quartic fit is ill-conditioned", {"condition": cond})
    fit, *_ = np.linalg.lstsq(design, samples, rcond=None)
    return float(fit[0]), values, h2, cond


def normal_form_test_point(sites: SiteSet, xi: Sequence[float], rng: np.random.Generator,
                           normal_size: float = 0.3) -> Tuple[np.ndarray, np.ndarray]:
    """v on S with |v_j|^2 = xi_j and random phases; z random on E minus S with |z_j| ~ 1/j^2."""
    n = sites.birkhoff_cutoff()
    vc = np.zeros(2 * n + 1, dtype=complex)
    phases = rng.uniform(0.0, 2.0 * np.pi, sites.nu)
    for j, x, th in zip(sites.plus, xi, phases):
        vc[n + j] = np.sqrt(x) * np.exp(1j * th)
        vc[n - j] = np.conj(vc[n + j])
    zc = np.zeros(2 * n + 1, dtype=complex)
    for j in range(1, n + 1):
        if sites.in_complement(j):
            zc[n + j] = normal_size * complex(*rng.normal(size=2)) / j ** 2
            zc[n - j] = np.conj(zc[n + j])
    return vc, zc


def verify_normal_form(model: Model, gen: BirkhoffGenerator, vc: np.ndarray, zc: np.ndarray,
                       base_amplitude: float = 0.1,
                       scales: Sequence[float] = (1.0, 0.5, 0.25, 0.125)) -> NormalFormReport:
    """Fit the quartic part of H o Phi_B at u = v + z and compare it with the normal form."""
    uc = vc + zc
    amps = np.array([base_amplitude * s for s in scales])
    fitted, values, h2, cond = _quartic_coefficient(model, gen, uc, amps)
    expected = normal_form_quartic(model, vc, zc)
    rel = abs(fitted - expected) / max(abs(expected), 1e-300)

    residuals = np.abs(values - amps ** 2 * h2 - amps ** 4 * expected)
    keep = residuals > 0
    slope = float(np.polyfit(np.log(amps[keep]), np.log(residuals[keep]), 1)[0]) if keep.sum() >= 2 else np.inf

    # v^3 z sector: the odd part in delta of Q(v + delta z) is v^3 z delta + v z^3 delta^3
    delta = 0.1
    plus, *_ = _quartic_coefficient(model, gen, vc + delta * zc, amps)
    minus, *_ = _quartic_coefficient(model, gen, vc - delta * zc, amps)
    odd = 0.5 * (plus - minus) / delta
    odd_expected = -model.sign * delta ** 2 * _quartic_grid(vc, zc, 1)
    v3z = abs(odd - odd_expected) / max(abs(fitted), 1e-300)

    sym = symplectic_defect(gen, restrict_to_E(gen, base_amplitude * uc)[None, :])
    report = NormalFormReport([float(a) for a in amps], fitted, expected, float(rel), float(v3z),
                              slope, cond, sym)
    logger.info(f"Normal form check: quartic rel. error {rel:.2e}, v3z {v3z:.2e}, slope {slope:.2f}")
    return report


def bracket_identity(model: Model, gen: BirkhoffGenerator, uc: np.ndarray) -> Tuple[float, float]:
    """({H_2, F}(u) + H_4(u), expected quartic part) for the check of the homological equation."""
    n = (uc.shape[-1] - 1) // 2
    j = mode_range(n)
    grad_h2 = j ** 2 * uc
    x = restrict_to_E(gen, uc)[None, :]
    xf = np.zeros_like(uc)
    xf[n + gen.modes] = gen.vector_field(x)[0]
    # {H_2, F} = int grad H_2 d_x grad F = dH_2 . X_F
    bracket = float(TWO_PI * pairing(grad_h2, xf).real)
    h4 = -0.25 * model.sign * _quartic_grid(uc, uc, 4)
    vc = np.zeros_like(uc)
    s_idx = np.array([n + jj for jj in model.sites.full])
    vc[s_idx] = uc[s_idx]
    plain = Model(model.sign, model.sites, model.density, 0.0)
    return bracket + h4, normal_form_quartic(plain, vc, uc - vc)


def check_cube_identity_on_support(gen: BirkhoffGenerator) -> bool:
    return all(cube_identity(*map(int, q)) != 0 for q in gen.quads)
