"""
mKdV Hamiltonian with a quasi-linear perturbation.

    H(u) = int u_x^2 / 2 - (sign / 4) u^4 + f(x, u, u_x) dx + lambda * 2 pi * M_n(u)^2

with M_n(u) = sum_j |u_j|^2 = M(u) / (2 pi). Gradients are L^2(dx) gradients.
Batch routines (`*_coeffs`) act on centered x-coefficient arrays with any
number of leading batch axes; TorusField wrappers evaluate on angle grids.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from .errors import DomainError
from .fourier import TorusField, grid_size, mode_range, x_from_grid, x_points, x_to_grid
from .sites import SiteSet

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Monomial:
    """c * g(m x) * u^p * u_x^q with g in {cos, sin, const}."""
    c: float
    kind: str = "const"
    m: int = 0
    p: int = 5
    q: int = 0

    def __post_init__(self):
        if self.kind not in ("cos", "sin", "const"):
            raise DomainError(f"unknown monomial kind {self.kind!r}")
        if self.p < 0 or self.q < 0:
            raise DomainError("monomial powers must be non-negative")
        if self.p + self.q < 5:
            raise DomainError(f"monomial u^{self.p} u_x^{self.q} does not vanish to order five")
        if not np.isfinite(self.c):
            raise DomainError("monomial coefficient must be finite")

    def harmonic(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "cos":
            return np.cos(self.m * x)
        if self.kind == "sin":
            return np.sin(self.m * x)
        return np.ones_like(x)


def _power(base: np.ndarray, k: int) -> np.ndarray:
    return base ** k if k >= 0 else np.zeros_like(base)


@dataclass(frozen=True)
class PolynomialDensity:
    monomials: Tuple[Monomial, ...] = ()

    @classmethod
    def from_specs(cls, specs: Iterable) -> "PolynomialDensity":
        out = []
        for spec in specs:
            data = spec if isinstance(spec, dict) else vars(spec)
            out.append(Monomial(c=float(data["c"]), kind=data.get("kind", "const"),
                                m=int(data.get("m", 0)), p=int(data.get("p", 5)), q=int(data.get("q", 0))))
        return cls(tuple(out))

    @property
    def is_zero(self) -> bool:
        return all(mono.c == 0 for mono in self.monomials)

    @property
    def degree(self) -> int:
        return max((mono.p + mono.q for mono in self.monomials), default=0)

    @property
    def max_harmonic(self) -> int:
        return max((abs(mono.m) for mono in self.monomials), default=0)

    def derivatives(self, x: np.ndarray, u: np.ndarray, ux: np.ndarray) -> Dict[str, np.ndarray]:
        """f and its partial derivatives up to order two in (u, u_x), exact."""
        out = {key: np.zeros_like(u) for key in ("f", "u", "ux", "uu", "uux", "uxux")}
        for mono in self.monomials:
            g = mono.c * mono.harmonic(x)
            p, q = mono.p, mono.q
            out["f"] += g * _power(u, p) * _power(ux, q)
            if p >= 1:
                out["u"] += g * p * _power(u, p - 1) * _power(ux, q)
            if q >= 1:
                out["ux"] += g * q * _power(u, p) * _power(ux, q - 1)
            if p >= 2:
                out["uu"] += g * p * (p - 1) * _power(u, p - 2) * _power(ux, q)
            if p >= 1 and q >= 1:
                out["uux"] += g * p * q * _power(u, p - 1) * _power(ux, q - 1)
            if q >= 2:
                out["uxux"] += g * q * (q - 1) * _power(u, p) * _power(ux, q - 2)
        return out


@dataclass(frozen=True)
class Model:
    """sign, tangential sites, density and the lambda of the K = H + lambda M^2 variant."""
    sign: int
    sites: SiteSet
    density: PolynomialDensity = field(default_factory=PolynomialDensity)
    lambda_: float = 0.0

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise DomainError("sign must be +1 or -1")
        if self.lambda_ not in (0.0, 0.75 * self.sign):
            logger.warning(f"lambda = {self.lambda_} is outside the supported values {{0, 3 sign / 4}}")

    @classmethod
    def with_lambda_variant(cls, sign: int, sites: SiteSet,
                            density: Optional[PolynomialDensity] = None) -> "Model":
        return cls(sign, sites, density or PolynomialDensity(), 0.75 * sign)

    @property
    def lambda_variant(self) -> bool:
        return self.lambda_ != 0.0

    def x_grid(self, n_x: int, extra_degree: int = 0) -> int:
        """Alias-free grid size for integrands built from a band-n_x field."""
        degree = max(4, self.density.degree) + extra_degree
        m = 2 * (degree * n_x + self.density.max_harmonic) + 1
        return max(m, grid_size(n_x))


# ---------------------------------------------------------------------------
# Pairings
# ---------------------------------------------------------------------------

def pairing(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Normalized pairing (a, b) = sum_j a_j b_-j over the last axis."""
    return np.sum(a * b[..., ::-1], axis=-1)


def dx_pairing(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """int a b dx = 2 pi sum_j a_j b_-j."""
    return TWO_PI * pairing(a, b)


def mass_coeffs(uc: np.ndarray) -> np.ndarray:
    """M(u) = int u^2 dx."""
    return TWO_PI * np.sum(np.abs(uc) ** 2, axis=-1)


def _band(coeffs: np.ndarray) -> int:
    return (coeffs.shape[-1] - 1) // 2


def _resize_x(coeffs: np.ndarray, band: int) -> np.ndarray:
    old = _band(coeffs)
    out = np.zeros(coeffs.shape[:-1] + (2 * band + 1,), dtype=complex)
    k = min(old, band)
    out[..., band - k:band + k + 1] = coeffs[..., old - k:old + k + 1]
    return out


# ---------------------------------------------------------------------------
# Batch evaluation on x-coefficients
# ---------------------------------------------------------------------------

def energy_coeffs(model: Model, uc: np.ndarray) -> np.ndarray:
    """H(u) for a batch of x-coefficient arrays."""
    n = _band(uc)
    m = model.x_grid(n)
    x = x_points(m)
    j = mode_range(n)
    u = x_to_grid(uc, m).real
    ux = x_to_grid(uc * 1j * j, m).real
    density = model.density.derivatives(x, u, ux)["f"] if not model.density.is_zero else 0.0
    integrand = 0.5 * ux ** 2 - 0.25 * model.sign * u ** 4 + density
    value = TWO_PI * np.mean(integrand, axis=-1)
    if model.lambda_:
        m_n = np.sum(np.abs(uc) ** 2, axis=-1)
        value = value + TWO_PI * model.lambda_ * m_n ** 2
    return value


def grad_coeffs(model: Model, uc: np.ndarray, n_out: Optional[int] = None) -> np.ndarray:
    """x-coefficients of grad H(u) on the band n_out (phase-space projected)."""
    n = _band(uc)
    n_out = n if n_out is None else n_out
    m = model.x_grid(n)
    m = max(m, 2 * n_out + 1)
    x = x_points(m)
    j = mode_range(n)
    u = x_to_grid(uc, m).real
    ux = x_to_grid(uc * 1j * j, m).real
    values = -model.sign * u ** 3
    flux = None
    if not model.density.is_zero:
        d = model.density.derivatives(x, u, ux)
        values = values + d["u"]
        flux = d["ux"]
    j_out = mode_range(n_out)
    out = x_from_grid(values, n_out)
    out += _resize_x(uc, n_out) * j_out ** 2
    if flux is not None:
        out -= 1j * j_out * x_from_grid(flux, n_out)
    if model.lambda_:
        m_n = np.sum(np.abs(uc) ** 2, axis=-1)
        out += 4.0 * model.lambda_ * m_n[..., None] * _resize_x(uc, n_out)
    out[..., n_out] = 0.0
    return out


def hessian_coefficients(model: Model, wc: np.ndarray, band: int) -> Tuple[np.ndarray, np.ndarray]:
    """Coefficients (a1, a0) of grad^2 H(w) = -d_x a1 d_x - a0 (lambda part excluded).

    a1 = 1 + f_(u_x u_x),  a0 = 3 sign w^2 - (f_uu - d_x f_(u u_x)).
    """
    n = _band(wc)
    m = max(model.x_grid(n), 2 * band + 1)
    x = x_points(m)
    j = mode_range(n)
    w = x_to_grid(wc, m).real
    wx = x_to_grid(wc * 1j * j, m).real
    a1 = np.ones_like(w)
    a0 = 3.0 * model.sign * w ** 2
    mixed = None
    if not model.density.is_zero:
        d = model.density.derivatives(x, w, wx)
        a1 = a1 + d["uxux"]
        a0 = a0 - d["uu"]
        mixed = d["uux"]
    a1c = x_from_grid(a1, band)
    a0c = x_from_grid(a0, band)
    if mixed is not None:
        a0c = a0c + 1j * mode_range(band) * x_from_grid(mixed, band)
    return a1c, a0c


def hessian_matrix(model: Model, wc: np.ndarray, modes: np.ndarray) -> np.ndarray:
    """Galerkin matrix of grad^2 H(w) on the listed modes, batch axes leading.

    Entry [a, b] maps the coefficient at modes[b] to the coefficient at modes[a].
    """
    modes = np.asarray(modes)
    span = int(np.max(modes) - np.min(modes))
    a1c, a0c = hessian_coefficients(model, wc, span)
    diff = modes[:, None] - modes[None, :]
    idx = diff + span
    jj = modes[:, None] * modes[None, :]
    mat = jj * a1c[..., idx] - a0c[..., idx]
    if model.lambda_:
        n = _band(wc)
        m_n = np.sum(np.abs(wc) ** 2, axis=-1)
        w_at = _take_modes(wc, modes, n)
        w_neg = _take_modes(wc, -modes, n)
        mat = mat + 4.0 * model.lambda_ * m_n[..., None, None] * np.eye(len(modes))
        mat = mat + 8.0 * model.lambda_ * w_at[..., :, None] * w_neg[..., None, :]
    return mat


def _take_modes(coeffs: np.ndarray, modes: np.ndarray, band: int) -> np.ndarray:
    modes = np.asarray(modes)
    inside = np.abs(modes) <= band
    idx = np.clip(modes + band, 0, 2 * band)
    return np.where(inside, coeffs[..., idx], 0.0)


# ---------------------------------------------------------------------------
# TorusField wrappers
# ---------------------------------------------------------------------------

def _require_x_field(u: TorusField) -> None:
    if u.nu != 0:
        raise DomainError("expected an x-only field (nu = 0)")


def eval_H(model: Model, u: TorusField) -> float:
    _require_x_field(u)
    return float(energy_coeffs(model, u.coeffs))


def grad_H(model: Model, u: TorusField, n_out: Optional[int] = None) -> TorusField:
    _require_x_field(u)
    n_out = u.n_x if n_out is None else n_out
    return TorusField.from_coeffs(0, 0, n_out, grad_coeffs(model, u.coeffs, n_out), True)


def vector_field_X(model: Model, u: TorusField, n_out: Optional[int] = None) -> TorusField:
    """X_H(u) = d_x grad H(u)."""
    g = grad_H(model, u, n_out)
    return g.with_coeffs(g.coeffs * 1j * mode_range(g.n_x))


def poisson_bracket(f_grad: TorusField, g_grad: TorusField) -> float:
    """{F, G} = int grad F d_x grad G dx."""
    j = mode_range(g_grad.n_x)
    f = _resize_x(f_grad.coeffs, g_grad.n_x)
    return float(dx_pairing(f, 1j * j * g_grad.coeffs).real)


def symplectic_form(u: TorusField, v: TorusField) -> float:
    """Omega(u, v) = int (d_x^-1 u) v dx."""
    j = mode_range(u.n_x).astype(float)
    inv = np.zeros_like(j, dtype=complex)
    inv[j != 0] = 1.0 / (1j * j[j != 0])
    return float(dx_pairing(u.coeffs * inv, _resize_x(v.coeffs, u.n_x)).real)


def mass(u: TorusField) -> float:
    _require_x_field(u)
    return float(mass_coeffs(u.coeffs))


def N4(model: Model, u: TorusField, n_out: Optional[int] = None) -> TorusField:
    """-d_x[ f_u - d_x f_(u_x) ]: the quasi-linear part of the vector field."""
    _require_x_field(u)
    n = u.n_x
    n_out = n if n_out is None else n_out
    m = max(model.x_grid(n), 2 * n_out + 1)
    x = x_points(m)
    j = mode_range(n)
    uu = x_to_grid(u.coeffs, m).real
    ux = x_to_grid(u.coeffs * 1j * j, m).real
    d = model.density.derivatives(x, uu, ux)
    j_out = mode_range(n_out)
    inner = x_from_grid(d["u"], n_out) - 1j * j_out * x_from_grid(d["ux"], n_out)
    return TorusField.from_coeffs(0, 0, n_out, -1j * j_out * inner, True)
