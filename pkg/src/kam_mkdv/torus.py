"""
Action-angle variables and the torus functional.

    A_eps(theta, y, z) = eps sum_(j in S) sqrt(xi_j + eps^(2b-2) |j| y_j) e^(i theta_j) e^(ijx) + eps^b z
    H_eps = eps^(-2b) (H o Phi_B)(A_eps) / (2 pi) = e(xi) + alpha(xi) . y + (N(theta) z, z) / 2 + P

The torus functional is evaluated pointwise on a uniform angle grid of
3 (2 n_phi + 1) points per direction and projected back to the angle box.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .birkhoff import BirkhoffGenerator, build_generator, composed_energy, composed_gradient, composed_hessian
from .birkhoff import weak_bnf_flow
from .config import RunConfig, s0_for
from .errors import DomainError
from .fourier import (
    TorusField,
    angle_norm,
    field_from_dict,
    field_to_dict,
    grid_size,
    lattice,
    mode_range,
    omega_dot_l,
    phi_from_grid,
    phi_points,
    phi_to_grid,
    x_from_grid,
    x_to_grid,
)
from .hamiltonian import Model, PolynomialDensity, TWO_PI
from .sites import SiteSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Params:
    """eps, a in (0, 1/6), tau and the truncation box; b = 1 + a/2 and gamma = eps^(2b)."""
    eps: float
    a: float
    tau: float
    n_phi: int
    n_x: int

    def __post_init__(self):
        if self.eps <= 0:
            raise DomainError("eps must be positive")
        if not 0.0 < self.a < 1.0 / 6.0:
            raise DomainError("a must lie in (0, 1/6)")
        if self.n_phi < 1 or self.n_x < 1:
            raise DomainError("truncations must be positive")

    @property
    def b(self) -> float:
        return 1.0 + self.a / 2.0

    @property
    def gamma(self) -> float:
        return self.eps ** (2.0 * self.b)

    @classmethod
    def from_config(cls, config: RunConfig) -> "Params":
        nu = len(config.model.sites)
        tau = config.params.tau if config.params.tau is not None else float(nu + 2)
        if tau < nu + 2:
            raise DomainError(f"tau must be at least nu + 2 = {nu + 2}")
        return cls(config.params.eps, config.params.a, tau, config.params.n_phi, config.params.n_x)


def model_from_config(config: RunConfig) -> Model:
    sites = SiteSet(tuple(config.model.sites))
    density = PolynomialDensity.from_specs(config.model.density)
    if config.model.lambda_variant:
        return Model.with_lambda_variant(config.model.sign, sites, density)
    return Model(config.model.sign, sites, density)


# ---------------------------------------------------------------------------
# Frequency-amplitude map
# ---------------------------------------------------------------------------

def unperturbed_frequencies(sites: SiteSet) -> np.ndarray:
    return np.array([j ** 3 for j in sites.plus], dtype=float)


def twist_matrix(sites: SiteSet, sign: int, lambda_variant: bool = False) -> np.ndarray:
    """3 sign D_S (I - 2U), or 3 sign D_S for the lambda-variant."""
    nu = sites.nu
    if nu == 0:
        raise DomainError("the twist matrix needs nu >= 1")
    d_s = np.diag(np.array(sites.plus, dtype=float))
    if lambda_variant:
        return 3.0 * sign * d_s
    return 3.0 * sign * d_s @ (np.eye(nu) - 2.0 * np.ones((nu, nu)))


def twist_inverse(sites: SiteSet, sign: int, lambda_variant: bool = False) -> np.ndarray:
    """(1 / 3 sign)(I - 2U / (2 nu - 1)) D_S^-1, using U^2 = nu U."""
    nu = sites.nu
    if nu == 0:
        raise DomainError("the twist matrix needs nu >= 1")
    d_inv = np.diag(1.0 / np.array(sites.plus, dtype=float))
    if lambda_variant:
        return d_inv / (3.0 * sign)
    return (np.eye(nu) - 2.0 * np.ones((nu, nu)) / (2 * nu - 1)) @ d_inv / (3.0 * sign)


def freq_amp(sites: SiteSet, sign: int, eps: float, xi: Sequence[float],
             lambda_variant: bool = False) -> np.ndarray:
    """alpha(xi) = omega_bar + eps^2 A xi."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (sites.nu,):
        raise DomainError(f"xi must have {sites.nu} components")
    if np.any(xi <= 0):
        raise DomainError("amplitudes xi must be positive", index=int(np.argmin(xi)))
    return unperturbed_frequencies(sites) + eps ** 2 * twist_matrix(sites, sign, lambda_variant) @ xi


def xi_of_omega(sites: SiteSet, sign: int, eps: float, omega: Sequence[float],
                lambda_variant: bool = False) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    return twist_inverse(sites, sign, lambda_variant) @ (omega - unperturbed_frequencies(sites)) / eps ** 2


def energy_constant(model: Model, params: Params, xi: Sequence[float]) -> float:
    """e(xi): the y- and z-independent part of H_eps (dropped from the dynamics)."""
    xi = np.asarray(xi, dtype=float)
    eps, b = params.eps, params.b
    j2 = np.array(model.sites.plus, dtype=float) ** 2
    value = eps ** (2 - 2 * b) * np.sum(j2 * xi)
    value += 0.75 * model.sign * eps ** (4 - 2 * b) * (2 * np.sum(xi ** 2) - 4 * np.sum(xi) ** 2)
    if model.lambda_:
        value += 4.0 * model.lambda_ * eps ** (4 - 2 * b) * np.sum(xi) ** 2
    return float(value)


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------

def _angle_zeros(nu: int, n_phi: int) -> np.ndarray:
    return np.zeros((2 * n_phi + 1,) * nu + (nu,), dtype=complex)


@dataclass(frozen=True, eq=False)
class TorusEmbedding:
    """Periodic components (Theta, y, z) of phi -> (phi + Theta, y, z) and the counter-term zeta.

    Theta and y are angle-coefficient arrays of shape (2 n_phi + 1,)*nu + (nu,).
    """
    theta: np.ndarray
    y: np.ndarray
    z: TorusField
    zeta: np.ndarray

    @property
    def nu(self) -> int:
        return self.z.nu

    @property
    def n_phi(self) -> int:
        return self.z.n_phi

    @property
    def n_x(self) -> int:
        return self.z.n_x

    @classmethod
    def trivial(cls, nu: int, n_phi: int, n_x: int) -> "TorusEmbedding":
        return cls(_angle_zeros(nu, n_phi), _angle_zeros(nu, n_phi), TorusField.zeros(nu, n_phi, n_x),
                   np.zeros(nu))

    def _combine(self, other: "TorusEmbedding", a: float, b: float) -> "TorusEmbedding":
        return TorusEmbedding(a * self.theta + b * other.theta, a * self.y + b * other.y,
                              self.z.with_coeffs(a * self.z.coeffs + b * other.z.coeffs),
                              a * self.zeta + b * other.zeta)

    def __add__(self, other: "TorusEmbedding") -> "TorusEmbedding":
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other: "TorusEmbedding") -> "TorusEmbedding":
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, scalar: float) -> "TorusEmbedding":
        return self._combine(self, scalar, 0.0)

    __rmul__ = __mul__

    def __neg__(self) -> "TorusEmbedding":
        return self * (-1.0)

    def norm(self, s: float) -> float:
        """Combined Sobolev norm of (Theta, y, z) plus |zeta|."""
        total = angle_norm(self.theta, self.nu, s) ** 2 + angle_norm(self.y, self.nu, s) ** 2
        total += self.z.norm(s) ** 2 + float(np.sum(self.zeta ** 2))
        return float(np.sqrt(total))

    def smooth(self, n: float) -> "TorusEmbedding":
        """Pi_n: keep angle modes with <l> <= n; the spatial box is left as is."""
        l2 = np.sum(lattice(self.nu, self.n_phi) ** 2, axis=-1)
        keep = (np.sqrt(1.0 + l2) <= n)[..., None]
        return TorusEmbedding(np.where(keep, self.theta, 0.0), np.where(keep, self.y, 0.0),
                              self.z.with_coeffs(np.where(keep, self.z.coeffs, 0.0)), self.zeta.copy())

    def outside_support(self, n: float) -> float:
        """Largest coefficient outside <l> <= n (zero after smooth(n))."""
        tail = self - self.smooth(n)
        return float(max(np.max(np.abs(tail.theta), initial=0.0), np.max(np.abs(tail.y), initial=0.0),
                         np.max(np.abs(tail.z.coeffs), initial=0.0)))

    def with_zeta(self, zeta: Sequence[float]) -> "TorusEmbedding":
        return TorusEmbedding(self.theta, self.y, self.z, np.asarray(zeta, dtype=float))


def _angle_to_dict(coeffs: np.ndarray, nu: int) -> list:
    band = (coeffs.shape[0] - 1) // 2
    out = []
    for idx in zip(*np.nonzero(coeffs)):
        l = [int(i) - band for i in idx[:nu]]
        c = coeffs[idx]
        out.append(l + [int(idx[nu]), float(c.real), float(c.imag)])
    return out


def _angle_from_dict(entries: list, nu: int, n_phi: int) -> np.ndarray:
    out = _angle_zeros(nu, n_phi)
    for entry in entries:
        l, comp, re, im = entry[:nu], int(entry[nu]), entry[nu + 1], entry[nu + 2]
        out[tuple(int(v) + n_phi for v in l) + (comp,)] = re + 1j * im
    return out


def embedding_to_dict(emb: TorusEmbedding, omega: Optional[Sequence[float]] = None,
                      xi: Optional[Sequence[float]] = None) -> Dict[str, Any]:
    data = {
        "nu": emb.nu,
        "box": [emb.n_phi, emb.n_x],
        "theta": _angle_to_dict(emb.theta, emb.nu),
        "y": _angle_to_dict(emb.y, emb.nu),
        "z": field_to_dict(emb.z),
        "zeta": [float(v) for v in emb.zeta],
    }
    if omega is not None:
        data["omega"] = [float(v) for v in omega]
    if xi is not None:
        data["xi"] = [float(v) for v in xi]
    return data


def embedding_from_dict(data: Dict[str, Any]) -> TorusEmbedding:
    nu = int(data["nu"])
    n_phi, _ = (int(v) for v in data["box"])
    z = field_from_dict(data["z"])
    return TorusEmbedding(_angle_from_dict(data["theta"], nu, n_phi), _angle_from_dict(data["y"], nu, n_phi),
                          z, np.asarray(data.get("zeta", [0.0] * nu), dtype=float))


# ---------------------------------------------------------------------------
# The torus problem
# ---------------------------------------------------------------------------

@dataclass
class GridState:
    """An embedding sampled on the angle grid (flattened batch axis)."""
    m: int
    phi: np.ndarray
    theta: np.ndarray
    y: np.ndarray
    z: np.ndarray


class TorusProblem:
    """H_eps for a model, its parameters and amplitudes xi.

    ``mode="N"`` replaces H_eps by its normal form part N (P switched off).
    """

    def __init__(self, model: Model, params: Params, xi: Sequence[float],
                 generator: Optional[BirkhoffGenerator] = None, mode: str = "H"):
        if mode not in ("H", "N"):
            raise DomainError(f"unknown Hamiltonian mode {mode!r}")
        if params.n_x < model.sites.birkhoff_cutoff():
            raise DomainError("n_x must exceed 3 * max(sites)")
        self.logger = logging.getLogger(__name__)
        self.model = model
        self.params = params
        self.xi = np.asarray(xi, dtype=float)
        if self.xi.shape != (model.sites.nu,) or np.any(self.xi <= 0):
            raise DomainError("xi must hold nu positive amplitudes")
        self.generator = generator or build_generator(model.sites, model.sign, model.lambda_variant)
        self.mode = mode
        self.sites = model.sites
        self.nu = model.sites.nu
        self.jbar = np.array(model.sites.plus, dtype=float)
        self.normal = model.sites.normal_modes(params.n_x)
        self.all_modes = np.array([j for j in range(-params.n_x, params.n_x + 1) if j != 0])

    # -- frequencies ------------------------------------------------------------

    @property
    def alpha(self) -> np.ndarray:
        return freq_amp(self.sites, self.model.sign, self.params.eps, self.xi, self.model.lambda_variant)

    def energy_constant(self) -> float:
        return energy_constant(self.model, self.params, self.xi)

    def grid_size(self) -> int:
        return grid_size(self.params.n_phi)

    # -- embedding ----------------------------------------------------------------

    def radii(self, y: np.ndarray) -> np.ndarray:
        eps, b = self.params.eps, self.params.b
        radicand = self.xi + eps ** (2 * b - 2) * self.jbar * y
        if np.any(radicand <= 0):
            bad = np.argwhere(radicand <= 0)[0]
            raise DomainError("negative radicand in the action-angle embedding", index=int(self.jbar[bad[-1]]))
        return np.sqrt(radicand)

    def embed(self, theta: np.ndarray, y: np.ndarray, zc: np.ndarray) -> np.ndarray:
        """x-coefficients of A_eps for batches theta, y (B, nu) and z (B, 2 n_x + 1)."""
        eps, b = self.params.eps, self.params.b
        n = self.params.n_x
        r = self.radii(y)
        u = eps ** b * np.asarray(zc, dtype=complex).copy()
        for i, j in enumerate(self.sites.plus):
            c = eps * r[..., i] * np.exp(1j * theta[..., i])
            u[..., n + j] = c
            u[..., n - j] = np.conj(c)
        return u

    def _dy_vectors(self, theta: np.ndarray, r: np.ndarray, order: int) -> np.ndarray:
        """d^order u / dy_i^order as coefficient vectors over all nonzero modes, shape (B, nu, 2 n_x)."""
        eps, b = self.params.eps, self.params.b
        n = self.params.n_x
        k = eps ** (2 * b - 2) * self.jbar
        if order == 1:
            dr = k / (2.0 * r)
        else:
            dr = -k ** 2 / (4.0 * r ** 3)
        out = np.zeros(theta.shape[:-1] + (self.nu, 2 * n), dtype=complex)
        for i, j in enumerate(self.sites.plus):
            c = eps * np.exp(1j * theta[..., i]) * dr[..., i]
            out[..., i, n + j - 1] = c
            out[..., i, n - j] = np.conj(c)
        return out

    # -- N part ---------------------------------------------------------------------

    def _v_coeffs(self, theta: np.ndarray) -> np.ndarray:
        n = self.params.n_x
        v = np.zeros(theta.shape[:-1] + (2 * n + 1,), dtype=complex)
        for i, j in enumerate(self.sites.plus):
            c = np.sqrt(self.xi[i]) * np.exp(1j * theta[..., i])
            v[..., n + j] = c
            v[..., n - j] = np.conj(c)
        return v

    def _v_squared(self, theta: np.ndarray, band: int) -> np.ndarray:
        """x-coefficients of v^2 (pi_0 v^2 for the lambda-variant) on the given band."""
        n = self.params.n_x
        m = 2 * (2 * n + band) + 1
        v = x_to_grid(self._v_coeffs(theta), m).real
        out = x_from_grid(v ** 2, band)
        if self.model.lambda_variant:
            out[..., band] = 0.0
        return out

    def normal_operator(self, theta: np.ndarray) -> np.ndarray:
        """Galerkin matrix of N(theta) = -d_xx - 3 sign eps^2 Pi_perp (v^2 .) on the normal modes."""
        modes = self.normal
        span = int(modes.max() - modes.min())
        v2 = self._v_squared(theta, span)
        diff = modes[:, None] - modes[None, :]
        mat = -3.0 * self.model.sign * self.params.eps ** 2 * v2[..., diff + span]
        return mat + np.diag(modes.astype(float) ** 2)

    def _n_gradients(self, theta, y, zc):
        n = self.params.n_x
        eps, sign = self.params.eps, self.model.sign
        batch = theta.shape[:-1]
        dy = np.broadcast_to(self.alpha, batch + (self.nu,)).copy()
        m = 2 * (4 * n) + 1
        v = x_to_grid(self._v_coeffs(theta), m).real
        z = x_to_grid(zc, m).real
        dtheta = np.zeros(batch + (self.nu,))
        for i, j in enumerate(self.sites.plus):
            dv = np.zeros_like(self._v_coeffs(theta))
            c = 1j * np.sqrt(self.xi[i]) * np.exp(1j * theta[..., i])
            dv[..., n + j] = c
            dv[..., n - j] = np.conj(c)
            dvg = x_to_grid(dv, m).real
            dtheta[..., i] = -3.0 * sign * eps ** 2 * np.mean(v * dvg * z ** 2, axis=-1)
        v2 = v ** 2
        if self.model.lambda_variant:
            v2 = v2 - np.mean(v2, axis=-1, keepdims=True)
        gz = x_from_grid(-3.0 * sign * eps ** 2 * v2 * z, n)
        gz = gz + mode_range(n) ** 2 * zc
        return dtheta, dy, self._project_normal(gz)

    def _project_normal(self, coeffs: np.ndarray) -> np.ndarray:
        n = self.params.n_x
        out = np.zeros_like(coeffs)
        out[..., n + self.normal] = coeffs[..., n + self.normal]
        return out

    # -- H_eps ----------------------------------------------------------------------

    def value(self, theta: np.ndarray, y: np.ndarray, zc: np.ndarray) -> np.ndarray:
        """H_eps (or N in N-mode) at single points or batches."""
        n_value, p_value = self.split_N_P(theta, y, zc)
        return n_value + p_value

    def split_N_P(self, theta: np.ndarray, y: np.ndarray, zc: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(N, P) with H_eps = e(xi) + N + P."""
        theta, y = np.asarray(theta, dtype=float), np.asarray(y, dtype=float)
        zc = np.asarray(zc, dtype=complex)
        n = self.params.n_x
        nz = self.normal_operator(theta)
        zn = zc[..., n + self.normal]
        quad = 0.5 * np.einsum("...a,...ab,...b->...", zn[..., ::-1], nz, zn).real
        n_value = y @ self.alpha + quad
        if self.mode == "N":
            return n_value, np.zeros_like(n_value)
        eps, b = self.params.eps, self.params.b
        h = composed_energy(self.model, self.generator, self.embed(theta, y, zc))
        h_eps = eps ** (-2 * b) * h / TWO_PI
        return n_value, h_eps - self.energy_constant() - n_value

    def gradients(self, theta: np.ndarray, y: np.ndarray, zc: np.ndarray):
        """(d_theta H_eps, d_y H_eps, grad_z H_eps) on batches; grad_z on the band n_x."""
        if self.mode == "N":
            return self._n_gradients(theta, y, zc)
        eps, b = self.params.eps, self.params.b
        n = self.params.n_x
        r = self.radii(y)
        u = self.embed(theta, y, zc)
        g, _ = composed_gradient(self.model, self.generator, u, n)
        dtheta = np.zeros(theta.shape)
        dy = np.zeros(theta.shape)
        for i, j in enumerate(self.sites.plus):
            rot = np.exp(1j * theta[..., i]) * g[..., n - j]
            dtheta[..., i] = -2.0 * eps ** (1 - 2 * b) * r[..., i] * rot.imag
            dy[..., i] = eps ** (-1) * j * rot.real / r[..., i]
        gz = eps ** (-b) * self._project_normal(g)
        return dtheta, dy, gz

    def hessians(self, theta: np.ndarray, y: np.ndarray, zc: np.ndarray, chunk: int = 256):
        """(Hyy (B, nu, nu), Hyz (B, nu, k), Hzz (B, k, k)) on the normal modes, B = flattened batch."""
        theta = np.asarray(theta, dtype=float).reshape(-1, self.nu)
        y = np.asarray(y, dtype=float).reshape(-1, self.nu)
        zc = np.asarray(zc, dtype=complex).reshape(theta.shape[0], -1)
        if self.mode == "N":
            k = len(self.normal)
            return (np.zeros((theta.shape[0], self.nu, self.nu)),
                    np.zeros((theta.shape[0], self.nu, k), dtype=complex),
                    self.normal_operator(theta))
        parts = [self._hessians_chunk(theta[s:s + chunk], y[s:s + chunk], zc[s:s + chunk])
                 for s in range(0, theta.shape[0], chunk)]
        return tuple(np.concatenate([p[i] for p in parts], axis=0) for i in range(3))

    def _hessians_chunk(self, theta, y, zc):
        eps, b = self.params.eps, self.params.b
        n = self.params.n_x
        modes = self.all_modes
        r = self.radii(y)
        u = self.embed(theta, y, zc)
        hess, _ = composed_hessian(self.model, self.generator, u, modes)
        g, _ = composed_gradient(self.model, self.generator, u, n)
        g_modes = g[..., n + modes]
        du = self._dy_vectors(theta, r, 1)
        d2u = self._dy_vectors(theta, r, 2)
        hdu = np.einsum("zab,zib->zia", hess, du)
        # pairing over the symmetric mode list: (f, g) = sum_a f_a g_(-a)
        hyy = eps ** (-2 * b) * np.einsum("zka,zia->zik", hdu, du[..., ::-1])
        corr = eps ** (-2 * b) * np.einsum("za,zia->zi", g_modes[..., ::-1], d2u)
        hyy = hyy + np.einsum("zi,ik->zik", corr, np.eye(self.nu))
        pos = np.searchsorted(modes, self.normal)
        hyz = eps ** (-b) * hdu[..., pos]
        hzz = hess[:, pos[:, None], pos[None, :]]
        return hyy.real, hyz, hzz

    # -- grid sampling -----------------------------------------------------------------

    def sample(self, emb: TorusEmbedding, m: Optional[int] = None) -> GridState:
        nu = self.nu
        m = self.grid_size() if m is None else m
        phi = phi_points(nu, m).reshape(-1, nu)
        theta = phi + phi_to_grid(emb.theta, nu, m).real.reshape(-1, nu)
        y = phi_to_grid(emb.y, nu, m).real.reshape(-1, nu)
        z = emb.z.phi_grid_modes(m).reshape(-1, 2 * emb.n_x + 1)
        return GridState(m, phi, theta, y, z)

    def to_angle_coeffs(self, values: np.ndarray, m: int, band: Optional[int] = None) -> np.ndarray:
        """Grid values with flattened batch axis -> centered angle coefficients."""
        band = self.params.n_phi if band is None else band
        shaped = values.reshape((m,) * self.nu + values.shape[1:])
        return phi_from_grid(shaped, self.nu, band)


# ---------------------------------------------------------------------------
# The nonlinear functional
# ---------------------------------------------------------------------------

def d_omega_angle(coeffs: np.ndarray, omega: Sequence[float], nu: int) -> np.ndarray:
    """omega . d_phi on an angle-coefficient array with trailing component axes."""
    band = (coeffs.shape[0] - 1) // 2
    wl = omega_dot_l(omega, band)
    return coeffs * (1j * wl).reshape(wl.shape + (1,) * (coeffs.ndim - nu))


def F_operator(problem: TorusProblem, emb: TorusEmbedding, omega: Sequence[float]) -> TorusEmbedding:
    """F(i, zeta) = (omega + D_omega Theta - d_y H, D_omega y + d_theta H + zeta, D_omega z - d_x grad_z H).

    The residual is returned as an embedding-shaped record (its zeta slot is zero).
    """
    omega = np.asarray(omega, dtype=float)
    nu = problem.nu
    state = problem.sample(emb)
    dtheta, dy, gz = problem.gradients(state.theta, state.y, state.z)
    n_phi = emb.n_phi
    dtheta_c = problem.to_angle_coeffs(dtheta, state.m)
    dy_c = problem.to_angle_coeffs(dy, state.m)
    gz_c = problem.to_angle_coeffs(gz, state.m)

    f1 = d_omega_angle(emb.theta, omega, nu) - dy_c
    f1[(n_phi,) * nu] += omega
    f2 = d_omega_angle(emb.y, omega, nu) + dtheta_c
    f2[(n_phi,) * nu] += emb.zeta
    j = mode_range(emb.n_x)
    f3 = d_omega_angle(emb.z.coeffs, omega, nu) - 1j * j * gz_c
    f1, f2 = _real_part_angle(f1, nu), _real_part_angle(f2, nu)
    return TorusEmbedding(f1, f2, emb.z.with_coeffs(f3), np.zeros(nu))


def _real_part_angle(coeffs: np.ndarray, nu: int) -> np.ndarray:
    """Symmetrize c(l) and conj c(-l) (removes round-off imaginary parts of real functions)."""
    flipped = coeffs[(slice(None, None, -1),) * nu]
    return 0.5 * (coeffs + np.conj(flipped))


def residual_norm(residual: TorusEmbedding, s: Optional[float] = None) -> float:
    s = s0_for(residual.nu) if s is None else s
    return residual.norm(s)


def trivial_embedding(problem: TorusProblem) -> TorusEmbedding:
    return TorusEmbedding.trivial(problem.nu, problem.params.n_phi, problem.params.n_x)


def embed_A_eps(problem: TorusProblem, theta: Sequence[float], y: Sequence[float], z: TorusField) -> TorusField:
    """A_eps(theta, y, z) as an x-only field."""
    if z.nu != 0:
        raise DomainError("expected an x-only normal field")
    n = problem.params.n_x
    zc = np.zeros(2 * n + 1, dtype=complex)
    k = min(n, z.n_x)
    zc[n - k:n + k + 1] = z.coeffs[z.n_x - k:z.n_x + k + 1]
    zc = problem._project_normal(zc)
    u = problem.embed(np.asarray(theta, dtype=float), np.asarray(y, dtype=float), zc)
    return TorusField.from_coeffs(0, 0, n, u, True)


def _angle_eval(coeffs: np.ndarray, nu: int, phi: np.ndarray) -> np.ndarray:
    """Evaluate an angle-coefficient array (trailing component axes) at one point."""
    band = (coeffs.shape[0] - 1) // 2
    phase = np.exp(1j * (lattice(nu, band) @ phi))
    extra = coeffs.ndim - nu
    return np.sum(coeffs * phase.reshape(phase.shape + (1,) * extra), axis=tuple(range(nu)))


def solution_coeffs(problem: TorusProblem, emb: TorusEmbedding, omega: Sequence[float], t: float,
                    original: bool = True) -> np.ndarray:
    """x-coefficients of Phi_B(A_eps(i(omega t))), or of A_eps alone with original=False."""
    nu = problem.nu
    phi = np.asarray(omega, dtype=float) * t
    theta = phi + _angle_eval(emb.theta, nu, phi).real
    y = _angle_eval(emb.y, nu, phi).real
    z = TorusField.from_coeffs(0, 0, emb.n_x, _angle_eval(emb.z.coeffs, nu, phi), True)
    u = embed_A_eps(problem, theta, y, z)
    if original:
        u = weak_bnf_flow(problem.generator, u)
    return u.coeffs


def solution_field(problem: TorusProblem, emb: TorusEmbedding, omega: Sequence[float],
                   t: float, m_x: Optional[int] = None, original: bool = True) -> np.ndarray:
    """u(t, x) on an x-grid of m_x points."""
    m_x = 2 * problem.params.n_x + 1 if m_x is None else m_x
    return x_to_grid(solution_coeffs(problem, emb, omega, t, original), m_x).real
