"""
Approximate right inverse of the linearized torus functional.

The torus is first made isotropic (only its actions change), then the
symplectic chart G_delta around it triangularizes the linearized equation:

    D_omega psi - K20 eta - K11^T w = g1
    D_omega eta + [d theta0]^T zeta = g2
    L_omega w - d_x K11 eta         = g3,    L_omega = D_omega - d_x K02

which is solved in the order zeta, eta, w, psi. All pointwise algebra
happens on the angle grid; results are projected back to the angle box.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .config import COND_LIMIT, s0_for
from .errors import DomainError, NumericalFailureError
from .fourier import d_omega_inv_coeffs, lattice, phi_from_grid, phi_to_grid
from .operators import OperatorGrid
from .torus import F_operator, TorusEmbedding, TorusProblem, d_omega_angle

logger = logging.getLogger(__name__)

MAX_DIRECT_UNKNOWNS = 12000


# ---------------------------------------------------------------------------
# Grid helpers
# ---------------------------------------------------------------------------

def _d_phi(coeffs: np.ndarray, nu: int) -> np.ndarray:
    """All angle derivatives of an angle-coefficient array; new trailing axis k."""
    band = (coeffs.shape[0] - 1) // 2
    lat = lattice(nu, band).astype(float)
    extra = coeffs.ndim - nu
    lat = lat.reshape(lat.shape[:-1] + (1,) * extra + (nu,))
    return coeffs[..., None] * 1j * lat


def _to_grid(coeffs: np.ndarray, nu: int, m: int) -> np.ndarray:
    values = phi_to_grid(coeffs, nu, m)
    return values.reshape((-1,) + values.shape[nu:])


def _to_coeffs(values: np.ndarray, nu: int, m: int, band: int) -> np.ndarray:
    return phi_from_grid(values.reshape((m,) * nu + values.shape[1:]), nu, band)


def _center(nu: int, band: int) -> Tuple[int, ...]:
    return (band,) * nu


# ---------------------------------------------------------------------------
# Isotropic correction
# ---------------------------------------------------------------------------

@dataclass
class IsotropyData:
    """Pull-back one-form coefficients a_k and the defect A_kj = d_k a_j - d_j a_k (angle coefficients)."""
    a: np.ndarray
    A: np.ndarray

    def defect(self) -> float:
        return float(np.max(np.abs(self.A), initial=0.0))


def isotropy_data(problem: TorusProblem, emb: TorusEmbedding) -> IsotropyData:
    """a_k = -([d theta0]^T y0)_k + (d_k z0, d_x^-1 z0) / 2."""
    nu, band, n = problem.nu, emb.n_phi, emb.n_x
    m = problem.grid_size()
    normal = problem.normal
    dtheta = np.eye(nu) + _to_grid(_d_phi(emb.theta, nu), nu, m).real
    y = _to_grid(emb.y, nu, m).real
    zc = emb.z.coeffs[..., n + normal]
    z = _to_grid(zc, nu, m)
    dz = _to_grid(_d_phi(zc, nu), nu, m)
    neg = normal_neg_index(normal)
    inv_z = z / (1j * normal)
    a = -np.einsum("bik,bi->bk", dtheta, y)
    a = a + 0.5 * np.einsum("bak,ba->bk", dz, inv_z[:, neg]).real
    a_c = _to_coeffs(a, nu, m, band)
    da = _d_phi(a_c, nu)
    # A[..., k, j] = d_k a_j - d_j a_k
    A = np.swapaxes(da, -1, -2) - da
    return IsotropyData(a_c, A)


def isotropic_correction(problem: TorusProblem, emb: TorusEmbedding) -> Tuple[TorusEmbedding, IsotropyData]:
    """y_delta = y0 + [d theta0]^-T rho with rho_j = Lap^-1 sum_k d_k A_kj; Theta, z, zeta unchanged."""
    nu, band = problem.nu, emb.n_phi
    m = problem.grid_size()
    data = isotropy_data(problem, emb)
    lat = lattice(nu, band).astype(float)
    lap = -np.sum(lat ** 2, axis=-1)
    lap[_center(nu, band)] = 1.0
    div = np.einsum("...kj,...k->...j", data.A, 1j * lat)
    rho = div / lap[..., None]
    rho[_center(nu, band)] = 0.0
    dtheta = np.eye(nu) + _to_grid(_d_phi(emb.theta, nu), nu, m).real
    cond = np.linalg.cond(dtheta)
    if not np.all(np.isfinite(cond)) or np.max(cond) > COND_LIMIT:
        raise NumericalFailureError("d_phi theta0 is singular on the angle grid", {"max_cond": float(np.max(cond))})
    rho_grid = _to_grid(rho, nu, m).real
    shift = np.linalg.solve(np.swapaxes(dtheta, -1, -2), rho_grid[..., None])[..., 0]
    y_delta = emb.y + _to_coeffs(shift, nu, m, band)
    y_delta = 0.5 * (y_delta + np.conj(y_delta[(slice(None, None, -1),) * nu]))
    return TorusEmbedding(emb.theta, y_delta, emb.z, emb.zeta), data


def normal_neg_index(normal: np.ndarray) -> np.ndarray:
    """Position of -j for every j of a symmetric mode list."""
    lookup = {int(j): a for a, j in enumerate(normal)}
    return np.array([lookup[-int(j)] for j in normal])


# ---------------------------------------------------------------------------
# The symplectic chart G_delta
# ---------------------------------------------------------------------------

class ChartGeometry:
    """d_phi theta0, d_phi y_delta, d_phi z0 and the blocks L1, L2 of DG_delta on the angle grid.

    Normal-direction vectors are coefficient vectors over ``problem.normal``.
    """

    def __init__(self, problem: TorusProblem, emb: TorusEmbedding):
        self.problem = problem
        self.embedding = emb
        nu, n = problem.nu, emb.n_x
        self.nu = nu
        self.m = problem.grid_size()
        self.band = emb.n_phi
        self.normal = problem.normal
        self.neg = normal_neg_index(self.normal)
        self.inv_ij = 1.0 / (1j * self.normal)
        zc = emb.z.coeffs[..., n + self.normal]
        self.dtheta = np.eye(nu) + _to_grid(_d_phi(emb.theta, nu), nu, self.m).real
        self.dtheta_inv = np.linalg.inv(self.dtheta)
        self.dy = _to_grid(_d_phi(emb.y, nu), nu, self.m).real
        # dz[b, k, a]: d_k z0 at grid point b, mode a
        self.dz = np.swapaxes(_to_grid(_d_phi(zc, nu), nu, self.m), -1, -2)
        # L1 = [d theta0]^-T ; L2 w = [d theta0]^-T (d_phi z0)^T d_x^-1 w
        self.l1 = np.swapaxes(self.dtheta_inv, -1, -2)
        self.l2 = self.l1 @ (self.dz[:, :, self.neg] * self.inv_ij)
        self.l2t = self.transpose_to_normal(self.l2)

    def transpose_to_normal(self, mat: np.ndarray) -> np.ndarray:
        """Pairing transpose of a map normal -> R^nu: (M^T c)_a = sum_i c_i M[i, -a]."""
        return np.swapaxes(mat[..., self.neg], -1, -2)

    def forward(self, psi: np.ndarray, eta: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, ...]:
        """DG_delta(phi, 0, 0) on grid samples: (theta, y, z) increments."""
        theta = np.einsum("bik,bk->bi", self.dtheta, psi)
        y = (np.einsum("bik,bk->bi", self.dy, psi) + np.einsum("bik,bk->bi", self.l1, eta)
             + np.einsum("bia,ba->bi", self.l2, w)).real
        z = np.einsum("bka,bk->ba", self.dz, psi) + w
        return theta, y, z

    def inverse(self, theta: np.ndarray, y: np.ndarray, z: np.ndarray) -> Tuple[np.ndarray, ...]:
        """DG_delta(phi, 0, 0)^-1 on grid samples: (psi, eta, w)."""
        psi = np.einsum("bik,bk->bi", self.dtheta_inv, theta)
        w = z - np.einsum("bka,bk->ba", self.dz, psi)
        rest = y - np.einsum("bik,bk->bi", self.dy, psi) - np.einsum("bia,ba->bi", self.l2, w).real
        eta = np.einsum("bki,bk->bi", self.dtheta, rest)
        return psi, eta, w

    def symplectic_defect(self, pairs: int = 3, seed: int = 0) -> float:
        """max |W(DG a, DG b) - W(a, b)| over random real tangent pairs at every grid point.

        Vanishes up to round-off when the embedding is isotropic.
        """
        rng = np.random.default_rng(seed)
        points, k = self.dtheta.shape[0], len(self.normal)

        def tangent() -> Tuple[np.ndarray, ...]:
            raw = rng.normal(size=(points, k)) + 1j * rng.normal(size=(points, k))
            w = 0.5 * (raw + np.conj(raw[:, self.neg]))
            return rng.normal(size=(points, self.nu)), rng.normal(size=(points, self.nu)), w

        worst = 0.0
        for _ in range(pairs):
            a, b = tangent(), tangent()
            pulled = symplectic_form_W(self.normal, self.forward(*a), self.forward(*b))
            worst = max(worst, float(np.max(np.abs(pulled - symplectic_form_W(self.normal, a, b)))))
        return worst

    def chart(self, psi: Sequence[float], eta: Sequence[float], w: np.ndarray) -> Tuple[np.ndarray, ...]:
        """G_delta(psi, eta, w) at a single point; w over the normal modes."""
        emb, nu = self.embedding, self.nu
        psi = np.asarray(psi, dtype=float)
        phase = np.exp(1j * (lattice(nu, self.band) @ psi))
        point = lambda c: np.sum(c * phase.reshape(phase.shape + (1,) * (c.ndim - nu)), axis=tuple(range(nu)))
        n = emb.n_x
        zc = emb.z.coeffs[..., n + self.normal]
        dth = np.eye(nu) + point(_d_phi(emb.theta, nu)).real
        dz = point(_d_phi(zc, nu)).T
        l1 = np.linalg.inv(dth).T
        l2 = l1 @ (dz[:, self.neg] * self.inv_ij)
        theta = psi + point(emb.theta).real
        y = point(emb.y).real + l1 @ np.asarray(eta, dtype=float) + (l2 @ np.asarray(w)).real
        z = point(zc) + np.asarray(w)
        return theta, y, z


def symplectic_form_W(normal: np.ndarray, u: Tuple[np.ndarray, ...], v: Tuple[np.ndarray, ...]) -> np.ndarray:
    """W(u, v) = u_theta . v_y - u_y . v_theta + (d_x^-1 u_z, v_z); batch axes leading."""
    neg = normal_neg_index(normal)
    inner = np.sum(u[2] / (1j * normal) * v[2][..., neg], axis=-1)
    return np.sum(u[0] * v[1], axis=-1) - np.sum(u[1] * v[0], axis=-1) + inner.real



# ---------------------------------------------------------------------------
# Taylor coefficients of K = H_eps o G_delta
# ---------------------------------------------------------------------------

@dataclass
class KTaylor:
    """Pointwise Taylor blocks at (psi, 0, 0); every array carries the flattened grid axis first."""
    geometry: ChartGeometry
    K00: np.ndarray
    K10: np.ndarray
    K01: np.ndarray
    K20: np.ndarray
    K11T: np.ndarray
    K02: np.ndarray

    @property
    def K11(self) -> np.ndarray:
        """K11 as a map R^nu -> normal fields, the pairing transpose of K11T."""
        return self.geometry.transpose_to_normal(self.K11T)

    def operator(self) -> OperatorGrid:
        """M with L_omega = D_omega + M: M = -d_x K02 on the normal modes."""
        g = self.geometry
        values = -(1j * g.normal)[:, None] * self.K02
        return OperatorGrid(g.nu, g.normal, values.reshape((g.m,) * g.nu + values.shape[1:]))

    def symmetry_defect(self) -> float:
        """Worst relative asymmetry of K20 and of K02 under the pairing."""
        neg = self.geometry.neg
        k02t = np.swapaxes(self.K02[:, neg[:, None], neg[None, :]], -1, -2)
        scale = max(float(np.max(np.abs(self.K02), initial=0.0)), 1e-300)
        d02 = float(np.max(np.abs(self.K02 - k02t), initial=0.0)) / scale
        s20 = max(float(np.max(np.abs(self.K20), initial=0.0)), 1e-300)
        d20 = float(np.max(np.abs(self.K20 - np.swapaxes(self.K20, -1, -2)), initial=0.0)) / s20
        return max(d02, d20)


def k_taylor(problem: TorusProblem, geometry: ChartGeometry, with_value: bool = True) -> KTaylor:
    emb = geometry.embedding
    state = problem.sample(emb, geometry.m)
    _, dy, gz = problem.gradients(state.theta, state.y, state.z)
    hyy, hyz, hzz = problem.hessians(state.theta, state.y, state.z)
    g = geometry
    n = emb.n_x
    hyz_mat = hyz[..., g.neg]
    k20 = g.dtheta_inv @ hyy @ g.l1
    k11t = g.dtheta_inv @ (hyy @ g.l2 + hyz_mat)
    k02 = hzz + g.l2t @ hyy @ g.l2 + g.l2t @ hyz_mat + np.swapaxes(hyz, -1, -2) @ g.l2
    k10 = np.einsum("bik,bk->bi", g.dtheta_inv, dy)
    k01 = gz[..., n + g.normal] + np.einsum("bai,bi->ba", g.l2t, dy)
    k00 = problem.value(state.theta, state.y, state.z) if with_value else np.zeros(state.theta.shape[0])
    return KTaylor(g, k00, k10, k01, k20, k11t, k02)


# ---------------------------------------------------------------------------
# Linear solvers for L_omega
# ---------------------------------------------------------------------------

class LinearInverse:
    """Interface: solve L_omega w = g on angle-coefficient arrays of shape box + (k,)."""

    name = "abstract"

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def diagnostics(self) -> Dict[str, float]:
        return {}


def apply_L_omega(op: OperatorGrid, omega: Sequence[float], w: np.ndarray) -> np.ndarray:
    """Galerkin action of D_omega + M on angle coefficients (exact for the grid's band)."""
    nu, m = op.nu, op.m
    band = (w.shape[0] - 1) // 2
    if m < 4 * band + 1:
        raise DomainError("angle grid too coarse for the Galerkin product")
    mw = op.apply(phi_to_grid(w, nu, m))
    return d_omega_angle(w, omega, nu) + phi_from_grid(mw, nu, band)


class DirectInverse(LinearInverse):
    """Dense Galerkin solve of D_omega + M on the truncated box."""

    name = "direct"

    def __init__(self, op: OperatorGrid, omega: Sequence[float], band: int):
        self.logger = logging.getLogger(__name__)
        self.nu = op.nu
        self.band = band
        k = op.size
        size = (2 * band + 1) ** self.nu * k
        if size > MAX_DIRECT_UNKNOWNS:
            raise NumericalFailureError("direct Galerkin system too large, use the reduced solver",
                                        {"unknowns": size, "limit": MAX_DIRECT_UNKNOWNS})
        spectrum = phi_from_grid(op.values, self.nu, 2 * band)
        lvec = lattice(self.nu, band).reshape(-1, self.nu)
        diff = lvec[:, None, :] - lvec[None, :, :] + 2 * band
        blocks = spectrum[tuple(diff[..., i] for i in range(self.nu))]
        p = lvec.shape[0]
        matrix = np.transpose(blocks, (0, 2, 1, 3)).reshape(p * k, p * k)
        wl = (lvec @ np.asarray(omega, dtype=float)).repeat(k)
        matrix[np.diag_indices(p * k)] += 1j * wl
        self.size = p * k
        self.k = k
        self.cond = float(np.linalg.cond(matrix)) if self.size <= 3000 else float("nan")
        if np.isfinite(self.cond) and self.cond > COND_LIMIT:
            raise NumericalFailureError("Galerkin matrix of L_omega is near singular", {"cond": self.cond})
        self._lu = lu_factor(matrix)
        self.logger.debug(f"direct inverse factorized: {self.size} unknowns, cond {self.cond:.3e}")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        shape = rhs.shape
        out = lu_solve(self._lu, rhs.reshape(-1))
        return out.reshape(shape)

    def diagnostics(self) -> Dict[str, float]:
        return {"unknowns": self.size, "cond": self.cond}


SolverFactory = Callable[[KTaylor, Sequence[float]], LinearInverse]


def direct_factory(taylor: KTaylor, omega: Sequence[float]) -> LinearInverse:
    return DirectInverse(taylor.operator(), omega, taylor.geometry.band)


# ---------------------------------------------------------------------------
# Triangular solve and T0
# ---------------------------------------------------------------------------

@dataclass
class DSolution:
    psi: np.ndarray
    eta: np.ndarray
    w: np.ndarray
    zeta: np.ndarray
    cond_M1: float = 0.0


class ApproximateInverse:
    """T0 = DG_delta o D^-1 o DG_delta^-1 built at an embedding i0."""

    def __init__(self, problem: TorusProblem, emb: TorusEmbedding, omega: Sequence[float],
                 solver_factory: Optional[SolverFactory] = None):
        self.logger = logging.getLogger(__name__)
        self.problem = problem
        self.omega = np.asarray(omega, dtype=float)
        self.embedding = emb
        self.corrected, self.isotropy = isotropic_correction(problem, emb)
        self.geometry = ChartGeometry(problem, self.corrected)
        self.taylor = k_taylor(problem, self.geometry, with_value=False)
        factory = solver_factory or direct_factory
        self.linv = factory(self.taylor, self.omega)
        self.nu = problem.nu
        self.band = emb.n_phi
        self.m = self.geometry.m
        self.last_cond = 0.0
        self.chart_defect = self.geometry.symplectic_defect()
        self.logger.debug(f"approximate inverse ready: isotropy defect {self.isotropy.defect():.3e}, "
                          f"chart symplectic defect {self.chart_defect:.3e}, solver {self.linv.name}")

    # -- pointwise products --------------------------------------------------------

    def _mul(self, mat: np.ndarray, coeffs: np.ndarray, real: bool = False) -> np.ndarray:
        """Angle coefficients of mat(phi) @ v(phi)."""
        v = _to_grid(coeffs, self.nu, self.m)
        if real:
            v = v.real
        out = np.einsum("bij,bj->bi", mat, v)
        return _to_coeffs(out, self.nu, self.m, self.band)

    def _dx(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs * 1j * self.geometry.normal

    def _d_omega_inv(self, coeffs: np.ndarray) -> np.ndarray:
        params = self.problem.params
        return d_omega_inv_coeffs(coeffs, self.omega, self.band, params.gamma, params.tau)

    # -- the triangular system -----------------------------------------------------------

    def apply_D(self, sol: DSolution) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """D[psi, eta, w, zeta] (forward map, used to check solves)."""
        t, g = self.taylor, self.geometry
        g1 = d_omega_angle(sol.psi, self.omega, self.nu) - self._mul(t.K20, sol.eta, True) \
            - self._mul(t.K11T, sol.w)
        zeta_term = _to_coeffs(np.einsum("bki,k->bi", g.dtheta, sol.zeta), self.nu, self.m, self.band)
        g2 = d_omega_angle(sol.eta, self.omega, self.nu) + zeta_term
        g3 = apply_L_omega(t.operator(), self.omega, sol.w) - self._dx(self._mul(t.K11, sol.eta, True))
        return g1, g2, g3

    def _eta_chain(self, eta: np.ndarray, g1: np.ndarray, g3: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        t = self.taylor
        w = self.linv.solve(g3 + self._dx(self._mul(t.K11, eta, True)))
        rhs = g1 + self._mul(t.K20, eta, True) + self._mul(t.K11T, w)
        return w, rhs

    def solve_D(self, g1: np.ndarray, g2: np.ndarray, g3: np.ndarray) -> DSolution:
        nu, band, g = self.nu, self.band, self.geometry
        center = _center(nu, band)
        zeta = g2[center].real.copy()
        zeta_term = _to_coeffs(np.einsum("bki,k->bi", g.dtheta, zeta), nu, self.m, band)
        free = g2 - zeta_term
        free[center] = 0.0
        eta0 = self._d_omega_inv(free)
        w0, rhs0 = self._eta_chain(eta0, g1, g3)
        zero1, zero3 = np.zeros_like(g1), np.zeros_like(g3)
        columns_w, columns_rhs = [], []
        for i in range(nu):
            c = np.zeros_like(eta0)
            c[center + (i,)] = 1.0
            w_i, rhs_i = self._eta_chain(c, zero1, zero3)
            columns_w.append(w_i)
            columns_rhs.append(rhs_i)
        avg_m1 = np.stack([col[center].real for col in columns_rhs], axis=-1)
        cond = float(np.linalg.cond(avg_m1))
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise NumericalFailureError("averaged twist block <M1> is near singular", {"cond_M1": cond})
        c = -np.linalg.solve(avg_m1, rhs0[center].real)
        eta = eta0.copy()
        eta[center] += c
        w = w0 + sum(ci * col for ci, col in zip(c, columns_w))
        rhs = rhs0 + sum(ci * col for ci, col in zip(c, columns_rhs))
        rhs[center] = 0.0
        psi = self._d_omega_inv(rhs)
        self.last_cond = cond
        return DSolution(psi, eta, w, zeta, cond)

    # -- T0 ----------------------------------------------------------------------------------

    def apply(self, residual: TorusEmbedding) -> TorusEmbedding:
        """T0 g for an embedding-shaped g; returns the correction (delta i, delta zeta)."""
        nu, n, g = self.nu, residual.n_x, self.geometry
        m, band = self.m, self.band
        theta = _to_grid(residual.theta, nu, m).real
        y = _to_grid(residual.y, nu, m).real
        z = _to_grid(residual.z.coeffs[..., n + g.normal], nu, m)
        psi, eta, w = g.inverse(theta, y, z)
        sol = self.solve_D(_to_coeffs(psi, nu, m, band), _to_coeffs(eta, nu, m, band),
                           _to_coeffs(w, nu, m, band))
        d_theta, d_y, d_z = g.forward(_to_grid(sol.psi, nu, m).real, _to_grid(sol.eta, nu, m).real,
                                      _to_grid(sol.w, nu, m))
        z_full = np.zeros(residual.z.coeffs.shape, dtype=complex)
        z_full[..., n + g.normal] = _to_coeffs(d_z, nu, m, band)
        theta_c = _real_angle(_to_coeffs(d_theta, nu, m, band), nu)
        y_c = _real_angle(_to_coeffs(d_y, nu, m, band), nu)
        return TorusEmbedding(theta_c, y_c, residual.z.with_coeffs(_real_field(z_full, nu)), sol.zeta)


def _real_angle(coeffs: np.ndarray, nu: int) -> np.ndarray:
    return 0.5 * (coeffs + np.conj(coeffs[(slice(None, None, -1),) * nu]))


def _real_field(coeffs: np.ndarray, nu: int) -> np.ndarray:
    return 0.5 * (coeffs + np.conj(coeffs[(slice(None, None, -1),) * (nu + 1)]))


# ---------------------------------------------------------------------------
# Defect of the approximate inverse
# ---------------------------------------------------------------------------

def directional_derivative(problem: TorusProblem, emb: TorusEmbedding, omega: Sequence[float],
                           direction: TorusEmbedding, step: float = 1e-6) -> TorusEmbedding:
    """d_(i, zeta) F(i) [direction] by a fourth-order central difference."""
    scale = step / max(direction.norm(0.0), 1e-300)
    f = lambda t: F_operator(problem, emb + direction * (t * scale), omega)
    d1 = (f(1.0) - f(-1.0)) * (1.0 / (2.0 * scale))
    d2 = (f(2.0) - f(-2.0)) * (1.0 / (4.0 * scale))
    return d1 * (4.0 / 3.0) - d2 * (1.0 / 3.0)


def approx_inverse_defect(problem: TorusProblem, emb: TorusEmbedding, omega: Sequence[float],
                          g: TorusEmbedding, inverse: Optional[ApproximateInverse] = None,
                          mu_num: Optional[float] = None) -> float:
    """||(dF o T0 - I) g||_s0 / ||g||_(s0 + mu_num)."""
    inverse = inverse or ApproximateInverse(problem, emb, omega)
    s0 = s0_for(problem.nu)
    mu_num = problem.params.tau + 2 if mu_num is None else mu_num
    correction = inverse.apply(g)
    image = directional_derivative(problem, emb, omega, correction)
    defect = (image - g).with_zeta(np.zeros(problem.nu))
    return defect.norm(s0) / max(g.with_zeta(np.zeros(problem.nu)).norm(s0 + mu_num), 1e-300)


def neglected_terms(taylor: KTaylor, omega: Sequence[float]) -> float:
    """Size of K10 - omega and K01, the terms dropped from D (zero at a solution)."""
    k10 = float(np.max(np.abs(taylor.K10 - np.asarray(omega)), initial=0.0))
    k01 = float(np.max(np.abs(taylor.K01), initial=0.0))
    return max(k10, k01)
