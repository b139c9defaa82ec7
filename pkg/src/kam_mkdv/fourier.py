"""
Fourier Core

Truncated Fourier representation of real periodic fields on T^(nu+1).
A field is stored as a dense, centered coefficient array of shape
(2*n_phi+1,)*nu + (2*n_x+1,): index [l_1+n_phi, ..., l_nu+n_phi, j+n_x].
Products are evaluated on dealiased collocation grids through the FFT.
"""

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import fftconvolve

from .config import REALITY_TOL
from .errors import DomainError, ExcisionError, LipschitzUndefinedError, ResonantWitness

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Index and grid helpers
# ---------------------------------------------------------------------------

def mode_range(band: int) -> np.ndarray:
    return np.arange(-band, band + 1)


def grid_size(band: int, degree: int = 1) -> int:
    """Odd collocation grid size that resolves products of `degree` band-limited factors."""
    m = 3 * (2 * band + 1) if degree <= 3 else (degree + 1) * (2 * band + 1)
    return m if m % 2 == 1 else m + 1


def _wrap(band: int, m: int) -> np.ndarray:
    if m < 2 * band + 1:
        raise DomainError(f"grid of {m} points cannot hold band {band}")
    return mode_range(band) % m


def phi_to_grid(coeffs: np.ndarray, nu: int, m: int) -> np.ndarray:
    """Evaluate the leading `nu` axes of a centered coefficient array on an m^nu grid."""
    coeffs = np.asarray(coeffs, dtype=complex)
    if nu == 0:
        return coeffs.copy()
    band = (coeffs.shape[0] - 1) // 2
    full = np.zeros((m,) * nu + coeffs.shape[nu:], dtype=complex)
    full[np.ix_(*([_wrap(band, m)] * nu))] = coeffs
    return np.fft.ifftn(full, axes=tuple(range(nu))) * m ** nu


def phi_from_grid(values: np.ndarray, nu: int, band: int) -> np.ndarray:
    """Centered coefficients (band-truncated) of grid values along the leading `nu` axes."""
    values = np.asarray(values, dtype=complex)
    if nu == 0:
        return values.copy()
    m = values.shape[0]
    spectrum = np.fft.fftn(values, axes=tuple(range(nu))) / m ** nu
    return spectrum[np.ix_(*([_wrap(band, m)] * nu))]


def x_to_grid(coeffs: np.ndarray, m: int) -> np.ndarray:
    """Evaluate the last axis (x modes) on an m-point grid."""
    coeffs = np.asarray(coeffs, dtype=complex)
    band = (coeffs.shape[-1] - 1) // 2
    full = np.zeros(coeffs.shape[:-1] + (m,), dtype=complex)
    full[..., _wrap(band, m)] = coeffs
    return np.fft.ifft(full, axis=-1) * m


def x_from_grid(values: np.ndarray, band: int) -> np.ndarray:
    values = np.asarray(values, dtype=complex)
    m = values.shape[-1]
    spectrum = np.fft.fft(values, axis=-1) / m
    return spectrum[..., _wrap(band, m)]


def phi_points(nu: int, m: int) -> np.ndarray:
    """Grid points as an array of shape (m,)*nu + (nu,)."""
    axis = 2 * np.pi * np.arange(m) / m
    if nu == 0:
        return np.zeros((0,))
    mesh = np.meshgrid(*([axis] * nu), indexing="ij")
    return np.stack(mesh, axis=-1)


def x_points(m: int) -> np.ndarray:
    return 2 * np.pi * np.arange(m) / m


def lattice(nu: int, band: int) -> np.ndarray:
    """Integer vectors l of the angle box, shape (2*band+1,)*nu + (nu,)."""
    if nu == 0:
        return np.zeros((0,), dtype=int)
    mesh = np.meshgrid(*([mode_range(band)] * nu), indexing="ij")
    return np.stack(mesh, axis=-1)


def omega_dot_l(omega: Sequence[float], band: int) -> np.ndarray:
    """Array of omega . l over the angle box."""
    omega = np.asarray(omega, dtype=float)
    nu = omega.size
    if nu == 0:
        return np.zeros(())
    return lattice(nu, band) @ omega


def japanese(nu: int, n_phi: int, n_x: int) -> np.ndarray:
    """Weights <l, j> = sqrt(1 + |l|^2 + j^2) over the box."""
    j = mode_range(n_x)
    if nu == 0:
        return np.sqrt(1.0 + j ** 2)
    l2 = np.sum(lattice(nu, n_phi) ** 2, axis=-1)
    return np.sqrt(1.0 + l2[..., None] + j ** 2)


# ---------------------------------------------------------------------------
# TorusField
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TorusField:
    """Real field on T^(nu+1) stored as truncated Fourier coefficients.

    With ``phase_space=True`` the j = 0 modes are zero (zero x-average).
    Products and coefficient functions use ``phase_space=False``.
    """
    nu: int
    n_phi: int
    n_x: int
    coeffs: np.ndarray
    phase_space: bool = True

    def __post_init__(self):
        expected = (2 * self.n_phi + 1,) * self.nu + (2 * self.n_x + 1,)
        if self.coeffs.shape != expected:
            raise DomainError(f"coefficient array has shape {self.coeffs.shape}, expected {expected}")
        if self.phase_space and np.any(self.coeffs[..., self.n_x] != 0):
            raise DomainError("phase-space field carries a nonzero x-average")

    # -- constructors -------------------------------------------------------

    @classmethod
    def zeros(cls, nu: int, n_phi: int, n_x: int, phase_space: bool = True) -> "TorusField":
        shape = (2 * n_phi + 1,) * nu + (2 * n_x + 1,)
        return cls(nu, n_phi, n_x, np.zeros(shape, dtype=complex), phase_space)

    @classmethod
    def from_coeffs(cls, nu: int, n_phi: int, n_x: int, coeffs: np.ndarray,
                    phase_space: bool = True) -> "TorusField":
        coeffs = np.array(coeffs, dtype=complex)
        if phase_space:
            coeffs[..., n_x] = 0.0
        return cls(nu, n_phi, n_x, coeffs, phase_space)

    @classmethod
    def from_modes(cls, nu: int, n_phi: int, n_x: int, modes: Dict[Tuple[int, ...], complex],
                   phase_space: bool = True) -> "TorusField":
        """Build a real field from {(l..., j): c}; conjugate partners are filled in."""
        out = cls.zeros(nu, n_phi, n_x, phase_space=False).coeffs
        for key, value in modes.items():
            l, j = tuple(key[:-1]), key[-1]
            idx = tuple(li + n_phi for li in l) + (j + n_x,)
            cidx = tuple(-li + n_phi for li in l) + (-j + n_x,)
            out[idx] = value
            out[cidx] = np.conj(value)
        return cls.from_coeffs(nu, n_phi, n_x, out, phase_space)

    @classmethod
    def from_grid(cls, values: np.ndarray, nu: int, n_phi: int, n_x: int,
                  phase_space: bool = True) -> "TorusField":
        """Project grid samples, shape (m_phi,)*nu + (m_x,), onto the box."""
        coeffs = x_from_grid(phi_from_grid(values, nu, n_phi), n_x)
        return cls.from_coeffs(nu, n_phi, n_x, coeffs, phase_space)

    # -- evaluation ---------------------------------------------------------

    @property
    def box(self) -> Tuple[int, int]:
        return self.n_phi, self.n_x

    def default_grid(self, degree: int = 1) -> Tuple[int, int]:
        return grid_size(self.n_phi, degree), grid_size(self.n_x, degree)

    def to_grid(self, m_phi: Optional[int] = None, m_x: Optional[int] = None) -> np.ndarray:
        """Real samples on the (m_phi,)*nu x m_x collocation grid."""
        d_phi, d_x = self.default_grid()
        m_phi = d_phi if m_phi is None else m_phi
        m_x = d_x if m_x is None else m_x
        return x_to_grid(phi_to_grid(self.coeffs, self.nu, m_phi), m_x).real

    def phi_grid_modes(self, m_phi: int) -> np.ndarray:
        """Mixed representation: angle grid x spatial coefficients."""
        return phi_to_grid(self.coeffs, self.nu, m_phi)

    def coefficient(self, l: Sequence[int], j: int) -> complex:
        idx = tuple(li + self.n_phi for li in l) + (j + self.n_x,)
        return complex(self.coeffs[idx])

    # -- algebra ------------------------------------------------------------

    def with_coeffs(self, coeffs: np.ndarray, phase_space: Optional[bool] = None) -> "TorusField":
        flag = self.phase_space if phase_space is None else phase_space
        return TorusField.from_coeffs(self.nu, self.n_phi, self.n_x, coeffs, flag)

    def _aligned(self, other: "TorusField") -> "TorusField":
        if other.nu != self.nu:
            raise DomainError("fields live on tori of different dimension")
        if other.box != self.box:
            other = resize(other, self.n_phi, self.n_x)
        return other

    def __add__(self, other: "TorusField") -> "TorusField":
        other = self._aligned(other)
        return self.with_coeffs(self.coeffs + other.coeffs, self.phase_space and other.phase_space)

    def __sub__(self, other: "TorusField") -> "TorusField":
        other = self._aligned(other)
        return self.with_coeffs(self.coeffs - other.coeffs, self.phase_space and other.phase_space)

    def __neg__(self) -> "TorusField":
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, scalar: float) -> "TorusField":
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def norm(self, s: float = 0.0) -> float:
        return sobolev_norm(self, s)

    def is_real(self, tol: float = REALITY_TOL) -> bool:
        return reality_defect(self) <= tol * max(1.0, float(np.max(np.abs(self.coeffs), initial=0.0)))

    def pi0(self) -> "TorusField":
        """Remove the x-average (return to the phase space)."""
        return self.with_coeffs(self.coeffs, phase_space=True)


def reality_defect(u: TorusField) -> float:
    """max |c(l,j) - conj(c(-l,-j))|."""
    flipped = u.coeffs[(slice(None, None, -1),) * (u.nu + 1)]
    return float(np.max(np.abs(u.coeffs - np.conj(flipped)), initial=0.0))


def enforce_reality(u: TorusField) -> TorusField:
    flipped = u.coeffs[(slice(None, None, -1),) * (u.nu + 1)]
    return u.with_coeffs(0.5 * (u.coeffs + np.conj(flipped)))


def resize(u: TorusField, n_phi: int, n_x: int) -> TorusField:
    """Zero-pad or truncate the coefficient box."""
    out = TorusField.zeros(u.nu, n_phi, n_x, phase_space=False).coeffs
    kp, kx = min(n_phi, u.n_phi), min(n_x, u.n_x)
    src = tuple(slice(u.n_phi - kp, u.n_phi + kp + 1) for _ in range(u.nu)) + (slice(u.n_x - kx, u.n_x + kx + 1),)
    dst = tuple(slice(n_phi - kp, n_phi + kp + 1) for _ in range(u.nu)) + (slice(n_x - kx, n_x + kx + 1),)
    out[dst] = u.coeffs[src]
    return TorusField.from_coeffs(u.nu, n_phi, n_x, out, u.phase_space)


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

def sobolev_norm(u: TorusField, s: float) -> float:
    """(sum <l,j>^(2s) |u_(l,j)|^2)^(1/2)."""
    if s < 0:
        raise DomainError(f"Sobolev index must be non-negative, got {s}")
    w = japanese(u.nu, u.n_phi, u.n_x)
    return float(np.sqrt(np.sum(w ** (2 * s) * np.abs(u.coeffs) ** 2)))


def angle_norm(coeffs: np.ndarray, nu: int, s: float) -> float:
    """Sobolev norm of a stack of angle functions, coefficient axes first, components last."""
    band = (coeffs.shape[0] - 1) // 2 if nu else 0
    if nu == 0:
        return float(np.linalg.norm(coeffs))
    l2 = np.sum(lattice(nu, band) ** 2, axis=-1)
    w = (1.0 + l2) ** s
    extra = coeffs.ndim - nu
    w = w.reshape(w.shape + (1,) * extra)
    return float(np.sqrt(np.sum(w * np.abs(coeffs) ** 2)))


# ---------------------------------------------------------------------------
# Projectors and derivatives
# ---------------------------------------------------------------------------

def site_mask(sites_full: Iterable[int], n_x: int) -> np.ndarray:
    mask = np.zeros(2 * n_x + 1, dtype=bool)
    for j in sites_full:
        if abs(j) <= n_x:
            mask[j + n_x] = True
    return mask


def project(u: TorusField, part: str, sites_full: Iterable[int]) -> TorusField:
    """Orthogonal projection onto the tangential modes S ('S') or their complement ('S_perp')."""
    mask = site_mask(sites_full, u.n_x)
    if part == "S":
        keep = mask
    elif part == "S_perp":
        keep = ~mask
    else:
        raise DomainError(f"unknown projection part {part!r}")
    return u.with_coeffs(u.coeffs * keep)


def truncate(u: TorusField, n: float) -> TorusField:
    """Keep the modes with <l,j> <= n."""
    w = japanese(u.nu, u.n_phi, u.n_x)
    return u.with_coeffs(np.where(w <= n, u.coeffs, 0.0))


def dx(u: TorusField, k: int = 1) -> TorusField:
    """Multiply by (ij)^k; negative k applies the periodic primitive |k| times."""
    if k < 0:
        out = u
        for _ in range(-k):
            out = dx_inv(out)
        return out
    j = mode_range(u.n_x)
    return u.with_coeffs(u.coeffs * (1j * j) ** k)


def dx_inv(u: TorusField) -> TorusField:
    """Zero-average periodic primitive."""
    if not u.phase_space and np.any(np.abs(u.coeffs[..., u.n_x]) > REALITY_TOL):
        raise DomainError("dx_inv requires a field with zero x-average")
    j = mode_range(u.n_x).astype(complex)
    j[u.n_x] = 1.0
    inv = 1.0 / (1j * j)
    inv[u.n_x] = 0.0
    return TorusField.from_coeffs(u.nu, u.n_phi, u.n_x, u.coeffs * inv, True)


def x_average(u: TorusField) -> np.ndarray:
    """Angle-dependent x-average, as centered angle coefficients."""
    return u.coeffs[..., u.n_x].copy()


def d_omega(u: TorusField, omega: Sequence[float]) -> TorusField:
    """omega . d_phi acting diagonally as i (omega . l)."""
    wl = omega_dot_l(omega, u.n_phi)
    return u.with_coeffs(u.coeffs * (1j * wl)[..., None])


def diophantine_violations(omega: Sequence[float], band: int, gamma: float, tau: float,
                           factor: float = 1.0) -> List[ResonantWitness]:
    """Lattice points 0 < |l|_inf <= band with |omega . l| < factor * gamma <l>^-tau."""
    omega = np.asarray(omega, dtype=float)
    nu = omega.size
    ls = lattice(nu, band).reshape(-1, nu)
    witnesses = []
    for l in ls:
        if not np.any(l):
            continue
        bound = factor * gamma * (1.0 + float(l @ l)) ** (-tau / 2.0)
        div = abs(float(l @ omega))
        if div < bound:
            witnesses.append(ResonantWitness(l=tuple(int(v) for v in l), j=0, k=0, divisor=div, bound=bound))
    return witnesses


def d_omega_inv_coeffs(coeffs: np.ndarray, omega: Sequence[float], band: int,
                       gamma: Optional[float] = None, tau: Optional[float] = None,
                       atol: float = 1e-9) -> np.ndarray:
    """Inverse of omega . d_phi on coefficient arrays whose leading axes are the angle box.

    The l = 0 slice must vanish. With gamma and tau given, frequencies whose
    small divisors drop below gamma <l>^-tau / 2 are rejected.
    """
    omega = np.asarray(omega, dtype=float)
    nu = omega.size
    coeffs = np.asarray(coeffs, dtype=complex)
    center = (band,) * nu
    scale = max(1.0, float(np.max(np.abs(coeffs), initial=0.0)))
    if np.max(np.abs(coeffs[center]), initial=0.0) > atol * scale:
        raise DomainError("omega . d_phi is only inverted on zero-average data")
    if gamma is not None and tau is not None:
        bad = diophantine_violations(omega, band, gamma, tau, factor=0.5)
        if bad:
            raise ExcisionError("omega fails the diophantine guard of the angle inverse", bad, stage="d_omega_inv")
    wl = omega_dot_l(omega, band)
    denom = 1j * wl
    denom[center] = 1.0
    if np.any(denom == 0.0):
        ls = lattice(nu, band)[denom == 0.0]
        witnesses = [ResonantWitness(l=tuple(int(v) for v in l), j=0, k=0, divisor=0.0, bound=0.0) for l in ls]
        raise ExcisionError("exact resonance omega . l = 0 inside the truncation", witnesses, stage="d_omega_inv")
    extra = coeffs.ndim - nu
    out = coeffs / denom.reshape(denom.shape + (1,) * extra)
    out[center] = 0.0
    return out


def d_omega_inv(u: TorusField, omega: Sequence[float], gamma: Optional[float] = None,
                tau: Optional[float] = None) -> TorusField:
    return u.with_coeffs(d_omega_inv_coeffs(u.coeffs, omega, u.n_phi, gamma, tau))


# ---------------------------------------------------------------------------
# Products
# ---------------------------------------------------------------------------

def convolve(u: TorusField, v: TorusField) -> TorusField:
    """Exact product: the box grows to (n_phi_u + n_phi_v, n_x_u + n_x_v)."""
    if u.nu != v.nu:
        raise DomainError("fields live on tori of different dimension")
    coeffs = fftconvolve(u.coeffs, v.coeffs, mode="full")
    return TorusField.from_coeffs(u.nu, u.n_phi + v.n_phi, u.n_x + v.n_x, coeffs, phase_space=False)


def multiply(fields: Sequence[TorusField], n_phi: Optional[int] = None, n_x: Optional[int] = None,
             phase_space: bool = False) -> TorusField:
    """Exact product of several fields, projected onto the requested box."""
    first = fields[0]
    n_phi = first.n_phi if n_phi is None else n_phi
    n_x = first.n_x if n_x is None else n_x
    product = first
    for f in fields[1:]:
        product = convolve(product, f)
    out = resize(product, n_phi, n_x)
    return out.with_coeffs(out.coeffs, phase_space)


# ---------------------------------------------------------------------------
# Lipschitz norms over parameter samples
# ---------------------------------------------------------------------------

@dataclass
class ParamFamily:
    """Finitely many (omega, payload) samples of a parameter-dependent object."""
    samples: List[Tuple[np.ndarray, Any]]
    gamma: float

    def __post_init__(self):
        if self.gamma <= 0:
            raise DomainError("gamma must be positive")
        omegas = [np.asarray(o, dtype=float) for o, _ in self.samples]
        for a, b in combinations(range(len(omegas)), 2):
            if np.array_equal(omegas[a], omegas[b]):
                raise DomainError("parameter samples must be pairwise distinct", index=(a, b))


def lip_gamma_norm(family: ParamFamily, s: float) -> float:
    """sup_omega ||F(omega)||_s + gamma * max_pairs ||F(w1) - F(w2)||_s / |w1 - w2|."""
    if len(family.samples) < 2:
        raise LipschitzUndefinedError("the Lipschitz part needs at least two parameter samples")
    sup = max(payload.norm(s) for _, payload in family.samples)
    lip = 0.0
    for (w1, f1), (w2, f2) in combinations(family.samples, 2):
        dist = float(np.linalg.norm(np.asarray(w1, dtype=float) - np.asarray(w2, dtype=float)))
        lip = max(lip, (f1 - f2).norm(s) / dist)
    return sup + family.gamma * lip


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def field_to_dict(u: TorusField, atol: float = 0.0) -> Dict[str, Any]:
    """JSON schema {"nu", "box", "phase_space", "entries": [[l..., j, re, im], ...]}."""
    entries = []
    for idx in zip(*np.nonzero(np.abs(u.coeffs) > atol)):
        l = [int(i) - u.n_phi for i in idx[:-1]]
        j = int(idx[-1]) - u.n_x
        c = u.coeffs[idx]
        entries.append(l + [j, float(c.real), float(c.imag)])
    return {"nu": u.nu, "box": [u.n_phi, u.n_x], "phase_space": u.phase_space, "entries": entries}


def field_from_dict(data: Dict[str, Any]) -> TorusField:
    nu = int(data["nu"])
    n_phi, n_x = (int(v) for v in data["box"])
    coeffs = TorusField.zeros(nu, n_phi, n_x, phase_space=False).coeffs
    for entry in data["entries"]:
        l, j, re, im = entry[:nu], int(entry[nu]), entry[nu + 1], entry[nu + 2]
        if max([abs(int(v)) for v in l], default=0) > n_phi or abs(j) > n_x:
            raise DomainError("entry outside the declared box", index=tuple(l) + (j,))
        coeffs[tuple(int(v) + n_phi for v in l) + (j + n_x,)] = re + 1j * im
    u = TorusField.from_coeffs(nu, n_phi, n_x, coeffs, bool(data.get("phase_space", True)))
    if reality_defect(u) > REALITY_TOL * max(1.0, float(np.max(np.abs(coeffs), initial=0.0))):
        raise DomainError("loaded field violates the reality condition")
    return u
