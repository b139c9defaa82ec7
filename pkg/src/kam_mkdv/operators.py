"""
Linear operators on normal-direction fields.

DecayOperator stores the Toeplitz-in-time entries A_j^j'(l) on the full
spatial range -n_x..n_x and carries the s-decay norm. OperatorGrid stores the
same kind of operator pointwise on a uniform angle grid, restricted to an
explicit list of spatial modes; the reduction chain works in this form since
conjugations, exponentials and inverses are then plain batched matrix algebra.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .config import REALITY_TOL, SERIES_TOL
from .errors import DomainError, NumericalFailureError
from .fourier import (
    TorusField,
    lattice,
    mode_range,
    omega_dot_l,
    phi_from_grid,
    phi_to_grid,
)

logger = logging.getLogger(__name__)


def series_expm(values: np.ndarray, tol: float = SERIES_TOL, max_terms: int = 200) -> np.ndarray:
    """Batched matrix exponential by the truncated series with scaling and squaring.

    Terms are summed until the largest entry of a term drops below
    tol times the largest entry of the partial sum.
    """
    values = np.asarray(values, dtype=complex)
    k = values.shape[-1]
    eye = np.broadcast_to(np.eye(k, dtype=complex), values.shape)
    norm = float(np.max(np.sum(np.abs(values), axis=-1), initial=0.0))
    squarings = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0.5 else 0
    x = values / 2.0 ** squarings
    result = eye.copy()
    term = eye.copy()
    for n in range(1, max_terms + 1):
        term = term @ x / n
        result = result + term
        if np.max(np.abs(term), initial=0.0) < tol * max(1.0, np.max(np.abs(result), initial=0.0)):
            break
    else:
        raise NumericalFailureError("exponential series did not reach its cutoff", {"norm": norm})
    for _ in range(squarings):
        result = result @ result
    return result


def _angle_frequencies(nu: int, m: int) -> np.ndarray:
    """Integer frequencies of the FFT layout on an m^nu grid, shape (m,)*nu + (nu,)."""
    freqs = np.rint(np.fft.fftfreq(m) * m).astype(int)
    mesh = np.meshgrid(*([freqs] * nu), indexing="ij")
    return np.stack(mesh, axis=-1)


def grid_d_omega(values: np.ndarray, nu: int, omega: Sequence[float]) -> np.ndarray:
    """omega . d_phi applied to grid samples along the leading nu axes (spectral)."""
    if nu == 0:
        return np.zeros_like(values, dtype=complex)
    m = values.shape[0]
    axes = tuple(range(nu))
    wl = _angle_frequencies(nu, m) @ np.asarray(omega, dtype=float)
    spectrum = np.fft.fftn(values, axes=axes)
    spectrum *= (1j * wl).reshape(wl.shape + (1,) * (values.ndim - nu))
    return np.fft.ifftn(spectrum, axes=axes)


# ---------------------------------------------------------------------------
# DecayOperator
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DecayOperator:
    """Toeplitz-in-time operator with entries[l..., j + n_x, j' + n_x] = A_j^j'(l)."""
    nu: int
    n_phi: int
    n_x: int
    entries: np.ndarray

    def __post_init__(self):
        n = 2 * self.n_x + 1
        expected = (2 * self.n_phi + 1,) * self.nu + (n, n)
        if self.entries.shape != expected:
            raise DomainError(f"operator entries have shape {self.entries.shape}, expected {expected}")

    @classmethod
    def zeros(cls, nu: int, n_phi: int, n_x: int) -> "DecayOperator":
        n = 2 * n_x + 1
        return cls(nu, n_phi, n_x, np.zeros((2 * n_phi + 1,) * nu + (n, n), dtype=complex))

    @classmethod
    def identity(cls, nu: int, n_phi: int, n_x: int, mask: Optional[np.ndarray] = None) -> "DecayOperator":
        op = cls.zeros(nu, n_phi, n_x)
        diag = np.ones(2 * n_x + 1) if mask is None else mask.astype(float)
        op.entries[(n_phi,) * nu] = np.diag(diag)
        return op

    @classmethod
    def diagonal(cls, nu: int, n_phi: int, n_x: int, values: np.ndarray) -> "DecayOperator":
        """Angle-independent diagonal operator with values over j = -n_x..n_x."""
        op = cls.zeros(nu, n_phi, n_x)
        op.entries[(n_phi,) * nu] = np.diag(np.asarray(values, dtype=complex))
        return op

    @classmethod
    def from_symbol(cls, nu: int, n_phi: int, n_x: int, symbol) -> "DecayOperator":
        """Fourier multiplier j -> symbol(j)."""
        return cls.diagonal(nu, n_phi, n_x, np.array([symbol(j) for j in mode_range(n_x)], dtype=complex))

    @classmethod
    def multiplication(cls, p: TorusField, n_x: int) -> "DecayOperator":
        """Galerkin matrix of multiplication by p: entries(l, j, j') = p_(l, j - j')."""
        op = cls.zeros(p.nu, p.n_phi, n_x)
        j = mode_range(n_x)
        diff = j[:, None] - j[None, :]
        inside = np.abs(diff) <= p.n_x
        idx = np.clip(diff + p.n_x, 0, 2 * p.n_x)
        op.entries[...] = np.where(inside, p.coeffs[..., idx], 0.0)
        return op

    @classmethod
    def from_grid(cls, values: np.ndarray, nu: int, n_phi: int) -> "DecayOperator":
        n = values.shape[-1]
        return cls(nu, n_phi, (n - 1) // 2, phi_from_grid(values, nu, n_phi))

    # -- conversions ----------------------------------------------------------

    def to_grid(self, m: int) -> np.ndarray:
        return phi_to_grid(self.entries, self.nu, m)

    def entry(self, l: Sequence[int], j: int, jp: int) -> complex:
        return complex(self.entries[tuple(v + self.n_phi for v in l) + (j + self.n_x, jp + self.n_x)])

    # -- algebra ----------------------------------------------------------------

    def _check(self, other: "DecayOperator") -> None:
        if (other.nu, other.n_x) != (self.nu, self.n_x):
            raise DomainError("operators act on different spaces")

    def _pad(self, n_phi: int) -> np.ndarray:
        if n_phi == self.n_phi:
            return self.entries
        out = DecayOperator.zeros(self.nu, n_phi, self.n_x).entries
        k = min(n_phi, self.n_phi)
        src = tuple(slice(self.n_phi - k, self.n_phi + k + 1) for _ in range(self.nu))
        dst = tuple(slice(n_phi - k, n_phi + k + 1) for _ in range(self.nu))
        out[dst] = self.entries[src]
        return out

    def __add__(self, other: "DecayOperator") -> "DecayOperator":
        self._check(other)
        n_phi = max(self.n_phi, other.n_phi)
        return DecayOperator(self.nu, n_phi, self.n_x, self._pad(n_phi) + other._pad(n_phi))

    def __sub__(self, other: "DecayOperator") -> "DecayOperator":
        return self + (-1.0) * other

    def __mul__(self, scalar: complex) -> "DecayOperator":
        return DecayOperator(self.nu, self.n_phi, self.n_x, self.entries * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "DecayOperator":
        return self * (-1.0)

    def compose(self, other: "DecayOperator", n_phi: Optional[int] = None) -> "DecayOperator":
        """Exact product (A B)(l) = sum_l' A(l - l') B(l'), truncated to n_phi."""
        self._check(other)
        n_phi = max(self.n_phi, other.n_phi) if n_phi is None else n_phi
        m = 2 * (self.n_phi + other.n_phi) + 1
        m = max(m, 2 * n_phi + 1)
        values = self.to_grid(m) @ other.to_grid(m)
        return DecayOperator.from_grid(values, self.nu, n_phi)

    __matmul__ = compose

    def apply(self, h: TorusField) -> TorusField:
        """(A h)_(l, j) = sum A_j^j'(l - l') h_(l', j'), returned on the box of h."""
        if h.nu != self.nu or h.n_x != self.n_x:
            raise DomainError("operator and field live on different boxes")
        m = 2 * (self.n_phi + h.n_phi) + 1
        hg = h.phi_grid_modes(m)
        out = np.einsum("...ab,...b->...a", self.to_grid(m), hg)
        return h.with_coeffs(phi_from_grid(out, self.nu, h.n_phi))

    def d_omega(self, omega: Sequence[float]) -> "DecayOperator":
        wl = omega_dot_l(omega, self.n_phi)
        return DecayOperator(self.nu, self.n_phi, self.n_x, self.entries * (1j * wl)[..., None, None])

    def expm(self, n_phi: Optional[int] = None, tol: float = SERIES_TOL) -> "DecayOperator":
        """exp of the operator, pointwise in the angles, truncated to n_phi."""
        n_phi = self.n_phi if n_phi is None else n_phi
        m = 6 * max(self.n_phi, n_phi) + 3
        return DecayOperator.from_grid(series_expm(self.to_grid(m), tol), self.nu, n_phi)

    def transpose(self) -> "DecayOperator":
        """Transpose for the pairing (f, g) = sum f_j g_-j: A^T_j^j'(l) = A_-j'^-j(l)."""
        flipped = self.entries[..., ::-1, ::-1]
        return DecayOperator(self.nu, self.n_phi, self.n_x, np.swapaxes(flipped, -1, -2).copy())

    # -- diagnostics -------------------------------------------------------------

    def decay_norm(self, s: float) -> float:
        """(sum_(l, d) <l, d>^(2s) (sup over the diagonal |A_j^(j-d)(l)|)^2)^(1/2)."""
        n = 2 * self.n_x + 1
        flat = self.entries.reshape((-1, n, n))
        l_vectors = lattice(self.nu, self.n_phi).reshape(-1, self.nu) if self.nu else np.zeros((1, 0), dtype=int)
        total = 0.0
        for idx in range(flat.shape[0]):
            mat = flat[idx]
            l2 = float(np.sum(l_vectors[idx] ** 2))
            for k in range(-(n - 1), n):
                diag = np.abs(np.diagonal(mat, offset=k))
                top = float(np.max(diag, initial=0.0))
                if top == 0.0:
                    continue
                d = -k
                total += (1.0 + l2 + d * d) ** s * top ** 2
        return math.sqrt(total)

    def norm(self, s: float = 0.0) -> float:
        return self.decay_norm(s)

    def reality_defect(self) -> float:
        """max |conj A_j^j'(l) - A_-j^-j'(-l)|."""
        flipped = self.entries[(slice(None, None, -1),) * (self.nu + 2)]
        return float(np.max(np.abs(np.conj(self.entries) - flipped), initial=0.0))

    def is_real(self, tol: float = REALITY_TOL) -> bool:
        return self.reality_defect() <= tol * max(1.0, float(np.max(np.abs(self.entries), initial=0.0)))

    def symmetry_defect(self) -> float:
        """Relative distance to its own transpose."""
        scale = max(float(np.max(np.abs(self.entries), initial=0.0)), 1e-300)
        return float(np.max(np.abs(self.entries - self.transpose().entries), initial=0.0)) / scale

    def hamiltonian_defect(self) -> float:
        """Relative asymmetry of G = -d_x^-1 A on the rows with j != 0."""
        j = mode_range(self.n_x).astype(complex)
        inv = np.zeros_like(j)
        inv[j != 0] = 1.0 / (1j * j[j != 0])
        g = DecayOperator(self.nu, self.n_phi, self.n_x, -inv[:, None] * self.entries)
        return g.symmetry_defect()

    # -- serialization ---------------------------------------------------------------

    def to_dict(self, atol: float = 0.0) -> Dict[str, Any]:
        entries = []
        for idx in zip(*np.nonzero(np.abs(self.entries) > atol)):
            l = [int(i) - self.n_phi for i in idx[:-2]]
            j, jp = int(idx[-2]) - self.n_x, int(idx[-1]) - self.n_x
            c = self.entries[idx]
            entries.append(l + [j, jp, float(c.real), float(c.imag)])
        return {"nu": self.nu, "box": [self.n_phi, self.n_x], "entries": entries}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DecayOperator":
        nu = int(data["nu"])
        n_phi, n_x = (int(v) for v in data["box"])
        op = cls.zeros(nu, n_phi, n_x)
        for entry in data["entries"]:
            l = [int(v) for v in entry[:nu]]
            j, jp, re, im = int(entry[nu]), int(entry[nu + 1]), entry[nu + 2], entry[nu + 3]
            op.entries[tuple(v + n_phi for v in l) + (j + n_x, jp + n_x)] = re + 1j * im
        if not op.is_real():
            raise DomainError("loaded operator violates the reality condition")
        return op


# ---------------------------------------------------------------------------
# OperatorGrid
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OperatorGrid:
    """Operator sampled on an m^nu angle grid, acting on the listed spatial modes.

    values has shape (m,)*nu + (k, k) with k = len(modes).
    """
    nu: int
    modes: np.ndarray
    values: np.ndarray

    @property
    def m(self) -> int:
        return self.values.shape[0] if self.nu else 1

    @property
    def size(self) -> int:
        return len(self.modes)

    @classmethod
    def identity(cls, nu: int, modes: np.ndarray, m: int) -> "OperatorGrid":
        k = len(modes)
        values = np.broadcast_to(np.eye(k, dtype=complex), (m,) * nu + (k, k)).copy()
        return cls(nu, np.asarray(modes), values)

    @classmethod
    def diagonal(cls, nu: int, modes: np.ndarray, m: int, diag: np.ndarray) -> "OperatorGrid":
        diag = np.asarray(diag, dtype=complex)
        diag = np.broadcast_to(diag, (m,) * nu + (len(modes),))
        return cls(nu, np.asarray(modes), diag[..., :, None] * np.eye(len(modes)))

    @classmethod
    def multiplication(cls, nu: int, modes: np.ndarray, func_modes: np.ndarray) -> "OperatorGrid":
        """Galerkin multiplication by a(phi, x) given as angle-grid x spatial coefficients.

        func_modes has shape (m,)*nu + (2K+1,) with centered spatial coefficients.
        """
        modes = np.asarray(modes)
        band = (func_modes.shape[-1] - 1) // 2
        diff = modes[:, None] - modes[None, :]
        inside = np.abs(diff) <= band
        idx = np.clip(diff + band, 0, 2 * band)
        return cls(nu, modes, np.where(inside, func_modes[..., idx], 0.0))

    def to_decay(self, n_phi: int, n_x: int) -> DecayOperator:
        n = 2 * n_x + 1
        full = np.zeros(self.values.shape[:-2] + (n, n), dtype=complex)
        sel = self.modes + n_x
        full[..., sel[:, None], sel[None, :]] = self.values
        return DecayOperator.from_grid(full, self.nu, n_phi)

    def with_values(self, values: np.ndarray) -> "OperatorGrid":
        return OperatorGrid(self.nu, self.modes, values)

    # -- algebra ------------------------------------------------------------------

    def __matmul__(self, other: "OperatorGrid") -> "OperatorGrid":
        return self.with_values(self.values @ other.values)

    def __add__(self, other: "OperatorGrid") -> "OperatorGrid":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "OperatorGrid") -> "OperatorGrid":
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar) -> "OperatorGrid":
        scalar = np.asarray(scalar)
        if scalar.ndim:
            scalar = scalar[..., None, None]
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "OperatorGrid":
        return self.with_values(-self.values)

    def inverse(self) -> "OperatorGrid":
        return self.with_values(np.linalg.inv(self.values))

    def expm(self, tol: float = SERIES_TOL) -> "OperatorGrid":
        return self.with_values(series_expm(self.values, tol))

    def d_omega(self, omega: Sequence[float]) -> "OperatorGrid":
        return self.with_values(grid_d_omega(self.values, self.nu, omega))

    def apply(self, h: np.ndarray) -> np.ndarray:
        """Apply to mixed samples h of shape (m,)*nu + (k,)."""
        return np.einsum("...ab,...b->...a", self.values, h)

    def neg_index(self) -> np.ndarray:
        lookup = {int(j): a for a, j in enumerate(self.modes)}
        try:
            return np.array([lookup[-int(j)] for j in self.modes])
        except KeyError:
            raise DomainError("mode list is not symmetric under j -> -j")

    def transpose(self) -> "OperatorGrid":
        neg = self.neg_index()
        return self.with_values(np.swapaxes(self.values[..., neg[:, None], neg[None, :]], -1, -2))

    # -- diagnostics ----------------------------------------------------------------

    def hamiltonian_defect(self) -> float:
        """Relative asymmetry of G = -d_x^-1 M, worst over the angle grid."""
        g = self.with_values(-self.values / (1j * self.modes.astype(float))[:, None])
        scale = max(float(np.max(np.abs(g.values), initial=0.0)), 1e-300)
        return float(np.max(np.abs(g.values - g.transpose().values), initial=0.0)) / scale

    def reality_defect(self) -> float:
        neg = self.neg_index()
        flipped = self.values[..., neg[:, None], neg[None, :]]
        return float(np.max(np.abs(np.conj(self.values) - flipped), initial=0.0))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values), initial=0.0))


# ---------------------------------------------------------------------------
# Interpolation-constant fits
# ---------------------------------------------------------------------------

@dataclass
class FitReport:
    """Fitted constant of an inequality LHS <= C * RHS over sampled instances."""
    name: str
    ratios: List[float] = field(default_factory=list)

    @property
    def constant(self) -> float:
        return max(self.ratios, default=0.0)

    def holds_with(self, factor: float = 10.0) -> bool:
        return all(r <= factor * self.constant for r in self.ratios)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "constant": self.constant, "samples": len(self.ratios)}


def fit_algebra_constant(pairs: Sequence[tuple], s: float, s0: float) -> FitReport:
    """|AB|_s <= C (|A|_s |B|_s0 + |A|_s0 |B|_s)."""
    report = FitReport(name=f"decay-algebra(s={s}, s0={s0})")
    for a, b in pairs:
        rhs = a.decay_norm(s) * b.decay_norm(s0) + a.decay_norm(s0) * b.decay_norm(s)
        if rhs > 0:
            report.ratios.append(a.compose(b, n_phi=a.n_phi + b.n_phi).decay_norm(s) / rhs)
    return report


def fit_action_constant(pairs: Sequence[tuple], s: float, s0: float) -> FitReport:
    """||A h||_s <= C (|A|_s0 ||h||_s + |A|_s ||h||_s0)."""
    report = FitReport(name=f"decay-action(s={s}, s0={s0})")
    for a, h in pairs:
        rhs = a.decay_norm(s0) * h.norm(s) + a.decay_norm(s) * h.norm(s0)
        if rhs > 0:
            report.ratios.append(a.apply(h).norm(s) / rhs)
    return report
