"""Tangential sites, the cube identity and the site admissibility test."""

import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import List, Optional, Tuple

import numpy as np

from .errors import DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SiteSet:
    """Tangential sites S+ = {j_1 < ... < j_nu} and S = S+ u (-S+)."""
    plus: Tuple[int, ...]

    def __post_init__(self):
        plus = tuple(int(j) for j in self.plus)
        if not plus:
            raise DomainError("a site set needs at least one site")
        if any(j <= 0 for j in plus):
            raise DomainError("tangential sites must be positive")
        if len(set(plus)) != len(plus):
            raise DomainError("tangential sites must be distinct")
        object.__setattr__(self, "plus", tuple(sorted(plus)))

    @property
    def nu(self) -> int:
        return len(self.plus)

    @property
    def full(self) -> Tuple[int, ...]:
        return tuple(sorted([-j for j in self.plus] + list(self.plus)))

    @property
    def max_site(self) -> int:
        return self.plus[-1]

    def contains(self, j: int) -> bool:
        return abs(j) in self.plus

    def in_complement(self, j: int) -> bool:
        """j in S^c (the zero mode is excluded from the phase space)."""
        return j != 0 and not self.contains(j)

    def index(self, j: int) -> int:
        """Position i of |j| in S+."""
        try:
            return self.plus.index(abs(j))
        except ValueError:
            raise DomainError("not a tangential site", index=j)

    def ell(self, j: int) -> np.ndarray:
        """The odd injective map S -> Z^nu, +-j_i -> +-e_i."""
        out = np.zeros(self.nu, dtype=int)
        out[self.index(j)] = 1 if j > 0 else -1
        return out

    def normal_modes(self, n_x: int) -> np.ndarray:
        return np.array([j for j in range(-n_x, n_x + 1) if self.in_complement(j)], dtype=int)

    def birkhoff_cutoff(self) -> int:
        """Constant C of the finite space E = {0 < |j| <= C}."""
        return 3 * self.max_site + 1

    def square_sum(self) -> int:
        return sum(j * j for j in self.plus)


def cube_identity(j1: int, j2: int, j3: int, j4: int) -> int:
    """j1^3 + j2^3 + j3^3 + j4^3 = -3 (j1 + j2)(j1 + j3)(j2 + j3) on zero-sum quadruples."""
    if j1 + j2 + j3 + j4 != 0:
        raise DomainError("cube identity needs indices summing to zero", index=(j1, j2, j3, j4))
    direct = j1 ** 3 + j2 ** 3 + j3 ** 3 + j4 ** 3
    factored = -3 * (j1 + j2) * (j1 + j3) * (j2 + j3)
    assert direct == factored, (j1, j2, j3, j4)
    return factored


def exhaustive_cube_check(bound: int) -> int:
    """Vectorized check of the identity over all zero-sum quadruples; returns the count."""
    r = np.arange(-bound, bound + 1, dtype=np.int64)
    j1, j2, j3 = np.meshgrid(r, r, r, indexing="ij")
    j4 = -(j1 + j2 + j3)
    keep = np.abs(j4) <= bound
    j1, j2, j3, j4 = j1[keep], j2[keep], j3[keep], j4[keep]
    direct = j1 ** 3 + j2 ** 3 + j3 ** 3 + j4 ** 3
    factored = -3 * (j1 + j2) * (j1 + j3) * (j2 + j3)
    violations = int(np.count_nonzero(direct != factored))
    if violations:
        raise AssertionError(f"cube identity failed on {violations} quadruples")
    return int(keep.sum())


@dataclass
class AdmissibilityResult:
    admissible: bool
    target: float
    witness: Optional[Tuple[int, int]] = None
    skipped: bool = False

    def to_dict(self) -> dict:
        return {
            "admissible": self.admissible,
            "target": self.target,
            "witness": list(self.witness) if self.witness else None,
            "skipped": self.skipped,
        }


def admissible(sites: SiteSet, lambda_variant: bool = False) -> AdmissibilityResult:
    """Decide whether 2/(2 nu - 1) sum j_i^2 equals j^2 + jk + k^2 for some j != k in Z minus S.

    For each j the equation is a quadratic in k, solved exactly through its
    discriminant 4T - 3 j^2, so the search is linear in the bound.
    """
    nu = sites.nu
    numerator = 2 * sites.square_sum()
    target = numerator / (2 * nu - 1)
    if lambda_variant:
        return AdmissibilityResult(True, target, skipped=True)
    if numerator % (2 * nu - 1):
        return AdmissibilityResult(True, target)
    t = numerator // (2 * nu - 1)
    bound = math.ceil(math.sqrt(2 * t)) + 1
    j = np.arange(-bound, bound + 1, dtype=np.int64)
    disc = 4 * t - 3 * j * j
    ok = disc >= 0
    j, disc = j[ok], disc[ok]
    root = np.rint(np.sqrt(disc.astype(float))).astype(np.int64)
    square = root * root == disc
    j, root = j[square], root[square]
    full = set(sites.full)
    for sign in (1, -1):
        num = -j + sign * root
        even = num % 2 == 0
        for jj, kk in zip(j[even], num[even] // 2):
            jj, kk = int(jj), int(kk)
            if jj != kk and jj not in full and kk not in full:
                assert jj * jj + jj * kk + kk * kk == t
                return AdmissibilityResult(False, target, witness=(jj, kk))
    return AdmissibilityResult(True, target)


def find_violating_sets(max_site: int, nu: int = 2) -> List[Tuple[SiteSet, Tuple[int, int]]]:
    """Brute-force list of inadmissible site sets with entries <= max_site, by increasing maximum."""
    found = []
    for combo in combinations(range(1, max_site + 1), nu):
        result = admissible(SiteSet(combo))
        if not result.admissible:
            found.append((SiteSet(combo), result.witness))
    found.sort(key=lambda item: (item[0].max_site, item[0].plus))
    return found
