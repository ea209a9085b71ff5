"""Closed-form families used as ground truth for the solver, tracker and checks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .operator import Boundary
from .tracker import MatrixFamily

FOUR_PI2 = 4.0 * np.pi ** 2


@dataclass(frozen=True)
class OracleFamily:
    name: str
    lam: Callable[[float, int], float]
    description: str = ""


# --- flat tori R^2 / (eps Z + eps^{-1} Z) -----------------------------------

def flat_torus_value(m, n, eps):
    return FOUR_PI2 * (m * m / (eps * eps) + n * n * eps * eps)


def flat_torus_branches(eps: float, max_index: int) -> list[tuple[int, int, float]]:
    """All lattice branches (m, n, lam) with |m|, |n| <= max_index."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    r = range(-max_index, max_index + 1)
    return [(m, n, float(flat_torus_value(m, n, eps))) for m in r for n in r]


def flat_torus_ordered(eps: float, max_index: int) -> np.ndarray:
    """Ordered eigenvalues lam_0 <= lam_1 <= ... with multiplicity."""
    return np.sort([lam for _, _, lam in flat_torus_branches(eps, max_index)])


def flat_torus_pairs(max_index: int) -> list[tuple[int, int]]:
    """Representatives (m, n) with m, n >= 0; the sign classes only add multiplicity."""
    return [(m, n) for m in range(max_index + 1) for n in range(max_index + 1)]


def flat_torus_family(max_index: int) -> tuple[MatrixFamily, list[tuple[int, int]]]:
    """Diagonal pencil whose analytic branches are the lattice branches."""
    pairs = flat_torus_pairs(max_index)
    m2 = np.array([p[0] ** 2 for p in pairs], dtype=float)
    n2 = np.array([p[1] ** 2 for p in pairs], dtype=float)
    zero = np.zeros(len(pairs) - 1)

    def a_fn(eps):
        return FOUR_PI2 * (m2 / eps ** 2 + n2 * eps ** 2), zero

    def da_fn(eps):
        return FOUR_PI2 * (-2.0 * m2 / eps ** 3 + 2.0 * n2 * eps), zero

    return MatrixFamily(a_fn, da_fn, name="flat-torus"), pairs


FLAT_TORUS = OracleFamily(
    "flat-torus",
    lambda eps, k: float(flat_torus_ordered(eps, max(8, k + 2))[k]),
    "ordered Laplace eigenvalues of the flat torus with periods eps and 1/eps",
)


# --- 2x2 avoided crossing --------------------------------------------------

@dataclass(frozen=True)
class AvoidedCrossing:
    """A(eps) = [[eps, delta], [delta, 1 - eps]], B = I."""

    delta: float

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")

    @property
    def family(self) -> MatrixFamily:
        d = self.delta
        return MatrixFamily(
            lambda e: (np.array([e, 1.0 - e]), np.array([d])),
            lambda e: (np.array([1.0, -1.0]), np.array([0.0])),
            name=f"avoided-crossing:{d!r}",
        )

    def _root(self, eps):
        return np.sqrt((1.0 - 2.0 * eps) ** 2 + 4.0 * self.delta ** 2)

    def eigenvalues(self, eps):
        """(lam_-, lam_+), the ordered pair."""
        r = self._root(eps)
        return 0.5 - 0.5 * r, 0.5 + 0.5 * r

    def derivatives(self, eps):
        r = self._root(eps)
        if r == 0.0:
            return 0.0, 0.0
        dr = -2.0 * (1.0 - 2.0 * eps) / r
        return -0.5 * dr, 0.5 * dr

    def analytic_branches(self, eps, eps0=0.0):
        """Branch values at eps, labelled by their order at eps0.

        For delta > 0 these are the ordered pair.  For delta = 0 they are
        eps and 1 - eps, which cross at 1/2, so the branch that is lowest at
        eps0 is no longer lowest on the other side.
        """
        if self.delta == 0.0:
            pair = (float(eps), float(1.0 - eps))
            return pair if eps0 <= 0.5 else pair[::-1]
        return self.eigenvalues(eps)

    def analytic_derivatives(self, eps, eps0=0.0):
        if self.delta == 0.0:
            return (1.0, -1.0) if eps0 <= 0.5 else (-1.0, 1.0)
        return self.derivatives(eps)

    def eigenvectors(self, eps):
        """Columns are the unit eigenvectors of (lam_-, lam_+)."""
        lo, hi = self.eigenvalues(eps)
        if self.delta == 0.0:
            return np.eye(2) if eps <= 0.5 else np.eye(2)[:, ::-1]
        vecs = []
        for lam in (lo, hi):
            # either row of A - lam I gives the null vector; take the better conditioned one
            v1 = np.array([self.delta, lam - eps])
            v2 = np.array([lam - (1.0 - eps), self.delta])
            v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
            vecs.append(v / np.linalg.norm(v))
        return np.array(vecs).T


def avoided_crossing_family(delta: float) -> AvoidedCrossing:
    return AvoidedCrossing(float(delta))


# --- flat Sturm-Liouville on [0, pi] ---------------------------------------

def flat_sturm_liouville(mu: float, boundary: Boundary | str = Boundary.DIRICHLET, k: int = 5) -> np.ndarray:
    """First k eigenvalues of -u'' + mu u on [0, pi]."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    boundary = Boundary(boundary)
    start = 1 if boundary is Boundary.DIRICHLET else 0
    j = np.arange(start, start + k, dtype=float)
    return j * j + mu
