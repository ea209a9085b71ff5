"""Fiber spectra Spec(Delta_h) and the split of the problem into fiber sectors.

Separation of variables reduces the Laplacian of the warped collar to one
1-D operator per fiber eigenvalue mu, so every eigenbranch lives in exactly
one sector.  mu = 0 carries the fiber-average (zeroth Fourier coefficient)
part of an eigenfunction, the positive sectors carry its complement.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass


@dataclass(frozen=True)
class FiberSpectrum:
    """Distinct fiber eigenvalues, ascending, with multiplicities.  mu_0 = 0."""

    mus: tuple[float, ...]
    multiplicities: tuple[int, ...]

    def __post_init__(self):
        if len(self.mus) != len(self.multiplicities) or not self.mus:
            raise ValueError("fiber spectrum needs matching, nonempty mu and multiplicity lists")
        if self.mus[0] != 0.0:
            raise ValueError("fiber spectrum must start with mu_0 = 0 (constants on the fiber)")
        if any(m2 <= m1 for m1, m2 in zip(self.mus, self.mus[1:])):
            raise ValueError("fiber eigenvalues must be strictly increasing")
        if any(int(k) != k or k < 1 for k in self.multiplicities):
            raise ValueError("multiplicities must be positive integers")

    @property
    def mu1(self) -> float:
        """Smallest positive fiber eigenvalue."""
        if len(self.mus) < 2:
            raise ValueError("fiber spectrum has no positive eigenvalue listed")
        return self.mus[1]

    def positive(self) -> tuple[float, ...]:
        return self.mus[1:]


def circle_spectrum(length: float = 1.0, n_max: int = 10) -> FiberSpectrum:
    """Circle of the given length: mu_n = (2 pi n / length)^2, multiplicity 2 for n >= 1."""
    if length <= 0:
        raise ValueError("circle length must be positive")
    mus = tuple((2 * math.pi * n / length) ** 2 for n in range(n_max + 1))
    mult = (1,) + (2,) * n_max
    return FiberSpectrum(mus, mult)


def square_torus_spectrum(length: float = 1.0, mu_max: float | None = None, n_max: int = 5) -> FiberSpectrum:
    """Flat square 2-torus of side ``length``: mu = (2 pi / length)^2 (p^2 + q^2).

    Multiplicities come from counting lattice points (p, q) in Z^2 with a given
    p^2 + q^2.  Without ``mu_max`` all norms p^2 + q^2 <= n_max^2 are kept.
    """
    base = (2 * math.pi / length) ** 2
    limit = n_max**2 if mu_max is None else int(math.floor(mu_max / base + 1e-12))
    r = int(math.isqrt(max(limit, 0)))
    counts: Counter[int] = Counter()
    for p in range(-r, r + 1):
        for q in range(-r, r + 1):
            s = p * p + q * q
            if s <= limit:
                counts[s] += 1
    norms = sorted(counts)
    return FiberSpectrum(tuple(base * s for s in norms), tuple(counts[s] for s in norms))


def explicit_spectrum(mus, multiplicities=None) -> FiberSpectrum:
    mus = [float(m) for m in mus]
    if multiplicities is None:
        multiplicities = [1] * len(mus)
    return FiberSpectrum(tuple(mus), tuple(int(k) for k in multiplicities))


@dataclass(frozen=True)
class FiberSector:
    index: int
    mu: float
    multiplicity: int

    @property
    def label(self) -> str:
        return "psi0" if self.index == 0 else f"mu{self.index}"


def fourier_mode_split(spectrum: FiberSpectrum, cutoff: int) -> list[FiberSector]:
    """Sectors to track: mu_0 = 0 plus the first ``cutoff`` positive fiber eigenvalues."""
    if cutoff < 0:
        raise ValueError("mode cutoff must be >= 0")
    k = min(cutoff + 1, len(spectrum.mus))
    return [FiberSector(i, spectrum.mus[i], spectrum.multiplicities[i]) for i in range(k)]


def sector_role(mu: float, mu_star: float, rtol: float = 1e-9) -> str:
    """Place a fiber sector relative to mu*: 'zero', 'star', 'minus' (below) or 'plus' (above)."""
    if mu == 0.0:
        return "zero"
    if math.isclose(mu, mu_star, rel_tol=rtol, abs_tol=rtol):
        return "star"
    return "minus" if mu < mu_star else "plus"
