"""Finite-volume assembly of the fiber-reduced operator -L + mu * rho^{-2b}.

On the collar [-T, T] x M with metric rho^{2a} dt^2 + rho^{2b} h, a fiber mode
with Delta_h-eigenvalue mu reduces the Laplacian to

    -rho^{-a-bd} d/dt (rho^{-a+bd} d/dt u) + mu rho^{-2b} u = lam u,

self-adjoint with weight rho^{a+bd}.  The weak form is discretized on a
vertex grid with fluxes at midpoints and a lumped diagonal weight, so the
matrix A is symmetric by construction and B is diagonal.
"""
from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .fiber import FiberSpectrum
from .profiles import ExponentData, Profile

COEFF_LIMIT = 1e300


class Boundary(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


class AssemblyError(ValueError):
    """Coefficient out of floating range or grid budget exceeded."""


@dataclass(frozen=True)
class GridPolicy:
    n_min: int = 2001
    points_per_eps: int = 50
    max_n: int = 2_000_000


@dataclass(frozen=True, eq=False)
class Grid:
    nodes: np.ndarray
    center: float = 0.0
    kind: str = "uniform"

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def halfwidth(self) -> float:
        return 0.5 * (self.nodes[-1] - self.nodes[0])

    @property
    def spacing(self) -> float:
        return (self.nodes[-1] - self.nodes[0]) / (self.n - 1)


def make_grid(T: float, eps: float, policy: GridPolicy = GridPolicy(), center: float = 0.0) -> Grid:
    """Uniform odd-sized grid on [center - T, center + T] resolving the core |t - center| <= eps."""
    if T <= 0 or eps <= 0:
        raise ValueError("make_grid needs T > 0 and eps > 0")
    n = max(policy.n_min, math.ceil(policy.points_per_eps * T / eps))
    if n % 2 == 0:
        n += 1
    if n > policy.max_n:
        raise AssemblyError(
            f"grid of {n} nodes exceeds the cap {policy.max_n}; eps={eps:g} is too small for this budget")
    nodes = np.linspace(-T, T, n)
    nodes[n // 2] = 0.0
    # exact mirror symmetry about the center
    nodes[n // 2 + 1:] = -nodes[: n // 2][::-1]
    return Grid(nodes + center if center else nodes, center=center)


@dataclass(frozen=True)
class WarpedFamily:
    profile: Profile
    exp: ExponentData
    fiber: FiberSpectrum
    T: float = 1.0
    boundary: Boundary = Boundary.DIRICHLET
    name: str = "warped"

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("interval half-width T must be positive")


@dataclass(frozen=True, eq=False)
class OperatorPencil:
    """Symmetric tridiagonal A (diag, off) with diagonal B (weight).

    When ``flux`` and ``potential`` are present, A = sum of flux-weighted
    squared differences plus a diagonal potential; ``energy`` then evaluates
    v^T A v in that cancellation-free form.  ``flux`` has one more entry than
    unknowns: flux[i] couples unknown i-1 and i, the end entries couple to the
    eliminated Dirichlet boundary values (zero for Neumann).
    """

    diag: np.ndarray
    off: np.ndarray
    weight: np.ndarray
    flux: np.ndarray | None = None
    potential: np.ndarray | None = None
    nodes: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.diag)

    @classmethod
    def from_flux(cls, flux, potential, weight, nodes=None, meta=None) -> "OperatorPencil":
        flux = np.asarray(flux, dtype=float)
        potential = np.asarray(potential, dtype=float)
        diag = flux[:-1] + flux[1:] + potential
        off = -flux[1:-1]
        return cls(diag, off, np.asarray(weight, dtype=float), flux, potential, nodes, dict(meta or {}))

    @classmethod
    def from_matrices(cls, diag, off, weight=None, meta=None) -> "OperatorPencil":
        diag = np.asarray(diag, dtype=float)
        off = np.asarray(off, dtype=float)
        if weight is None:
            weight = np.ones_like(diag)
        if off.shape != (max(len(diag) - 1, 0),):
            raise ValueError("off-diagonal must have n-1 entries")
        return cls(diag, off, np.asarray(weight, dtype=float), meta=dict(meta or {}))

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        out = self.diag * v
        out[:-1] += self.off * v[1:]
        out[1:] += self.off * v[:-1]
        return out

    def energy(self, v, w=None):
        """v^T A w (w defaults to v), in flux form when available."""
        v = np.asarray(v, dtype=float)
        w = v if w is None else np.asarray(w, dtype=float)
        if self.flux is not None:
            dv = np.diff(v, prepend=0.0, append=0.0)
            dw = dv if w is v else np.diff(w, prepend=0.0, append=0.0)
            return float(np.dot(self.flux, dv * dw) + np.dot(self.potential, v * w))
        return float(np.dot(v, self.matvec(w)))

    def bnorm2(self, v):
        v = np.asarray(v, dtype=float)
        return float(np.dot(self.weight, v * v))

    def dense(self):
        A = np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)
        return A, np.diag(self.weight)

    def scaled(self):
        """(d, e) of the symmetric tridiagonal B^{-1/2} A B^{-1/2}."""
        s = 1.0 / np.sqrt(self.weight)
        return self.diag * s * s, self.off * s[1:] * s[:-1]

    def shifted_mu(self, delta: float) -> "OperatorPencil":
        """Same pencil with mu raised by delta (potential grows by delta * rho^{-2b} * weight)."""
        pot_unit = self.meta.get("potential_unit")
        if pot_unit is None:
            raise ValueError("pencil carries no unit potential; assemble it from a family")
        potential = self.potential + delta * pot_unit
        meta = dict(self.meta)
        meta["mu"] = meta.get("mu", 0.0) + delta
        return OperatorPencil.from_flux(self.flux, potential, self.weight, self.nodes, meta)


def _powered(rho, power):
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        return np.power(rho, power)


def _guard(name, arr):
    if not np.all(np.isfinite(arr)) or np.any(np.abs(arr) > COEFF_LIMIT):
        raise AssemblyError(f"{name} coefficient left floating range; exponent/eps combination unsupported")
    return arr


def _cells(t):
    cell = np.empty_like(t)
    cell[1:-1] = 0.5 * (t[2:] - t[:-2])
    cell[0] = 0.5 * (t[1] - t[0])
    cell[-1] = 0.5 * (t[-1] - t[-2])
    return cell


def _layout(family: WarpedFamily, c, w, q, t):
    if family.boundary is Boundary.DIRICHLET:
        return c, w[1:-1], q[1:-1], t[1:-1]
    flux = np.concatenate(([0.0], c, [0.0]))
    return flux, w, q, t


def assemble(family: WarpedFamily, mu: float, eps: float, grid: Grid) -> OperatorPencil:
    """Pencil (A, B) for sector mu at eps on the given grid."""
    if eps <= 0:
        raise ValueError("assemble needs eps > 0")
    if mu < 0:
        raise ValueError("fiber eigenvalue mu must be nonnegative")
    a, b, d = family.exp.a, family.exp.b, family.exp.d
    t = grid.nodes
    tm = 0.5 * (t[1:] + t[:-1])
    rho_m = family.profile.value(eps, tm)
    rho = family.profile.value(eps, t)
    cell = _cells(t)
    c = _guard("flux", _powered(rho_m, -a + b * d) / np.diff(t))
    w = _guard("weight", _powered(rho, a + b * d) * cell)
    unit = _guard("potential", _powered(rho, a + b * d - 2 * b) * cell)
    flux, weight, pot_unit, nodes = _layout(family, c, w, unit, t)
    if np.any(weight <= 0):
        raise AssemblyError("nonpositive weight")
    meta = {"eps": eps, "mu": mu, "family": family.name, "potential_unit": pot_unit}
    return OperatorPencil.from_flux(flux, mu * pot_unit, weight, nodes, meta)


def assemble_derivative(family: WarpedFamily, mu: float, eps: float, grid: Grid) -> OperatorPencil:
    """Elementwise d/d eps of ``assemble`` at fixed grid (chain rule through the profile)."""
    if eps <= 0:
        raise ValueError("assemble_derivative needs eps > 0")
    a, b, d = family.exp.a, family.exp.b, family.exp.d
    prof = family.profile
    t = grid.nodes
    tm = 0.5 * (t[1:] + t[:-1])
    cell = _cells(t)

    def dpow(x, power):
        return power * _powered(prof.value(eps, x), power - 1) * prof.d_eps(eps, x)

    dc = _guard("flux derivative", dpow(tm, -a + b * d) / np.diff(t))
    dw = _guard("weight derivative", dpow(t, a + b * d) * cell)
    dq = _guard("potential derivative", mu * dpow(t, a + b * d - 2 * b) * cell)
    flux, weight, pot, nodes = _layout(family, dc, dw, dq, t)
    meta = {"eps": eps, "mu": mu, "family": family.name, "derivative": True}
    return OperatorPencil.from_flux(flux, pot, weight, nodes, meta)


@dataclass(frozen=True)
class SectorProblem:
    """One fiber sector of a warped family with its eps-linked grid policy."""

    family: WarpedFamily
    mu: float
    policy: GridPolicy = GridPolicy()

    def grid(self, eps: float) -> Grid:
        return make_grid(self.family.T, eps, self.policy)

    def pencil(self, eps: float, grid: Grid | None = None) -> OperatorPencil:
        return assemble(self.family, self.mu, eps, grid or self.grid(eps))

    def dpencil(self, eps: float, grid: Grid | None = None) -> OperatorPencil:
        return assemble_derivative(self.family, self.mu, eps, grid or self.grid(eps))

    def full_nodes(self, eps: float) -> np.ndarray:
        return self.grid(eps).nodes


def discrete_L(pencil: OperatorPencil, q) -> np.ndarray:
    """Grid analogue of L q = rho^{-a-bd} (rho^{-a+bd} q')' using the pencil's fluxes.

    Values beyond the unknowns are taken as zero (Dirichlet) or absent (Neumann).
    """
    if pencil.flux is None:
        raise ValueError("discrete_L needs a flux-form pencil")
    q = np.asarray(q, dtype=float)
    dq = np.diff(q, prepend=0.0, append=0.0)
    fdq = pencil.flux * dq
    return (fdq[1:] - fdq[:-1]) / pencil.weight


def basic_identity_residual(pencil: OperatorPencil, family: WarpedFamily, eps: float, lam: float, u) -> np.ndarray:
    """Pointwise residual of 1/2 L(u^2) = -lam u^2 + rho^{-2a} (u')^2 + mu rho^{-2b} u^2.

    u' is the central difference across each unknown (boundary values zero for
    Dirichlet); the nodes next to a Neumann end are dropped.
    """
    a, b = family.exp.a, family.exp.b
    mu = pencil.meta.get("mu", 0.0)
    u = np.asarray(u, dtype=float)
    x = pencil.nodes
    if family.boundary is Boundary.DIRICHLET:
        h0 = x[0] - (x[1] - x[0])
        h1 = x[-1] + (x[-1] - x[-2])
        xf = np.concatenate(([h0], x, [h1]))
        uf = np.concatenate(([0.0], u, [0.0]))
        du = (uf[2:] - uf[:-2]) / (xf[2:] - xf[:-2])
        sl = slice(None)
    else:
        du = np.zeros_like(u)
        du[1:-1] = (u[2:] - u[:-2]) / (x[2:] - x[:-2])
        sl = slice(1, -1)
    rho = family.profile.value(eps, x)
    lhs = 0.5 * discrete_L(pencil, u * u)
    rhs = -lam * u * u + rho ** (-2 * a) * du * du + mu * rho ** (-2 * b) * u * u
    return (lhs - rhs)[sl]


def grouped_identity_residuals(pencil: OperatorPencil, family: WarpedFamily, eps: float,
                               lams, vectors, labels) -> list[np.ndarray]:
    """``basic_identity_residual`` summed over each eigenvalue cluster.

    Within a (numerically) degenerate cluster the returned basis is an arbitrary
    rotation, and the pointwise identity, being quadratic in u, depends on it.
    Its sum over a B-orthonormal cluster basis is a trace and rotation invariant.
    ``labels[j]`` is the cluster id of pair j or None for a simple eigenvalue.
    """
    groups: dict = {}
    for j, lab in enumerate(labels):
        groups.setdefault(("c", lab) if lab is not None else ("s", j), []).append(j)
    out = []
    for members in groups.values():
        out.append(sum(basic_identity_residual(pencil, family, eps, lams[j], vectors[j]) for j in members))
    return out


def pencil_to_text(pencil: OperatorPencil) -> str:
    """Three whitespace-separated columns: diag, offdiag (0 on the last row), weight."""
    buf = io.StringIO()
    buf.write("# warpspec pencil v1\n")
    for key in ("family", "eps", "mu"):
        if key in pencil.meta:
            val = pencil.meta[key]
            buf.write(f"# {key} = {val if isinstance(val, str) else float(val)!r}\n")
    off = np.append(pencil.off, 0.0)
    for d_, o_, w_ in zip(pencil.diag, off, pencil.weight):
        buf.write(f"{float(d_)!r} {float(o_)!r} {float(w_)!r}\n")
    return buf.getvalue()


def pencil_from_text(text: str) -> OperatorPencil:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    data = np.array([[float(x) for x in r] for r in rows])
    if data.ndim != 2 or data.shape[1] != 3:
        raise ValueError("pencil text must have three columns")
    return OperatorPencil.from_matrices(data[:, 0], data[:-1, 1], data[:, 2])
