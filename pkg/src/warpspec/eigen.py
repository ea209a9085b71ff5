"""Generalized symmetric tridiagonal eigensolver for pencils (A, B), B > 0 diagonal.

The pencil is reduced to T = B^{-1/2} A B^{-1/2} (exact, since B is diagonal).
Eigenvalues come from Sturm-sequence bisection on T, vectors from inverse
iteration with reorthogonalization inside close groups, and each value is
finally refined by the Rayleigh quotient of the original pencil, evaluated in
flux form when the pencil carries it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .operator import OperatorPencil

DEFAULT_TOL = 1e-10
# consecutive values closer than this (relative to their size) are reported as one cluster
CLUSTER_RTOL = 1e-10
# LAPACK-style grouping for reorthogonalization during inverse iteration
ORTHO_GROUP_RTOL = 1e-3
MAX_INVERSE_ITERS = 16


class EigenSolveError(RuntimeError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True, eq=False)
class EigenPair:
    lam: float
    vector: np.ndarray
    residual: float
    index: int
    cluster: int | None = None

    @property
    def clustered(self) -> bool:
        return self.cluster is not None


@numba.njit(cache=True, nogil=True)
def _count_below(d, e2, x, pivmin):
    n = d.shape[0]
    count = 0
    q = d[0] - x
    if abs(q) < pivmin:
        q = -pivmin
    if q < 0.0:
        count += 1
    for i in range(1, n):
        q = (d[i] - x) - e2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0.0:
            count += 1
    return count


@numba.njit(cache=True, nogil=True)
def _bisect(d, e2, il, iu, gl, gu, pivmin, out):
    # out[j - il] receives eigenvalue j (0-based, ascending)
    lo_prev = gl
    for j in range(il, iu + 1):
        lo = lo_prev
        hi = gu
        while True:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if _count_below(d, e2, mid, pivmin) > j:
                hi = mid
            else:
                lo = mid
        out[j - il] = 0.5 * (lo + hi)
        lo_prev = lo


@numba.njit(cache=True, nogil=True)
def _solve_shifted(d, e, sigma, b, tiny):
    """Solve (T - sigma I) x = b, T symmetric tridiagonal, by LU with partial pivoting."""
    n = d.shape[0]
    dd = d - sigma
    dl = e.copy()
    du = e.copy()
    du2 = np.zeros(n)
    rhs = b.copy()
    for i in range(n - 1):
        if abs(dd[i]) >= abs(dl[i]):
            if abs(dd[i]) < tiny:
                dd[i] = tiny if dd[i] >= 0.0 else -tiny
            fact = dl[i] / dd[i]
            dd[i + 1] -= fact * du[i]
            rhs[i + 1] -= fact * rhs[i]
        else:
            fact = dd[i] / dl[i]
            old = dd[i + 1]
            dd[i] = dl[i]
            dd[i + 1] = du[i] - fact * old
            du[i] = old
            if i < n - 2:
                du2[i] = du[i + 1]
                du[i + 1] = -fact * du[i + 1]
            bi = rhs[i]
            rhs[i] = rhs[i + 1]
            rhs[i + 1] = bi - fact * rhs[i + 1]
    if abs(dd[n - 1]) < tiny:
        dd[n - 1] = tiny if dd[n - 1] >= 0.0 else -tiny
    x = np.empty(n)
    x[n - 1] = rhs[n - 1] / dd[n - 1]
    if n > 1:
        x[n - 2] = (rhs[n - 2] - du[n - 2] * x[n - 1]) / dd[n - 2]
    for i in range(n - 3, -1, -1):
        x[i] = (rhs[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / dd[i]
    return x


@numba.njit(cache=True, nogil=True)
def _tmatvec(d, e, y):
    out = d * y
    n = d.shape[0]
    for i in range(n - 1):
        out[i] += e[i] * y[i + 1]
        out[i + 1] += e[i] * y[i]
    return out


@numba.njit(cache=True, nogil=True)
def _inverse_iteration(d, e, lams, group, tnorm, tol, maxit, vecs, resid):
    n = d.shape[0]
    k = lams.shape[0]
    start = np.empty(n)
    for i in range(n):
        start[i] = 1.0 + 0.25 * np.sin(1.618033988749895 * (i + 1))
    start /= np.sqrt(np.sum(start * start))
    for j in range(k):
        y = start.copy()
        sigma = lams[j]
        # pivot floor relative to the eigenvalue itself keeps small eigenvalues
        # of badly scaled matrices resolved
        tiny = 2.220446049250313e-16 * max(abs(sigma), 1e-6 * tnorm)
        res = np.inf
        for it in range(maxit):
            x = _solve_shifted(d, e, sigma, y, tiny)
            # reorthogonalize against earlier members of the same group (twice is enough)
            for _ in range(2):
                for m in range(j - 1, -1, -1):
                    if group[m] != group[j]:
                        break
                    c = 0.0
                    for i in range(n):
                        c += x[i] * vecs[m, i]
                    for i in range(n):
                        x[i] -= c * vecs[m, i]
            nrm = np.sqrt(np.sum(x * x))
            if nrm == 0.0 or not np.isfinite(nrm):
                x = start.copy()
                nrm = 1.0
            x = x / nrm
            change = 1.0 - abs(np.sum(x * y))
            y = x
            r = _tmatvec(d, e, y) - sigma * y
            res = np.sqrt(np.sum(r * r)) / tnorm
            if it >= 1 and res <= tol and change < 1e-14:
                break
        vecs[j, :] = y
        resid[j] = res


def _prepare(pencil: OperatorPencil):
    if np.any(pencil.weight <= 0):
        raise ValueError("pencil weight B must be positive")
    d, e = pencil.scaled()
    d = np.ascontiguousarray(d, dtype=float)
    e = np.ascontiguousarray(e, dtype=float)
    ae = np.abs(e)
    left = np.concatenate(([0.0], ae))
    right = np.concatenate((ae, [0.0]))
    gl = float(np.min(d - left - right))
    gu = float(np.max(d + left + right))
    tnorm = max(abs(gl), abs(gu), np.finfo(float).tiny)
    # shift so the Sturm sequences run on a positive semidefinite matrix
    shift = max(0.0, -gl)
    margin = 2.220446049250313e-16 * tnorm * len(d) + np.finfo(float).tiny
    e2 = e * e
    pivmin = np.finfo(float).tiny * max(1.0, float(np.max(e2)) if len(e2) else 1.0)
    return d + shift, e, e2, gl + shift - margin, gu + shift + margin, shift, tnorm, pivmin


def sturm_count(pencil: OperatorPencil, x: float) -> int:
    """Number of generalized eigenvalues strictly below x (Sylvester inertia)."""
    d, e, e2, gl, gu, shift, tnorm, pivmin = _prepare(pencil)
    if len(d) == 1:
        return int(d[0] < x + shift)
    return int(_count_below(d, e2, float(x) + shift, pivmin))


def eigenvalues_by_index(pencil: OperatorPencil, il: int, iu: int) -> np.ndarray:
    """Bisection values (unrefined) for indices il..iu, 0-based inclusive."""
    d, e, e2, gl, gu, shift, tnorm, pivmin = _prepare(pencil)
    out = np.empty(iu - il + 1)
    if len(d) == 1:
        out[0] = d[0]
    else:
        _bisect(d, e2, il, iu, gl, gu, pivmin, out)
    return out - shift


def _label_clusters(lams: np.ndarray, rtol: float) -> list[int | None]:
    labels: list[int | None] = [None] * len(lams)
    cid = -1
    for j in range(1, len(lams)):
        scale = max(abs(lams[j]), abs(lams[j - 1]), np.finfo(float).tiny)
        if lams[j] - lams[j - 1] <= rtol * scale:
            if labels[j - 1] is None:
                cid += 1
                labels[j - 1] = cid
            labels[j] = labels[j - 1]
    return labels


def eigenpairs_by_index(pencil: OperatorPencil, il: int, iu: int, tol: float = DEFAULT_TOL) -> list[EigenPair]:
    """Eigenpairs il..iu (0-based, inclusive, ascending) with B-normalized vectors."""
    n = pencil.n
    if not 0 <= il <= iu < n:
        raise ValueError(f"index range [{il}, {iu}] outside 0..{n - 1}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    d, e, e2, gl, gu, shift, tnorm, pivmin = _prepare(pencil)
    k = iu - il + 1
    raw = np.empty(k)
    if n == 1:
        raw[0] = d[0]
    else:
        _bisect(d, e2, il, iu, gl, gu, pivmin, raw)
    group = np.zeros(k, dtype=np.int64)
    for j in range(1, k):
        group[j] = group[j - 1] + (0 if raw[j] - raw[j - 1] <= ORTHO_GROUP_RTOL * tnorm else 1)
    vecs = np.zeros((k, n))
    resid = np.zeros(k)
    if n == 1:
        vecs[0, 0] = 1.0
        resid[0] = 0.0
    else:
        _inverse_iteration(d, e, raw, group, tnorm, tol, MAX_INVERSE_ITERS, vecs, resid)
    sqrt_w = np.sqrt(pencil.weight)
    pairs = []
    lams = np.empty(k)
    vs = []
    for j in range(k):
        y = vecs[j]
        v = y / sqrt_w
        lam = pencil.energy(v) / pencil.bnorm2(v)
        lams[j] = lam
        vs.append(v / np.sqrt(pencil.bnorm2(v)))
    order = np.argsort(lams, kind="stable")
    lams = lams[order]
    labels = _label_clusters(lams, CLUSTER_RTOL)
    # partners just outside il..iu still make the end values clustered
    next_id = max([lab for lab in labels if lab is not None], default=-1) + 1
    for pos in {0, k - 1}:
        if labels[pos] is not None:
            continue
        lam = lams[pos]
        width = CLUSTER_RTOL * max(abs(lam), np.finfo(float).tiny)
        inside = int(_count_below(d, e2, lam + width + shift, pivmin) - _count_below(d, e2, lam - width + shift, pivmin)) \
            if n > 1 else 1
        if inside > 1:
            labels[pos] = next_id
            next_id += 1
    for pos, j in enumerate(order):
        v = vs[j]
        r = (pencil.matvec(v) - lams[pos] * pencil.weight * v) / sqrt_w
        res = float(np.linalg.norm(r) / tnorm)
        if not np.isfinite(res) or res > tol:
            raise EigenSolveError(
                "NON_CONVERGED",
                f"inverse iteration for eigenvalue index {il + pos} stalled (residual {res:.2e} > {tol:.1e})")
        pairs.append(EigenPair(float(lams[pos]), v, res, il + pos, labels[pos]))
    return pairs


def lowest_eigenpairs(pencil: OperatorPencil, k: int, tol: float = DEFAULT_TOL) -> list[EigenPair]:
    """The k algebraically smallest generalized eigenpairs, ascending."""
    if k < 1 or k > pencil.n:
        raise ValueError(f"k must lie in 1..{pencil.n}, got {k}")
    return eigenpairs_by_index(pencil, 0, k - 1, tol)


def eigenpairs_in_window(pencil: OperatorPencil, lo: float, hi: float, tol: float = DEFAULT_TOL,
                         max_count: int = 500) -> list[EigenPair]:
    """All eigenpairs with lo <= lam < hi, located by Sturm counts."""
    il = sturm_count(pencil, lo)
    iu = sturm_count(pencil, hi) - 1
    if iu < il:
        return []
    if iu - il + 1 > max_count:
        raise EigenSolveError("WINDOW_TOO_LARGE", f"{iu - il + 1} eigenvalues in [{lo:g}, {hi:g})")
    return eigenpairs_by_index(pencil, il, iu, tol)


def clusters(pairs: list[EigenPair]) -> dict[int, list[EigenPair]]:
    out: dict[int, list[EigenPair]] = {}
    for p in pairs:
        if p.cluster is not None:
            out.setdefault(p.cluster, []).append(p)
    return out
