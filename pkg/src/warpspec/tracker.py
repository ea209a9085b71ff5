"""Continuation of real-analytic eigenvalue branches in eps.

Branches are followed by eigenvector overlap, not by eigenvalue order, so a
tracked branch passes straight through a crossing.  Each accepted step
records the Hellmann-Feynman derivative lam' = v^T (A' - lam B') v.
"""
from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .eigen import DEFAULT_TOL, EigenPair, eigenpairs_in_window, lowest_eigenpairs
from .operator import OperatorPencil

log = logging.getLogger(__name__)

CSV_VERSION = "warpspec-branch v1"
CSV_COLUMNS = ("branch_id", "mu", "eps", "lambda", "dlambda", "overlap")
# derivative eigenvalues of a cluster closer than this are treated as a
# degenerate subspace and matched by Procrustes rotation
D_DEGENERATE_RTOL = 1e-8


class BranchStatus(str, enum.Enum):
    COMPLETE = "COMPLETE"
    STEP_UNDERFLOW = "STEP_UNDERFLOW"
    LOST = "LOST"


class DegenerateEigenvalue(ValueError):
    """First-order perturbation of a clustered eigenvalue needs the cluster basis."""


@dataclass(frozen=True)
class BranchSample:
    eps: float
    lam: float
    dlam: float
    overlap: float
    index: int = -1


@dataclass
class EigenBranch:
    branch_id: str
    mu: float
    samples: list[BranchSample] = field(default_factory=list)
    status: BranchStatus = BranchStatus.COMPLETE
    vector: np.ndarray | None = field(default=None, repr=False)
    nodes: np.ndarray | None = field(default=None, repr=False)

    @property
    def eps(self) -> np.ndarray:
        return np.array([s.eps for s in self.samples])

    @property
    def lam(self) -> np.ndarray:
        return np.array([s.lam for s in self.samples])

    @property
    def dlam(self) -> np.ndarray:
        return np.array([s.dlam for s in self.samples])

    @property
    def overlap(self) -> np.ndarray:
        return np.array([s.overlap for s in self.samples])


@dataclass(frozen=True)
class TrackOptions:
    theta: float = 0.9
    step_factor: float = 0.95
    min_step: float = 1e-6  # relative to eps
    window_rtol: float = 0.05
    max_window: int = 500
    tol: float = DEFAULT_TOL
    # halve when the number of eigenvalues between tracked values changes;
    # disable for explicit families whose untracked branches cross tracked ones
    audit: bool = True

    def __post_init__(self):
        if not 0.5 < self.theta < 1.0:
            raise ValueError("overlap threshold theta must lie in (0.5, 1)")
        if not 0.0 < self.step_factor < 1.0:
            raise ValueError("step_factor must lie in (0, 1)")


@dataclass(frozen=True)
class MatrixFamily:
    """Synthetic tridiagonal family given by callables of eps.

    ``a_fn(eps)`` returns (diag, off); ``da_fn`` their eps-derivatives.
    ``b_fn``/``db_fn`` default to the identity weight and zero derivative.
    """

    a_fn: Callable
    da_fn: Callable
    b_fn: Callable | None = None
    db_fn: Callable | None = None
    mu: float = 0.0
    name: str = "matrix"

    def grid(self, eps):
        return None

    def pencil(self, eps, grid=None) -> OperatorPencil:
        diag, off = self.a_fn(eps)
        w = None if self.b_fn is None else self.b_fn(eps)
        return OperatorPencil.from_matrices(diag, off, w, meta={"eps": eps, "mu": self.mu})

    def dpencil(self, eps, grid=None) -> OperatorPencil:
        ddiag, doff = self.da_fn(eps)
        ddiag = np.asarray(ddiag, dtype=float)
        dw = np.zeros_like(ddiag) if self.db_fn is None else self.db_fn(eps)
        return OperatorPencil(ddiag, np.asarray(doff, dtype=float), np.asarray(dw, dtype=float),
                              meta={"eps": eps, "mu": self.mu, "derivative": True})


def _dquad(dpencil: OperatorPencil, lam: float, v, w=None) -> float:
    """v^T (A' - lam B') w."""
    if w is None:
        return dpencil.energy(v) - lam * float(np.dot(dpencil.weight, v * v))
    return dpencil.energy(v, w) - lam * float(np.dot(dpencil.weight, v * w))


def hellmann_feynman(pencil: OperatorPencil, dpencil: OperatorPencil, pair: EigenPair) -> float:
    """lam' = v^T (A' - lam B') v for a simple, B-normalized eigenpair."""
    if pair.clustered:
        raise DegenerateEigenvalue(
            f"eigenvalue {pair.lam:.12g} is clustered; rotate to the analytic basis first")
    v = pair.vector
    return _dquad(dpencil, pair.lam, v) / pencil.bnorm2(v)


@dataclass
class _Candidate:
    lam: float
    dlam: float
    vector: np.ndarray
    index: int
    group: int  # Procrustes group id, -1 for a resolved vector


def _resolve(pairs: list[EigenPair], pencil: OperatorPencil, dpencil: OperatorPencil) -> list[_Candidate]:
    """Rotate clusters to diagonalize the derivative; leave fully degenerate ones flagged."""
    out: list[_Candidate] = []
    gid = 0
    i = 0
    while i < len(pairs):
        p = pairs[i]
        if p.cluster is None:
            out.append(_Candidate(p.lam, _dquad(dpencil, p.lam, p.vector), p.vector, p.index, -1))
            i += 1
            continue
        j = i
        while j < len(pairs) and pairs[j].cluster == p.cluster:
            j += 1
        members = pairs[i:j]
        lam_bar = float(np.mean([m.lam for m in members]))
        V = np.array([m.vector for m in members])
        m = len(members)
        D = np.empty((m, m))
        for r in range(m):
            for c in range(r, m):
                D[r, c] = D[c, r] = _dquad(dpencil, lam_bar, V[r], V[c])
        dvals, dvecs = np.linalg.eigh(D)
        W = dvecs.T @ V
        scale = max(np.max(np.abs(dvals)), 1.0)
        degenerate = np.any(np.diff(dvals) <= D_DEGENERATE_RTOL * scale)
        for r in range(m):
            v = W[r]
            lam = pencil.energy(v) / pencil.bnorm2(v)
            # a cluster occupies one slot for the position audit
            out.append(_Candidate(lam, float(dvals[r]), v, members[0].index, gid if degenerate else -1))
        if degenerate:
            gid += 1
        i = j
    return out


def _full(v, nodes, domain):
    """Vector with zero boundary values padded where the nodes stop short of the domain."""
    x, y = nodes, v
    if domain is not None:
        if x[0] > domain[0]:
            x = np.concatenate(([domain[0]], x))
            y = np.concatenate(([0.0], y))
        if x[-1] < domain[1]:
            x = np.concatenate((x, [domain[1]]))
            y = np.concatenate((y, [0.0]))
    return x, y


def _transfer(v, src: OperatorPencil, dst: OperatorPencil):
    if src.nodes is None or dst.nodes is None:
        if len(v) != dst.n:
            raise ValueError("cannot compare vectors of pencils without nodes and of different size")
        return v
    if len(src.nodes) == len(dst.nodes) and np.array_equal(src.nodes, dst.nodes):
        return v
    x, y = _full(v, src.nodes, src.meta.get("domain"))
    return np.interp(dst.nodes, x, y)


def overlap_matrix(old_vecs, old_pencil: OperatorPencil, new_vecs, new_pencil: OperatorPencil) -> np.ndarray:
    """Signed normalized B-overlaps, evaluated on the coarser of the two grids."""
    coarse = old_pencil if old_pencil.n <= new_pencil.n else new_pencil
    olds = [_transfer(v, old_pencil, coarse) for v in old_vecs]
    news = [_transfer(v, new_pencil, coarse) for v in new_vecs]
    w = coarse.weight
    O = np.array(olds).reshape(len(olds), -1)
    N = np.array(news).reshape(len(news), -1)
    on = np.sqrt(np.einsum("ij,ij,j->i", O, O, w))
    nn = np.sqrt(np.einsum("ij,ij,j->i", N, N, w))
    S = (O * w) @ N.T
    return S / np.outer(on, nn)


@dataclass
class _State:
    eps: float
    pencil: OperatorPencil
    lams: np.ndarray
    dlams: np.ndarray
    vecs: list
    active: list


def _match(S: np.ndarray, cands: list[_Candidate], active: list[int], theta: float):
    """Greedy overlap assignment; Procrustes inside degenerate groups.

    Returns (assignment, overlaps, conflicts): assignment[i] is a candidate
    index or a ('rot', group, column) tuple, conflicts lists old rows whose
    best candidate was claimed by another row.
    """
    groups: dict[int, list[int]] = {}
    units = []  # (members,)
    for j, c in enumerate(cands):
        if c.group >= 0:
            groups.setdefault(c.group, []).append(j)
        else:
            units.append([j])
    units.extend(groups.values())
    score = np.zeros((len(active), len(units)))
    for u, members in enumerate(units):
        score[:, u] = np.linalg.norm(S[np.ix_(active, members)], axis=1)
    best = {i: int(np.argmax(score[r])) for r, i in enumerate(active)}
    cap = [len(m) for m in units]
    order = sorted(((score[r, u], r, u) for r in range(len(active)) for u in range(len(units))), reverse=True)
    assigned_unit: dict[int, int] = {}
    for sc, r, u in order:
        i = active[r]
        if i in assigned_unit or cap[u] == 0:
            continue
        assigned_unit[i] = u
        cap[u] -= 1
    conflicts = [i for i in active if assigned_unit.get(i) != best[i]]
    # realize vectors
    result = {}
    by_unit: dict[int, list[int]] = {}
    for i, u in assigned_unit.items():
        by_unit.setdefault(u, []).append(i)
    for u, olds in by_unit.items():
        members = units[u]
        if len(members) == 1:
            j = members[0]
            result[olds[0]] = ("one", j, abs(S[olds[0], j]))
            continue
        M = S[np.ix_(olds, members)]  # q x m
        U, sv, Wt = np.linalg.svd(M, full_matrices=False)
        R = Wt.T @ U.T  # m x q, orthonormal columns
        for col, i in enumerate(olds):
            ov = abs(float(M[col] @ R[:, col]))
            result[i] = ("rot", members, R[:, col], ov)
    return result, conflicts


def _pencils(problem, eps):
    grid = problem.grid(eps)
    p = problem.pencil(eps, grid)
    dp = problem.dpencil(eps, grid)
    if grid is not None:
        p.meta["domain"] = (float(grid.nodes[0]), float(grid.nodes[-1]))
    return p, dp


def _attempt(problem, state: _State, new_eps: float, opts: TrackOptions):
    pencil, dpencil = _pencils(problem, new_eps)
    act = state.active
    lam = state.lams[act]
    pred = lam + state.dlams[act] * (new_eps - state.eps)
    pad = opts.window_rtol * np.maximum(np.abs(lam), np.abs(pred)) + 2.0 * np.abs(pred - lam)
    pad = np.maximum(pad, 1e-12 * max(1.0, float(np.max(np.abs(lam)))))
    lo = float(np.min(np.minimum(lam, pred) - pad))
    hi = float(np.max(np.maximum(lam, pred) + pad))
    pairs = eigenpairs_in_window(pencil, lo, hi, opts.tol, opts.max_window)
    if not pairs:
        return pencil, None, {i: ("none",) for i in act}, act
    cands = _resolve(pairs, pencil, dpencil)
    S = overlap_matrix(state.vecs, state.pencil, [c.vector for c in cands], pencil)
    result, conflicts = _match(S, cands, act, opts.theta)
    out = {}
    for i in act:
        r = result.get(i)
        if r is None:
            out[i] = ("none",)
            continue
        if r[0] == "one":
            c = cands[r[1]]
            out[i] = ("ok", c.lam, c.dlam, c.vector, r[2], c.index)
        else:
            members, coeffs, ov = r[1], r[2], r[3]
            v = sum(cf * cands[j].vector for cf, j in zip(coeffs, members))
            v = v / np.sqrt(pencil.bnorm2(v))
            lam_v = pencil.energy(v) / pencil.bnorm2(v)
            out[i] = ("ok", lam_v, _dquad(dpencil, lam_v, v), v, ov, cands[members[0]].index)
    return pencil, cands, out, conflicts


def _between_counts(indices) -> tuple:
    idx = np.sort(np.asarray(indices))
    return tuple(np.maximum(np.diff(idx) - 1, 0))


def _march(problem, branches: list[EigenBranch], state: _State, eps_end: float, opts: TrackOptions):
    direction = -1.0 if eps_end < state.eps else 1.0
    nominal = lambda e: e * (1.0 - opts.step_factor) if direction < 0 else e * (1.0 / opts.step_factor - 1.0)
    step = nominal(state.eps)
    while state.active and direction * (eps_end - state.eps) > 0 and not np.isclose(state.eps, eps_end, rtol=1e-14, atol=0):
        step = min(step, abs(eps_end - state.eps))
        new_eps = state.eps + direction * step
        if np.isclose(new_eps, eps_end, rtol=1e-12, atol=0):
            new_eps = eps_end
        pencil, cands, res, conflicts = _attempt(problem, state, new_eps, opts)
        failed = [i for i in state.active if res[i][0] != "ok" or res[i][4] < opts.theta]
        if not failed and opts.audit and len(state.active) > 1:
            before = _between_counts([branches[i].samples[-1].index for i in state.active])
            after = _between_counts([res[i][5] for i in state.active])
            if before != after:
                if step * 0.5 >= opts.min_step * state.eps:
                    step *= 0.5
                    continue
                log.warning("between-count changed at eps=%.6g below the minimum step", new_eps)
        if failed:
            if step * 0.5 >= opts.min_step * state.eps:
                step *= 0.5
                continue
            for i in failed:
                br = branches[i]
                br.status = BranchStatus.LOST if i in conflicts else BranchStatus.STEP_UNDERFLOW
                log.warning("branch %s stopped at eps=%.6g: %s", br.branch_id, state.eps, br.status.value)
            state.active = [i for i in state.active if i not in failed]
            if not state.active:
                break
        # accept for all remaining active branches
        for i in state.active:
            _, lam, dlam, vec, ov, idx = res[i]
            state.lams[i] = lam
            state.dlams[i] = dlam
            state.vecs[i] = vec
            branches[i].samples.append(BranchSample(float(new_eps), float(lam), float(dlam), float(ov), int(idx)))
        state.eps = new_eps
        state.pencil = pencil
        step = min(2.0 * step, nominal(state.eps))
    for i, br in enumerate(branches):
        br.vector = state.vecs[i]
        br.nodes = state.pencil.nodes
    return branches


def track(problem, eps_hi: float, eps_lo: float, k_branches: int, opts: TrackOptions = TrackOptions(),
          id_prefix: str | None = None) -> list[EigenBranch]:
    """Follow the k lowest branches at eps_hi down to eps_lo.

    ``problem`` provides ``grid(eps)``, ``pencil(eps, grid)`` and
    ``dpencil(eps, grid)`` (a ``SectorProblem`` or ``MatrixFamily``).
    """
    if not eps_hi > eps_lo > 0:
        raise ValueError("need eps_hi > eps_lo > 0")
    pencil, dpencil = _pencils(problem, eps_hi)
    pairs = lowest_eigenpairs(pencil, k_branches, opts.tol)
    cands = _resolve(pairs, pencil, dpencil)
    mu = float(getattr(problem, "mu", 0.0))
    prefix = id_prefix if id_prefix is not None else f"mu{mu:.6g}"
    branches = []
    for j, c in enumerate(cands):
        br = EigenBranch(f"{prefix}-b{j}", mu)
        br.samples.append(BranchSample(float(eps_hi), float(c.lam), float(c.dlam), 1.0, int(c.index)))
        branches.append(br)
    state = _State(eps_hi, pencil, np.array([c.lam for c in cands]), np.array([c.dlam for c in cands]),
                   [c.vector for c in cands], list(range(len(cands))))
    return _march(problem, branches, state, eps_lo, opts)


def retrack(problem, branches: list[EigenBranch], eps_end: float, opts: TrackOptions = TrackOptions()) -> list[EigenBranch]:
    """Continue from the terminal vectors of ``branches`` to eps_end (either direction)."""
    eps0 = branches[0].samples[-1].eps
    pencil, _ = _pencils(problem, eps0)
    new = []
    for br in branches:
        s = br.samples[-1]
        nb = EigenBranch(br.branch_id, br.mu)
        nb.samples.append(BranchSample(s.eps, s.lam, s.dlam, 1.0, s.index))
        new.append(nb)
    state = _State(eps0, pencil, np.array([b.samples[-1].lam for b in branches]),
                   np.array([b.samples[-1].dlam for b in branches]),
                   [b.vector for b in branches], [i for i, b in enumerate(branches) if b.vector is not None])
    return _march(problem, new, state, eps_end, opts)


def sturm_audit(branches: list[EigenBranch]) -> bool:
    """True when the eigenvalue counts between consecutive tracked values never change.

    Compares the spectral positions recorded at each common sample; a branch
    swap that skipped an eigenvalue shows up as a changed count.
    """
    n = min(len(b.samples) for b in branches)
    prev = None
    for j in range(n):
        cur = _between_counts([b.samples[j].index for b in branches])
        if prev is not None and cur != prev:
            return False
        prev = cur
    return True


def derivative_consistency(branch: EigenBranch) -> float:
    """max |lam'_HF - secant| / (|lam'_HF| + 1) over accepted steps (HF averaged at both ends)."""
    e, lam, d = branch.eps, branch.lam, branch.dlam
    if len(e) < 2:
        return 0.0
    sec = np.diff(lam) / np.diff(e)
    hf = 0.5 * (d[1:] + d[:-1])
    return float(np.max(np.abs(hf - sec) / (np.abs(hf) + 1.0)))


def branches_to_csv(branch: EigenBranch) -> str:
    buf = io.StringIO()
    buf.write(f"# {CSV_VERSION}\n")
    buf.write(f"# branch_id={branch.branch_id} mu={float(branch.mu)!r} status={branch.status.value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in branch.samples:
        w.writerow([branch.branch_id, repr(float(branch.mu)), repr(s.eps), repr(s.lam), repr(s.dlam), repr(s.overlap)])
    return buf.getvalue()


def write_branch_csv(branch: EigenBranch, path: Path) -> Path:
    path = Path(path)
    path.write_text(branches_to_csv(branch), encoding="utf-8")
    return path


class BranchCSVError(ValueError):
    pass


def read_branch_csv(path_or_text) -> EigenBranch:
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and path_or_text and "\n" not in path_or_text):
        text = Path(path_or_text).read_text(encoding="utf-8")
    else:
        text = path_or_text
    lines = text.splitlines()
    meta = {}
    body = []
    for ln in lines:
        if ln.startswith("#"):
            for tok in ln[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
        elif ln.strip():
            body.append(ln)
    if not body:
        raise BranchCSVError("branch CSV is empty")
    rows = list(csv.reader(body))
    if tuple(rows[0]) != CSV_COLUMNS:
        raise BranchCSVError(f"unexpected CSV columns {rows[0]}")
    if len(rows) < 2:
        raise BranchCSVError("branch CSV has no samples")
    try:
        bid = rows[1][0]
        mu = float(rows[1][1])
        br = EigenBranch(meta.get("branch_id", bid), mu, status=BranchStatus(meta.get("status", "COMPLETE")))
        for r in rows[1:]:
            if len(r) != len(CSV_COLUMNS):
                raise BranchCSVError(f"row has {len(r)} fields, expected {len(CSV_COLUMNS)}")
            br.samples.append(BranchSample(float(r[2]), float(r[3]), float(r[4]), float(r[5])))
    except ValueError as exc:
        if isinstance(exc, BranchCSVError):
            raise
        raise BranchCSVError(f"malformed branch CSV: {exc}") from None
    return br


def branch_filename(branch: EigenBranch) -> str:
    return f"branch_{branch.branch_id}.csv"
