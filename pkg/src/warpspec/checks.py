"""Measurable pass/fail reports for the limit theorems on tracked branches.

Every check reads only branch samples (eps, lam, dlam) and family data, so
a report computed from a branch read back from CSV is identical to the one
computed in memory.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fiber import FiberSpectrum, fourier_mode_split  # noqa: F401  (re-exported)
from .profiles import CaseLabel, ExponentData, GeometryClass, Profile
from .tracker import BranchStatus, EigenBranch

DEFAULT_LIMIT_TOL = 0.02
DEFAULT_SLACK = 0.05
MIN_SAMPLES = 10
# per-step decreases below this fraction of |f| count as roundoff, not variation
NV_NOISE_RTOL = 1e-12


class Verdict(str, enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"


class HypothesisViolation(ValueError):
    """A check was requested outside the hypotheses of its theorem."""


@dataclass
class CheckReport:
    check_id: str
    branch_id: str
    measured: dict = field(default_factory=dict)
    threshold: dict = field(default_factory=dict)
    verdict: Verdict = Verdict.INCONCLUSIVE
    notes: str = ""

    def to_record(self) -> dict:
        return {
            "record": "check",
            "check_id": self.check_id,
            "branch_id": self.branch_id,
            "measured": {k: _jsonable(v) for k, v in sorted(self.measured.items())},
            "threshold": {k: _jsonable(v) for k, v in sorted(self.threshold.items())},
            "verdict": self.verdict.value,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if np.isfinite(v) else repr(v)


def _inconclusive(check_id, branch, why, **measured) -> CheckReport:
    return CheckReport(check_id, branch.branch_id, dict(measured), {}, Verdict.INCONCLUSIVE, why)


# --- tail helpers -----------------------------------------------------------

def _ordered(branch: EigenBranch):
    """(eps, lam, dlam) sorted by increasing eps."""
    e, lam, d = branch.eps, branch.lam, branch.dlam
    o = np.argsort(e)
    return e[o], lam[o], d[o]


def has_decade(branch: EigenBranch) -> bool:
    e = branch.eps
    return len(e) >= 2 and e.min() * 10.0 <= e.max() * (1 + 1e-12)


def tail_mask(eps: np.ndarray, decades: float = 1.0) -> np.ndarray:
    """Samples in the final decade, eps_lo <= eps <= 10 eps_lo."""
    return eps <= eps.min() * 10.0 ** decades * (1 + 1e-12)


def tail_oscillation(eps, f) -> float:
    """(max - min) of f over the final decade, relative to max |f| over the whole branch.

    The whole-branch scale keeps the measure meaningful when the limit is 0.
    """
    eps, f = np.asarray(eps), np.asarray(f)
    m = tail_mask(eps)
    scale = float(np.max(np.abs(f)))
    if scale == 0.0:
        return 0.0
    ft = f[m]
    return float((ft.max() - ft.min()) / scale)


def loglog_slope(x, y) -> tuple[float, float]:
    """Least-squares slope of log y against log x and its standard error."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    if len(lx) < 2:
        return float("nan"), float("nan")
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    n = len(lx)
    if n > 2:
        r = ly - A @ coef
        s2 = float(r @ r) / (n - 2)
        stderr = float(np.sqrt(s2 / np.sum((lx - lx.mean()) ** 2)))
    else:
        stderr = 0.0
    return float(coef[0]), stderr


def tail_slope(branch: EigenBranch) -> tuple[float, float]:
    e, lam, _ = _ordered(branch)
    m = tail_mask(e) & (lam > 0)
    return loglog_slope(e[m], lam[m])


# --- log-derivative bound ---------------------------------------------------

def log_derivative_constant(exp: ExponentData) -> float:
    """(dim N + 1) * max(2|a|, 2|b|), with dim N = d + 1."""
    return (exp.d + 2) * max(2 * abs(exp.a), 2 * abs(exp.b))


def check_log_derivative_bound(branch: EigenBranch, exp: ExponentData, slack: float = DEFAULT_SLACK) -> CheckReport:
    cid = "log_derivative_bound"
    if len(branch.samples) < MIN_SAMPLES:
        return _inconclusive(cid, branch, f"fewer than {MIN_SAMPLES} samples")
    e, lam, d = branch.eps, branch.lam, branch.dlam
    pos = lam > 0
    if not np.any(pos):
        return _inconclusive(cid, branch, "lambda vanishes along the branch")
    const = log_derivative_constant(exp)
    if const == 0.0:
        measured = 0.0 if np.all(d[pos] == 0) else np.inf
    else:
        measured = float(np.max(np.abs(d[pos] / lam[pos]) * e[pos]) / const)
    notes = "collar supremum of |g'/g| used for the metric derivative"
    if not np.all(pos):
        notes += f"; {int(np.sum(~pos))} samples with lambda = 0 skipped"
    verdict = Verdict.PASS if measured <= 1.0 + slack else Verdict.FAIL
    return CheckReport(cid, branch.branch_id, {"sup_scaled": measured, "bound_constant": const},
                       {"sup_scaled_max": 1.0 + slack}, verdict, notes)


# --- a priori limit of eps^{2b} lam -----------------------------------------

def _require_b_positive(b: float):
    if not b > 0:
        raise HypothesisViolation(f"Let b>0 (got b = {b}): the a priori limit needs a positive fiber exponent")


def check_apriori_limit(branch: EigenBranch, b: float, tol: float = DEFAULT_LIMIT_TOL) -> CheckReport:
    cid = "apriori_limit"
    _require_b_positive(b)
    if not has_decade(branch):
        return _inconclusive(cid, branch, "less than one decade of eps")
    e, lam, _ = _ordered(branch)
    f = e ** (2 * b) * lam
    osc = tail_oscillation(e, f)
    verdict = Verdict.PASS if osc <= tol else Verdict.FAIL
    return CheckReport(cid, branch.branch_id, {"tail_oscillation": osc, "limit_estimate": float(f[0])},
                       {"tail_oscillation_max": tol}, verdict,
                       "oscillation over the final decade relative to the branch maximum of eps^(2b) lambda")


# --- mu_star ---------------------------------------------------------------

@dataclass(frozen=True)
class MuStar:
    mu_star: float
    resonant: bool
    distance: float
    resolution: float
    raw: float


def _sample_at(e, g, target):
    return float(np.interp(np.log(target), np.log(e), g))


def richardson_limit(e, g) -> float:
    """Aitken extrapolation of g to eps -> 0 from three geometric points of the last decade."""
    e, g = np.asarray(e, dtype=float), np.asarray(g, dtype=float)
    o = np.argsort(e)
    e, g = e[o], g[o]
    e0 = e[0]
    g0, g1, g2 = (_sample_at(e, g, e0 * r) for r in (1.0, np.sqrt(10.0), 10.0))
    d1, d2 = g0 - g1, g1 - g2
    if d1 == 0.0 or d2 == 0.0 or np.sign(d1) != np.sign(d2) or abs(d1) >= abs(d2):
        return g0
    # g_k = L + C q^k with k counting up in eps
    return g0 - d1 * d1 / (d1 - d2)


def compute_mu_star(branch: EigenBranch, profile: Profile, b: float, spectrum: FiberSpectrum) -> MuStar:
    _require_b_positive(b)
    if not has_decade(branch):
        raise ValueError("mu_star needs one decade of eps below the start")
    e, lam, _ = _ordered(branch)
    g = profile.value(e, np.zeros_like(e)) ** (2 * b) * lam
    raw = float(g[0])
    est = richardson_limit(e, g)
    m = tail_mask(e)
    resolution = float(g[m].max() - g[m].min()) + abs(est - raw) + 1e-9 * max(1.0, abs(est))
    positive = np.asarray(spectrum.positive(), dtype=float)
    distance = float(np.min(np.abs(positive - est))) if positive.size else np.inf
    return MuStar(float(est), bool(distance <= resolution), distance, resolution, raw)


def mu_star_report(branch: EigenBranch, profile: Profile, b: float, spectrum: FiberSpectrum) -> CheckReport:
    """mu_star as a record; resonance is information, not a failure."""
    if not has_decade(branch):
        return _inconclusive("mu_star", branch, "less than one decade of eps")
    ms = compute_mu_star(branch, profile, b, spectrum)
    return CheckReport("mu_star", branch.branch_id,
                       {"mu_star": ms.mu_star, "distance": ms.distance, "resolution": ms.resolution,
                        "resonant": ms.resonant}, {}, Verdict.PASS,
                       "resonant" if ms.resonant else "non-resonant")


# --- branch limit ------------------------------------------------------------

BOUNDED_SLOPE_MIN = -0.05


def check_branch_limit(branch: EigenBranch, geometry: GeometryClass, exp: ExponentData,
                       tol: float = DEFAULT_LIMIT_TOL) -> CheckReport:
    cid = "branch_limit"
    if branch.status is not BranchStatus.COMPLETE:
        return _inconclusive(cid, branch, f"branch status {branch.status.value}")
    if not has_decade(branch) or len(branch.samples) < MIN_SAMPLES:
        return _inconclusive(cid, branch, "short branch")
    e, lam, _ = _ordered(branch)
    if geometry.main_theorem_scope or (geometry.case_label is CaseLabel.B_NONPOSITIVE and exp.a < -1.0):
        osc = tail_oscillation(e, lam)
        verdict = Verdict.PASS if osc <= tol else Verdict.FAIL
        return CheckReport(cid, branch.branch_id, {"tail_oscillation": osc, "limit_estimate": float(lam[0])},
                           {"tail_oscillation_max": tol}, verdict, "convergence: final-decade oscillation")
    if geometry.case_label is CaseLabel.B_NONPOSITIVE:
        slope, stderr = tail_slope(branch)
        m = tail_mask(e)
        ratio = float(lam[m].max() / np.max(lam))
        verdict = Verdict.PASS if slope >= BOUNDED_SLOPE_MIN else Verdict.FAIL
        return CheckReport(cid, branch.branch_id, {"tail_slope": slope, "tail_slope_stderr": stderr,
                                                   "tail_max_over_global_max": ratio},
                           {"tail_slope_min": BOUNDED_SLOPE_MIN}, verdict, "boundedness: no growth trend")
    return _inconclusive(cid, branch, "geometry outside the scope of the limit theorems")


# --- negative variation ------------------------------------------------------

class Transform(str, enum.Enum):
    LOG1P = "LOG1P"
    RAW = "RAW"


@dataclass(frozen=True)
class NegativeVariation:
    eps_mid: np.ndarray
    nv_rate: np.ndarray  # decrease per unit log(eps) on each step
    nv_cumulative: np.ndarray  # negative variation over [eps_lo, eps_j]
    fitted_exponent: float
    report: CheckReport


def negative_variation(branch: EigenBranch, transform: Transform | str = Transform.LOG1P,
                       exp: ExponentData | None = None, margin: float = 0.2) -> NegativeVariation:
    """Negative variation of log(lam + 1) (or lam) as eps increases.

    The fitted exponent is the log-log slope of the per-step variation rate
    against eps over the final decade.
    """
    transform = Transform(transform)
    e, lam, _ = _ordered(branch)
    f = np.log1p(lam) if transform is Transform.LOG1P else lam
    df = np.diff(f)
    floor = NV_NOISE_RTOL * np.maximum(np.abs(f[1:]), np.abs(f[:-1]))
    dec = np.where(-df > floor, -df, 0.0)
    dlog = np.diff(np.log(e))
    rate = dec / dlog
    mid = np.sqrt(e[1:] * e[:-1])
    cum = np.concatenate(([0.0], np.cumsum(dec)))
    cid = "negative_variation"
    threshold = {}
    if exp is not None:
        threshold["fitted_exponent_min"] = (-2 * exp.a - 2) - margin
    if not np.any(dec > 0):
        rep = CheckReport(cid, branch.branch_id, {"nv_total": 0.0}, threshold, Verdict.PASS,
                          "monotone branch: negative variation vanishes identically")
        return NegativeVariation(mid, rate, cum, float("nan"), rep)
    m = tail_mask(mid) & (rate > 0)
    slope, stderr = loglog_slope(mid[m], rate[m]) if m.sum() >= 2 else (float("nan"), float("nan"))
    measured = {"fitted_exponent": slope, "fitted_exponent_stderr": stderr, "nv_total": float(cum[-1])}
    if exp is None or not np.isfinite(slope):
        verdict = Verdict.INCONCLUSIVE
        notes = "no exponent threshold" if exp is None else "too few decreasing steps in the tail"
    else:
        verdict = Verdict.PASS if slope >= threshold["fitted_exponent_min"] else Verdict.FAIL
        notes = f"transform {transform.value}"
    return NegativeVariation(mid, rate, cum, slope, CheckReport(cid, branch.branch_id, measured, threshold, verdict, notes))


# --- region A and the inner radius ------------------------------------------

@dataclass(frozen=True)
class RegionA:
    eps: float
    t_minus: float
    t_plus: float
    empty: bool = False


def _flank(phi, direction, scale, t_cap):
    """Root of the increasing flank phi on [0, direction * inf)."""
    hi = scale
    while phi(direction * hi) <= 0.0:
        hi *= 2.0
        if hi > t_cap:
            return direction * np.inf
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if phi(direction * mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    return direction * lo


def region_A(profile: Profile, b: float, mu1: float, lam: float, eps: float, t_cap: float = 1e12) -> RegionA:
    """The set {t : lam * rho^{2b}(eps, t) <= mu1 / 2} around t = 0."""
    _require_b_positive(b)
    if lam <= 0:
        raise ValueError("lambda must be positive")

    def phi(t):
        return lam * float(profile.value(eps, t)) ** (2 * b) - 0.5 * mu1

    if phi(0.0) > 0.0:
        return RegionA(eps, 0.0, 0.0, True)
    scale = max(eps, 1e-300)
    return RegionA(eps, _flank(phi, -1.0, scale, t_cap), _flank(phi, 1.0, scale, t_cap))


def inner_radius_ratios(branch: EigenBranch, profile: Profile, b: float, mu1: float):
    e, lam, _ = _ordered(branch)
    out = np.full(len(e), np.nan)
    for j, (ej, lj) in enumerate(zip(e, lam)):
        if lj <= 0:
            continue
        ra = region_A(profile, b, mu1, lj, ej)
        if not ra.empty:
            out[j] = min(abs(ra.t_minus), abs(ra.t_plus)) / ej
    return e, out


def check_inner_radius(branch: EigenBranch, profile: Profile, b: float, mu1: float, mu_star: float) -> CheckReport:
    """min |t_pm| / eps must not drift to 0 over the final decade.

    PASS iff the infimum over the lower half of the tail (smallest eps) is
    at least half the median over the whole tail.
    """
    cid = "inner_radius"
    if not mu_star < 0.5 * mu1:
        return _inconclusive(cid, branch, "mu_star >= mu1/2: the inner radius bound does not apply",
                             mu_star=mu_star)
    if not has_decade(branch):
        return _inconclusive(cid, branch, "less than one decade of eps")
    e, ratio = inner_radius_ratios(branch, profile, b, mu1)
    m = tail_mask(e) & np.isfinite(ratio)
    if m.sum() < 4:
        return _inconclusive(cid, branch, "region A empty on the tail")
    et, rt = e[m], ratio[m]
    lower = et <= np.median(et)
    inf_lower = float(np.min(rt[lower]))
    med = float(np.median(rt))
    verdict = Verdict.PASS if inf_lower >= 0.5 * med else Verdict.FAIL
    return CheckReport(cid, branch.branch_id, {"inf_lower_tail": inf_lower, "median_tail": med,
                                               "inf_tail": float(np.min(rt))},
                       {"inf_lower_over_median_min": 0.5}, verdict,
                       "ratio min|t_pm|/eps on the final decade")


# --- k0 and the finite-limit cross-check ---------------------------------------

@dataclass(frozen=True)
class K0Estimate:
    k0: float
    slope: float
    stderr: float


def estimate_k0(branch: EigenBranch, b: float) -> K0Estimate:
    _require_b_positive(b)
    if not has_decade(branch):
        raise ValueError("k0 needs one decade of eps")
    slope, stderr = tail_slope(branch)
    return K0Estimate(-slope / (2 * b), slope, stderr / (2 * b))


def check_k0_implication(branch: EigenBranch, b: float, geometry: GeometryClass, exp: ExponentData,
                         tol: float = DEFAULT_LIMIT_TOL, cutoff: float = 0.95) -> CheckReport:
    """k0 < cutoff must come with a passing branch-limit check."""
    cid = "k0_implication"
    if not has_decade(branch):
        return _inconclusive(cid, branch, "less than one decade of eps")
    k0 = estimate_k0(branch, b)
    lim = check_branch_limit(branch, geometry, exp, tol)
    measured = {"k0": k0.k0, "k0_stderr": k0.stderr, "branch_limit_pass": lim.verdict is Verdict.PASS}
    if k0.k0 >= cutoff:
        return CheckReport(cid, branch.branch_id, measured, {"k0_cutoff": cutoff}, Verdict.INCONCLUSIVE,
                           "k0 above the cutoff: no implication to test")
    verdict = Verdict.PASS if lim.verdict is Verdict.PASS else Verdict.FAIL
    return CheckReport(cid, branch.branch_id, measured, {"k0_cutoff": cutoff}, verdict,
                       "k0 below the cutoff requires a finite limit")


# --- remainder lam - mu_star rho^{-2b} (inspection only) ----------------------

def remainder_profile(branch: EigenBranch, profile: Profile, b: float, mu_star: float):
    e, lam, _ = _ordered(branch)
    return e, lam - mu_star * profile.value(e, np.zeros_like(e)) ** (-2 * b)


def remainder_record(branch: EigenBranch, profile: Profile, b: float, mu_star: float) -> dict:
    e, f = remainder_profile(branch, profile, b, mu_star)
    return {"record": "inspection", "quantity": "lambda - mu_star * rho^(-2b)(eps, 0)",
            "branch_id": branch.branch_id, "mu_star": float(mu_star),
            "eps": [float(x) for x in e], "value": [float(x) for x in f]}


# --- output ---------------------------------------------------------------

def write_jsonl(records, path: Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for r in records:
            rec = r.to_record() if isinstance(r, CheckReport) else r
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def summary_table(reports: list[CheckReport]) -> str:
    rows = [("check", "branch", "verdict", "measured")]
    for r in reports:
        meas = ", ".join(f"{k}={_fmt(v)}" for k, v in sorted(r.measured.items()))
        rows.append((r.check_id, r.branch_id, r.verdict.value, meas))
    w = [max(len(row[i]) for row in rows) for i in range(3)]
    lines = [f"{a:<{w[0]}}  {b:<{w[1]}}  {c:<{w[2]}}  {d}" for a, b, c, d in rows]
    lines.insert(1, "-" * (sum(w) + 6 + max(len(rows[0][3]), 8)))
    return "\n".join(lines)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    return f"{float(v):.6g}"
