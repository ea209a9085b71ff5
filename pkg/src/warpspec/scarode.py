"""Model ODE w'' = (eta f (beta + s^2 h) + g) w, bound states and scar widths.

The integrator is classical RK4 on precomputed coefficient samples; growing
solutions are renormalized on the fly so shooting can reach bound states
through the exponential dichotomy.
"""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, replace
from typing import Callable

import numba
import numpy as np
from scipy import integrate, optimize, special

from .profiles import ExponentData, Profile

BLOWUP_LIMIT = 1e150
RENORM_AT = 1e50
STEP_SAFETY = 0.1
# half-mass width of exp(-u^2): erfinv(1/2)
GAUSSIAN_WIDTH_CONST = float(special.erfinv(0.5))


class ScarError(RuntimeError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def _const(c):
    return lambda s: np.full_like(np.asarray(s, dtype=float), c)


@dataclass(frozen=True)
class ModelODE:
    """w'' = (eta * f(s) * (beta + s^2 h(s)) + g(s)) * w with mass weight sigma."""

    f: Callable
    g: Callable
    h: Callable
    beta: float
    eta: float
    sigma: Callable = _const(1.0)

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    def q(self, s):
        s = np.asarray(s, dtype=float)
        return self.eta * self.f(s) * (self.beta + s * s * self.h(s)) + self.g(s)

    def with_beta(self, beta: float) -> "ModelODE":
        return replace(self, beta=float(beta))

    def stable_step(self, s0: float, s1: float, samples: int = 2001) -> float:
        s = np.linspace(s0, s1, samples)
        scale = np.sqrt(np.max(np.abs(self.eta * self.f(s) * (self.beta + s * s * self.h(s)))) + np.max(np.abs(self.g(s))))
        return STEP_SAFETY / max(scale, 1e-300)


def harmonic_model(eta: float, beta: float | None = None) -> ModelODE:
    """f = h = 1, g = 0; beta defaults to the ground-state value -eta^{-1/2}."""
    b = -eta ** -0.5 if beta is None else beta
    return ModelODE(_const(1.0), _const(0.0), _const(1.0), b, eta)


@dataclass(frozen=True)
class ODESolution:
    nodes: np.ndarray
    w: np.ndarray
    w_prime: np.ndarray
    eta: float
    beta: float

    def residual(self, ode: ModelODE) -> np.ndarray:
        """|w'' - q w| at interior nodes, w'' by central differences of w'."""
        s, w, wp = self.nodes, self.w, self.w_prime
        wpp = (wp[2:] - wp[:-2]) / (s[2:] - s[:-2])
        return np.abs(wpp - ode.q(s[1:-1]) * w[1:-1])


@numba.njit(cache=True, nogil=True)
def _rk4(h, qn, qm, w0, p0, renorm, limit, w, p, shifts):
    n = qm.shape[0]
    w[0] = w0
    p[0] = p0
    k = 0
    shifts[0] = 0
    for i in range(n):
        wi = w[i]
        pi = p[i]
        a1 = pi
        b1 = qn[i] * wi
        a2 = pi + 0.5 * h * b1
        b2 = qm[i] * (wi + 0.5 * h * a1)
        a3 = pi + 0.5 * h * b2
        b3 = qm[i] * (wi + 0.5 * h * a2)
        a4 = pi + h * b3
        b4 = qn[i + 1] * (wi + h * a3)
        wn = wi + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        pn = pi + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        if renorm:
            if abs(wn) > RENORM_AT or abs(pn) > RENORM_AT:
                wn /= RENORM_AT
                pn /= RENORM_AT
                k += 1
        elif abs(wn) > limit or not np.isfinite(wn):
            return i + 1
        w[i + 1] = wn
        p[i + 1] = pn
        shifts[i + 1] = k
    return -1


def solve_model(ode: ModelODE, interval, init, step: float, renormalize: bool = False,
                check_step: bool = True) -> ODESolution:
    """RK4 from interval[0] to interval[1] (either direction) with |h| <= step.

    With ``renormalize`` the returned w is rescaled to unit sup; early parts
    of a strongly growing solution then underflow to 0.
    """
    s0, s1 = float(interval[0]), float(interval[1])
    if s0 == s1:
        raise ValueError("empty interval")
    if step <= 0:
        raise ValueError("step must be positive")
    lo, hi = min(s0, s1), max(s0, s1)
    if check_step and step > ode.stable_step(lo, hi) * (1 + 1e-9):
        raise ValueError(f"step {step:g} does not resolve the local wavelength (need <= {ode.stable_step(lo, hi):g})")
    fpos = ode.f(np.linspace(lo, hi, 257))
    if np.any(fpos <= 0):
        raise ValueError("f must be positive on the interval")
    n = int(np.ceil(abs(s1 - s0) / step - 1e-9))
    nodes = np.linspace(s0, s1, n + 1)
    h = (s1 - s0) / n
    qn = ode.q(nodes)
    qm = ode.q(0.5 * (nodes[1:] + nodes[:-1]))
    w = np.zeros(n + 1)
    p = np.zeros(n + 1)
    shifts = np.zeros(n + 1, dtype=np.int64)
    bad = _rk4(h, qn, qm, float(init[0]), float(init[1]), renormalize, BLOWUP_LIMIT, w, p, shifts)
    if bad >= 0:
        raise ScarError("BLOWUP", f"|w| exceeded {BLOWUP_LIMIT:g} at s = {nodes[bad]:.6g}")
    if renormalize:
        factor = np.power(RENORM_AT, (shifts - shifts[-1]).astype(float))
        w, p = w * factor, p * factor
        m = np.max(np.abs(w))
        if m > 0:
            w, p = w / m, p / m
    return ODESolution(nodes, w, p, ode.eta, ode.beta)


def solve_centered(ode: ModelODE, halfwidth: float, init, step: float, center: float = 0.0) -> ODESolution:
    """Integrate outward from ``center`` in both directions and join."""
    right = solve_model(ode, (center, center + halfwidth), init, step)
    left = solve_model(ode, (center, center - halfwidth), init, step)
    return ODESolution(np.concatenate((left.nodes[:0:-1], right.nodes)),
                       np.concatenate((left.w[:0:-1], right.w)),
                       np.concatenate((left.w_prime[:0:-1], right.w_prime)), ode.eta, ode.beta)


# --- bound states -------------------------------------------------------------

def _nodes(w) -> int:
    sgn = np.sign(w[np.abs(w) > 0])
    return int(np.sum(sgn[1:] != sgn[:-1]))


def _decaying_init(ode: ModelODE, s, direction):
    """(w, w') growing in the direction of integration (WKB)."""
    q = float(ode.q(np.array([s]))[0])
    return 1.0, direction * np.sqrt(max(q, 1e-300))


@dataclass(frozen=True)
class BoundState:
    beta: float
    solution: ODESolution
    nodes: int


def ground_state(ode: ModelODE, beta_bracket, halfwidth: float, step: float | None = None,
                 match_at: float = 0.0, rtol: float = 1e-14) -> BoundState:
    """Lowest bound state on [match_at - halfwidth, match_at + halfwidth] by node-count bisection.

    beta_bracket = (lo, hi) must straddle the ground state: shooting at lo
    shows at least one node, shooting at hi none.
    """
    s0, s1 = match_at - halfwidth, match_at + halfwidth
    if step is None:
        step = min(ode.with_beta(b).stable_step(s0, s1) for b in beta_bracket)

    def shoot(beta):
        m = ode.with_beta(beta)
        sol = solve_model(m, (s0, s1), _decaying_init(m, s0, 1.0), step, renormalize=True, check_step=False)
        return _nodes(sol.w)

    lo, hi = map(float, beta_bracket)
    if shoot(lo) < 1 or shoot(hi) != 0:
        raise ScarError("NO_BRACKET", f"beta bracket [{lo:g}, {hi:g}] does not isolate the ground state")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= rtol * max(abs(lo), abs(hi)):
            break
        if shoot(mid) >= 1:
            lo = mid
        else:
            hi = mid
    beta = 0.5 * (lo + hi)
    m = ode.with_beta(beta)
    # join a left and a right decaying solution at the matching point
    left = solve_model(m, (s0, match_at), _decaying_init(m, s0, 1.0), step, renormalize=True, check_step=False)
    right = solve_model(m, (s1, match_at), _decaying_init(m, s1, -1.0), step, renormalize=True, check_step=False)
    if left.w[-1] == 0 or right.w[-1] == 0:
        raise ScarError("NON_CONVERGED", "decaying solution vanished at the matching point")
    c = left.w[-1] / right.w[-1]
    nodes = np.concatenate((left.nodes, right.nodes[-2::-1]))
    w = np.concatenate((left.w, c * right.w[-2::-1]))
    wp = np.concatenate((left.w_prime, c * right.w_prime[-2::-1]))
    scale = np.max(np.abs(w))
    sol = ODESolution(nodes, w / scale, wp / scale, m.eta, beta)
    return BoundState(beta, sol, _nodes(sol.w))


# --- mass integrals -----------------------------------------------------------

def _integral(s, y, a, b):
    """Trapezoid of the sampled y over [a, b] with linearly interpolated end values."""
    if s[0] > s[-1]:
        s, y = s[::-1], y[::-1]
    a, b = max(a, s[0]), min(b, s[-1])
    if b <= a:
        return 0.0
    inside = (s > a) & (s < b)
    xs = np.concatenate(([a], s[inside], [b]))
    ys = np.concatenate(([np.interp(a, s, y)], y[inside], [np.interp(b, s, y)]))
    return float(integrate.trapezoid(ys, xs))


@dataclass(frozen=True)
class MassRatio:
    value: float
    inner: float
    annulus: float
    conclusive: bool


def mass_ratio(sol: ODESolution, sigma: Callable | None, eta: float, I_halfwidth: float = 1.0,
               center: float = 0.0) -> MassRatio:
    """Mass on eta^{-1/4} I over mass on eta^{-1/4} (2I minus I), I = [-c, c]."""
    s = sol.nodes
    sig = np.ones_like(s) if sigma is None else sigma(s)
    y = sol.w ** 2 * sig
    r = eta ** -0.25 * I_halfwidth
    lo, hi = min(s[0], s[-1]), max(s[0], s[-1])
    if lo > center - 2 * r * (1 - 1e-12) or hi < center + 2 * r * (1 - 1e-12):
        raise ValueError("solution does not cover eta^{-1/4} * 2I")
    inner = _integral(s, y, center - r, center + r)
    ann = _integral(s, y, center - 2 * r, center - r) + _integral(s, y, center + r, center + 2 * r)
    if ann <= 1e-300 * max(inner, 1.0):
        return MassRatio(float("nan"), inner, ann, False)
    return MassRatio(inner / ann, inner, ann, True)


def half_mass_width(sol: ODESolution, center: float = 0.0) -> float:
    """Smallest W with the mass of w^2 on |s - center| <= W at least half the total."""
    s, y = sol.nodes, sol.w ** 2
    if s[0] > s[-1]:
        s, y = s[::-1], y[::-1]
    cum = np.concatenate(([0.0], integrate.cumulative_trapezoid(y, s)))
    total = cum[-1]
    reach = min(center - s[0], s[-1] - center)

    def excess(W):
        return np.interp(center + W, s, cum) - np.interp(center - W, s, cum) - 0.5 * total

    if excess(reach) < 0:
        raise ValueError("half of the mass lies outside the symmetric window")
    return float(optimize.brentq(excess, 0.0, reach, xtol=1e-15 * max(reach, 1e-300), rtol=4 * np.finfo(float).eps))


def gaussian_half_mass_width(eta: float) -> float:
    """Half-mass width of exp(-sqrt(eta) s^2 / 2), by quadrature and root finding."""
    a = np.sqrt(eta)
    total = np.sqrt(np.pi / a)

    def excess(W):
        return integrate.quad(lambda s: np.exp(-a * s * s), -W, W, epsabs=0, epsrel=1e-13)[0] - 0.5 * total

    hi = 10.0 * eta ** -0.25
    return float(optimize.brentq(excess, 0.0, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps))


# --- eta sweeps ----------------------------------------------------------------

class PointStatus(str, enum.Enum):
    OK = "OK"
    BLOWUP = "BLOWUP"
    NO_BRACKET = "NO_BRACKET"
    FAILED = "FAILED"


@dataclass(frozen=True)
class SweepPoint:
    eta: float
    beta: float
    width: float
    mass_ratio: float
    status: PointStatus


def harmonic_ground_state(eta: float, u_max: float = 8.0, points_per_unit: int = 80) -> BoundState:
    """Ground state of the harmonic model; lengths in units of eta^{-1/4}."""
    scale = eta ** -0.25
    ode = harmonic_model(eta, 0.0)
    b0 = eta ** -0.5
    return ground_state(ode, (-2.0 * b0, 0.0), u_max * scale, step=scale / points_per_unit)


def sweep_point(solver: Callable[[float], BoundState], eta: float, sigma=None) -> SweepPoint:
    try:
        st = solver(eta)
        w = half_mass_width(st.solution)
        mr = mass_ratio(st.solution, sigma, eta)
        return SweepPoint(eta, st.beta, w, mr.value, PointStatus.OK)
    except ScarError as exc:
        status = PointStatus(exc.code) if exc.code in PointStatus.__members__ else PointStatus.FAILED
        return SweepPoint(eta, float("nan"), float("nan"), float("nan"), status)


def width_sweep(eta_grid, solver: Callable[[float], BoundState] = harmonic_ground_state, sigma=None,
                workers: int = 1) -> list[SweepPoint]:
    eta_grid = [float(e) for e in eta_grid]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(lambda e: sweep_point(solver, e, sigma), eta_grid))
    return [sweep_point(solver, e, sigma) for e in eta_grid]


def width_exponent(eta_grid, solver: Callable[[float], BoundState] = harmonic_ground_state,
                   min_points: int = 5, workers: int = 1):
    """Least-squares slope of log W against log eta, with its standard error and the points."""
    eta_grid = np.asarray(eta_grid, dtype=float)
    if eta_grid.max() / eta_grid.min() < 1e3 * (1 - 1e-12):
        raise ValueError("eta grid must span at least three decades")
    pts = width_sweep(eta_grid, solver, workers=workers)
    ok = [p for p in pts if p.status is PointStatus.OK]
    if len(ok) < min_points:
        raise ScarError("TOO_FEW_POINTS", f"only {len(ok)} of {len(pts)} eta points succeeded")
    x = np.log([p.eta for p in ok])
    y = np.log([p.width for p in ok])
    A = np.vstack([x, np.ones_like(x)]).T
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    r = y - A @ coef
    dof = max(len(x) - 2, 1)
    stderr = float(np.sqrt((r @ r) / dof / np.sum((x - x.mean()) ** 2)))
    return float(coef[0]), stderr, pts


def sweep_to_csv(points: list[SweepPoint]) -> str:
    buf = io.StringIO()
    buf.write("# warpspec-scar-sweep v1\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["eta", "beta", "width", "mass_ratio", "status"])
    for p in points:
        wr.writerow([repr(p.eta), repr(p.beta), repr(p.width), repr(p.mass_ratio), p.status.value])
    return buf.getvalue()


def oscillatory_ratio(eta: float, scaled_beta: float = -5.0, points_per_unit: int = 200) -> MassRatio:
    """Mass ratio of the even harmonic solution with eta^{1/2} beta = scaled_beta."""
    scale = eta ** -0.25
    ode = harmonic_model(eta, scaled_beta * eta ** -0.5)
    sol = solve_centered(ode, 2.0 * scale, (1.0, 0.0), scale / points_per_unit)
    return mass_ratio(sol, None, eta)


# --- rescaling and the eigenfunction-equation wiring ---------------------------

def rescaled(ode: ModelODE) -> ModelODE:
    """The equation for x(u) = w(eta^{-1/4} u).

    x'' = (eta^{1/2} beta f + u^2 f h + eta^{-1/2} g)(eta^{-1/4} u) x, written
    as a model with eta = 1.
    """
    k = ode.eta ** -0.25
    f, g, h, sg = ode.f, ode.g, ode.h, ode.sigma
    return ModelODE(lambda u: f(k * np.asarray(u)), lambda u: ode.eta ** -0.5 * g(k * np.asarray(u)),
                    lambda u: h(k * np.asarray(u)), ode.eta ** 0.5 * ode.beta, 1.0,
                    lambda u: sg(k * np.asarray(u)))


def _rho1(profile: Profile):
    return lambda s: profile.value(1.0, np.asarray(s, dtype=float))


def conjugation_potential(profile: Profile, exp: ExponentData):
    """g = (R^c)'' / R^c with R = rho(1, .) and c = (-a + b d)/2."""
    c = 0.5 * (-exp.a + exp.b * exp.d)

    def g(s):
        s = np.asarray(s, dtype=float)
        R = profile.value(1.0, s)
        R1 = profile.d_t(1.0, s)
        R2 = profile.d_tt(1.0, s)
        return c * R2 / R + c * (c - 1.0) * (R1 / R) ** 2

    return g


def eigenfunction_model(profile: Profile, exp: ExponentData, mu: float, lam: float, eps: float) -> ModelODE:
    """Model ODE satisfied by v(s) = R^c(s) psi(eps s) for an eigenfunction psi.

    f = R^{2a-2b}, beta = mu / (lam eps^{2b}) - R^{2b}(0),
    h = -(R^{2b}(s) - R^{2b}(0)) / s^2, eta = eps^{2a+2} lam, sigma = R^{2a}.
    """
    a, b = exp.a, exp.b
    R = _rho1(profile)
    R0 = float(R(0.0)) ** (2 * b)

    def h(s):
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        small = np.abs(s) < 1e-4
        ss = s[~small]
        out[~small] = -(R(ss) ** (2 * b) - R0) / (ss * ss)
        if np.any(small):
            # -(R^{2b})''(0)/2 from a centered second difference
            d = 1e-4
            out[small] = -(R(d) ** (2 * b) - 2 * R0 + R(-d) ** (2 * b)) / (2 * d * d)
        return out

    return ModelODE(lambda s: R(s) ** (2 * a - 2 * b), conjugation_potential(profile, exp), h,
                    mu / (lam * eps ** (2 * b)) - R0, eps ** (2 * a + 2) * lam,
                    lambda s: R(s) ** (2 * a))
