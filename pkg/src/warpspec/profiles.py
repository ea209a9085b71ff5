"""Homogeneous degree-1 profile functions and (a, b, d) geometry classification.

A profile is a smooth positive function rho(eps, t) on R^2 minus the origin with
rho(c*eps, c*t) = c*rho(eps, t) for c > 0, convex along nonradial lines and
nondecreasing in eps.  The warped metric on the collar is
rho^{2a} dt^2 + rho^{2b} h.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

# exponent comparisons (a == -1, a + b*d == 0) tolerate config round-off
EXPONENT_ATOL = 1e-12


class Profile:
    """Base class; subclasses supply ``value``, ``d_eps`` and ``d_t``."""

    name: str = "profile"

    def value(self, eps, t):
        raise NotImplementedError

    def d_eps(self, eps, t):
        raise NotImplementedError

    def d_t(self, eps, t):
        raise NotImplementedError

    def d_tt(self, eps, t):
        return fd_d_tt(self, eps, t)

    def __call__(self, eps, t):
        return self.value(eps, t)

    def _check_domain(self, eps, t):
        eps = np.asarray(eps, dtype=float)
        t = np.asarray(t, dtype=float)
        if np.any((eps == 0.0) & (t == 0.0)):
            raise ValueError(f"profile {self.name!r} is undefined at (eps, t) = (0, 0)")
        if np.any(eps < 0.0):
            raise ValueError("profiles are only evaluated for eps >= 0")
        return eps, t


def _fd_step(eps, t):
    return 1e-6 * np.maximum(np.maximum(np.abs(eps), np.abs(t)), 1e-300)


def fd_d_eps(profile: Profile, eps, t):
    """Central-difference d/d eps, step 1e-6*max(eps, |t|).  Cross-validation only."""
    eps = np.asarray(eps, dtype=float)
    t = np.asarray(t, dtype=float)
    h = _fd_step(eps, t)
    return (profile.value(eps + h, t) - profile.value(eps - h, t)) / (2 * h)


def fd_d_t(profile: Profile, eps, t):
    eps = np.asarray(eps, dtype=float)
    t = np.asarray(t, dtype=float)
    h = _fd_step(eps, t)
    return (profile.value(eps, t + h) - profile.value(eps, t - h)) / (2 * h)


def fd_d_tt(profile: Profile, eps, t):
    eps = np.asarray(eps, dtype=float)
    t = np.asarray(t, dtype=float)
    h = 1e-4 * np.maximum(np.maximum(np.abs(eps), np.abs(t)), 1e-300)
    return (profile.value(eps, t + h) - 2 * profile.value(eps, t) + profile.value(eps, t - h)) / h**2


@dataclass(frozen=True)
class SqrtProfile(Profile):
    """rho = sqrt(eps^2 + t^2), the collar profile of a pinching hyperbolic geodesic."""

    name: str = "sqrt"

    def value(self, eps, t):
        eps, t = self._check_domain(eps, t)
        return np.hypot(eps, t)

    def d_eps(self, eps, t):
        return np.asarray(eps, dtype=float) / self.value(eps, t)

    def d_t(self, eps, t):
        return np.asarray(t, dtype=float) / self.value(eps, t)

    def d_tt(self, eps, t):
        r = self.value(eps, t)
        return np.asarray(eps, dtype=float) ** 2 / r**3


@dataclass(frozen=True)
class PowerProfile(Profile):
    """rho = (eps^p + t^p)^(1/p) for even p >= 2."""

    p: int = 4

    def __post_init__(self):
        if not isinstance(self.p, (int, np.integer)) or self.p < 2 or self.p % 2:
            raise ValueError(f"power profile needs an even integer p >= 2, got {self.p!r}")

    @property
    def name(self) -> str:  # type: ignore[override]
        return f"power:{self.p}"

    def value(self, eps, t):
        eps, t = self._check_domain(eps, t)
        if self.p == 2:
            return np.hypot(eps, t)
        # factor out the larger argument to stay in range for tiny eps
        m = np.maximum(np.abs(eps), np.abs(t))
        return m * ((eps / m) ** self.p + (t / m) ** self.p) ** (1.0 / self.p)

    def d_eps(self, eps, t):
        eps = np.asarray(eps, dtype=float)
        r = self.value(eps, t)
        return (eps / r) ** (self.p - 1)

    def d_t(self, eps, t):
        t = np.asarray(t, dtype=float)
        r = self.value(eps, t)
        return (t / r) ** (self.p - 1)

    def d_tt(self, eps, t):
        eps = np.asarray(eps, dtype=float)
        t = np.asarray(t, dtype=float)
        r = self.value(eps, t)
        p = self.p
        return (p - 1) * (t / r) ** (p - 2) * (eps / r) ** p / r


@dataclass(frozen=True)
class ShiftedProfile(Profile):
    """rho(eps, t - c*eps): moves the t-minimum from 0 to c*eps."""

    base: Profile = SqrtProfile()
    c: float = 0.0

    @property
    def name(self) -> str:  # type: ignore[override]
        return f"shifted:{self.base.name}:c={self.c:g}"

    def value(self, eps, t):
        eps = np.asarray(eps, dtype=float)
        return self.base.value(eps, np.asarray(t, dtype=float) - self.c * eps)

    def d_eps(self, eps, t):
        eps = np.asarray(eps, dtype=float)
        s = np.asarray(t, dtype=float) - self.c * eps
        return self.base.d_eps(eps, s) - self.c * self.base.d_t(eps, s)

    def d_t(self, eps, t):
        eps = np.asarray(eps, dtype=float)
        return self.base.d_t(eps, np.asarray(t, dtype=float) - self.c * eps)

    def d_tt(self, eps, t):
        eps = np.asarray(eps, dtype=float)
        return self.base.d_tt(eps, np.asarray(t, dtype=float) - self.c * eps)


@dataclass(frozen=True)
class ConstantProfile(Profile):
    """rho == value.  Not homogeneous; a synthetic test profile for flat operators."""

    level: float = 1.0
    name: str = "constant"

    def value(self, eps, t):
        eps = np.asarray(eps, dtype=float)
        t = np.asarray(t, dtype=float)
        return np.full(np.broadcast(eps, t).shape, float(self.level))

    def d_eps(self, eps, t):
        return np.zeros(np.broadcast(np.asarray(eps), np.asarray(t)).shape)

    def d_t(self, eps, t):
        return np.zeros(np.broadcast(np.asarray(eps), np.asarray(t)).shape)

    def d_tt(self, eps, t):
        return np.zeros(np.broadcast(np.asarray(eps), np.asarray(t)).shape)


def make_sqrt_profile() -> SqrtProfile:
    return SqrtProfile()


def make_power_profile(p: int) -> PowerProfile:
    return PowerProfile(p)


def profile_from_id(ident: str) -> Profile:
    """Parse ``sqrt``, ``power:4`` or ``shifted:sqrt:c=0.3`` (base may itself be ``power:p``)."""
    ident = ident.strip()
    if ident == "sqrt":
        return SqrtProfile()
    if ident.startswith("power:"):
        try:
            p = int(ident.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad power profile id {ident!r}") from None
        return PowerProfile(p)
    if ident.startswith("shifted:"):
        body = ident[len("shifted:"):]
        base_id, sep, cpart = body.rpartition(":")
        if not sep or not cpart.startswith("c="):
            raise ValueError(f"bad shifted profile id {ident!r}; expected shifted:<base>:c=<value>")
        return ShiftedProfile(profile_from_id(base_id), float(cpart[2:]))
    raise ValueError(f"unknown profile id {ident!r}")


def log_deriv(profile: Profile, eps, t):
    """(d rho/d eps) / rho at (eps, t); at most 1/eps, attained only at t = 0."""
    if np.any(np.asarray(eps) <= 0):
        raise ValueError("log_deriv needs eps > 0")
    return profile.d_eps(eps, t) / profile.value(eps, t)


@dataclass(frozen=True)
class ExponentData:
    a: float
    b: float
    d: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"fiber dimension d must be a positive integer, got {self.d!r}")


class CaseLabel(str, enum.Enum):
    HYPERBOLIC_LIKE = "HYPERBOLIC_LIKE"
    B_NONPOSITIVE = "B_NONPOSITIVE"
    ADIABATIC = "ADIABATIC"
    OUT_OF_SCOPE = "OUT_OF_SCOPE"


@dataclass(frozen=True)
class GeometryClass:
    complete: bool
    finite_volume: bool
    main_theorem_scope: bool
    case_label: CaseLabel


def _eq(x: float, y: float) -> bool:
    return math.isclose(x, y, rel_tol=0.0, abs_tol=EXPONENT_ATOL)


def classify(exp: ExponentData) -> GeometryClass:
    a, b, d = float(exp.a), float(exp.b), int(exp.d)
    a_is_m1 = _eq(a, -1.0)
    complete = a < -1.0 or a_is_m1
    vol = a + b * d
    finite_volume = vol > -1.0 and not _eq(vol, -1.0)
    b_pos = b > 0.0 and not _eq(b, 0.0)
    main = b_pos and ((a < -1.0 and not a_is_m1) or (a_is_m1 and _eq(vol, 0.0)))
    if main:
        label = CaseLabel.HYPERBOLIC_LIKE
    elif a_is_m1 and _eq(b, 0.0):
        label = CaseLabel.ADIABATIC
    elif (a < -1.0 and not a_is_m1 and not b_pos) or (a_is_m1 and b < 0.0 and not _eq(b, 0.0)):
        label = CaseLabel.B_NONPOSITIVE
    else:
        label = CaseLabel.OUT_OF_SCOPE
    return GeometryClass(complete, finite_volume, main, label)


def describe(exp: ExponentData) -> str:
    """One-line human summary used by the ``classify`` subcommand."""
    g = classify(exp)
    if g.case_label is CaseLabel.ADIABATIC:
        return "adiabatic case (-1, 0): out of scope (future work)"
    parts = ["complete" if g.complete else "incomplete",
             "finite volume" if g.finite_volume else "infinite volume"]
    if g.case_label is CaseLabel.HYPERBOLIC_LIKE:
        scope = "Main Theorem scope"
        if _eq(exp.a, -1.0) and _eq(exp.b, 1.0):
            scope += " (hyperbolic degeneration)"
    elif g.case_label is CaseLabel.B_NONPOSITIVE:
        if _eq(exp.a, -1.0):
            scope = "b <= 0 regime: branches stay bounded"
        else:
            scope = "b <= 0 regime: branches converge"
    else:
        scope = "out of scope"
    parts.append(scope)
    return ", ".join(parts)
