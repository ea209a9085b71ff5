"""Versioned TOML run configuration."""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .fiber import FiberSpectrum, circle_spectrum, explicit_spectrum, square_torus_spectrum
from .operator import Boundary, GridPolicy, WarpedFamily
from .profiles import CaseLabel, ExponentData, Profile, classify, profile_from_id
from .tracker import TrackOptions

SCHEMA_VERSION = 1
CHECK_IDS = ("log_derivative_bound", "apriori_limit", "branch_limit", "mu_star", "negative_variation",
             "inner_radius", "k0_implication")
NEEDS_B_POSITIVE = {"apriori_limit", "mu_star", "inner_radius", "k0_implication"}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class FiberConfig:
    kind: str = "circle"
    length: float = 1.0
    mus: tuple = ()
    multiplicities: tuple = ()
    cutoff: int = 1

    def spectrum(self) -> FiberSpectrum:
        if self.kind == "circle":
            return circle_spectrum(self.length, max(self.cutoff, 1) + 4)
        if self.kind == "square_torus":
            return square_torus_spectrum(self.length, n_max=max(self.cutoff, 1) + 4)
        return explicit_spectrum(self.mus, self.multiplicities or None)


@dataclass(frozen=True)
class CheckConfig:
    enabled: tuple = CHECK_IDS
    limit_tol: float = 0.02
    slack: float = 0.05
    nv_margin: float = 0.2


@dataclass(frozen=True)
class ScarConfig:
    eta_min: float = 1e2
    eta_max: float = 1e6
    points: int = 9
    u_max: float = 8.0
    points_per_unit: int = 80
    oscillatory_beta: float = -5.0


@dataclass(frozen=True)
class RunConfig:
    name: str
    profile: str
    a: float
    b: float
    d: int
    T: float = 1.0
    boundary: Boundary = Boundary.DIRICHLET
    fiber: FiberConfig = FiberConfig()
    eps_hi: float = 0.2
    eps_lo: float = 1e-3
    step_factor: float = 0.95
    k_branches: int = 5
    theta: float = 0.9
    min_step: float = 1e-6
    grid: GridPolicy = GridPolicy()
    checks: CheckConfig = CheckConfig()
    scar: ScarConfig = ScarConfig()
    output_dir: str = "runs/out"
    workers: int = 1

    @property
    def exponents(self) -> ExponentData:
        return ExponentData(self.a, self.b, self.d)

    @property
    def profile_obj(self) -> Profile:
        return profile_from_id(self.profile)

    def family(self) -> WarpedFamily:
        return WarpedFamily(self.profile_obj, self.exponents, self.fiber.spectrum(), self.T, self.boundary, self.name)

    def track_options(self) -> TrackOptions:
        return TrackOptions(theta=self.theta, step_factor=self.step_factor, min_step=self.min_step)


def _get(table: dict, key: str, prefix: str, kind, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"{prefix}.{key}", "missing required field")
        return default
    val = table[key]
    try:
        if kind is float and isinstance(val, bool):
            raise TypeError
        return kind(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{prefix}.{key}", f"expected {kind.__name__}, got {val!r}") from None


def validate_hypotheses(exp: ExponentData, enabled) -> None:
    """Refuse checks whose theorem does not cover (a, b, d)."""
    geo = classify(exp)
    for cid in enabled:
        if cid not in CHECK_IDS:
            raise ConfigError("checks.enabled", f"unknown check {cid!r}")
        if cid in NEEDS_B_POSITIVE and not exp.b > 0:
            raise ConfigError("checks.enabled", f"{cid} requires b > 0 (Let b>0); got b = {exp.b}")
        if cid == "negative_variation" and not (exp.a < -1 and exp.b <= 0):
            raise ConfigError("checks.enabled", f"negative_variation requires a < -1 and b <= 0; got a = {exp.a}, b = {exp.b}")
        if cid == "branch_limit" and not (geo.main_theorem_scope or geo.case_label is CaseLabel.B_NONPOSITIVE):
            raise ConfigError("checks.enabled",
                              f"branch_limit requires b > 0 with a < -1 or a = -1 = -b d, or b < 0 with a <= -1; got (a, b) = ({exp.a}, {exp.b})")


def parse_config(data: dict) -> RunConfig:
    ver = data.get("schema_version")
    if ver != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {ver!r}")
    run = data.get("run", {})
    geo = data.get("geometry")
    if geo is None:
        raise ConfigError("geometry", "missing table")
    fib = data.get("fiber", {})
    trk = data.get("tracking", {})
    grd = data.get("grid", {})
    chk = data.get("checks", {})
    scr = data.get("scar", {})

    a = _get(geo, "a", "geometry", float, required=True)
    b = _get(geo, "b", "geometry", float, required=True)
    d = _get(geo, "d", "geometry", int, required=True)
    profile = _get(geo, "profile", "geometry", str, "sqrt")
    try:
        profile_from_id(profile)
    except ValueError as exc:
        raise ConfigError("geometry.profile", str(exc)) from None
    try:
        boundary = Boundary(_get(geo, "boundary", "geometry", str, "dirichlet").lower())
    except ValueError:
        raise ConfigError("geometry.boundary", "expected 'dirichlet' or 'neumann'") from None
    if d < 1:
        raise ConfigError("geometry.d", "fiber dimension must be at least 1")

    kind = _get(fib, "kind", "fiber", str, "circle")
    if kind not in ("circle", "square_torus", "explicit"):
        raise ConfigError("fiber.kind", f"unknown fiber kind {kind!r}")
    fiber = FiberConfig(kind, _get(fib, "length", "fiber", float, 1.0),
                        tuple(float(x) for x in fib.get("mus", ())),
                        tuple(int(x) for x in fib.get("multiplicities", ())),
                        _get(fib, "cutoff", "fiber", int, 1))
    if kind == "explicit" and not fiber.mus:
        raise ConfigError("fiber.mus", "explicit fiber spectrum needs a list of eigenvalues")

    enabled = tuple(chk.get("enabled", ()))
    checks = CheckConfig(enabled, _get(chk, "limit_tol", "checks", float, 0.02),
                         _get(chk, "slack", "checks", float, 0.05), _get(chk, "nv_margin", "checks", float, 0.2))
    cfg = RunConfig(
        name=_get(run, "name", "run", str, "run"),
        profile=profile, a=a, b=b, d=d,
        T=_get(geo, "T", "geometry", float, 1.0),
        boundary=boundary,
        fiber=fiber,
        eps_hi=_get(trk, "eps_hi", "tracking", float, 0.2),
        eps_lo=_get(trk, "eps_lo", "tracking", float, 1e-3),
        step_factor=_get(trk, "step_factor", "tracking", float, 0.95),
        k_branches=_get(trk, "k_branches", "tracking", int, 5),
        theta=_get(trk, "theta", "tracking", float, 0.9),
        min_step=_get(trk, "min_step", "tracking", float, 1e-6),
        grid=GridPolicy(_get(grd, "n_min", "grid", int, GridPolicy.n_min),
                        _get(grd, "points_per_eps", "grid", int, GridPolicy.points_per_eps),
                        _get(grd, "max_n", "grid", int, GridPolicy.max_n)),
        checks=checks,
        scar=ScarConfig(_get(scr, "eta_min", "scar", float, 1e2), _get(scr, "eta_max", "scar", float, 1e6),
                        _get(scr, "points", "scar", int, 9), _get(scr, "u_max", "scar", float, 8.0),
                        _get(scr, "points_per_unit", "scar", int, 80),
                        _get(scr, "oscillatory_beta", "scar", float, -5.0)),
        output_dir=_get(run, "output_dir", "run", str, "runs/out"),
        workers=_get(run, "workers", "run", int, 1),
    )
    if not cfg.eps_hi > cfg.eps_lo > 0:
        raise ConfigError("tracking.eps_lo", "need eps_hi > eps_lo > 0")
    if not 0.5 < cfg.theta < 1:
        raise ConfigError("tracking.theta", "must lie in (0.5, 1)")
    if not 0 < cfg.step_factor < 1:
        raise ConfigError("tracking.step_factor", "must lie in (0, 1)")
    if cfg.k_branches < 1:
        raise ConfigError("tracking.k_branches", "must be positive")
    if cfg.workers < 1:
        raise ConfigError("run.workers", "must be positive")
    validate_hypotheses(cfg.exponents, enabled)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError("config", f"no such file {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"invalid TOML: {exc}") from None
    return parse_config(data)
