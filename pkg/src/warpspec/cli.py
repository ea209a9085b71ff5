"""Command line front end: classify, track, check, scar, oracle.

Exit codes: 0 ok, 1 check failure, 2 usage or config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import checks as ck
from .config import ConfigError, RunConfig, load_config
from .eigen import EigenSolveError
from .fiber import fourier_mode_split
from .operator import AssemblyError, Boundary, SectorProblem
from .oracles import avoided_crossing_family, flat_sturm_liouville, flat_torus_branches, flat_torus_family
from .profiles import ExponentData, classify, describe
from .scarode import (ScarError, PointStatus, harmonic_ground_state, oscillatory_ratio, sweep_to_csv,
                      width_exponent)
from .tracker import (BranchCSVError, BranchStatus, EigenBranch, TrackOptions, branch_filename,
                      read_branch_csv, track, write_branch_csv)

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
log = logging.getLogger("warpspec")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="warpspec", description="Eigenvalue branches of degenerating warped products.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    c = sub.add_parser("classify", help="classify exponents (a, b, d)")
    c.add_argument("-a", type=float, required=True)
    c.add_argument("-b", type=float, required=True)
    c.add_argument("-d", type=int, required=True)

    t = sub.add_parser("track", help="track eigenvalue branches")
    src = t.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path)
    src.add_argument("--family", choices=["flat-torus"])
    t.add_argument("--out", type=Path, help="output directory (overrides the config)")
    t.add_argument("--eps-hi", type=float, default=0.5)
    t.add_argument("--eps-lo", type=float, default=1e-3)
    t.add_argument("-k", "--k-branches", type=int, default=6)
    t.add_argument("--max-index", type=int, default=12)

    k = sub.add_parser("check", help="run theorem checks on branch CSVs")
    k.add_argument("--config", type=Path, required=True)
    k.add_argument("branches", nargs="+", type=Path, help="branch CSV files or directories")
    k.add_argument("--out", type=Path)
    k.add_argument("--no-plot", action="store_true")

    s = sub.add_parser("scar", help="scar-width sweep of the harmonic model")
    s.add_argument("--config", type=Path)
    s.add_argument("--out", type=Path)

    o = sub.add_parser("oracle", help="print closed-form oracle values as CSV")
    o.add_argument("name", choices=["flat-torus", "avoided-crossing", "sturm-liouville"])
    o.add_argument("--eps", type=float, default=0.5)
    o.add_argument("--max-index", type=int, default=3)
    o.add_argument("--delta", type=float, default=0.05)
    o.add_argument("--mu", type=float, default=0.0)
    o.add_argument("--boundary", choices=["dirichlet", "neumann"], default="dirichlet")
    o.add_argument("-k", type=int, default=5)
    return p


# --- classify -------------------------------------------------------------------

def cmd_classify(args) -> int:
    try:
        exp = ExponentData(args.a, args.b, args.d)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(describe(exp))
    return EXIT_OK


# --- track ------------------------------------------------------------------------

def _write_branches(branches, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    return [write_branch_csv(br, out / branch_filename(br)) for br in branches]


def track_config(cfg: RunConfig) -> list[EigenBranch]:
    fam = cfg.family()
    sectors = fourier_mode_split(fam.fiber, cfg.fiber.cutoff)
    opts = cfg.track_options()

    def one(sec):
        return track(SectorProblem(fam, sec.mu, cfg.grid), cfg.eps_hi, cfg.eps_lo, cfg.k_branches, opts,
                     id_prefix=sec.label)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            results = list(ex.map(one, sectors))
    else:
        results = [one(s) for s in sectors]
    return [br for group in results for br in group]


def cmd_track(args) -> int:
    if args.family == "flat-torus":
        fam, pairs = flat_torus_family(args.max_index)
        brs = track(fam, args.eps_hi, args.eps_lo, args.k_branches, TrackOptions(audit=False), id_prefix="torus")
        out = args.out or Path("runs/flat-torus")
    else:
        cfg = load_config(args.config)
        brs = track_config(cfg)
        out = args.out or Path(cfg.output_dir)
    paths = _write_branches(brs, out)
    for br, pth in zip(brs, paths):
        print(f"{br.branch_id:>12}  {br.status.value:<14}  samples={len(br.samples):4d}  "
              f"lambda(eps_lo)={br.samples[-1].lam:.10g}  -> {pth}")
    if any(br.status is BranchStatus.LOST for br in brs):
        return EXIT_NUMERIC
    return EXIT_OK


# --- check ------------------------------------------------------------------------

def _collect(paths) -> list[Path]:
    files = []
    for p in paths:
        if p.is_dir():
            files.extend(sorted(p.glob("branch_*.csv")))
        elif p.exists():
            files.append(p)
        else:
            raise UsageError(f"no such file or directory: {p}")
    if not files:
        raise UsageError("no branch CSV files given")
    return files


def run_checks(cfg: RunConfig, branches: list[EigenBranch]):
    exp = cfg.exponents
    geo = classify(exp)
    prof = cfg.profile_obj
    spec = cfg.fiber.spectrum()
    enabled = set(cfg.checks.enabled)
    reports, inspections = [], []
    for br in branches:
        mu_star = None
        if exp.b > 0 and ck.has_decade(br):
            mu_star = ck.compute_mu_star(br, prof, exp.b, spec).mu_star
            inspections.append(ck.remainder_record(br, prof, exp.b, mu_star))
        if "log_derivative_bound" in enabled:
            reports.append(ck.check_log_derivative_bound(br, exp, cfg.checks.slack))
        if "apriori_limit" in enabled:
            reports.append(ck.check_apriori_limit(br, exp.b, cfg.checks.limit_tol))
        if "branch_limit" in enabled:
            reports.append(ck.check_branch_limit(br, geo, exp, cfg.checks.limit_tol))
        if "mu_star" in enabled:
            reports.append(ck.mu_star_report(br, prof, exp.b, spec))
        if "negative_variation" in enabled:
            reports.append(ck.negative_variation(br, ck.Transform.LOG1P, exp, cfg.checks.nv_margin).report)
        if "inner_radius" in enabled:
            if mu_star is None:
                reports.append(ck._inconclusive("inner_radius", br, "no mu_star estimate"))
            else:
                reports.append(ck.check_inner_radius(br, prof, exp.b, spec.mu1, mu_star))
        if "k0_implication" in enabled:
            reports.append(ck.check_k0_implication(br, exp.b, geo, exp, cfg.checks.limit_tol))
    return reports, inspections


def plot_branches(branches: list[EigenBranch], exp: ExponentData, path: Path) -> Path:
    """Log-log lambda(eps) per branch with the log-derivative envelope from the first sample."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "warpspec"
    const = ck.log_derivative_constant(exp)
    fig, ax = plt.subplots(figsize=(7, 5))
    for br in branches:
        e, lam = br.eps, br.lam
        pos = lam > 0
        if not np.any(pos):
            continue
        line, = ax.loglog(e[pos], lam[pos], lw=1.2, label=br.branch_id)
        e0, l0 = e[pos][0], lam[pos][0]
        grid = np.geomspace(e[pos].min(), e0, 50)
        ax.loglog(grid, l0 * (e0 / grid) ** const, ls=":", lw=0.6, color=line.get_color())
        ax.loglog(grid, l0 * (grid / e0) ** const, ls=":", lw=0.6, color=line.get_color())
    ax.set_xlabel("eps")
    ax.set_ylabel("lambda")
    ax.set_title("branches with log-derivative envelopes")
    ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    files = _collect(args.branches)
    try:
        branches = [read_branch_csv(f) for f in files]
    except BranchCSVError as exc:
        raise UsageError(str(exc)) from None
    reports, inspections = run_checks(cfg, branches)
    out = args.out or Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ck.write_jsonl(list(reports) + inspections, out / "reports.jsonl")
    table = ck.summary_table(reports)
    (out / "summary.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    if not args.no_plot:
        plot_branches(branches, cfg.exponents, out / "branches.svg")
    return EXIT_CHECK if any(r.verdict is ck.Verdict.FAIL for r in reports) else EXIT_OK


# --- scar -------------------------------------------------------------------------

def cmd_scar(args) -> int:
    from .config import ScarConfig
    cfg = load_config(args.config) if args.config else None
    sc = cfg.scar if cfg else ScarConfig()
    workers = cfg.workers if cfg else 1
    etas = np.geomspace(sc.eta_min, sc.eta_max, sc.points)

    def solver(eta):
        return harmonic_ground_state(eta, sc.u_max, sc.points_per_unit)

    try:
        slope, stderr, pts = width_exponent(etas, solver, workers=workers)
    except ScarError as exc:
        print(f"scar sweep failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = args.out or Path(cfg.output_dir if cfg else "runs/scar")
    out.mkdir(parents=True, exist_ok=True)
    (out / "scar_sweep.csv").write_text(sweep_to_csv(pts), encoding="utf-8")
    osc = [oscillatory_ratio(e, sc.oscillatory_beta).value for e in etas]
    print(f"width exponent {slope:.6f} +- {stderr:.2e} over eta in [{sc.eta_min:g}, {sc.eta_max:g}]")
    print(f"ground-state mass ratio sup {max(p.mass_ratio for p in pts if p.status is PointStatus.OK):.6g}")
    print(f"oscillatory (eta^1/2 beta = {sc.oscillatory_beta:g}) mass ratio sup {max(osc):.6g}")
    return EXIT_OK


# --- oracle -----------------------------------------------------------------------

def cmd_oracle(args) -> int:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if args.name == "flat-torus":
        w.writerow(["m", "n", "lambda"])
        for m, n, lam in flat_torus_branches(args.eps, args.max_index):
            w.writerow([m, n, repr(lam)])
    elif args.name == "avoided-crossing":
        try:
            ac = avoided_crossing_family(args.delta)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        lo, hi = ac.eigenvalues(args.eps)
        dlo, dhi = ac.derivatives(args.eps)
        w.writerow(["eps", "lambda_minus", "lambda_plus", "dlambda_minus", "dlambda_plus"])
        w.writerow([repr(args.eps), repr(float(lo)), repr(float(hi)), repr(float(dlo)), repr(float(dhi))])
    else:
        try:
            vals = flat_sturm_liouville(args.mu, Boundary(args.boundary), args.k)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        w.writerow(["k", "lambda"])
        start = 1 if args.boundary == "dirichlet" else 0
        for j, v in enumerate(vals):
            w.writerow([start + j, repr(float(v))])
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


COMMANDS = {"classify": cmd_classify, "track": cmd_track, "check": cmd_check, "scar": cmd_scar,
            "oracle": cmd_oracle}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.cmd](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EigenSolveError, AssemblyError, ScarError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
