"""Rate at which the mu = 0 hyperbolic branches approach their limit.

Fits lam(eps) = lam_inf + C / (log(1/eps) + D)^2 on the final decade of each
branch and extrapolates how small eps must be before the last-decade
oscillation falls below a tolerance.  The collar has length about
2 log(1/eps) in arclength and a potential tending to 1/4, so a Dirichlet
box predicts lam_inf = 1/4 and C = pi^2 (k + 1)^2 / 4.

With --deep the mu = 0 sector is first re-tracked with
configs/hyperbolic_mu0_deep.toml (down to eps = 5e-6 on a 20 points per eps
grid, about ten minutes) and the fit uses that run.

Usage: python scripts/mu0_convergence_rate.py [RUN_DIR] [--tol 0.02] [--deep]
"""
import argparse
import time
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, curve_fit

from warpspec.checks import tail_oscillation
from warpspec.cli import _write_branches, track_config
from warpspec.config import load_config
from warpspec.tracker import read_branch_csv

ROOT = Path(__file__).resolve().parents[1]


def model(eps, lam_inf, c, d):
    return lam_inf + c / (np.log(1.0 / eps) + d) ** 2


def eps_needed(params, global_max, tol):
    """Smallest-decade start eps_lo at which the model's tail oscillation equals tol."""
    def excess(log_eps):
        e = np.geomspace(10.0 ** log_eps * 10, 10.0 ** log_eps, 200)
        f = model(e, *params)
        return tail_oscillation(np.append(e, 1.0), np.append(f, global_max)) - tol
    lo, hi = -300.0, np.log10(0.02)
    if excess(hi) <= 0:
        return 10.0 ** hi
    if excess(lo) > 0:
        return 0.0
    return 10.0 ** brentq(excess, lo, hi, xtol=1e-6)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("run_dir", type=Path, nargs="?", default=ROOT / "runs" / "hyperbolic")
    p.add_argument("--tol", type=float, default=0.02)
    p.add_argument("--deep", action="store_true", help="re-track mu = 0 with the deep config first")
    args = p.parse_args()
    if args.deep:
        cfg = load_config(ROOT / "configs" / "hyperbolic_mu0_deep.toml")
        t0 = time.perf_counter()
        branches = track_config(cfg)
        args.run_dir = ROOT / cfg.output_dir
        _write_branches(branches, args.run_dir)
        print(f"tracked mu = 0 down to eps = {cfg.eps_lo:g} in {time.perf_counter() - t0:.0f} s "
              f"({', '.join(b.status.value for b in branches)})")
    files = sorted(args.run_dir.glob("branch_psi0-*.csv"))
    if not files:
        raise SystemExit(f"no mu = 0 branch CSVs in {args.run_dir}; run scripts/run_hyperbolic.py first")

    print(f"{'branch':>8} {'lam(eps_lo)':>12} {'lam_inf':>8} {'C':>8} {'box C':>8} {'D':>6} "
          f"{'fit err':>8} {'osc now':>8} {'eps for tol':>12}")
    for k, f in enumerate(files):
        br = read_branch_csv(f)
        e, lam = br.eps, br.lam
        m = e <= 10 * e.min() * (1 + 1e-12)
        params, _ = curve_fit(model, e[m], lam[m], p0=(0.25, np.pi**2 * (k + 1) ** 2 / 4, 1.0))
        fit_err = np.max(np.abs(model(e[m], *params) - lam[m]) / lam[m])
        need = eps_needed(params, float(lam.max()), args.tol)
        print(f"{br.branch_id:>8} {lam[np.argmin(e)]:12.6f} {params[0]:8.4f} {params[1]:8.3f} "
              f"{np.pi**2 * (k + 1) ** 2 / 4:8.3f} {params[2]:6.3f} {fit_err:8.1e} "
              f"{tail_oscillation(e, lam):8.4f} {need:12.2e}")


if __name__ == "__main__":
    main()
