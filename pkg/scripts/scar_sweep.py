"""Harmonic-model scar sweep: half-mass width vs eta, Gaussian oracle, mass ratios.

Usage: python scripts/scar_sweep.py [--eta-min 1e2] [--eta-max 1e6] [--points 9] [--out runs/scar]
"""
import argparse
from pathlib import Path

import numpy as np

from warpspec.scarode import gaussian_half_mass_width, oscillatory_ratio, sweep_to_csv, width_exponent

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--eta-min", type=float, default=1e2)
    p.add_argument("--eta-max", type=float, default=1e6)
    p.add_argument("--points", type=int, default=9)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=ROOT / "runs" / "scar")
    args = p.parse_args()

    etas = np.geomspace(args.eta_min, args.eta_max, args.points)
    slope, stderr, pts = width_exponent(etas, workers=args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "scar_sweep.csv").write_text(sweep_to_csv(pts), encoding="utf-8")

    print(f"{'eta':>10} {'width':>12} {'gauss':>12} {'rel gap':>9} {'mass ratio':>11} {'osc ratio':>10}")
    for pt in pts:
        g = gaussian_half_mass_width(pt.eta)
        osc = oscillatory_ratio(pt.eta).value
        print(f"{pt.eta:10.3g} {pt.width:12.6e} {g:12.6e} {abs(pt.width - g) / g:9.1e} "
              f"{pt.mass_ratio:11.6f} {osc:10.6f}")
    print(f"\nwidth exponent {slope:.6f} +- {stderr:.1e} (expected -1/4)")


if __name__ == "__main__":
    main()
