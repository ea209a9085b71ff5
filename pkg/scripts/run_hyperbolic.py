"""Track the hyperbolic collar (a, b, d) = (-1, 1, 1) and run every enabled check.

Usage: python scripts/run_hyperbolic.py [--config configs/hyperbolic.toml] [--out runs/hyperbolic]
"""
import argparse
import time
from pathlib import Path

from warpspec import checks as ck
from warpspec.cli import _write_branches, plot_branches, run_checks, track_config
from warpspec.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path, default=ROOT / "configs" / "hyperbolic.toml")
    p.add_argument("--out", type=Path)
    args = p.parse_args()
    cfg = load_config(args.config)
    out = args.out or ROOT / cfg.output_dir

    t0 = time.perf_counter()
    branches = track_config(cfg)
    elapsed = time.perf_counter() - t0
    _write_branches(branches, out)
    reports, inspections = run_checks(cfg, branches)
    ck.write_jsonl(list(reports) + inspections, out / "reports.jsonl")
    table = ck.summary_table(reports)
    (out / "summary.txt").write_text(table + "\n", encoding="utf-8")
    plot_branches(branches, cfg.exponents, out / "branches.svg")
    print(table)
    print(f"\ntracked {len(branches)} branches in {elapsed:.1f} s; outputs in {out}")


if __name__ == "__main__":
    main()
