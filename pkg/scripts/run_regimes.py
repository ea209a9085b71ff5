"""Track and check the converging (-1.5, -0.5) and bounded (-1, -0.5) regimes.

Usage: python scripts/run_regimes.py [--only converging|bounded]
"""
import argparse
import time
from pathlib import Path

from warpspec import checks as ck
from warpspec.cli import _write_branches, run_checks, track_config
from warpspec.config import load_config

ROOT = Path(__file__).resolve().parents[1]
REGIMES = ("converging", "bounded")


def run(name: str) -> int:
    cfg = load_config(ROOT / "configs" / f"{name}.toml")
    out = ROOT / cfg.output_dir
    t0 = time.perf_counter()
    branches = track_config(cfg)
    _write_branches(branches, out)
    reports, inspections = run_checks(cfg, branches)
    ck.write_jsonl(list(reports) + inspections, out / "reports.jsonl")
    table = ck.summary_table(reports)
    (out / "summary.txt").write_text(table + "\n", encoding="utf-8")
    print(f"== {name}: (a, b, d) = ({cfg.a}, {cfg.b}, {cfg.d}), eps in [{cfg.eps_lo:g}, {cfg.eps_hi:g}], "
          f"{time.perf_counter() - t0:.0f} s")
    print(table)
    return sum(r.verdict is ck.Verdict.FAIL for r in reports)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--only", choices=REGIMES)
    args = p.parse_args()
    fails = sum(run(name) for name in ([args.only] if args.only else REGIMES))
    raise SystemExit(1 if fails else 0)


if __name__ == "__main__":
    main()
