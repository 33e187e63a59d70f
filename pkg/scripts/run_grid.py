"""Run the protocol comparison grid and print per-cell medians.

    python scripts/run_grid.py                      # full grid, 10 seeds
    python scripts/run_grid.py --seeds 2 --workers 4
"""

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

from lln_balance.cli import load_manifest, run_batch

ROOT = Path(__file__).resolve().parent.parent
COLUMNS = ("pdr", "jfi_throughput", "aeed", "jfi_energy", "altn")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--manifest", default=ROOT / "scenarios" / "grid.yaml", type=Path)
    ap.add_argument("--seeds", type=int, help="use seeds 1..N instead of the manifest's list")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args(argv)

    manifest = load_manifest(args.manifest)
    manifest.workers = args.workers
    if args.out:
        manifest.out_dir = args.out
    if args.seeds:
        seeds = tuple(range(1, args.seeds + 1))
        manifest.runs = [dataclasses.replace(r, seeds=seeds) for r in manifest.runs]
    results, aggregate, failed = run_batch(manifest)

    rows = list(csv.DictReader(open(aggregate)))
    print(f"{'scenario':<12}{'variant':<9}" + "".join(f"{c:>16}" for c in COLUMNS))
    for r in rows:
        cells = []
        for c in COLUMNS:
            v = r[f"{c}_median"]
            cells.append(f"{float(v) * (1e3 if c == 'aeed' else 1):>16.5f}" if v else f"{'-':>16}")
        print(f"{r['scenario']:<12}{r['variant']:<9}" + "".join(cells))
    print(f"(aeed in ms)  results: {results}  aggregate: {aggregate}")
    if failed:
        print(f"{len(failed)} run(s) failed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
