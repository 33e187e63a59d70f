"""``lln-balance`` command line: single runs, batches, plot data, convergence.

Exit codes: 0 success, 1 some runs failed, 2 bad configuration or arguments.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import io
import json
import math
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import yaml

from . import automaton as la
from .config import ALL_KEYS, ConfigError, ScenarioConfig, load_yaml, parse_scenario
from .metrics import MetricsReport
from .protocol import VARIANTS
from .rng import derive_stream
from .simcore import Simulator

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2

ID_COLUMNS = ("scenario", "variant", "n_nodes", "lambda", "seed", "status", "error")
RESULT_COLUMNS = ID_COLUMNS + MetricsReport.SCALARS + MetricsReport.LISTS
AGG_METRICS = MetricsReport.SCALARS
PLOT_COLUMNS = ("scenario", "variant", "lambda", "n_nodes", "seed", "metric", "value")


# ---------------------------------------------------------------- formatting

def fmt_float(x: float) -> str:
    """Shortest decimal that round-trips within 9 significant digits."""
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x!r}")
    text = f"{x:.9g}"
    # repr is the shortest round-trip form; use it when 9 digits suffice
    return repr(x) if float(text) == x else text


def fmt_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return fmt_float(v)
    if isinstance(v, (list, tuple)):
        return ";".join(fmt_value(x) for x in v)
    return str(v)


def parse_number(text: str) -> float | None:
    return None if text == "" else float(text)


def write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt_value(row.get(c)) for c in columns])
    path.write_text(buf.getvalue())


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- running

def _override_pairs(items: list[str]) -> dict:
    out = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        out[key.strip()] = load_yaml(raw)
    return out


def result_row(scenario: str, cfg: ScenarioConfig, report: MetricsReport | None, error: str = "") -> dict:
    row = {
        "scenario": scenario,
        "variant": cfg.variant,
        "n_nodes": cfg.n_nodes,
        "lambda": cfg.lambda_,
        "seed": cfg.seed,
        "status": "ok" if report is not None else "failed",
        "error": error,
    }
    if report is not None:
        row.update(report.to_dict())
    return row


def execute(scenario: str, cfg: ScenarioConfig, keep_log: bool = False):
    """Run one (config, seed); failures come back as a row, never raise."""
    try:
        sim = Simulator(cfg)
        report, log = sim.run()
    except Exception as exc:  # isolation: one bad seed must not sink the batch
        return result_row(scenario, cfg, None, f"{type(exc).__name__}: {exc}"), None, None
    topo = sim.topology() if keep_log else None
    return result_row(scenario, cfg, report), (log if keep_log else None), topo


def cmd_run(args) -> int:
    try:
        cfg = parse_scenario(args.scenario)
        overrides = _override_pairs(args.set)
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.variant is not None:
            overrides["variant"] = args.variant
        if overrides:
            cfg = cfg.with_overrides(**overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = Path(args.scenario).stem
    row, log, topo = execute(name, cfg, keep_log=True)
    write_csv(out / "results.csv", RESULT_COLUMNS, [row])
    if row["status"] != "ok":
        print(f"run failed: {row['error']}", file=sys.stderr)
        return EXIT_PARTIAL
    (out / "metrics.json").write_text(json.dumps({k: row[k] for k in RESULT_COLUMNS if k in row}, indent=2) + "\n")
    if args.export_log:
        log.to_ndjson(out / "events.ndjson")
    if args.topology:
        (out / "topology.json").write_text(json.dumps(topo, indent=1) + "\n")
    print(summary_line(row))
    return EXIT_OK


def summary_line(row: dict) -> str:
    aeed = row.get("aeed")
    aeed_ms = "n/a" if aeed is None else f"{aeed * 1e3:.3f} ms"
    return (
        f"{row['scenario']} {row['variant']} seed={row['seed']}: pdr={row['pdr']:.4f} "
        f"jfi_tp={row['jfi_throughput']:.4f} aeed={aeed_ms} jfi_e={row['jfi_energy']:.5f} altn={row['altn']:.5f}"
    )


# ---------------------------------------------------------------- batch

@dataclass(frozen=True)
class RunSpec:
    scenario: str
    config: ScenarioConfig
    seeds: tuple[int, ...]
    variant: str


@dataclass
class RunManifest:
    runs: list[RunSpec]
    out_dir: Path
    workers: int = 1

    def __post_init__(self):
        seen = set()
        for r in self.runs:
            if not r.seeds:
                raise ConfigError(f"scenario {r.scenario!r} has no seeds")
            # a name may repeat only across variants
            if (r.scenario, r.variant) in seen:
                raise ConfigError(f"duplicate scenario name {r.scenario!r}")
            seen.add((r.scenario, r.variant))

    def jobs(self):
        for r in self.runs:
            for s in r.seeds:
                yield r.scenario, r.config.with_overrides(seed=s, variant=r.variant)


def load_manifest(path) -> RunManifest:
    """Read a YAML manifest.

    Top level: ``out``, ``seeds``, ``variants``, ``workers`` and a
    ``scenarios`` list; each scenario has a unique ``name`` plus an optional
    ``file`` (relative to the manifest), ``overrides`` mapping, and its own
    ``seeds``/``variants``.
    """
    path = Path(path)
    try:
        doc = load_yaml(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read manifest: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("scenarios"), list):
        raise ConfigError("manifest needs a 'scenarios' list")
    unknown = set(doc) - {"out", "seeds", "variants", "workers", "scenarios"}
    if unknown:
        raise ConfigError(f"unknown manifest key(s): {sorted(unknown)}")
    default_seeds = doc.get("seeds", [1])
    default_variants = doc.get("variants", ["lalarpl"])
    runs, names = [], set()
    for i, entry in enumerate(doc["scenarios"]):
        if not isinstance(entry, dict) or "name" not in entry:
            raise ConfigError(f"scenario #{i} needs a 'name'")
        name = str(entry["name"])
        if name in names:
            raise ConfigError(f"duplicate scenario name {name!r}")
        names.add(name)
        extra = set(entry) - {"name", "file", "overrides", "seeds", "variants"}
        if extra:
            raise ConfigError(f"scenario {name!r}: unknown key(s) {sorted(extra)}")
        try:
            cfg = parse_scenario(path.parent / entry["file"]) if "file" in entry else ScenarioConfig()
            if entry.get("overrides"):
                cfg = cfg.with_overrides(**entry["overrides"])
        except (ConfigError, OSError) as exc:
            raise ConfigError(f"scenario {name!r}: {exc}") from exc
        seeds = entry.get("seeds", default_seeds)
        if isinstance(seeds, dict):
            seeds = list(range(seeds["start"], seeds["start"] + seeds["count"]))
        if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
            raise ConfigError(f"scenario {name!r}: seeds must be a list of integers")
        for v in entry.get("variants", default_variants):
            if v not in VARIANTS:
                raise ConfigError(f"scenario {name!r}: unknown variant {v!r}")
            runs.append(RunSpec(name, cfg, tuple(seeds), v))
    out = Path(doc.get("out", "results"))
    if not out.is_absolute():
        out = path.parent / out
    return RunManifest(runs, out, int(doc.get("workers", 1)))


def _execute_job(job):
    row, _, _ = execute(*job)
    return row


def run_batch(manifest: RunManifest) -> tuple[Path, Path, list[dict]]:
    jobs = list(manifest.jobs())
    if manifest.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=manifest.workers) as pool:
            rows = list(pool.map(_execute_job, jobs))
    else:
        rows = [_execute_job(j) for j in jobs]
    rows.sort(key=lambda r: (r["scenario"], r["variant"], r["seed"]))
    manifest.out_dir.mkdir(parents=True, exist_ok=True)
    results = manifest.out_dir / "results.csv"
    write_csv(results, RESULT_COLUMNS, rows)
    aggregate = manifest.out_dir / "aggregate.csv"
    agg_rows, agg_cols = aggregate_rows(read_csv(results))
    write_csv(aggregate, agg_cols, agg_rows)
    return results, aggregate, [r for r in rows if r["status"] != "ok"]


def aggregate_rows(parsed: list[dict[str, str]]):
    """Per (scenario, variant) medians and means, computed from CSV text."""
    cols = ["scenario", "variant", "n_nodes", "lambda", "runs", "failed"]
    for m in AGG_METRICS:
        cols += [f"{m}_median", f"{m}_mean"]
    groups: dict[tuple[str, str], list[dict]] = {}
    for row in parsed:
        groups.setdefault((row["scenario"], row["variant"]), []).append(row)
    out = []
    for (scen, var), rows in sorted(groups.items()):
        ok = [r for r in rows if r["status"] == "ok"]
        agg = {
            "scenario": scen,
            "variant": var,
            "n_nodes": int(rows[0]["n_nodes"]),
            "lambda": float(rows[0]["lambda"]),
            "runs": len(rows),
            "failed": len(rows) - len(ok),
        }
        for m in AGG_METRICS:
            vals = [v for v in (parse_number(r[m]) for r in ok) if v is not None]
            agg[f"{m}_median"] = float(statistics.median(vals)) if vals else None
            agg[f"{m}_mean"] = math.fsum(vals) / len(vals) if vals else None
        out.append(agg)
    return out, cols


def cmd_batch(args) -> int:
    try:
        manifest = load_manifest(args.manifest)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers is not None:
        manifest.workers = args.workers
    if args.out is not None:
        manifest.out_dir = Path(args.out)
    results, aggregate, failed = run_batch(manifest)
    print(f"wrote {results} and {aggregate}")
    if failed:
        print(f"{len(failed)} run(s) failed:", file=sys.stderr)
        for r in failed:
            print(f"  {r['scenario']} {r['variant']} seed={r['seed']}: {r['error']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


# ---------------------------------------------------------------- plot data

PLOT_METRICS = MetricsReport.SCALARS


def emit_plot_data(rows: list[dict[str, str]], metric: str) -> list[dict]:
    if metric not in PLOT_METRICS:
        close = difflib.get_close_matches(metric, PLOT_METRICS, n=1)
        hint = f" (did you mean {close[0]!r}?)" if close else ""
        raise ConfigError(f"unknown metric {metric!r}{hint}; valid metrics: {', '.join(PLOT_METRICS)}")
    out = []
    for r in rows:
        if r["status"] != "ok":
            continue
        value = parse_number(r[metric])
        out.append({
            "scenario": r["scenario"],
            "variant": r["variant"],
            "lambda": float(r["lambda"]),
            "n_nodes": int(r["n_nodes"]),
            "seed": int(r["seed"]),
            "metric": metric,
            "value": value,
        })
    out.sort(key=lambda r: (r["scenario"], r["variant"], r["seed"]))
    return out


def cmd_plotdata(args) -> int:
    try:
        rows = read_csv(Path(args.results))
        data = emit_plot_data(rows, args.metric)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_csv(Path(args.out), PLOT_COLUMNS, data)
    print(f"wrote {len(data)} rows to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- converge

def converge(alpha: float, beta: float, reward_probs, iterations: int, seeds, threshold: float = 0.95):
    """Terminal probability of the best action for each seed."""
    env = la.StationaryEnvironment(tuple(reward_probs))
    best = max(range(len(env.reward_probs)), key=lambda i: env.reward_probs[i])
    rows = []
    for s in seeds:
        pv, _ = la.run_stationary_trial(env, alpha, beta, iterations, derive_stream(s, "automaton"))
        rows.append((s, pv.entries[best], pv.entries[best] > threshold, pv))
    return rows


def cmd_converge(args) -> int:
    try:
        probs = [float(x) for x in args.reward_probs.split(",")]
        seeds = list(range(args.seed_start, args.seed_start + args.seeds))
        rows = converge(args.alpha, args.beta, probs, args.iterations, seeds, args.threshold)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("seed,p_best,passed,vector")
    for s, p, ok, pv in rows:
        print(f"{s},{fmt_float(p)},{str(ok).lower()},{fmt_value(list(pv.entries))}")
    passed = sum(ok for _, _, ok, _ in rows)
    frac = passed / len(rows) if rows else 0.0
    med = statistics.median(p for _, p, _, _ in rows) if rows else float("nan")
    print(f"# {passed}/{len(rows)} seeds above {args.threshold} (fraction {frac:.3f}); median p_best {med:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lln-balance", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("scenario", help="scenario file (flat YAML)")
    r.add_argument("--seed", type=int)
    r.add_argument("--variant", choices=VARIANTS)
    r.add_argument("--out", default=".", help="output directory")
    r.add_argument("--export-log", action="store_true", help="write events.ndjson")
    r.add_argument("--topology", action="store_true", help="write topology.json")
    r.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help=f"override any scenario key; valid keys: {', '.join(ALL_KEYS)}")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("batch", help="run a manifest of scenarios x variants x seeds")
    b.add_argument("manifest")
    b.add_argument("--workers", type=int)
    b.add_argument("--out", help="override the manifest's output directory")
    b.set_defaults(func=cmd_batch)

    pd = sub.add_parser("plotdata", help="long-format CSV of one metric")
    pd.add_argument("--metric", required=True)
    pd.add_argument("--results", default="results.csv")
    pd.add_argument("--out", required=True)
    pd.set_defaults(func=cmd_plotdata)

    c = sub.add_parser("converge", help="stationary-environment convergence check")
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--beta", type=float, default=0.05)
    c.add_argument("--reward-probs", default="0.9,0.2")
    c.add_argument("--iterations", type=int, default=10_000)
    c.add_argument("--seeds", type=int, default=100, help="number of seeds")
    c.add_argument("--seed-start", type=int, default=1)
    c.add_argument("--threshold", type=float, default=0.95)
    c.set_defaults(func=cmd_converge)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
