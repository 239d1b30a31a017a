"""Command-line entry point: ``aitf-sim run`` and ``aitf-sim analyze``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import analytics
from .config import ConfigError, ScenarioConfig, bundled_scenario, parse_scenario
from .sim import GoodputSample, SimulationError, VictimSummary, run

TIMESERIES_COLUMNS = [f.name if f.name != "t" else "t_s" for f in dataclasses.fields(GoodputSample)]
SUMMARY_COLUMNS = [f.name for f in dataclasses.fields(VictimSummary)]

log = logging.getLogger("aitf")


def _setup_logging() -> None:
    level = os.environ.get("AITF_SIM_LOG", "error").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isinf(value) or math.isnan(value):
            return str(value)
        return f"{value:.6f}"
    return str(value)


def write_timeseries(samples: Sequence[GoodputSample], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMESERIES_COLUMNS)
        for s in samples:
            w.writerow([f"{s.t:.6f}", s.victim, s.good_bps, s.attack_bps, s.vgw_filters, s.shadow_entries, s.requests_cum, s.escalations_cum])


def read_timeseries(path: Path) -> list[GoodputSample]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TIMESERIES_COLUMNS:
            raise ValueError(f"unexpected timeseries header {header}")
        return [GoodputSample(float(row[0]), *(int(x) for x in row[1:])) for row in reader]


def write_summary(rows: Sequence[VictimSummary], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([_fmt(getattr(row, c)) for c in SUMMARY_COLUMNS])


def _resolve_scenario(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    bundled = bundled_scenario(arg)
    if bundled.exists():
        return bundled
    raise ConfigError(f"scenario file not found: {arg}")


def run_to_dir(cfg: ScenarioConfig, out: Path) -> list[VictimSummary]:
    out.mkdir(parents=True, exist_ok=True)
    result = run(cfg)
    write_timeseries(result.samples, out / "timeseries.csv")
    write_summary(result.summary, out / "summary.csv")
    return result.summary


def _run_one(cfg: ScenarioConfig, out: Path):
    try:
        run_to_dir(cfg, out)
        return None
    except SimulationError as exc:
        return str(exc)


def cmd_run(args) -> int:
    try:
        base = parse_scenario(_resolve_scenario(args.scenario))
        if args.duration is not None:
            base.run.duration = args.duration
        base.validate()
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    seeds = args.seed or [base.run.seed]
    jobs = []
    for seed in seeds:
        cfg = dataclasses.replace(base, run=dataclasses.replace(base.run, seed=seed))
        out = Path(args.out) if len(seeds) == 1 else Path(args.out) / f"seed_{seed}"
        jobs.append((cfg, out))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            errors = list(pool.map(_run_one, *zip(*jobs)))
    else:
        errors = [_run_one(cfg, out) for cfg, out in jobs]
    failed = [e for e in errors if e]
    for e in failed:
        print(f"simulation error: {e}", file=sys.stderr)
    return 2 if failed else 0


def _mbps(bps: float) -> str:
    return f"{bps / 1e6:g} Mbps"


def analyze_lines(profile: analytics.AttackProfile) -> list[str]:
    p = profile
    if p.N_att == 0:
        return ["no attack: full bandwidth"]
    preserved = analytics.preserved_bandwidth(p)
    note = " (R·T ≥ N_att)" if p.blockable_flows >= p.N_att else ""
    lines = [
        f"preserved: {_mbps(preserved)}{note}",
        f"lost (upper bound): {_mbps(analytics.lost_bandwidth_bound(p))}",
    ]
    if p.R_max is not None:
        best, worst = analytics.filter_count_bounds(p.R_max, p.T_tmp, p.N_agw)
        lines.append(f"filters at victim gateway: best {best:.10g}, worst {worst:.10g}")
        lines.append(f"shadow entries: {analytics.shadow_entry_requirement(p.R_max, p.T):.10g}")
    per_flow = analytics.per_flow_consumed_bandwidth(p.B_att / p.N_att, p.T_fr, p.T)
    lines.append(
        f"per-flow loss: exact {per_flow.exact:.6g} bps, approx {per_flow.approx:.6g} bps, gap {per_flow.relative_gap:.3%}"
    )
    return lines


def cmd_analyze(args) -> int:
    required = {"--Bv": args.Bv, "--Batt": args.Batt, "--R": args.R, "--T": args.T}
    for flag, value in required.items():
        if not value > 0:
            print(f"{flag} must be positive", file=sys.stderr)
            return 1
    if args.Natt < 0:
        print("--Natt must be nonnegative", file=sys.stderr)
        return 1
    try:
        profile = analytics.AttackProfile(
            B_v=args.Bv, B_att=args.Batt, N_att=args.Natt, R=args.R, T=args.T,
            T_tmp=args.Ttmp, T_fr=args.Tfr, N_agw=args.Nagw, R_max=args.Rmax,
        )
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    for line in analyze_lines(profile):
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aitf-sim")
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario and write CSV output")
    r.add_argument("--scenario", required=True, help="scenario file, or the name of a bundled one")
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, nargs="+", help="one or more run seeds; several seeds get one subdirectory each")
    r.add_argument("--duration", type=float)
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_run)
    a = sub.add_parser("analyze", help="evaluate the closed-form bounds")
    a.add_argument("--Bv", type=float, required=True)
    a.add_argument("--Batt", type=float, required=True)
    a.add_argument("--Natt", type=int, required=True)
    a.add_argument("--R", type=float, required=True)
    a.add_argument("--T", type=float, required=True)
    a.add_argument("--Ttmp", type=float, default=1.0)
    a.add_argument("--Nagw", type=int, default=0)
    a.add_argument("--Rmax", type=float)
    a.add_argument("--Tfr", type=float, default=0.0)
    a.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
