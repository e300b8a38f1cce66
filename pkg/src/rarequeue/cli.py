"""Command-line entry point.

Every subcommand reads one experiment file, applies flag overrides,
writes CSV files plus a ``manifest.json`` echoing the effective config
into the output directory, and prints a short human-readable summary.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .config import ExperimentFile, load_experiment
from .estimate import make_band, make_table, run_crude, run_regenerative_is
from .ldcalc import RateContext, a_t
from .oracle import erlang_b, i_star_poisson
from .queue import initial_state
from .rng import Stream
from .sampler import q_grid, run_chain_cycle, run_is_cycle

log = logging.getLogger("rarequeue")

RESULT_COLUMNS = [
    "s", "method", "estimate", "re", "ci_low", "ci_high", "cycles", "cpu_seconds",
    "losses", "arrivals", "sim_time",
]


def fmt(x) -> str:
    """17 significant digits; missing values become ``NA``."""
    if x is None:
        return "NA"
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NA"
    return f"{x:.17g}"


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def write_manifest(out: Path, exp: ExperimentFile, command: str, outputs: list[Path], argv: Sequence[str]) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "version": __version__,
        "argv": list(argv),
        "config": exp.model_dump(mode="json"),
        "outputs": [p.name for p in outputs],
    }
    path = out / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_run(exp: ExperimentFile, out: Path) -> list[Path]:
    arrival, service = exp.arrival_spec(), exp.service_spec()
    method = exp.estimator.method
    rows = []
    for s in exp.model.s:
        cfg = exp.run_config(s, arrival, service)
        results = []
        if method in ("is", "both"):
            results.append(run_regenerative_is(cfg))
        if method in ("cmc", "both"):
            results.append(run_crude(cfg))
        for r in results:
            rows.append([r.s, r.method, r.estimate, r.re, r.ci_low, r.ci_high, r.cycles,
                         r.cpu_seconds, r.losses, r.arrivals, r.sim_time])
            print(
                f"s={r.s:<4d} {r.method:<3s} estimate={r.estimate:.6g} "
                f"RE={'N/A' if r.re is None else f'{r.re:.3f}'} "
                f"CI={'N/A' if r.ci is None else f'({r.ci[0]:.6g}, {r.ci[1]:.6g})'} "
                f"cycles={r.cycles} cpu={r.cpu_seconds:.1f}s",
                flush=True,
            )
    return [write_csv(out / "results.csv", RESULT_COLUMNS, rows)]


def cmd_ld_table(exp: ExperimentFile, out: Path) -> list[Path]:
    arrival, service = exp.arrival_spec(), exp.service_spec()
    ctx = RateContext(arrival, service)
    paths, summary = [], []
    for s in exp.model.s:
        table = make_table(exp.run_config(s, arrival, service))
        rows = [[k, t, a_t(ctx, float(t)), th, rate]
                for k, (t, th, rate) in enumerate(zip(table.t, table.theta, table.rate))]
        paths.append(write_csv(out / f"ld_table_s{s}.csv", ["k", "t", "a_t", "theta_t", "I_t"], rows))
        summary.append([s, table.T, table.delta, table.K_max, table.theta_inf, table.I_star])
        print(f"s={s}: T={table.T:.6g} delta={table.delta:.6g} K_max={table.K_max} "
              f"theta_inf={table.theta_inf:.6g} I*={table.I_star:.6g}")
    paths.append(write_csv(out / "ld_summary.csv", ["s", "T", "delta", "K_max", "theta_inf", "I_star"], summary))
    return paths


def cmd_band_dump(exp: ExperimentFile, out: Path, points: int = 1001) -> list[Path]:
    arrival, service = exp.arrival_spec(), exp.service_spec()
    paths = []
    for s in exp.model.s:
        band = make_band(exp.run_config(s, arrival, service))
        ys = np.linspace(0.0, band.y_hi, points)
        lo, hi = band.profile(ys)
        c = band.center(ys)
        paths.append(write_csv(out / f"band_s{s}.csv", ["y", "lower", "upper", "center"], zip(ys, lo, hi, c)))
        print(f"s={s}: center(0)={float(c[0]):.6g} halfwidth(0)={float(band.halfwidth(0.0)):.6g}")
    return paths


def cmd_path_dump(exp: ExperimentFile, out: Path) -> list[Path]:
    arrival, service = exp.arrival_spec(), exp.service_spec()
    pd = exp.path_dump
    paths = []
    for s in exp.model.s:
        cfg = exp.run_config(s, arrival, service)
        band, table = make_band(cfg), make_table(cfg)
        chain_rng, is_rng = Stream(cfg.seed, "chain"), Stream(cfg.seed, "path-dump")
        state = initial_state(band)
        for attempt in range(pd.max_attempts):
            sample, path = run_is_cycle(state, cfg.model, table, band, cfg.check_step, is_rng)
            if sample.overflow or not pd.require_overflow:
                break
            state = run_chain_cycle(state, cfg.model, band, cfg.check_step, chain_rng).end
        else:
            raise RuntimeError(f"no overflow cycle in {pd.max_attempts} attempts at s={s}")
        ts = np.linspace(0.0, path.tau_A, pd.t_points)
        y_max = pd.y_max if pd.y_max is not None else band.y_hi
        ys = np.linspace(0.0, y_max, pd.y_points)
        q = q_grid(path, ts, ys)
        rows = ([t, y, int(q[i, j])] for i, t in enumerate(ts) for j, y in enumerate(ys))
        paths.append(write_csv(out / f"path_s{s}.csv", ["t", "y", "Q"], rows))
        print(f"s={s}: cycle after {attempt + 1} attempt(s), tau_A={path.tau_A:.6g}, "
              f"tau_s={'none' if path.tau_s is None else f'{path.tau_s:.6g}'}, N_A={path.N_A}")
    return paths


def cmd_oracle(exp: ExperimentFile, out: Path) -> list[Path]:
    arrival, service = exp.arrival_spec(), exp.service_spec()
    rho = arrival.rate * service.mean
    poisson = arrival.family == "exponential"
    rows = []
    for s in exp.model.s:
        a = rho * s
        b = erlang_b(s, a)
        rows.append([s, a, b, -math.log(b) / s, i_star_poisson(rho) if 0 < rho < 1 else None, int(poisson)])
        print(f"s={s}: offered load {a:.6g}, Erlang B {b:.6g}{'' if poisson else ' (exact only for Poisson arrivals)'}")
    return [write_csv(out / "oracle.csv", ["s", "offered_load", "erlang_b", "decay_per_server", "i_star_poisson", "exact"], rows)]


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="experiment YAML file")
    common.add_argument("--seed", type=int)
    common.add_argument("--batches", type=int)
    common.add_argument("--cpu-seconds", type=float)
    common.add_argument("--sim-time", type=float)
    common.add_argument("--cycles", type=int)
    common.add_argument("--out-dir", type=Path)
    common.add_argument("--method", choices=["is", "cmc", "both"])
    common.add_argument("--s", type=int, nargs="+", help="override the list of server counts")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="rarequeue", description="Rare-event simulation of GI/G/s loss queues.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="estimate loss probabilities")
    sub.add_parser("ld-table", parents=[common], help="dump tilting roots and rates")
    bd = sub.add_parser("band-dump", parents=[common], help="dump the recurrent-set band")
    bd.add_argument("--points", type=int, default=1001)
    sub.add_parser("path-dump", parents=[common], help="grid Q(t, y) along one importance-sampling cycle")
    sub.add_parser("oracle", parents=[common], help="Erlang B reference table")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        exp = load_experiment(args.config).with_overrides(
            seed=args.seed,
            batches=args.batches,
            method=args.method,
            cpu_seconds=args.cpu_seconds,
            sim_time=args.sim_time,
            cycles=args.cycles,
            out_dir=str(args.out_dir) if args.out_dir is not None else None,
        )
        if args.s:
            data = exp.model_dump()
            data["model"]["s"] = args.s
            exp = ExperimentFile.model_validate(data)
        out = Path(exp.output.dir)
        if args.command == "run":
            outputs = cmd_run(exp, out)
        elif args.command == "ld-table":
            outputs = cmd_ld_table(exp, out)
        elif args.command == "band-dump":
            outputs = cmd_band_dump(exp, out, args.points)
        elif args.command == "path-dump":
            outputs = cmd_path_dump(exp, out)
        else:
            outputs = cmd_oracle(exp, out)
        write_manifest(out, exp, args.command, outputs, argv)
    except Exception as exc:  # report and exit non-zero; --verbose shows the traceback
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
