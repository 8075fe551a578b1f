"""Command-line interface: run campaigns, build profiles, self-checks."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    load_campaign,
    load_campaign_records,
    profile_table,
    run_campaign,
)
from .doe import build_nested
from .metrics import tau_solved, tau_solved_printed_form
from .problems import PROBLEMS, get_problem, verify_table1


def _cmd_run(args) -> int:
    campaign = load_campaign(args.config)
    if args.output_dir:
        campaign.output_dir = args.output_dir

    def progress(done, total):
        print(f"  run {done}/{total}", flush=True)

    paths = run_campaign(campaign, workers=args.workers, progress=progress)
    print(f"{len(paths)} record files in {campaign.output_dir}")
    return 0


def _parse_grid(spec: str) -> np.ndarray:
    if ":" in spec:
        lo, hi, n = spec.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    return np.array([float(tok) for tok in spec.split(",")])


def _cmd_profile(args) -> int:
    records = load_campaign_records(args.records)
    if not records:
        print(f"no record files under {args.records}", file=sys.stderr)
        return 1
    profile, table = profile_table(records, eps=args.eps, tau=args.tau,
                                   grid=_parse_grid(args.grid))
    if args.out:
        Path(args.out).write_text(table)
        print(f"wrote {args.out} ({profile.n_instances} instances)")
    else:
        sys.stdout.write(table)
    for prob in profile.excluded_problems:
        print(f"warning: {prob} had no feasible run and was excluded",
              file=sys.stderr)
    return 0


def _cmd_verify(args) -> int:
    failures = 0
    for name in PROBLEMS:
        report = verify_table1(name, grid_n=args.grid_n)
        for line in report.lines():
            print(line)
    print()
    print("tau-solved reading check (f_0=10, f_star=0, tau=0.2, f_i=2.1):")
    conv = tau_solved(2.1, 10.0, 0.0, 0.2)
    printed = tau_solved_printed_form(2.1, 10.0, 0.0, 0.2)
    print(f"  convergence-test orientation (used): solved={conv}")
    print(f"  literally printed inequality (reported only): solved={printed}")
    return failures


def _cmd_doe(args) -> int:
    problem = get_problem(args.problem)
    counts = [int(tok) for tok in args.counts.split(",")]
    design = build_nested(counts, problem.bounds, args.seed)
    payload = {
        "problem": problem.name,
        "seed": args.seed,
        "counts": counts,
        "levels": [lvl.points.tolist() for lvl in design.levels],
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mfsego",
        description="Constrained multi-fidelity Bayesian optimization benchmarks",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a campaign config")
    p_run.add_argument("config", help="campaign YAML file")
    p_run.add_argument("--output-dir", help="override the config output_dir")
    p_run.add_argument("--workers", type=int, default=None,
                       help=f"worker processes (default: ${'{'}MFSEGO_WORKERS{'}'} or cpu count)")
    p_run.set_defaults(func=_cmd_run)

    p_prof = sub.add_parser("profile", help="data profile from record files")
    p_prof.add_argument("records", help="directory of .jsonl run records")
    p_prof.add_argument("--eps", type=float, required=True,
                        help="absolute constraint tolerance (RSCV)")
    p_prof.add_argument("--tau", type=float, required=True,
                        help="relative objective tolerance")
    p_prof.add_argument("--grid", default="0:20:81",
                        help="budget grid lo:hi:n or comma list")
    p_prof.add_argument("--out", help="write the tidy table here")
    p_prof.set_defaults(func=_cmd_profile)

    p_ver = sub.add_parser("verify", help="problem self-checks against the references")
    p_ver.add_argument("--grid-n", type=int, default=2000)
    p_ver.set_defaults(func=_cmd_verify)

    p_doe = sub.add_parser("doe", help="emit a nested DoE as JSON")
    p_doe.add_argument("--problem", required=True)
    p_doe.add_argument("--counts", default="6,3", help="per-level sizes, low to high")
    p_doe.add_argument("--seed", type=int, default=0)
    p_doe.add_argument("--out")
    p_doe.set_defaults(func=_cmd_doe)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
