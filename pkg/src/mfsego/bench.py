"""Campaign orchestration, run persistence, and the external oracle protocol.

A campaign is the cross product problems x solvers x seeds. Each run
lands in one line-delimited JSON file (meta line, one line per
iteration, checksum footer), so reruns skip anything already on disk
that validates.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .baselines import pof_ei_run
from .doe import Bounds, NestedDesign, build_nested
from .errors import ConfigError, StateError
from .fidelity import CostModel, FidelityCriterion
from .metrics import DataProfile, data_profile
from .optimizer import (
    FidelityDataset,
    IterationRecord,
    OptimizerConfig,
    ProblemDef,
    RunRecord,
    evaluate_design,
    evaluate_doe,
    mfsego_run,
    sego_run,
)
from .problems import make_problem_def

WORKERS_ENV = "MFSEGO_WORKERS"

MFSEGO_SOLVERS = {
    "mfsego-objective-only": FidelityCriterion.OBJECTIVE_ONLY,
    "mfsego-average": FidelityCriterion.AVERAGE,
    "mfsego-optimistic": FidelityCriterion.OPTIMISTIC,
    "mfsego-pessimistic": FidelityCriterion.PESSIMISTIC,
}
SOLVERS = ("sego", "pof-ei", *MFSEGO_SOLVERS)


@dataclass
class Campaign:
    problems: list
    solvers: list
    seeds: list
    budget: float
    cost_ratio: float
    doe_sizes: list
    output_dir: str
    selection_cost_ratio: float | None = None
    max_iter: int = 200
    acquisition: str = "logei"
    feas_tol: float = 1e-6
    n_acq_starts: int | None = None
    require_feasible_doe: bool = True
    sego_budget: float | None = None  # defaults to `budget`

    def __post_init__(self):
        if self.budget <= 0:
            raise ConfigError("budget must be positive")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        for solver in self.solvers:
            if solver not in SOLVERS:
                raise ConfigError(f"unknown solver '{solver}'; have {SOLVERS}")
        if list(self.doe_sizes) != sorted(self.doe_sizes, reverse=True):
            raise ConfigError("doe_sizes are per level, low to high, non-increasing")

    def runs(self):
        for problem in self.problems:
            for solver in self.solvers:
                for seed in self.seeds:
                    yield problem, solver, seed


def load_campaign(path) -> Campaign:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("campaign file must be a mapping")
    return Campaign(**raw)


def feasible_nested_doe(problem: ProblemDef, counts, seed: int,
                        require_feasible: bool = True,
                        max_attempts: int = 1000) -> FidelityDataset:
    """Nested DoE, resampling the LHS seed until at least one
    highest-fidelity point is feasible (when requested)."""
    for attempt in range(max_attempts):
        design = build_nested(list(counts), problem.bounds, seed + 7919 * attempt)
        dataset = evaluate_doe(problem, design)
        if not require_feasible:
            return dataset
        g = dataset.top().g_array()
        h = dataset.top().h_array()
        viol = np.sqrt(np.sum(np.maximum(g, 0.0) ** 2, axis=1)
                       + np.sum(h**2, axis=1))
        if np.any(viol <= 1e-12):
            return dataset
    raise StateError(
        f"no feasible initial DoE for {problem.name} after {max_attempts} attempts"
    )


def _build_problem(campaign: Campaign, name: str) -> ProblemDef:
    return make_problem_def(
        name,
        cost_ratio=campaign.cost_ratio,
        selection_cost_ratio=campaign.selection_cost_ratio,
    )


def run_one(campaign: Campaign, problem_name: str, solver: str, seed: int) -> RunRecord:
    problem = _build_problem(campaign, problem_name)
    dataset = feasible_nested_doe(
        problem, campaign.doe_sizes, seed,
        require_feasible=campaign.require_feasible_doe,
    )
    common = dict(
        acquisition=campaign.acquisition,
        feas_tol=campaign.feas_tol,
        n_acq_starts=campaign.n_acq_starts,
        seed=seed,
        max_iter=campaign.max_iter,
    )
    if solver == "sego":
        budget = campaign.sego_budget or campaign.budget
        config = OptimizerConfig(mode="mono", budget=budget, **common)
        hf_doe = evaluate_design(problem, dataset.top().design(), problem.n_levels)
        return sego_run(problem, hf_doe, config)
    if solver == "pof-ei":
        config = OptimizerConfig(mode="multi", budget=campaign.budget, **common)
        return pof_ei_run(problem, dataset, config)
    criterion = MFSEGO_SOLVERS[solver]
    config = OptimizerConfig(mode="multi", budget=campaign.budget,
                             criterion=criterion, **common)
    return mfsego_run(problem, dataset, config)


# --- persistence -------------------------------------------------------


def _json_line(obj) -> str:
    return json.dumps(obj, allow_nan=True, separators=(",", ":"))


def record_to_lines(record: RunRecord) -> list[str]:
    meta = {
        "type": "meta",
        "problem": record.problem,
        "solver": record.solver,
        "seed": record.seed,
        "n_levels": record.n_levels,
        "doe_cost": record.doe_cost,
        "initial_hf": record.initial_hf,
        "initial_incumbent": record.initial_incumbent,
        "final": record.final,
        "error": record.error,
    }
    lines = [_json_line(meta)]
    for it in record.iterations:
        payload = asdict(it) if isinstance(it, IterationRecord) else dict(it)
        payload["type"] = "iter"
        lines.append(_json_line(payload))
    return lines


def write_record(record: RunRecord, path: Path) -> None:
    path = Path(path)
    lines = record_to_lines(record)
    body = "\n".join(lines) + "\n"
    digest = hashlib.sha256(body.encode()).hexdigest()
    body += _json_line({"type": "checksum", "sha256": digest}) + "\n"
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(body)
    os.replace(tmp, path)


def validate_record_file(path: Path) -> bool:
    try:
        text = Path(path).read_text()
    except OSError:
        return False
    lines = text.splitlines()
    if len(lines) < 2:
        return False
    try:
        footer = json.loads(lines[-1])
    except json.JSONDecodeError:
        return False
    if footer.get("type") != "checksum":
        return False
    body = "\n".join(lines[:-1]) + "\n"
    return hashlib.sha256(body.encode()).hexdigest() == footer.get("sha256")


def load_record(path: Path) -> RunRecord:
    lines = Path(path).read_text().splitlines()
    meta = json.loads(lines[0])
    if meta.get("type") != "meta":
        raise StateError(f"{path}: missing meta line")
    record = RunRecord(
        problem=meta["problem"], solver=meta["solver"], seed=meta["seed"],
        n_levels=meta["n_levels"], doe_cost=meta["doe_cost"],
        initial_hf=meta["initial_hf"], initial_incumbent=meta["initial_incumbent"],
        final=meta["final"], error=meta["error"],
    )
    for line in lines[1:]:
        payload = json.loads(line)
        if payload.get("type") != "iter":
            continue
        payload.pop("type")
        record.iterations.append(IterationRecord(**payload))
    return record


def _run_filename(problem: str, solver: str, seed: int) -> str:
    slug = solver.replace(" ", "-").replace("(", "").replace(")", "")
    return f"{problem}__{slug}__{seed:05d}.jsonl"


def _run_and_write(campaign: Campaign, problem: str, solver: str, seed: int,
                   path_str: str) -> str:
    try:
        record = run_one(campaign, problem, solver, seed)
    except Exception as exc:  # failures recorded, campaign continues
        record = RunRecord(
            problem=problem, solver=solver, seed=seed, n_levels=0,
            doe_cost=0.0, initial_hf=[],
            initial_incumbent={"f_min": math.nan, "feasible": False,
                               "rscv": math.nan},
            error=f"{type(exc).__name__}: {exc}",
        )
    write_record(record, Path(path_str))
    return path_str


def campaign_hash(campaign: Campaign) -> str:
    blob = json.dumps(asdict(campaign), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def run_campaign(campaign: Campaign, workers: int | None = None,
                 progress=None) -> list[Path]:
    """Execute (or resume) every run; returns the record paths."""
    out_dir = Path(campaign.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "0")) or (os.cpu_count() or 1)

    pending = []
    paths = []
    for problem, solver, seed in campaign.runs():
        path = out_dir / _run_filename(problem, solver, seed)
        paths.append(path)
        if path.exists() and validate_record_file(path):
            continue
        pending.append((problem, solver, seed, str(path)))

    if pending and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_and_write, campaign, *args) for args in pending
            ]
            for i, fut in enumerate(futures):
                fut.result()
                if progress:
                    progress(i + 1, len(pending))
    else:
        for i, args in enumerate(pending):
            _run_and_write(campaign, *args)
            if progress:
                progress(i + 1, len(pending))

    manifest = {
        "config": asdict(campaign),
        "config_hash": campaign_hash(campaign),
        "version": __version__,
        "python": sys.version.split()[0],
        "files": {p.name: _file_sha256(p) for p in paths if p.exists()},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return paths


def _file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_campaign_records(output_dir) -> list[RunRecord]:
    records = []
    for path in sorted(Path(output_dir).glob("*.jsonl")):
        records.append(load_record(path))
    return records


def profile_table(records, eps: float, tau: float, grid) -> tuple[DataProfile, str]:
    """Data profile plus its tidy-table rendering (budget, solver, fraction)."""
    profile = data_profile(records, eps=eps, tau=tau, grid=grid)
    lines = ["budget,solver,fraction"]
    for budget, solver, fraction in profile.rows():
        lines.append(f"{budget:g},{solver},{fraction:.6f}")
    return profile, "\n".join(lines) + "\n"


# --- external oracle protocol -----------------------------------------


class ExternalOracle:
    """Blackbox adapter: one child process per fidelity level.

    The child is started as `cmd level`, receives one whitespace-
    separated design point per stdin line and must answer one line
    "f g1 ... gm h1 ... hp" per point.
    """

    def __init__(self, cmd: list, level: int, n_ineq: int, n_eq: int):
        self.cmd = [*cmd, str(level)]
        self.n_ineq = n_ineq
        self.n_eq = n_eq
        self._proc = None

    def _ensure(self):
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1,
            )
        return self._proc

    def __call__(self, x) -> tuple:
        proc = self._ensure()
        proc.stdin.write(" ".join(repr(float(v)) for v in np.atleast_1d(x)) + "\n")
        proc.stdin.flush()
        line = proc.stdout.readline()
        if not line:
            raise StateError(f"external oracle {self.cmd} closed its output")
        values = [float(tok) for tok in line.split()]
        expected = 1 + self.n_ineq + self.n_eq
        if len(values) != expected:
            raise StateError(
                f"external oracle returned {len(values)} values, expected {expected}"
            )
        f = values[0]
        g = values[1 : 1 + self.n_ineq]
        h = values[1 + self.n_ineq :]
        return f, g, h

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
        self._proc = None


class _CachedOracle:
    """Calls the child once per point; all output components share the reply."""

    def __init__(self, oracle: ExternalOracle):
        self.oracle = oracle
        self.last_key = None
        self.last_value = None

    def fetch(self, x):
        key = np.asarray(x, dtype=float).tobytes()
        if key != self.last_key:
            self.last_value = self.oracle(x)
            self.last_key = key
        return self.last_value


class _Component:
    def __init__(self, cache: _CachedOracle, kind: str, index: int = 0):
        self.cache = cache
        self.kind = kind
        self.index = index

    def __call__(self, x):
        f, g, h = self.cache.fetch(x)
        if self.kind == "f":
            return f
        return (g if self.kind == "g" else h)[self.index]


def external_problem_def(name: str, cmd: list, lower, upper, n_levels: int,
                         n_ineq: int, n_eq: int, costs) -> ProblemDef:
    """ProblemDef backed by external executables speaking the line protocol."""
    bounds = Bounds(lower, upper)
    oracles = [ExternalOracle(cmd, level, n_ineq, n_eq)
               for level in range(1, n_levels + 1)]
    caches = [_CachedOracle(o) for o in oracles]
    problem = ProblemDef(
        name=name,
        bounds=bounds,
        objective=[_Component(c, "f") for c in caches],
        cost_model=CostModel(np.asarray(costs, dtype=float)),
        ineq_constraints=[[_Component(caches[lvl], "g", j)
                           for lvl in range(n_levels)] for j in range(n_ineq)],
        eq_constraints=[[_Component(caches[lvl], "h", j)
                         for lvl in range(n_levels)] for j in range(n_eq)],
    )
    problem.close = lambda: [o.close() for o in oracles]  # type: ignore[attr-defined]
    return problem
