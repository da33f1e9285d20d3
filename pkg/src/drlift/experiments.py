"""Experiment drivers: strategy parsing, model solves, sweeps and result files."""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import itertools
import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .counterpart import CounterpartLP, PolicyBundle, build_counterpart, extract_policy
from .lp import LPSolution, solve_with_binaries
from .lp.solve import _choose
from .problems import NewsvendorConfig, TransportConfig, preset
from .simulate import evaluate_policy, newsvendor_path_costs, pseudo_simulate, sample_paths
from .uncertainty import LiftingStrategy, parse_hdr

log = logging.getLogger(__name__)

RESULT_FIELDS = [
    "preset",
    "strategy",
    "label",
    "model_objective",
    "evaluated_objective",
    "evaluated_sigma",
    "build_time",
    "solve_time",
    "status",
    "error",
]


# ---------------------------------------------------------------------------
# strategy strings

_PLDR = re.compile(r"^PLDR(?:-(\d+))?\s*(?:@\s*(.+)|\[(.*)\])?$", re.IGNORECASE)
_HDR = re.compile(r"^HDR\s*[<:]?\s*([0-9^,\s]+?)\s*>?$", re.IGNORECASE)


def split_strategies(text: str) -> list[str]:
    """Split a comma-separated strategy list, keeping commas inside brackets."""
    out, depth, cur = [], 0, []
    for ch in text:
        if ch in "[<(":
            depth += 1
        elif ch in "]>)":
            depth -= 1
        if ch in ",;" and depth == 0:
            out.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail:
        out.append(tail)
    return [s for s in out if s]


def _breakpoint_value(token: str, problem) -> float:
    token = token.strip()
    if token.upper() == "E":
        lo, hi = problem.uncertainty_set().lower[0], problem.uncertainty_set().upper[0]
        return 0.5 * (lo + hi)
    if token.upper() == "U":
        if not isinstance(problem, NewsvendorConfig):
            raise ValueError("breakpoint 'U' (ordering limit) only applies to the newsvendor")
        return problem.order_limit
    return float(token)


def parse_strategy(text: str, problem) -> LiftingStrategy:
    """Strategy from ``LDR``, ``PLDR-k`` (first ``k`` base breakpoints),
    ``PLDR-1@5``, ``PLDR-2[0.35,0.65]``, ``PLDR@E`` / ``PLDR@U`` or ``HDR<3^2,2^6,1^0,0^1>``.
    """
    T = problem.horizon
    base = tuple(getattr(problem, "breakpoint_base", ()) or ())
    s = text.strip()
    if s.upper() == "LDR":
        return LiftingStrategy.ldr(T)
    m = _HDR.match(s)
    if m:
        counts = parse_hdr(m.group(1))
        if len(counts) != T - 1:
            raise ValueError(f"{text}: profile covers {len(counts)} stages, horizon has {T - 1}")
        return LiftingStrategy.hybrid(counts, base)
    m = _PLDR.match(s)
    if m:
        k = int(m.group(1)) if m.group(1) else None
        values = m.group(2) if m.group(2) is not None else m.group(3)
        if values is None:
            if k is None:
                raise ValueError(f"{text}: give a breakpoint count or values")
            if k > len(base):
                raise ValueError(f"{text}: base set has only {len(base)} breakpoints")
            z = base[:k]
        else:
            z = tuple(_breakpoint_value(v, problem) for v in values.split(",") if v.strip())
            if k is not None and len(z) != k:
                raise ValueError(f"{text}: expected {k} breakpoints, got {len(z)}")
        return LiftingStrategy.uniform(T, sorted(z))
    raise ValueError(f"cannot parse strategy {text!r}")


def candidate_sets(base: Sequence[float], k: int, min_span: int = 0) -> list[tuple[float, ...]]:
    """``k``-subsets of ``base`` whose first and last elements are at least ``min_span`` positions apart."""
    out = []
    for idx in itertools.combinations(range(len(base)), k):
        if idx[-1] - idx[0] >= min_span:
            out.append(tuple(base[i] for i in idx))
    return out


# minimum index span between the extreme breakpoints of a PLDR-k cluster member
CLUSTER_SPAN = {1: 0, 2: 2, 3: 3, 4: 4, 5: 4}


def hdr_assignments(counts: Sequence[int], base: Sequence[float]) -> list[dict[int, tuple[float, ...]]]:
    """Every choice of one filtered candidate set per breakpoint count used by ``counts``."""
    used = sorted({k for k in counts if k > 0}, reverse=True)
    pools = [candidate_sets(base, k, CLUSTER_SPAN.get(k, 0)) for k in used]
    return [dict(zip(used, combo)) for combo in itertools.product(*pools)]


# ---------------------------------------------------------------------------
# solving


@dataclass
class SolvedModel:
    lp: CounterpartLP
    solution: LPSolution
    policy: PolicyBundle
    build_time: float
    solve_time: float


def solve_model(problem, strategy: LiftingStrategy, solver: str = "auto", binary_method: str = "auto") -> SolvedModel:
    """Build and solve the counterpart of ``problem`` under ``strategy``.

    With ``binary_method="auto"`` binaries are enumerated or branched on
    with the builtin machinery for LPs the dense simplex handles, and passed
    to the HiGHS MILP solver for larger ones.
    """
    t0 = time.perf_counter()
    lp = build_counterpart(problem.build(), problem.uncertainty_set(), strategy)
    t1 = time.perf_counter()
    method = binary_method
    if method == "auto" and lp.binaries.size and _choose(lp, solver) == "highs":
        method = "highs-milp"
    sol = solve_with_binaries(lp, solver=solver, method=method)
    t2 = time.perf_counter()
    if not sol.ok:
        raise RuntimeError(f"{strategy.label()}: counterpart is {sol.status.value}")
    return SolvedModel(lp, sol, extract_policy(lp, sol), t1 - t0, t2 - t1)


def evaluate(problem, policy: PolicyBundle, n: int, seed: int, solver: str = "auto") -> tuple[float, float]:
    """Simulated mean cost (newsvendor) or pseudo-simulated profit (transport), with a spread."""
    if isinstance(problem, NewsvendorConfig):
        us = problem.uncertainty_set()
        paths = sample_paths(us.lower, us.upper, n, seed)
        rep = evaluate_policy(policy, paths, problem, seed=seed)
        return rep.mean, rep.sigma
    if isinstance(problem, TransportConfig):
        rep = pseudo_simulate(policy, problem, solver=solver)
        return rep.pseudo_profit, 0.0
    raise TypeError(f"unsupported problem {type(problem).__name__}")


def run_strategy(problem, preset_name: str, text: str, n: int, seed: int, solver: str = "auto") -> dict:
    """One result row; failures are recorded rather than raised."""
    row = {k: "" for k in RESULT_FIELDS}
    row.update(preset=preset_name, strategy=text)
    try:
        strategy = parse_strategy(text, problem)
        row["label"] = strategy.label()
        solved = solve_model(problem, strategy, solver)
        row.update(
            model_objective=solved.solution.objective,
            build_time=solved.build_time,
            solve_time=solved.solve_time,
        )
        mean, sigma = evaluate(problem, solved.policy, n, seed, solver)
        row.update(evaluated_objective=mean, evaluated_sigma=sigma, status="ok")
    except Exception as exc:  # noqa: BLE001 - recorded per strategy, the run continues
        log.warning("strategy %s failed: %s", text, exc)
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return row


# ---------------------------------------------------------------------------
# run bookkeeping


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("DRLIFT_THREADS", "1")))
    except ValueError:
        return 1


def map_tasks(fn: Callable, tasks: Sequence[tuple], workers: int | None = None) -> list:
    """Apply ``fn(*task)`` to every task, in order, on up to ``workers`` processes."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *t) for t in tasks]
        return [f.result() for f in futures]


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()


@dataclass
class RunWriter:
    """Result rows with resume support: finished keys are kept in ``rows.jsonl``."""

    out: Path
    config: dict
    fields: list[str]
    rows: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.out = Path(self.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self._checkpoint = self.out / "rows.jsonl"
        self._done: dict[str, dict] = {}
        manifest = self.out / "manifest.json"
        digest = config_hash(self.config)
        if self._checkpoint.exists() and manifest.exists():
            previous = json.loads(manifest.read_text()).get("config_hash")
            if previous == digest:
                for line in self._checkpoint.read_text().splitlines():
                    if line.strip():
                        rec = json.loads(line)
                        self._done[rec["key"]] = rec["row"]
            else:
                self._checkpoint.unlink()
        manifest.write_text(
            json.dumps(
                {"config": self.config, "config_hash": digest, "version": __version__},
                indent=2,
                sort_keys=True,
                default=str,
            )
        )

    def done(self, key: str) -> dict | None:
        return self._done.get(key)

    def add(self, key: str, row: dict) -> None:
        if key not in self._done:
            with self._checkpoint.open("a") as fh:
                fh.write(json.dumps({"key": key, "row": row}, default=float) + "\n")
            self._done[key] = row
        self.rows.append(row)

    def finish(self, name: str = "results") -> tuple[Path, Path]:
        csv_path = self.out / f"{name}.csv"
        with csv_path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.fields, extrasaction="ignore")
            writer.writeheader()
            writer.writerows(self.rows)
        json_path = self.out / f"{name}.json"
        json_path.write_text(json.dumps(self.rows, indent=2, default=float))
        return csv_path, json_path


def run_tasks(writer: RunWriter, keyed: Sequence[tuple[str, Callable, tuple]]) -> list[dict]:
    """Run ``fn(*args)`` for every key not already finished; append rows in key order."""
    pending = [(k, fn, a) for k, fn, a in keyed if writer.done(k) is None]
    results = dict(zip([k for k, _, _ in pending], map_tasks(_call, [(fn, a) for _, fn, a in pending])))
    rows = []
    for key, _, _ in keyed:
        row = writer.done(key) or results[key]
        writer.add(key, row)
        rows.append(row)
    return rows


def _call(fn, args):
    return fn(*args)


# ---------------------------------------------------------------------------
# experiment recipes


def run_experiment(
    preset_name: str,
    strategies: Sequence[str],
    n: int,
    seed: int,
    out: str | Path,
    solver: str = "auto",
) -> Path:
    """Solve and evaluate each strategy on a preset; returns the CSV path."""
    problem = preset(preset_name)
    config = {"command": "run", "preset": preset_name, "strategies": list(strategies), "n": n, "seed": seed, "solver": solver}
    writer = RunWriter(Path(out), config, RESULT_FIELDS)
    run_tasks(
        writer,
        [(f"{preset_name}|{s}", run_strategy, (problem, preset_name, s, n, seed, solver)) for s in strategies],
    )
    return writer.finish()[0]


def crossover_point(order_limit: float, horizon: int, n: int, seed: int, solver: str = "auto") -> list[dict]:
    """Model and simulated costs of LDR, PLDR-1(E[d]) and PLDR-1(U^x) at one ordering limit."""
    cfg = NewsvendorConfig(horizon=horizon, order_limit=order_limit)
    us = cfg.uncertainty_set()
    paths = sample_paths(us.lower, us.upper, n, seed)
    rows = []
    per_path = {}
    for name, text in (("LDR", "LDR"), ("PLDR-1(E)", "PLDR-1@E"), ("PLDR-1(U)", "PLDR-1@U")):
        row = {"order_limit": order_limit, "strategy": name, "n": n, "seed": seed}
        if name == "PLDR-1(U)" and not cfg.demand_low < order_limit < cfg.demand_high:
            row.update(status="skipped", error="breakpoint at the ordering limit lies outside the demand range")
            rows.append(row)
            continue
        solved = solve_model(cfg, parse_strategy(text, cfg), solver)
        parts = newsvendor_path_costs(solved.policy, cfg, paths)
        total = parts["ordering"] + parts["holding"] + parts["backlog"]
        per_path[name] = total
        row.update(
            model_cost=solved.solution.objective,
            sim_mean=float(total.mean()),
            sim_sigma=float(total.std(ddof=1)),
            status="ok",
        )
        rows.append(row)
    if "LDR" in per_path and "PLDR-1(E)" in per_path:
        diff = per_path["PLDR-1(E)"] - per_path["LDR"]
        for row in rows:
            row["pldr_e_minus_ldr"] = float(diff.mean())
            row["pldr_e_minus_ldr_se"] = float(diff.std(ddof=1) / np.sqrt(n))
    return rows


def crossover_sweep(
    limits: Iterable[float] | None = None,
    horizon: int = 8,
    n: int = 100_000,
    seed: int = 42,
    solver: str = "auto",
    out: str | Path | None = None,
) -> list[dict]:
    limits = list(np.arange(5.0, 10.0 + 1e-9, 0.25) if limits is None else limits)
    fields = ["order_limit", "strategy", "n", "seed", "model_cost", "sim_mean", "sim_sigma",
              "pldr_e_minus_ldr", "pldr_e_minus_ldr_se", "status", "error"]
    config = {"command": "crossover", "limits": [float(u) for u in limits], "horizon": horizon, "n": n, "seed": seed, "solver": solver}
    writer = _writer(out, config, fields)
    rows = _collect(writer, [(f"U={u:g}", crossover_point, (float(u), horizon, n, seed, solver)) for u in limits])
    if out is not None:
        writer.finish("crossover")
    return rows


def sensitivity_point(problem: TransportConfig, base_text: str, stage: int, k: int, solver: str = "auto") -> dict:
    """Model profit with stage ``stage`` lifted by the first ``k`` base breakpoints, others at the base rule."""
    base = parse_strategy(base_text, problem)
    bps = list(base.breakpoints)
    bps[stage - 2] = tuple(problem.breakpoint_base[:k])
    strategy = LiftingStrategy(tuple(bps))
    row = {"base": base_text, "stage": stage, "breakpoints": k, "label": strategy.label()}
    solved = solve_model(problem, strategy, solver)
    row.update(model_objective=solved.solution.objective, solve_time=solved.solve_time)
    return row


def sensitivity_sweep(
    preset_name: str = "transport-3x2-T6",
    bases: Sequence[str] = ("LDR", "PLDR-5"),
    stages: Sequence[int] | None = None,
    counts: Sequence[int] | None = None,
    solver: str = "auto",
    out: str | Path | None = None,
) -> list[dict]:
    problem = preset(preset_name)
    stages = list(range(2, problem.horizon + 1) if stages is None else stages)
    counts = list(range(len(problem.breakpoint_base) + 1) if counts is None else counts)
    config = {"command": "sensitivity", "preset": preset_name, "bases": list(bases), "stages": stages, "counts": counts, "solver": solver}
    fields = ["base", "stage", "breakpoints", "label", "model_objective", "solve_time", "status", "error"]
    writer = _writer(out, config, fields)
    tasks = [
        (f"{b}|{t}|{k}", sensitivity_point, (problem, b, t, k, solver))
        for b in bases
        for t in stages
        for k in counts
    ]
    rows = _collect(writer, tasks)
    if out is not None:
        writer.finish("sensitivity")
    return rows


def policy_point(problem: TransportConfig, strategy: LiftingStrategy, solver: str = "auto", tag: str = "") -> dict:
    """Model profit, pseudo-simulated profit and solve time of one transportation strategy."""
    solved = solve_model(problem, strategy, solver)
    rep = pseudo_simulate(solved.policy, problem, solver=solver)
    return {
        "group": tag,
        "label": strategy.label(),
        "strategy": strategy.to_json(),
        "model_objective": solved.solution.objective,
        "pseudo_profit": rep.pseudo_profit,
        "build_time": solved.build_time,
        "solve_time": solved.solve_time,
    }


POINT_FIELDS = ["group", "label", "strategy", "model_objective", "pseudo_profit", "build_time", "solve_time", "status", "error"]


def cluster_strategies(problem: TransportConfig, sizes: Sequence[int] = (1, 2, 3, 4)) -> list[tuple[str, LiftingStrategy]]:
    """LDR, every filtered PLDR-k candidate and the full base PLDR."""
    base = problem.breakpoint_base
    out = [("LDR", LiftingStrategy.ldr(problem.horizon))]
    for k in sizes:
        for z in candidate_sets(base, k, CLUSTER_SPAN[k]):
            out.append((f"PLDR-{k}", LiftingStrategy.uniform(problem.horizon, z)))
    out.append((f"PLDR-{len(base)}", LiftingStrategy.uniform(problem.horizon, base)))
    return out


def clusters(
    preset_name: str = "transport-10x10-T10",
    sizes: Sequence[int] = (1, 2, 3, 4),
    solver: str = "auto",
    out: str | Path | None = None,
) -> list[dict]:
    problem = preset(preset_name)
    config = {"command": "clusters", "preset": preset_name, "sizes": list(sizes), "solver": solver}
    writer = _writer(out, config, POINT_FIELDS)
    tasks = [
        (s.to_json(), policy_point, (problem, s, solver, tag))
        for tag, s in cluster_strategies(problem, sizes)
    ]
    rows = _collect(writer, tasks)
    if out is not None:
        writer.finish("clusters")
    return rows


def reverse_profile(text: str) -> str:
    tokens = [t.strip() for t in text.strip().strip("<>").split(",")]
    return ",".join(reversed(tokens))


def hdr_strategies(problem: TransportConfig, profile: str) -> list[LiftingStrategy]:
    counts = parse_hdr(profile)
    if len(counts) != problem.horizon - 1:
        raise ValueError(f"profile {profile} covers {len(counts)} stages, horizon has {problem.horizon - 1}")
    return [LiftingStrategy.hybrid(counts, a) for a in hdr_assignments(counts, problem.breakpoint_base)]


def hdr_sweep(
    profiles: Sequence[str],
    preset_name: str = "transport-10x10-T10",
    with_reverse: bool = True,
    solver: str = "auto",
    out: str | Path | None = None,
) -> list[dict]:
    """Every breakpoint assignment of each HDR profile (and of its reverse)."""
    problem = preset(preset_name)
    groups = []
    for p in profiles:
        groups.append(p)
        if with_reverse:
            groups.append(reverse_profile(p))
    config = {"command": "hdr-sweep", "preset": preset_name, "profiles": groups, "solver": solver}
    writer = _writer(out, config, POINT_FIELDS)
    tasks = [
        (f"{g}|{s.to_json()}", policy_point, (problem, s, solver, g))
        for g in groups
        for s in hdr_strategies(problem, g)
    ]
    rows = _collect(writer, tasks)
    if out is not None:
        writer.finish("hdr_sweep")
    return rows


def newsvendor_table(n: int = 100_000, seeds: Sequence[int] = (0, 1, 2, 3, 4), solver: str = "auto") -> list[dict]:
    """Model cost and seed-averaged simulator statistics for the three T=4 rules."""
    cfg = preset("newsvendor-T4")
    us = cfg.uncertainty_set()
    rows = []
    for text in ("LDR", "PLDR-1@E", "PLDR-1@U"):
        solved = solve_model(cfg, parse_strategy(text, cfg), solver)
        reps = [evaluate_policy(solved.policy, sample_paths(us.lower, us.upper, n, s), cfg, seed=s) for s in seeds]
        rows.append(
            {
                "strategy": text,
                "label": solved.policy.strategy.label(),
                "model_cost": solved.solution.objective,
                "x1": solved.policy.intercept["x.1"],
                "sim_mean": float(np.mean([r.mean for r in reps])),
                "sim_sigma": float(np.mean([r.sigma for r in reps])),
                "sim_min": float(np.mean([r.min for r in reps])),
                "sim_max": float(np.mean([r.max for r in reps])),
                "n": n,
                "seeds": " ".join(map(str, seeds)),
                **{f"breakdown_{k}": float(np.mean([r.breakdown[k] for r in reps])) for k in reps[0].breakdown},
            }
        )
    return rows


def transport_table(preset_name: str = "transport-10x10-T20", strategies: Sequence[str] | None = None,
                    heavy: bool = False, solver: str = "auto") -> list[dict]:
    """Model and pseudo-simulated profit with first-stage and expansion costs per rule."""
    from .simulate import transport_cost_summary

    problem = preset(preset_name)
    if strategies is None:
        strategies = ["LDR", "PLDR-1[0.65]", "PLDR-2[0.35,0.65]"]
        if heavy:
            strategies += ["PLDR-3[0.2,0.5,0.65]", "PLDR-4[0.2,0.5,0.65,0.8]"]
    rows = []
    for text in strategies:
        strategy = parse_strategy(text, problem)
        solved = solve_model(problem, strategy, solver)
        rep = pseudo_simulate(solved.policy, problem, solver=solver)
        summary = transport_cost_summary(solved.policy, problem)
        rows.append(
            {
                "strategy": text,
                "model_objective": solved.solution.objective,
                "pseudo_profit": rep.pseudo_profit,
                "solve_time": solved.solve_time,
                **summary,
            }
        )
    return rows


def _writer(out, config, fields):
    if out is None:
        return _MemoryWriter()
    return RunWriter(Path(out), config, fields)


class _MemoryWriter:
    def done(self, key):
        return None

    def add(self, key, row):
        pass


def _guarded(fn, args):
    try:
        res = fn(*args)
        rows = res if isinstance(res, list) else [res]
        for r in rows:
            r.setdefault("status", "ok")
        return rows
    except Exception as exc:  # noqa: BLE001 - recorded per task
        log.warning("task failed: %s", exc)
        return [{"status": "failed", "error": f"{type(exc).__name__}: {exc}"}]


def _collect(writer, tasks) -> list[dict]:
    """Run tasks (skipping finished keys) and flatten their rows in task order."""
    pending = [(k, fn, a) for k, fn, a in tasks if writer.done(k) is None]
    results = dict(zip([k for k, _, _ in pending], map_tasks(_guarded, [(fn, a) for _, fn, a in pending])))
    rows = []
    for key, _, _ in tasks:
        done = writer.done(key)
        chunk = done["rows"] if done is not None else results[key]
        writer.add(key, {"rows": chunk})
        rows.extend(chunk)
    if isinstance(writer, RunWriter):
        writer.rows = rows
    return rows
