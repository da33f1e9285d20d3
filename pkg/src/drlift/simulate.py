"""Closed-loop Monte Carlo evaluation and the transportation pseudo simulator."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .counterpart import PolicyBundle, build_counterpart, embed_policy
from .lp import solve_lp
from .problems.newsvendor import NewsvendorConfig
from .problems.transport import TransportConfig, production_names
from .uncertainty import LiftingStrategy, lift_paths, lifted_mean

BOUND_TOL = 1e-6

REPORT_FIELDS = ["preset", "strategy", "n", "seed", "mean", "sigma", "min", "max"]


def sample_paths(lower: Sequence[float], upper: Sequence[float], n: int, seed: int) -> np.ndarray:
    """``n`` independent uniform paths over the stage bounds from a seeded PCG64 stream."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rng = np.random.Generator(np.random.PCG64(seed))
    return lower + (upper - lower) * rng.random((n, lower.shape[0]))


@dataclass
class EvaluationReport:
    n: int
    seed: int | None
    mean: float
    sigma: float
    min: float
    max: float
    breakdown: dict[str, float] = field(default_factory=dict)
    preset: str = ""
    strategy: str = ""

    @classmethod
    def from_samples(cls, totals: np.ndarray, components: dict[str, np.ndarray], seed=None, **labels):
        n = totals.shape[0]
        mean = math.fsum(totals) / n
        var = math.fsum((totals - mean) ** 2) / max(n - 1, 1)
        breakdown = {k: math.fsum(v) / n for k, v in components.items()}
        return cls(n, seed, mean, math.sqrt(var), float(totals.min()), float(totals.max()), breakdown, **labels)

    def row(self) -> dict:
        out = {k: getattr(self, k) for k in REPORT_FIELDS}
        out.update({f"breakdown_{k}": v for k, v in self.breakdown.items()})
        return out

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


def write_reports_csv(reports: Sequence[EvaluationReport]) -> str:
    rows = [r.row() for r in reports]
    fields = list(REPORT_FIELDS)
    for r in rows:
        fields += [k for k in r if k not in fields]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields)
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# newsvendor


def newsvendor_orders(policy: PolicyBundle, cfg: NewsvendorConfig, paths: np.ndarray) -> np.ndarray:
    """Order quantities ``(n, T-1)``, checked against ``[0, U^x]`` and clipped within tolerance."""
    names = [f"x.{t}" for t in range(1, cfg.horizon)]
    orders = policy.evaluate(names, lift_paths(paths, policy.strategy))
    excess = np.maximum(-orders, orders - cfg.order_limit).max(initial=0.0)
    if excess > BOUND_TOL:
        raise ValueError(f"ordering rule leaves [0, {cfg.order_limit}] by {excess:.3g}")
    return np.clip(orders, 0.0, cfg.order_limit)


def newsvendor_path_costs(policy: PolicyBundle, cfg: NewsvendorConfig, paths: np.ndarray) -> dict[str, np.ndarray]:
    """Per-path cost components when only the ordering rule is applied.

    Inventory follows the balance equation and the surplus and shortage
    states are repaired to ``max(I, 0)`` and ``max(-I, 0)``.
    """
    if policy.strategy.horizon != cfg.horizon:
        raise ValueError(f"policy horizon {policy.strategy.horizon} does not match {cfg.horizon}")
    orders = newsvendor_orders(policy, cfg, paths)
    inventory = cfg.initial_inventory + np.cumsum(orders - paths, axis=1)
    return {
        "ordering": orders @ cfg.C,
        "holding": np.maximum(inventory, 0.0) @ cfg.H,
        "backlog": np.maximum(-inventory, 0.0) @ cfg.B,
    }


def newsvendor_rule_costs(policy: PolicyBundle, cfg: NewsvendorConfig, paths: np.ndarray) -> np.ndarray:
    """Per-path cost assigned by the policy's own surplus and shortage rules."""
    T = cfg.horizon
    lifted = lift_paths(paths, policy.strategy)
    x = policy.evaluate([f"x.{t}" for t in range(1, T)], lifted)
    sp = policy.evaluate([f"sp.{t}" for t in range(2, T + 1)], lifted)
    sm = policy.evaluate([f"sm.{t}" for t in range(2, T + 1)], lifted)
    return x @ cfg.C + sp @ cfg.H + sm @ cfg.B


def evaluate_policy(
    policy: PolicyBundle,
    paths: np.ndarray,
    cfg: NewsvendorConfig,
    seed: int | None = None,
    **labels,
) -> EvaluationReport:
    """Monte Carlo cost statistics of a newsvendor ordering policy."""
    parts = newsvendor_path_costs(policy, cfg, paths)
    total = parts["ordering"] + parts["holding"] + parts["backlog"]
    return EvaluationReport.from_samples(total, parts, seed=seed, **labels)


# ---------------------------------------------------------------------------
# transportation


@dataclass
class PseudoSimReport:
    strategy: str
    model_profit: float
    pseudo_profit: float
    solve_time: float
    status: str = "optimal"
    dual_bound: float = float("nan")


def _fine_strategy(cfg: TransportConfig) -> LiftingStrategy:
    if not cfg.breakpoint_base:
        raise ValueError("config has no breakpoint base set for the pseudo simulator")
    return LiftingStrategy.uniform(cfg.horizon, cfg.breakpoint_base)


def pseudo_simulate(
    policy: PolicyBundle,
    cfg: TransportConfig,
    fine: LiftingStrategy | None = None,
    solver: str = "auto",
) -> PseudoSimReport:
    """Re-optimize distribution rules with production and expansion rules frozen.

    The frozen rules are embedded into the fine lifting (by default the
    full base set in every stage) and the shipments and inventories are
    re-solved in that counterpart.  The returned profit is the optimum of
    the restricted counterpart.
    """
    fine = fine or _fine_strategy(cfg)
    frozen = embed_policy(policy, fine)
    lp = build_counterpart(cfg.build(), cfg.uncertainty_set(), fine)
    cols, values = [], []
    for name in production_names(cfg):
        cols.append(lp.intercept_cols[name])
        value = frozen.intercept[name]
        if cfg.has_expansion and name.startswith("build"):
            value = float(round(value))
        values.append(value)
        sc = lp.slope_cols[name]
        cols.extend(sc.tolist())
        values.extend(frozen.slope[name][: sc.size].tolist())
    restricted = lp.with_bounds(cols, values, values)
    t0 = time.perf_counter()
    sol = solve_lp(restricted, solver)
    elapsed = time.perf_counter() - t0
    if not sol.ok:
        raise RuntimeError(f"pseudo simulator counterpart is {sol.status.value} after freezing {policy.strategy.label()}")
    return PseudoSimReport(policy.strategy.label(), policy.objective, sol.objective, elapsed, dual_bound=sol.dual_objective)


def transport_cost_summary(policy: PolicyBundle, cfg: TransportConfig) -> dict[str, float]:
    """Expected cost components of a transportation policy under the uniform lifted mean."""
    lo, hi = cfg.xi_bounds
    mean = lifted_mean(policy.strategy, np.full(cfg.horizon - 1, lo), np.full(cfg.horizon - 1, hi))

    def expect(name):
        return policy.intercept[name] + float(policy.slope[name] @ mean)

    out = {"first_stage_production": 0.0, "production": 0.0, "expansion_production": 0.0, "capital": 0.0}
    for i in range(1, cfg.n_suppliers + 1):
        C = float(cfg.production_cost[i - 1])
        out["first_stage_production"] += C * policy.intercept[f"x{i}.1"]
        for t in range(1, cfg.horizon):
            out["production"] += C * expect(f"x{i}.{t}")
        if cfg.has_expansion:
            surcharge = (1.0 + cfg.surcharge) * C
            out["first_stage_production"] += surcharge * policy.intercept[f"xe{i}.1"]
            for t in range(1, cfg.horizon):
                out["expansion_production"] += surcharge * expect(f"xe{i}.{t}")
            out["capital"] += float(cfg.capital_cost[i - 1]) * round(policy.intercept[f"build{i}.1"])
    return out
