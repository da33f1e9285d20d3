"""Multistage newsvendor with ordering limits, holding and backlog costs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..counterpart import AffineStageModel
from ..uncertainty import UncertaintySet


@dataclass(frozen=True)
class NewsvendorConfig:
    """Orders ``x_t`` placed in stages ``1..T-1`` arrive after demand ``d_{t+1}`` is seen.

    Cost coefficients may be scalars or per-stage sequences (ordering costs
    over stages ``1..T-1``, holding and backlog costs over ``2..T``).
    """

    horizon: int = 4
    order_cost: float | Sequence[float] = 3.0
    holding_cost: float | Sequence[float] = 1.5
    backlog_cost: float | Sequence[float] = 7.0
    order_limit: float = 8.0
    initial_inventory: float = 4.0
    demand_low: float = 0.0
    demand_high: float = 10.0

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError(f"horizon must be at least 2, got {self.horizon}")
        if self.order_limit <= 0:
            raise ValueError("order_limit must be positive")
        if not self.demand_low < self.demand_high:
            raise ValueError("demand bounds must satisfy low < high")
        for name in ("order_cost", "holding_cost", "backlog_cost"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise ValueError(f"{name} must be nonnegative")

    def _per_stage(self, value) -> np.ndarray:
        return np.broadcast_to(np.asarray(value, dtype=float), (self.horizon - 1,))

    @property
    def C(self) -> np.ndarray:
        return self._per_stage(self.order_cost)

    @property
    def H(self) -> np.ndarray:
        return self._per_stage(self.holding_cost)

    @property
    def B(self) -> np.ndarray:
        return self._per_stage(self.backlog_cost)

    @property
    def mean_demand(self) -> float:
        return 0.5 * (self.demand_low + self.demand_high)

    def uncertainty_set(self) -> UncertaintySet:
        return UncertaintySet.uniform_box(self.horizon, self.demand_low, self.demand_high)

    def build(self) -> AffineStageModel:
        return newsvendor_model(self)


def newsvendor_model(cfg: NewsvendorConfig) -> AffineStageModel:
    """Decisions ``x.t`` (t < T) and ``I.t``, ``sp.t``, ``sm.t`` (t >= 2)."""
    T = cfg.horizon
    m = AffineStageModel(T, sense="min")
    for t in range(1, T):
        m.add_decision("x", t, lower=0.0, upper=cfg.order_limit)
    for t in range(2, T + 1):
        m.add_decision("I", t)
        m.add_decision("sp", t, lower=0.0)
        m.add_decision("sm", t, lower=0.0)
    for t in range(2, T + 1):
        # I_t - I_{t-1} - x_{t-1} + d_t = 0 with I_1 a constant
        terms = {f"I.{t}": 1.0, f"x.{t - 1}": -1.0}
        const = 0.0
        if t == 2:
            const = -cfg.initial_inventory
        else:
            terms[f"I.{t - 1}"] = -1.0
        m.add_constraint(f"balance.{t}", terms, const=const, unc={t: 1.0}, kind="==")
        m.add_constraint(f"surplus.{t}", {f"sp.{t}": 1.0, f"I.{t}": -1.0})
        m.add_constraint(f"shortage.{t}", {f"sm.{t}": 1.0, f"I.{t}": 1.0})
    obj = {f"x.{t}": cfg.C[t - 1] for t in range(1, T)}
    for t in range(2, T + 1):
        obj[f"sp.{t}"] = cfg.H[t - 2]
        obj[f"sm.{t}"] = cfg.B[t - 2]
    m.set_objective(obj)
    return m
