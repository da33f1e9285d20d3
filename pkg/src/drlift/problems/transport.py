"""Multistage transportation with inventories and optional capacity expansion."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from ..counterpart import AffineStageModel
from ..uncertainty import UncertaintySet

# sha256 of the shipped parameter tables
DATA_CHECKSUMS = {
    "transport_3x2.json": "3baea8af83792ec0dd81c2f887979699b83087a511b34e6c332e687fa3eefc36",
    "transport_10x10.json": "c1dddf2754f8df32107fca6b82cc9f695de80a7ea940f3b23ad559359d51daf6",
}


def _array(value, shape=None) -> np.ndarray:
    a = np.array(value, dtype=float)
    if shape is not None and a.shape != shape:
        raise ValueError(f"expected shape {shape}, got {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TransportConfig:
    """Suppliers ``i`` produce, store and ship to customers ``j`` with demand ``D0 + D1 xi_t``.

    Salvage is either a fixed value per unit (``salvage_value``) or a
    multiple of ``C_i + H_i`` (``salvage_factor``).  Expansion is enabled when
    ``capital_cost`` and ``expansion_capacity`` are given.
    """

    horizon: int
    production_cost: np.ndarray
    holding_cost: np.ndarray
    capacity: np.ndarray
    transport_cost: np.ndarray
    demand_base: np.ndarray
    demand_slope: np.ndarray
    revenue: np.ndarray
    xi_bounds: tuple[float, float] = (0.0, 1.0)
    salvage_value: float | None = None
    salvage_factor: float | None = None
    initial_inventory: np.ndarray | None = None
    capital_cost: np.ndarray | None = None
    expansion_capacity: np.ndarray | None = None
    surcharge: float = 0.5
    breakpoint_base: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError(f"horizon must be at least 2, got {self.horizon}")
        C = _array(self.production_cost)
        n_i = C.shape[0]
        T_ij = np.atleast_2d(_array(self.transport_cost))
        n_j = T_ij.shape[1]
        if n_i < 1 or n_j < 1 or T_ij.shape[0] != n_i:
            raise ValueError(f"transport cost table {T_ij.shape} does not match {n_i} suppliers")
        object.__setattr__(self, "production_cost", C)
        object.__setattr__(self, "transport_cost", T_ij)
        for name, size in (("holding_cost", n_i), ("capacity", n_i), ("demand_base", n_j),
                           ("demand_slope", n_j), ("revenue", n_j)):
            object.__setattr__(self, name, _array(getattr(self, name), (size,)))
        init = np.zeros(n_i) if self.initial_inventory is None else self.initial_inventory
        object.__setattr__(self, "initial_inventory", _array(init, (n_i,)))
        if (self.capital_cost is None) != (self.expansion_capacity is None):
            raise ValueError("capital_cost and expansion_capacity must be given together")
        if self.capital_cost is not None:
            object.__setattr__(self, "capital_cost", _array(self.capital_cost, (n_i,)))
            object.__setattr__(self, "expansion_capacity", _array(self.expansion_capacity, (n_i,)))
        if (self.salvage_value is None) == (self.salvage_factor is None):
            raise ValueError("give exactly one of salvage_value and salvage_factor")
        lo, hi = self.xi_bounds
        if not lo < hi:
            raise ValueError(f"xi bounds {self.xi_bounds} must be increasing")
        object.__setattr__(self, "xi_bounds", (float(lo), float(hi)))
        object.__setattr__(self, "breakpoint_base", tuple(float(z) for z in self.breakpoint_base))

    @property
    def n_suppliers(self) -> int:
        return self.production_cost.shape[0]

    @property
    def n_customers(self) -> int:
        return self.revenue.shape[0]

    @property
    def has_expansion(self) -> bool:
        return self.capital_cost is not None

    @property
    def salvage(self) -> np.ndarray:
        if self.salvage_value is not None:
            return np.full(self.n_suppliers, float(self.salvage_value))
        return self.salvage_factor * (self.production_cost + self.holding_cost)

    def demand(self, xi) -> np.ndarray:
        """Demand of every customer for the given ``xi`` values (broadcast over a trailing axis)."""
        return self.demand_base + np.multiply.outer(np.asarray(xi, dtype=float), self.demand_slope)

    def uncertainty_set(self) -> UncertaintySet:
        return UncertaintySet.uniform_box(self.horizon, *self.xi_bounds)

    def build(self) -> AffineStageModel:
        return transport_model(self)

    def with_horizon(self, horizon: int) -> "TransportConfig":
        return replace(self, horizon=horizon)


def _load_table(name: str) -> dict:
    raw = resources.files(__package__).joinpath("data", name).read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != DATA_CHECKSUMS[name]:
        raise RuntimeError(f"{name}: checksum {digest} does not match the shipped table")
    return json.loads(raw)


def load_transport(
    name: str,
    horizon: int,
    salvage_value: float | None = None,
    salvage_factor: float | None = None,
    expansion: bool = True,
) -> TransportConfig:
    """Config from a shipped table (``"3x2"`` or ``"10x10"``)."""
    data = _load_table(f"transport_{name}.json")
    kwargs = dict(
        horizon=horizon,
        production_cost=data["production_cost"],
        holding_cost=data["holding_cost"],
        capacity=data["capacity"],
        transport_cost=data["transport_cost"],
        demand_base=data["demand_base"],
        demand_slope=data["demand_slope"],
        revenue=data["revenue"],
        xi_bounds=tuple(data["xi_bounds"]),
        salvage_value=salvage_value,
        salvage_factor=salvage_factor,
        breakpoint_base=tuple(data["breakpoint_base"]),
    )
    if expansion and "capital_cost" in data:
        kwargs.update(
            capital_cost=data["capital_cost"],
            expansion_capacity=data["expansion_capacity"],
            surcharge=data.get("surcharge", 0.5),
        )
    return TransportConfig(**kwargs)


def production_names(cfg: TransportConfig) -> list[str]:
    """Decisions the pseudo simulator freezes: production, expansion production and build flags."""
    names = []
    for i in range(1, cfg.n_suppliers + 1):
        names += [f"x{i}.{t}" for t in range(1, cfg.horizon)]
        if cfg.has_expansion:
            names += [f"xe{i}.{t}" for t in range(1, cfg.horizon)]
            names.append(f"build{i}.1")
    return names


def transport_model(cfg: TransportConfig) -> AffineStageModel:
    """Decision blocks ``x<i>``, ``xe<i>``, ``build<i>``, ``inv<i>`` and ``y<i>_<j>``."""
    T = cfg.horizon
    I = range(1, cfg.n_suppliers + 1)
    J = range(1, cfg.n_customers + 1)
    m = AffineStageModel(T, sense="max")
    for i in I:
        for t in range(1, T):
            m.add_decision(f"x{i}", t, lower=0.0, upper=float(cfg.capacity[i - 1]))
        if cfg.has_expansion:
            m.add_decision(f"build{i}", 1, binary=True)
            for t in range(1, T):
                m.add_decision(f"xe{i}", t, lower=0.0)
        for t in range(2, T + 1):
            m.add_decision(f"inv{i}", t, lower=0.0)
            for j in J:
                m.add_decision(f"y{i}_{j}", t, lower=0.0)

    for t in range(2, T + 1):
        for i in I:
            terms = {f"inv{i}.{t}": 1.0}
            terms.update({f"y{i}_{j}.{t}": -1.0 for j in J})
            m.add_constraint(f"supply{i}.{t}", terms)
        for j in J:
            m.add_constraint(
                f"demand{j}.{t}",
                {f"y{i}_{j}.{t}": -1.0 for i in I},
                const=float(cfg.demand_base[j - 1]),
                unc={t: float(cfg.demand_slope[j - 1])},
            )
        for i in I:
            # inv_t - inv_{t-1} - x_{t-1} - xe_{t-1} + sum_j y_{t-1} = 0; stage-1 shipments are zero
            terms = {f"inv{i}.{t}": 1.0, f"x{i}.{t - 1}": -1.0}
            if cfg.has_expansion:
                terms[f"xe{i}.{t - 1}"] = -1.0
            const = 0.0
            if t == 2:
                const = -float(cfg.initial_inventory[i - 1])
            else:
                terms[f"inv{i}.{t - 1}"] = -1.0
                terms.update({f"y{i}_{j}.{t - 1}": 1.0 for j in J})
            m.add_constraint(f"balance{i}.{t}", terms, const=const, kind="==")
    if cfg.has_expansion:
        for i in I:
            for t in range(1, T):
                m.add_constraint(
                    f"expansion{i}.{t}",
                    {f"build{i}.1": float(cfg.expansion_capacity[i - 1]), f"xe{i}.{t}": -1.0},
                )

    obj: dict[str, float] = {}
    salvage = cfg.salvage
    for i in I:
        C = float(cfg.production_cost[i - 1])
        for t in range(1, T):
            obj[f"x{i}.{t}"] = -C
            if cfg.has_expansion:
                obj[f"xe{i}.{t}"] = -(1.0 + cfg.surcharge) * C
        if cfg.has_expansion:
            obj[f"build{i}.1"] = -float(cfg.capital_cost[i - 1])
        for t in range(2, T + 1):
            obj[f"inv{i}.{t}"] = -float(cfg.holding_cost[i - 1])
            for j in J:
                obj[f"y{i}_{j}.{t}"] = float(cfg.revenue[j - 1] - cfg.transport_cost[i - 1, j - 1])
        obj[f"inv{i}.{T}"] += float(salvage[i - 1])
    m.set_objective(obj)
    return m
