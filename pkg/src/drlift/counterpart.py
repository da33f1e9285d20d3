"""Affine multistage models and their duality-based deterministic counterparts.

Every adaptive decision ``x`` revealed at stage ``s`` follows the rule
``x(d) = x0 + x1 . L(d)`` where ``L`` is the lifting of the realization and
``x1`` is zero beyond the ``k_s`` coordinates observed by stage ``s``.
Substituting these rules turns each constraint into
``intercept + slope . L(d) (>= | ==) 0`` for all ``d``; inequalities are
enforced through LP duality over the outer approximation of the lifted set,
equalities by matching coefficients.

Column names follow ``policy.<block>.<stage>.c0`` for intercepts,
``policy.<block>.<stage>.s<j>`` for slopes on lifted coordinate ``j`` and
``dual.<constraint>.<row>`` for dual multipliers.  Row names are
``cons.<constraint>.c0`` and ``cons.<constraint>.s<j>``.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .lp import LinearProgram, LPSolution
from .uncertainty import (
    LiftingStrategy,
    UncertaintySet,
    lift_paths,
    lifted_mean,
    outer_approximation,
)

log = logging.getLogger(__name__)

__all__ = [
    "Decision",
    "Constraint",
    "AffineStageModel",
    "CounterpartLP",
    "PolicyBundle",
    "dualize_inequality",
    "match_equality",
    "build_counterpart",
    "extract_policy",
    "embed_policy",
    "constraint_violations",
]


@dataclass(frozen=True)
class Decision:
    block: str
    stage: int
    binary: bool = False

    @property
    def name(self) -> str:
        return f"{self.block}.{self.stage}"


@dataclass(frozen=True)
class Constraint:
    """``sum_v terms[v] * x_v(d) + sum_t unc[t] * d_t + const  (>= | ==)  0``.

    ``unc`` is keyed by 1-based stage (2..T).
    """

    name: str
    terms: Mapping[str, float]
    const: float = 0.0
    unc: Mapping[int, float] = field(default_factory=dict)
    kind: str = ">="


class AffineStageModel:
    """Multistage adaptive LP with an expected-value objective."""

    def __init__(self, horizon: int, sense: str = "min"):
        if horizon < 2:
            raise ValueError(f"horizon must be at least 2, got {horizon}")
        if sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {sense!r}")
        self.horizon = horizon
        self.sense = sense
        self.decisions: dict[str, Decision] = {}
        self.constraints: list[Constraint] = []
        self._constraint_names: set[str] = set()
        self.objective: dict[str, float] = {}
        self.objective_unc: dict[int, float] = {}
        self.objective_const = 0.0

    def add_decision(
        self,
        block: str,
        stage: int,
        lower: float | None = None,
        upper: float | None = None,
        binary: bool = False,
    ) -> str:
        """Register a decision and its constant bounds (as ordinary constraints).

        Binary decisions must be static; their ``[0, 1]`` range is a column bound.
        """
        if not 1 <= stage <= self.horizon:
            raise ValueError(f"{block}: stage {stage} outside 1..{self.horizon}")
        if binary and stage != 1:
            raise ValueError(f"{block}: binary decisions must be static (stage 1)")
        dec = Decision(block, stage, binary)
        if dec.name in self.decisions:
            raise ValueError(f"duplicate decision {dec.name}")
        self.decisions[dec.name] = dec
        if not binary:
            if lower is not None:
                self.add_constraint(f"{dec.name}.lb", {dec.name: 1.0}, const=-lower)
            if upper is not None:
                self.add_constraint(f"{dec.name}.ub", {dec.name: -1.0}, const=upper)
        return dec.name

    def add_constraint(
        self,
        name: str,
        terms: Mapping[str, float],
        const: float = 0.0,
        unc: Mapping[int, float] | None = None,
        kind: str = ">=",
    ) -> None:
        """Add ``terms . x(d) + unc . d + const  kind  0`` with ``kind`` in ``>=, <=, ==``."""
        if name in self._constraint_names:
            raise ValueError(f"duplicate constraint {name}")
        unc = dict(unc or {})
        for v in terms:
            if v not in self.decisions:
                raise ValueError(f"constraint {name}: unknown decision {v}")
        for t in unc:
            if not 2 <= t <= self.horizon:
                raise ValueError(f"constraint {name}: uncertainty stage {t} outside 2..{self.horizon}")
        terms = {v: float(a) for v, a in terms.items() if a != 0.0}
        unc = {int(t): float(g) for t, g in unc.items() if g != 0.0}
        if kind == "<=":
            terms = {v: -a for v, a in terms.items()}
            unc = {t: -g for t, g in unc.items()}
            const, kind = -const, ">="
        if kind not in (">=", "=="):
            raise ValueError(f"constraint {name}: unknown kind {kind!r}")
        self._constraint_names.add(name)
        self.constraints.append(Constraint(name, terms, float(const), unc, kind))

    def set_objective(
        self,
        terms: Mapping[str, float],
        unc: Mapping[int, float] | None = None,
        const: float = 0.0,
    ) -> None:
        """Objective ``E[terms . x(d) + unc . d] + const``."""
        for v in terms:
            if v not in self.decisions:
                raise ValueError(f"objective: unknown decision {v}")
        self.objective = {v: float(a) for v, a in terms.items() if a != 0.0}
        self.objective_unc = {int(t): float(g) for t, g in (unc or {}).items() if g != 0.0}
        self.objective_const = float(const)

    def unconstrained_decisions(self) -> list[str]:
        """Decisions priced in the objective but absent from every constraint."""
        used = set()
        for con in self.constraints:
            used.update(con.terms)
        return [v for v in self.objective if v not in used and not self.decisions[v].binary]

    def matrices(self) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray, list[str]]:
        """Constraint data ``(A, G, const, names)`` with rows ``A x + G d + const``."""
        index = {v: j for j, v in enumerate(self.decisions)}
        rows, cols, vals = [], [], []
        G = np.zeros((len(self.constraints), self.horizon - 1))
        const = np.zeros(len(self.constraints))
        for i, con in enumerate(self.constraints):
            for v, a in con.terms.items():
                rows.append(i)
                cols.append(index[v])
                vals.append(a)
            for t, g in con.unc.items():
                G[i, t - 2] = g
            const[i] = con.const
        A = sp.csr_matrix((vals, (rows, cols)), shape=(len(self.constraints), len(self.decisions)))
        return A, G, const, [c.name for c in self.constraints]


# ---------------------------------------------------------------------------
# counterpart LP


@dataclass(frozen=True, eq=False)
class CounterpartLP(LinearProgram):
    """Deterministic counterpart with maps from decisions to their rule columns."""

    intercept_cols: Mapping[str, int] = field(default_factory=dict)
    slope_cols: Mapping[str, np.ndarray] = field(default_factory=dict)
    dual_cols: Mapping[str, np.ndarray] = field(default_factory=dict)
    strategy: LiftingStrategy | None = None
    mean: np.ndarray | None = None
    decision_stage: Mapping[str, int] = field(default_factory=dict)


class _Assembler:
    """Sparse row/column accumulator."""

    def __init__(self):
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []
        self.row_lo: list[float] = []
        self.row_hi: list[float] = []
        self.row_names: list[str] = []
        self.col_lo: list[float] = []
        self.col_hi: list[float] = []
        self.col_names: list[str] = []
        self.integrality: list[bool] = []

    def new_cols(self, names: Sequence[str], lo: float = -np.inf, hi: float = np.inf, binary: bool = False) -> np.ndarray:
        start = len(self.col_names)
        self.col_names.extend(names)
        self.col_lo.extend([lo] * len(names))
        self.col_hi.extend([hi] * len(names))
        self.integrality.extend([binary] * len(names))
        return np.arange(start, start + len(names))

    def new_rows(self, names: Sequence[str], lo, hi) -> np.ndarray:
        start = len(self.row_names)
        n = len(names)
        self.row_names.extend(names)
        self.row_lo.extend(np.broadcast_to(np.asarray(lo, dtype=float), (n,)).tolist())
        self.row_hi.extend(np.broadcast_to(np.asarray(hi, dtype=float), (n,)).tolist())
        return np.arange(start, start + n)

    def add(self, rows, cols, vals) -> None:
        rows, cols, vals = np.broadcast_arrays(
            np.asarray(rows, dtype=int), np.asarray(cols, dtype=int), np.asarray(vals, dtype=float)
        )
        self.rows.append(rows.ravel())
        self.cols.append(cols.ravel())
        self.vals.append(vals.ravel())

    def matrix(self) -> sp.csr_matrix:
        shape = (len(self.row_names), len(self.col_names))
        if not self.rows:
            return sp.csr_matrix(shape)
        return sp.csr_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))), shape=shape
        )


@dataclass
class _RuleIndex:
    intercept: dict[str, int]
    slopes: dict[str, np.ndarray]
    window: dict[str, int]


def _affine_parts(con: Constraint, rules: _RuleIndex, strategy: LiftingStrategy):
    """Per-decision intercept columns and, per lifted coordinate, the uncertainty coefficient."""
    stage_of = strategy.stage_of_coordinate()
    g = np.zeros(strategy.k_prime)
    for t, coef in con.unc.items():
        g[stage_of == t] = coef
    reach = max((rules.window[v] for v in con.terms), default=0)
    support = np.zeros(strategy.k_prime, dtype=bool)
    support[:reach] = True
    support |= g != 0.0
    return g, support


def _emit_intercept(asm: _Assembler, con: Constraint, rules: _RuleIndex, lo: float, hi: float) -> int:
    row = asm.new_rows([f"cons.{con.name}.c0"], lo, hi)[0]
    cols = [rules.intercept[v] for v in con.terms]
    asm.add(row, cols, list(con.terms.values()))
    return row


def _emit_slope_terms(asm: _Assembler, con: Constraint, rules: _RuleIndex, coords: np.ndarray, rows: np.ndarray, sign: float):
    """Add ``sign * sum_v a_v x1_v[j]`` to the row of each coordinate ``j`` in ``coords``."""
    for v, a in con.terms.items():
        w = rules.window[v]
        mask = coords < w
        if mask.any():
            asm.add(rows[mask], rules.slopes[v][coords[mask]], sign * a)


def dualize_inequality(
    asm: _Assembler,
    con: Constraint,
    rules: _RuleIndex,
    g: np.ndarray,
    coords: np.ndarray,
    A_rows: np.ndarray,
    b_rows: np.ndarray,
    row_labels: Sequence[int],
) -> np.ndarray:
    """Robust form of ``intercept + slope . d' >= 0`` over ``{A d' >= b}``.

    Emits ``u >= 0`` with ``intercept + b . u >= 0`` and ``A^T u = slope``,
    where ``A``/``b`` are the rows of the lifted description restricted to
    ``coords``.  Returns the dual column indices.
    """
    u = asm.new_cols([f"dual.{con.name}.{r}" for r in row_labels], lo=0.0)
    r0 = _emit_intercept(asm, con, rules, -con.const, np.inf)
    asm.add(r0, u, b_rows)
    rows = asm.new_rows([f"cons.{con.name}.s{j}" for j in coords], g[coords], g[coords])
    sub = sp.coo_matrix(A_rows[:, coords])
    # row of coordinate coords[k] gets sum_r A[r, coords[k]] u_r
    asm.add(rows[sub.col], u[sub.row], sub.data)
    _emit_slope_terms(asm, con, rules, coords, rows, -1.0)
    return u


def match_equality(asm: _Assembler, con: Constraint, rules: _RuleIndex, g: np.ndarray, coords: np.ndarray) -> None:
    """Coefficient matching: intercept = 0 and every slope entry in ``coords`` = 0."""
    _emit_intercept(asm, con, rules, -con.const, -con.const)
    if coords.size:
        rows = asm.new_rows([f"cons.{con.name}.s{j}" for j in coords], -g[coords], -g[coords])
        _emit_slope_terms(asm, con, rules, coords, rows, 1.0)


def build_counterpart(
    model: AffineStageModel,
    uset: UncertaintySet,
    strategy: LiftingStrategy,
    mean: np.ndarray | None = None,
    prune: bool = True,
) -> CounterpartLP:
    """Deterministic counterpart of ``model`` under affine rules in the lifted space.

    ``mean`` defaults to the closed-form lifted mean of independent uniforms
    on the set's stage bounds.  With ``prune`` every inequality only
    dualizes against the product components of the lifted set its support
    touches and exact duplicate rows are dropped; the optimum is unchanged
    because the untouched components contribute a zero minimum.  With
    ``prune=False`` each inequality carries a full ``m + m'`` dual block.
    """
    if not (model.horizon == uset.horizon == strategy.horizon):
        raise ValueError(
            f"horizons differ: model {model.horizon}, set {uset.horizon}, strategy {strategy.horizon}"
        )
    loose = model.unconstrained_decisions()
    if loose:
        raise ValueError(f"decisions {loose} are priced but unconstrained; the counterpart is unbounded")
    desc = outer_approximation(uset, strategy, drop_duplicate_rows=prune)
    if mean is None:
        mean = lifted_mean(strategy, uset.lower, uset.upper)
    mean = np.asarray(mean, dtype=float)
    if mean.shape != (strategy.k_prime,):
        raise ValueError(f"mean has shape {mean.shape}, expected ({strategy.k_prime},)")

    asm = _Assembler()
    rules = _RuleIndex({}, {}, {})
    for name, dec in model.decisions.items():
        lo, hi = (0.0, 1.0) if dec.binary else (-np.inf, np.inf)
        rules.intercept[name] = int(asm.new_cols([f"policy.{name}.c0"], lo, hi, dec.binary)[0])
        w = strategy.window(dec.stage)
        rules.window[name] = w
        rules.slopes[name] = asm.new_cols([f"policy.{name}.s{j}" for j in range(w)])

    # product components of the lifted set: coordinates and rows per group
    k = strategy.k_prime
    coord_stage = strategy.stage_of_coordinate() - 2
    A_l, b_l = desc.A_l, desc.b_l
    if prune:
        groups = desc.components()
        row_stage = np.array([coord_stage[np.flatnonzero(row)[0]] for row in A_l])
        group_of_stage = np.empty(len(strategy.breakpoints), dtype=int)
        for gi, stages in enumerate(groups):
            group_of_stage[stages] = gi
        group_coords = [np.flatnonzero(np.isin(coord_stage, s)) for s in groups]
        group_rows = [np.flatnonzero(np.isin(row_stage, s)) for s in groups]
    else:
        group_of_stage = np.zeros(len(strategy.breakpoints), dtype=int)
        group_coords = [np.arange(k)]
        group_rows = [np.arange(A_l.shape[0])]

    dual_cols: dict[str, np.ndarray] = {}
    for con in model.constraints:
        g, support = _affine_parts(con, rules, strategy)
        if con.kind == "==":
            match_equality(asm, con, rules, g, np.flatnonzero(support))
            continue
        touched = np.unique(group_of_stage[coord_stage[support]]) if support.any() else np.array([], dtype=int)
        if touched.size == 0:
            _emit_intercept(asm, con, rules, -con.const, np.inf)
            continue
        coords = np.concatenate([group_coords[gi] for gi in touched])
        rows = np.concatenate([group_rows[gi] for gi in touched])
        dual_cols[con.name] = dualize_inequality(asm, con, rules, g, coords, A_l[rows], b_l[rows], rows)

    n = len(asm.col_names)
    c = np.zeros(n)
    obj_const = model.objective_const
    for v, a in model.objective.items():
        c[rules.intercept[v]] += a
        w = rules.window[v]
        c[rules.slopes[v]] += a * mean[:w]
    offsets = strategy.offsets
    for t, gcoef in model.objective_unc.items():
        obj_const += gcoef * float(mean[offsets[t - 2] : offsets[t - 1]].sum())

    return CounterpartLP(
        c=c,
        A=asm.matrix(),
        row_lo=np.array(asm.row_lo),
        row_hi=np.array(asm.row_hi),
        col_lo=np.array(asm.col_lo),
        col_hi=np.array(asm.col_hi),
        sense=model.sense,
        obj_const=obj_const,
        integrality=np.array(asm.integrality, dtype=bool),
        col_names=tuple(asm.col_names),
        row_names=tuple(asm.row_names),
        intercept_cols=rules.intercept,
        slope_cols=rules.slopes,
        dual_cols=dual_cols,
        strategy=strategy,
        mean=mean,
        decision_stage={v: d.stage for v, d in model.decisions.items()},
    )


# ---------------------------------------------------------------------------
# policies


@dataclass(frozen=True, eq=False)
class PolicyBundle:
    """Optimal rules: ``x_v(d) = intercept[v] + slope[v] . L(d)`` (slopes of length ``k'``)."""

    strategy: LiftingStrategy
    intercept: Mapping[str, float]
    slope: Mapping[str, np.ndarray]
    stage: Mapping[str, int]
    objective: float

    def names(self) -> list[str]:
        return list(self.intercept)

    def evaluate(self, names: Sequence[str], lifted: np.ndarray) -> np.ndarray:
        """Decision values for lifted paths ``(n, k')``; returns ``(n, len(names))``."""
        icpt = np.array([self.intercept[v] for v in names])
        S = np.stack([self.slope[v] for v in names], axis=1) if names else np.zeros((lifted.shape[1], 0))
        return icpt[None, :] + lifted @ S

    def evaluate_paths(self, names: Sequence[str], paths: np.ndarray) -> np.ndarray:
        return self.evaluate(names, lift_paths(paths, self.strategy))


def extract_policy(lp: CounterpartLP, solution: LPSolution) -> PolicyBundle:
    """Read the rule coefficients of every decision out of a counterpart solution."""
    if not solution.ok:
        raise ValueError(f"cannot extract a policy from a {solution.status.value} solution")
    x = solution.x
    k = lp.strategy.k_prime
    intercept, slope = {}, {}
    for v, j in lp.intercept_cols.items():
        intercept[v] = float(x[j])
        s = np.zeros(k)
        cols = lp.slope_cols[v]
        s[: cols.size] = x[cols]
        slope[v] = s
    return PolicyBundle(lp.strategy, intercept, slope, dict(lp.decision_stage), solution.objective)


def embedding_matrix(coarse: LiftingStrategy, fine: LiftingStrategy) -> np.ndarray:
    """``E`` with ``L_coarse(d) = E @ L_fine(d)``; requires ``fine`` to refine ``coarse``.

    Each fine piece lies inside exactly one coarse piece and the coarse piece
    is the sum of the fine pieces it contains.
    """
    if not fine.refines(coarse):
        raise ValueError(f"{fine.label()} does not refine {coarse.label()}")
    E = np.zeros((coarse.k_prime, fine.k_prime))
    for i, (zc, zf) in enumerate(zip(coarse.breakpoints, fine.breakpoints)):
        # coarse piece index of each fine piece: number of coarse breakpoints <= its left edge
        left = np.concatenate(([-np.inf], zf))
        owner = np.searchsorted(np.asarray(zc), left, side="right")
        E[coarse.offsets[i] + owner, fine.offsets[i] + np.arange(len(zf) + 1)] = 1.0
    return E


def embed_policy(policy: PolicyBundle, fine: LiftingStrategy) -> PolicyBundle:
    """Express ``policy`` in the finer lifting ``fine`` without changing any decision."""
    E = embedding_matrix(policy.strategy, fine)
    slope = {v: s @ E for v, s in policy.slope.items()}
    return dataclasses.replace(policy, strategy=fine, slope=slope)


def constraint_violations(model: AffineStageModel, policy: PolicyBundle, paths: np.ndarray) -> dict[str, float]:
    """Largest violation of each model constraint over the sampled ``paths``."""
    A, G, const, names = model.matrices()
    values = policy.evaluate_paths(list(model.decisions), paths)
    lhs = values @ A.T.toarray() if A.shape[0] * A.shape[1] < 5_000_000 else (A @ values.T).T
    lhs = np.asarray(lhs) + paths @ G.T + const[None, :]
    out = {}
    for i, con in enumerate(model.constraints):
        col = lhs[:, i]
        out[con.name] = float(np.max(np.abs(col))) if con.kind == "==" else float(max(0.0, -col.min()))
    return out
