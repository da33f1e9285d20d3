import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from drlift.counterpart import (
    AffineStageModel,
    build_counterpart,
    constraint_violations,
    embed_policy,
    embedding_matrix,
    extract_policy,
)
from drlift.lp import solve_lp
from drlift.problems import NewsvendorConfig, preset
from drlift.simulate import sample_paths
from drlift.uncertainty import LiftingStrategy, UncertaintySet, lift_paths


def solve(model, uset, strategy, **kw):
    lp = build_counterpart(model, uset, strategy, **kw)
    sol = solve_lp(lp)
    assert sol.ok, sol.status
    return lp, sol


class DenseLP:
    """Minimal variable/row bookkeeping for hand-written counterparts."""

    def __init__(self):
        self.n = 0
        self.eq, self.ub, self.bounds = [], [], []

    def var(self, size=1, lo=None):
        idx = np.arange(self.n, self.n + size)
        self.n += size
        self.bounds += [(lo, None)] * size
        return idx

    def add_eq(self, coefs, rhs):
        self.eq.append((coefs, rhs))

    def add_ge(self, coefs, rhs):
        self.ub.append(({k: -v for k, v in coefs.items()}, -rhs))

    @staticmethod
    def _dense(rows, n):
        M = np.zeros((len(rows), n))
        b = np.zeros(len(rows))
        for i, (coefs, rhs) in enumerate(rows):
            for k, v in coefs.items():
                M[i, k] += v
            b[i] = rhs
        return M, b

    def minimize(self, cost):
        c = np.zeros(self.n)
        for k, v in cost.items():
            c[k] += v
        A_eq, b_eq = self._dense(self.eq, self.n)
        A_ub, b_ub = self._dense(self.ub, self.n)
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=self.bounds, method="highs")
        assert res.status == 0
        return res.fun


def hand_newsvendor_ldr(cfg: NewsvendorConfig) -> float:
    """Linear-rule counterpart of the newsvendor written out directly over the box dual.

    Rules ``v(d) = v0 + v1 . V_t d`` with ``W = [I; -I]``, ``h = [l; -u]``; each
    robust inequality ``a0 + a1 . d >= 0`` becomes ``a0 + h.u >= 0``,
    ``W^T u = a1``, ``u >= 0``; the balance equality matches coefficients.
    """
    T = cfg.horizon
    k = T - 1
    W = np.vstack([np.eye(k), -np.eye(k)])
    h = np.concatenate([np.full(k, cfg.demand_low), np.full(k, -cfg.demand_high)])
    mean = np.full(k, cfg.mean_demand)
    P = DenseLP()

    def rule(stage):
        return P.var(), P.var(k)  # slope entries beyond the window are fixed to zero below

    x = {t: rule(t) for t in range(1, T)}
    I = {t: rule(t) for t in range(2, T + 1)}
    sp_ = {t: rule(t) for t in range(2, T + 1)}
    sm = {t: rule(t) for t in range(2, T + 1)}

    def observe(var, stage):
        for j in range(stage - 1, k):
            P.add_eq({var[1][j]: 1.0}, 0.0)

    for t, v in x.items():
        observe(v, t)
    for group in (I, sp_, sm):
        for t, v in group.items():
            observe(v, t)

    def robust_ge(terms, const=0.0):
        """sum_s sign_s * rule_s(d) + const >= 0 over the box."""
        u = P.var(2 * k, lo=0.0)
        row = {w: s for (v, s) in terms for w in v[0]}
        for i, ui in enumerate(u):
            row[ui] = row.get(ui, 0.0) + h[i]
        P.add_ge(row, -const)
        for j in range(k):
            coefs = {ui: W[i, j] for i, ui in enumerate(u) if W[i, j] != 0}
            for v, s in terms:
                coefs[v[1][j]] = coefs.get(v[1][j], 0.0) - s
            P.add_eq(coefs, 0.0)

    for t in range(2, T + 1):
        # intercepts: I0_t - I0_{t-1} - x0_{t-1} = 0 (I_1 is the constant initial stock)
        coefs = {I[t][0][0]: 1.0, x[t - 1][0][0]: -1.0}
        if t > 2:
            coefs[I[t - 1][0][0]] = -1.0
        P.add_eq(coefs, cfg.initial_inventory if t == 2 else 0.0)
        # slopes: I1_t - I1_{t-1} - X1_{t-1} + e_{t} = 0
        for j in range(k):
            coefs = {I[t][1][j]: 1.0, x[t - 1][1][j]: -1.0}
            if t > 2:
                coefs[I[t - 1][1][j]] = -1.0
            P.add_eq(coefs, -1.0 if j == t - 2 else 0.0)
        robust_ge([(sp_[t], 1.0), (I[t], -1.0)])
        robust_ge([(sm[t], 1.0), (I[t], 1.0)])
        robust_ge([(sp_[t], 1.0)])
        robust_ge([(sm[t], 1.0)])
    for t in range(1, T):
        robust_ge([(x[t], 1.0)])
        robust_ge([(x[t], -1.0)], const=cfg.order_limit)

    cost = {}
    for t in range(1, T):
        cost[x[t][0][0]] = cfg.C[t - 1]
        for j in range(k):
            cost[x[t][1][j]] = cfg.C[t - 1] * mean[j]
    for t in range(2, T + 1):
        for group, price in ((sp_, cfg.H[t - 2]), (sm, cfg.B[t - 2])):
            cost[group[t][0][0]] = price
            for j in range(k):
                cost[group[t][1][j]] = price * mean[j]
    return P.minimize(cost)


@pytest.mark.parametrize("horizon", [3, 4, 6])
def test_newsvendor_ldr_matches_hand_written_counterpart(horizon):
    cfg = NewsvendorConfig(horizon=horizon)
    _, sol = solve(cfg.build(), cfg.uncertainty_set(), LiftingStrategy.ldr(horizon))
    assert sol.objective == pytest.approx(hand_newsvendor_ldr(cfg), abs=1e-7)


def test_static_robust_inequality():
    m = AffineStageModel(3)
    m.add_decision("x", 1)
    m.add_constraint("cover", {"x.1": 1.0}, unc={2: -1.0, 3: -1.0})
    m.set_objective({"x.1": 1.0})
    uset = UncertaintySet.uniform_box(3, 0.0, 10.0)
    for s in (LiftingStrategy.ldr(3), LiftingStrategy.uniform(3, [4.0])):
        _, sol = solve(m, uset, s)
        assert sol.objective == pytest.approx(20.0)


def test_adaptive_rule_tracks_uncertainty_in_expectation():
    m = AffineStageModel(3)
    m.add_decision("y", 3)
    m.add_constraint("cover", {"y.3": 1.0}, unc={2: -1.0, 3: -1.0})
    m.set_objective({"y.3": 1.0})
    lp, sol = solve(m, UncertaintySet.uniform_box(3, 0.0, 10.0), LiftingStrategy.ldr(3))
    assert sol.objective == pytest.approx(10.0)
    pol = extract_policy(lp, sol)
    np.testing.assert_allclose(pol.slope["y.3"], [1.0, 1.0], atol=1e-9)


def test_non_anticipativity_blocks_future_information():
    # y revealed at stage 2 must cover d3 without seeing it
    m = AffineStageModel(3)
    m.add_decision("y", 2)
    m.add_constraint("cover", {"y.2": 1.0}, unc={2: -1.0, 3: -1.0})
    m.set_objective({"y.2": 1.0})
    lp, sol = solve(m, UncertaintySet.uniform_box(3, 0.0, 10.0), LiftingStrategy.ldr(3))
    assert sol.objective == pytest.approx(15.0)
    assert lp.slope_cols["y.2"].size == 1


def test_equality_matches_coefficients():
    m = AffineStageModel(3)
    m.add_decision("y", 3)
    m.add_constraint("track", {"y.3": 1.0}, const=-2.0, unc={3: -3.0}, kind="==")
    m.set_objective({"y.3": 1.0})
    lp, sol = solve(m, UncertaintySet.uniform_box(3, 0.0, 1.0), LiftingStrategy.uniform(3, [0.5]))
    pol = extract_policy(lp, sol)
    assert pol.intercept["y.3"] == pytest.approx(2.0)
    np.testing.assert_allclose(pol.slope["y.3"], [0, 0, 3, 3], atol=1e-9)
    assert sol.objective == pytest.approx(3.5)


def test_le_constraints_are_negated():
    m = AffineStageModel(2, sense="max")
    m.add_decision("x", 1)
    m.add_constraint("cap", {"x.1": 1.0}, const=-4.0, unc={2: -1.0}, kind="<=")
    m.set_objective({"x.1": 1.0})
    _, sol = solve(m, UncertaintySet.uniform_box(2, 0.0, 1.0), LiftingStrategy.ldr(2))
    assert sol.objective == pytest.approx(4.0)


@pytest.mark.parametrize(
    "name,strategy",
    [("newsvendor-T4", "PLDR-1@5"), ("newsvendor-T4", "LDR"), ("transport-3x2-T6", "LDR"), ("transport-3x2-T6", "PLDR-1[1.5]")],
)
def test_pruning_preserves_optimum(name, strategy):
    from drlift.experiments import parse_strategy

    cfg = preset(name)
    s = parse_strategy(strategy, cfg)
    a = solve_lp(build_counterpart(cfg.build(), cfg.uncertainty_set(), s, prune=True))
    b = solve_lp(build_counterpart(cfg.build(), cfg.uncertainty_set(), s, prune=False))
    assert a.objective == pytest.approx(b.objective, abs=1e-6)


def test_pruning_with_coupled_budget_set():
    # d2 + d3 <= 12 couples the first two stages
    W = np.vstack([np.eye(3), -np.eye(3), [[-1.0, -1.0, 0.0]]])
    h = np.concatenate([np.zeros(3), -np.full(3, 10.0), [-12.0]])
    uset = UncertaintySet(W, h, np.zeros(3), np.full(3, 10.0))
    cfg = NewsvendorConfig(horizon=4)
    model = cfg.build()
    for s in (LiftingStrategy.ldr(4), LiftingStrategy.uniform(4, [5.0])):
        a = solve_lp(build_counterpart(model, uset, s, prune=True))
        b = solve_lp(build_counterpart(model, uset, s, prune=False))
        assert a.objective == pytest.approx(b.objective, abs=1e-6)


def test_robust_feasibility_on_samples():
    cfg = preset("newsvendor-T4")
    model = cfg.build()
    paths = sample_paths(cfg.uncertainty_set().lower, cfg.uncertainty_set().upper, 10_000, 1)
    for s in (LiftingStrategy.ldr(4), LiftingStrategy.uniform(4, [5.0]), LiftingStrategy.uniform(4, [2.0, 8.0])):
        lp, sol = solve(model, cfg.uncertainty_set(), s)
        viol = constraint_violations(model, extract_policy(lp, sol), paths)
        assert max(viol.values()) <= 1e-6


def test_feasibility_transfers_to_finer_lifting():
    cfg = preset("newsvendor-T4")
    model, uset = cfg.build(), cfg.uncertainty_set()
    coarse = LiftingStrategy.uniform(4, [5.0])
    fine = LiftingStrategy.uniform(4, [2.5, 5.0, 8.0])
    lp_c, sol_c = solve(model, uset, coarse)
    frozen = embed_policy(extract_policy(lp_c, sol_c), fine)
    lp_f = build_counterpart(model, uset, fine)
    cols, vals = [], []
    for v, j in lp_f.intercept_cols.items():
        cols.append(j)
        vals.append(frozen.intercept[v])
        cols.extend(lp_f.slope_cols[v].tolist())
        vals.extend(frozen.slope[v][: lp_f.slope_cols[v].size].tolist())
    fixed = solve_lp(lp_f.with_bounds(cols, vals, vals))
    assert fixed.ok
    assert fixed.objective == pytest.approx(sol_c.objective, abs=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.5, 9.5), min_size=1, max_size=3, unique=True), st.floats(0.5, 9.5))
def test_refinement_never_worsens_newsvendor(z, extra):
    z = sorted(z)
    if any(b - a < 0.05 for a, b in zip(z, z[1:])) or min(abs(extra - v) for v in z) < 0.05:
        return
    cfg = preset("newsvendor-T4")
    model, uset = cfg.build(), cfg.uncertainty_set()
    base = solve_lp(build_counterpart(model, uset, LiftingStrategy.uniform(4, z))).objective
    finer = solve_lp(build_counterpart(model, uset, LiftingStrategy.uniform(4, sorted(z + [extra])))).objective
    assert finer <= base + 1e-6


def test_embedding_reproduces_decisions():
    coarse = LiftingStrategy(((0.5,), (), (0.35, 0.65)))
    fine = LiftingStrategy(((0.2, 0.5, 0.8), (0.5,), (0.2, 0.35, 0.5, 0.65)))
    E = embedding_matrix(coarse, fine)
    paths = np.random.default_rng(0).random((1000, 3))
    np.testing.assert_allclose(lift_paths(paths, coarse), lift_paths(paths, fine) @ E.T, atol=1e-12)
    with pytest.raises(ValueError):
        embedding_matrix(fine, coarse)


def test_horizon_mismatch_rejected():
    cfg = preset("newsvendor-T4")
    with pytest.raises(ValueError):
        build_counterpart(cfg.build(), cfg.uncertainty_set(), LiftingStrategy.ldr(5))


def test_unconstrained_priced_decision_rejected():
    m = AffineStageModel(2)
    m.add_decision("x", 1)
    m.set_objective({"x.1": -1.0})
    with pytest.raises(ValueError, match="unconstrained"):
        build_counterpart(m, UncertaintySet.uniform_box(2, 0, 1), LiftingStrategy.ldr(2))


def test_binary_must_be_static():
    m = AffineStageModel(3)
    with pytest.raises(ValueError):
        m.add_decision("b", 2, binary=True)


def test_duplicate_names_rejected():
    m = AffineStageModel(3)
    m.add_decision("x", 1)
    with pytest.raises(ValueError):
        m.add_decision("x", 1)
    m.add_constraint("c", {"x.1": 1.0})
    with pytest.raises(ValueError):
        m.add_constraint("c", {"x.1": 1.0})


def test_model_objective_not_below_perfect_information():
    """The rule-restricted optimum can never beat the wait-and-see expectation."""
    cfg = preset("newsvendor-T4")
    _, sol = solve(cfg.build(), cfg.uncertainty_set(), LiftingStrategy.uniform(4, [5.0]))
    paths = sample_paths([0] * 3, [10] * 3, 300, 4)
    costs = []
    for d in paths:
        # x1..x3, I2..I4, s+2..4, s-2..4
        c = np.concatenate([cfg.C, np.zeros(3), cfg.H, cfg.B])
        A_eq = np.zeros((3, 12))
        b_eq = np.zeros(3)
        for t in range(3):
            A_eq[t, 3 + t] = 1.0
            A_eq[t, t] = -1.0
            if t:
                A_eq[t, 3 + t - 1] = -1.0
            b_eq[t] = -d[t] + (cfg.initial_inventory if t == 0 else 0.0)
        A_ub = np.zeros((6, 12))
        for t in range(3):
            A_ub[t, 3 + t], A_ub[t, 6 + t] = 1.0, -1.0
            A_ub[3 + t, 3 + t], A_ub[3 + t, 9 + t] = -1.0, -1.0
        bounds = [(0, cfg.order_limit)] * 3 + [(None, None)] * 3 + [(0, None)] * 6
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(6), A_eq=A_eq, b_eq=b_eq, bounds=bounds)
        costs.append(res.fun)
    costs = np.array(costs)
    assert costs.mean() - 3 * costs.std() / np.sqrt(costs.size) <= sol.objective
