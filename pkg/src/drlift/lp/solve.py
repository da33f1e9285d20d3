"""Solver dispatch, binary handling and the external-solver bridge."""

from __future__ import annotations

import dataclasses
import heapq
import itertools
import logging
import os
import subprocess
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .highs import solve_highs, solve_highs_milp
from .program import LinearProgram, LPSolution, Status, write_mps
from .simplex import solve_simplex

log = logging.getLogger(__name__)

# dense standard-form cells above which "auto" hands the LP to HiGHS
DENSE_LIMIT = 3_000_000
ENUMERATION_LIMIT = 12
MAX_BINARIES_WITHOUT_BNB = 20


def _choose(lp: LinearProgram, solver: str) -> str:
    if solver in ("builtin", "auto"):
        cells = (lp.n_rows + lp.n_cols) * (lp.n_cols + np.isfinite(lp.row_lo).sum() + np.isfinite(lp.row_hi).sum())
        return "simplex" if cells <= DENSE_LIMIT else "highs"
    return solver


def solve_lp(lp: LinearProgram, solver: str = "auto") -> LPSolution:
    """Solve the continuous relaxation of ``lp``.

    ``solver`` is ``"simplex"`` (dense revised simplex), ``"highs"``,
    ``"auto"``/``"builtin"`` (simplex for small problems, HiGHS otherwise) or
    ``"external:<path>"``.
    """
    kind = _choose(lp, solver)
    if kind == "simplex":
        return solve_simplex(lp.relaxed())
    if kind == "highs":
        return solve_highs(lp.relaxed())
    if kind.startswith("external:"):
        return solve_external(lp.relaxed(), kind.split(":", 1)[1])
    raise ValueError(f"unknown solver {solver!r}")


def _better(a: float, b: float, sense: str) -> bool:
    return a < b if sense == "min" else a > b


def solve_with_binaries(
    lp: LinearProgram,
    binaries: Sequence[int] | None = None,
    solver: str = "auto",
    method: str = "auto",
) -> LPSolution:
    """Best solution over 0/1 assignments of ``binaries``.

    ``method="auto"`` enumerates every assignment for up to 12 binaries and
    runs best-first branch-and-bound on LP relaxations above that;
    ``"enumerate"``, ``"bnb"`` and ``"highs-milp"`` force a method.
    """
    binaries = list(lp.binaries if binaries is None else binaries)
    if not binaries:
        return solve_lp(lp, solver)
    if method == "auto":
        method = "enumerate" if len(binaries) <= ENUMERATION_LIMIT else "bnb"
    if method == "enumerate":
        if len(binaries) > MAX_BINARIES_WITHOUT_BNB:
            raise ValueError(f"{len(binaries)} binaries is too many to enumerate; use method='bnb'")
        return _enumerate(lp, binaries, solver)
    if method == "bnb":
        return _branch_and_bound(lp, binaries, solver)
    if method == "highs-milp":
        flags = np.zeros(lp.n_cols, dtype=bool)
        flags[binaries] = True
        sol = solve_highs_milp(dataclasses.replace(lp, integrality=flags))
        if sol.ok:
            sol.binaries = {j: int(round(sol.x[j])) for j in binaries}
        return sol
    raise ValueError(f"unknown method {method!r}")


def _enumerate(lp: LinearProgram, binaries: list[int], solver: str) -> LPSolution:
    best: LPSolution | None = None
    iterations = 0
    for bits in itertools.product((0.0, 1.0), repeat=len(binaries)):
        sol = solve_lp(lp.with_bounds(binaries, bits, bits), solver)
        iterations += sol.iterations
        if sol.ok and (best is None or _better(sol.objective, best.objective, lp.sense)):
            best = sol
            best.binaries = {j: int(v) for j, v in zip(binaries, bits)}
    if best is None:
        return LPSolution(Status.INFEASIBLE, iterations=iterations, solver="enumerate")
    best.iterations = iterations
    return best


def _branch_and_bound(lp: LinearProgram, binaries: list[int], solver: str, tol: float = 1e-9) -> LPSolution:
    sign = 1.0 if lp.sense == "min" else -1.0
    lo0 = lp.col_lo.copy()
    hi0 = lp.col_hi.copy()
    lo0[binaries] = np.maximum(lo0[binaries], 0.0)
    hi0[binaries] = np.minimum(hi0[binaries], 1.0)
    incumbent: LPSolution | None = None
    iterations = 0
    counter = itertools.count()
    heap: list = []

    def relax(lo, hi):
        nonlocal iterations
        sol = solve_lp(lp.with_bounds(slice(None), lo, hi), solver)
        iterations += sol.iterations
        return sol

    root = relax(lo0, hi0)
    if root.status is Status.UNBOUNDED:
        return root
    if root.ok:
        heapq.heappush(heap, (sign * root.objective, next(counter), lo0, hi0, root))
    while heap:
        key, _, lo, hi, sol = heapq.heappop(heap)
        if incumbent is not None and key >= sign * incumbent.objective - tol * max(1.0, abs(incumbent.objective)):
            continue
        vals = sol.x[binaries]
        frac = np.abs(vals - np.round(vals))
        k = int(np.argmax(frac))
        if frac[k] <= 1e-7:
            sol.binaries = {j: int(round(v)) for j, v in zip(binaries, vals)}
            incumbent = sol
            continue
        j = binaries[k]
        for value in (np.floor(vals[k]), np.ceil(vals[k])):
            lo_c, hi_c = lo.copy(), hi.copy()
            lo_c[j] = hi_c[j] = value
            child = relax(lo_c, hi_c)
            if child.ok:
                heapq.heappush(heap, (sign * child.objective, next(counter), lo_c, hi_c, child))
    if incumbent is None:
        return LPSolution(Status.INFEASIBLE, iterations=iterations, solver="bnb")
    # polish: re-solve with binaries fixed so the reported point is a vertex
    fixed = [incumbent.binaries[j] for j in binaries]
    final = solve_lp(lp.with_bounds(binaries, fixed, fixed), solver)
    final.binaries = incumbent.binaries
    final.iterations = iterations + final.iterations
    return final


def solve_external(lp: LinearProgram, command: str) -> LPSolution:
    """Delegate to ``<command> <model.mps> <solution.txt>``.

    The solution file must start with ``status <optimal|infeasible|unbounded>``
    and ``objective <value>`` lines followed by ``<column name> <value>``
    lines; missing columns are read as zero.
    """
    with tempfile.TemporaryDirectory() as tmp:
        mps = write_mps(lp, Path(tmp) / "model.mps")
        out = Path(tmp) / "solution.txt"
        subprocess.run([*command.split(), str(mps), str(out)], check=True, env=os.environ.copy())
        lines = out.read_text().split("\n")
    header = dict(line.split(None, 1) for line in lines[:2])
    status = Status(header["status"].strip())
    if status is not Status.OPTIMAL:
        return LPSolution(status, solver="external")
    index = {name: j for j, name in enumerate(lp.col_names)}
    x = np.zeros(lp.n_cols)
    for line in lines[2:]:
        if line.strip():
            name, val = line.split()
            x[index[name]] = float(val)
    obj = float(header["objective"])
    return LPSolution(Status.OPTIMAL, lp.objective_value(x), x, 0, obj, solver="external")
