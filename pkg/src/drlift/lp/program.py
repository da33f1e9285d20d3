"""Solver-agnostic LP container, solution record and MPS text exchange."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

INF = np.inf


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class IterationLimitError(RuntimeError):
    """Raised when a solver exceeds its iteration cap; carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """``opt c^T x + obj_const`` s.t. ``row_lo <= A x <= row_hi``, ``col_lo <= x <= col_hi``.

    ``sense`` is ``"min"`` or ``"max"``.  Columns flagged in ``integrality``
    are binaries (their bounds must lie in ``[0, 1]``).
    """

    c: np.ndarray
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    col_lo: np.ndarray
    col_hi: np.ndarray
    sense: str = "min"
    obj_const: float = 0.0
    integrality: np.ndarray | None = None
    col_names: tuple[str, ...] = ()
    row_names: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.c)
        A = sp.csr_matrix(self.A, dtype=float)
        if A.shape[1] != n:
            raise ValueError(f"A has {A.shape[1]} columns, c has {n}")
        m = A.shape[0]
        arrays = {
            "c": (self.c, n),
            "row_lo": (self.row_lo, m),
            "row_hi": (self.row_hi, m),
            "col_lo": (self.col_lo, n),
            "col_hi": (self.col_hi, n),
        }
        for name, (value, size) in arrays.items():
            arr = np.array(value, dtype=float)
            if arr.shape != (size,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({size},)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        integ = np.zeros(n, dtype=bool) if self.integrality is None else np.array(self.integrality, dtype=bool)
        integ.setflags(write=False)
        object.__setattr__(self, "integrality", integ)
        object.__setattr__(self, "A", A)
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")
        if not self.col_names:
            object.__setattr__(self, "col_names", tuple(f"x{j}" for j in range(n)))
        if not self.row_names:
            object.__setattr__(self, "row_names", tuple(f"r{i}" for i in range(m)))

    @property
    def n_cols(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def binaries(self) -> np.ndarray:
        return np.flatnonzero(self.integrality)

    def with_bounds(self, cols, lo, hi) -> "LinearProgram":
        """Copy with the bounds of ``cols`` replaced (used to fix or branch variables)."""
        col_lo = self.col_lo.copy()
        col_hi = self.col_hi.copy()
        col_lo[cols] = lo
        col_hi[cols] = hi
        return dataclasses.replace(self, col_lo=col_lo, col_hi=col_hi)

    def relaxed(self) -> "LinearProgram":
        return dataclasses.replace(self, integrality=np.zeros(self.n_cols, dtype=bool))

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.obj_const)

    def residual(self, x: np.ndarray) -> float:
        """Largest bound or row violation of ``x``."""
        ax = self.A @ x
        viol = [
            np.max(self.row_lo - ax, initial=0.0),
            np.max(ax - self.row_hi, initial=0.0),
            np.max(self.col_lo - x, initial=0.0),
            np.max(x - self.col_hi, initial=0.0),
        ]
        return float(max(viol))


@dataclass
class LPSolution:
    status: Status
    objective: float = np.nan
    x: np.ndarray | None = None
    iterations: int = 0
    dual_objective: float = np.nan
    solver: str = ""
    binaries: dict[int, int] = field(default_factory=dict)

    @property
    def duality_gap(self) -> float:
        return abs(self.objective - self.dual_objective)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    def value(self, col: int) -> float:
        return float(self.x[col])


# ---------------------------------------------------------------------------
# free-format MPS

def _fmt(v: float) -> str:
    return repr(float(v))


def write_mps(lp: LinearProgram, path: str | Path, name: str = "DRLIFT") -> Path:
    """Write ``lp`` as free-format MPS.

    Row bounds are mapped to N/E/G/L rows plus RANGES; a ``max`` objective is
    written with an ``OBJSENSE MAX`` section.  The objective constant goes in
    the RHS of the objective row with flipped sign, as MPS readers expect.
    """
    path = Path(path)
    A = lp.A.tocsc()
    lines = [f"NAME {name}"]
    if lp.sense == "max":
        lines += ["OBJSENSE", "    MAX"]
    lines.append("ROWS")
    lines.append(" N obj")
    row_types = []
    ranges = {}
    rhs = {}
    for i, (lo, hi, rname) in enumerate(zip(lp.row_lo, lp.row_hi, lp.row_names)):
        if lo == hi:
            row_types.append("E")
            rhs[rname] = lo
        elif np.isfinite(lo) and np.isfinite(hi):
            row_types.append("G")
            rhs[rname] = lo
            ranges[rname] = hi - lo
        elif np.isfinite(lo):
            row_types.append("G")
            rhs[rname] = lo
        elif np.isfinite(hi):
            row_types.append("L")
            rhs[rname] = hi
        else:
            row_types.append("N")
        lines.append(f" {row_types[-1]} {rname}")
    lines.append("COLUMNS")
    in_int = False
    for j, cname in enumerate(lp.col_names):
        if lp.integrality[j] and not in_int:
            lines.append(" MARKER MARKER INTORG")
            in_int = True
        elif not lp.integrality[j] and in_int:
            lines.append(" MARKER MARKER INTEND")
            in_int = False
        if lp.c[j] != 0.0:
            lines.append(f" {cname} obj {_fmt(lp.c[j])}")
        start, end = A.indptr[j], A.indptr[j + 1]
        for i, v in zip(A.indices[start:end], A.data[start:end]):
            lines.append(f" {cname} {lp.row_names[i]} {_fmt(v)}")
    if in_int:
        lines.append(" MARKER MARKER INTEND")
    lines.append("RHS")
    if lp.obj_const != 0.0:
        lines.append(f" rhs obj {_fmt(-lp.obj_const)}")
    for rname, v in rhs.items():
        if v != 0.0:
            lines.append(f" rhs {rname} {_fmt(v)}")
    if ranges:
        lines.append("RANGES")
        for rname, v in ranges.items():
            lines.append(f" rng {rname} {_fmt(v)}")
    lines.append("BOUNDS")
    for j, cname in enumerate(lp.col_names):
        lo, hi = lp.col_lo[j], lp.col_hi[j]
        if lp.integrality[j] and lo == 0.0 and hi == 1.0:
            lines.append(f" BV bnd {cname}")
        elif lo == hi:
            lines.append(f" FX bnd {cname} {_fmt(lo)}")
        elif lo == -INF and hi == INF:
            lines.append(f" FR bnd {cname}")
        else:
            if lo == -INF:
                lines.append(f" MI bnd {cname}")
            elif lo != 0.0:
                lines.append(f" LO bnd {cname} {_fmt(lo)}")
            if hi != INF:
                lines.append(f" UP bnd {cname} {_fmt(hi)}")
    lines.append("ENDATA")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_mps(path: str | Path) -> LinearProgram:
    """Read the free-format MPS subset produced by :func:`write_mps`."""
    section = None
    sense = "min"
    obj_row = None
    row_index: dict[str, int] = {}
    row_types: list[str] = []
    row_names: list[str] = []
    col_index: dict[str, int] = {}
    col_names: list[str] = []
    integer: list[bool] = []
    entries: list[tuple[int, int, float]] = []
    cost: dict[int, float] = {}
    rhs: dict[int, float] = {}
    rng: dict[int, float] = {}
    bounds: dict[int, list[float]] = {}
    obj_const = 0.0
    in_int = False

    def col(name):
        if name not in col_index:
            col_index[name] = len(col_names)
            col_names.append(name)
            integer.append(in_int)
        return col_index[name]

    for raw in Path(path).read_text().splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            section = raw.split()[0]
            continue
        tok = raw.split()
        if section == "OBJSENSE":
            sense = "max" if tok[0].upper() == "MAX" else "min"
        elif section == "ROWS":
            kind, name = tok
            if kind == "N" and obj_row is None:
                obj_row = name
                continue
            row_index[name] = len(row_names)
            row_names.append(name)
            row_types.append(kind)
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1] == "MARKER":
                in_int = tok[2] == "INTORG"
                continue
            j = col(tok[0])
            for rname, val in zip(tok[1::2], tok[2::2]):
                if rname == obj_row:
                    cost[j] = float(val)
                else:
                    entries.append((row_index[rname], j, float(val)))
        elif section == "RHS":
            for rname, val in zip(tok[1::2], tok[2::2]):
                if rname == obj_row:
                    obj_const = -float(val)
                else:
                    rhs[row_index[rname]] = float(val)
        elif section == "RANGES":
            for rname, val in zip(tok[1::2], tok[2::2]):
                rng[row_index[rname]] = float(val)
        elif section == "BOUNDS":
            kind, _, cname = tok[:3]
            j = col(cname)
            b = bounds.setdefault(j, [0.0, INF])
            v = float(tok[3]) if len(tok) > 3 else None
            if kind == "LO":
                b[0] = v
            elif kind == "UP":
                b[1] = v
            elif kind == "FX":
                b[0] = b[1] = v
            elif kind == "FR":
                b[0], b[1] = -INF, INF
            elif kind == "MI":
                b[0] = -INF
            elif kind == "PL":
                b[1] = INF
            elif kind == "BV":
                b[0], b[1] = 0.0, 1.0
                integer[j] = True
    m, n = len(row_names), len(col_names)
    row_lo = np.full(m, -INF)
    row_hi = np.full(m, INF)
    for i, kind in enumerate(row_types):
        r = rhs.get(i, 0.0)
        if kind == "E":
            row_lo[i] = row_hi[i] = r
        elif kind == "G":
            row_lo[i] = r
            if i in rng:
                row_hi[i] = r + abs(rng[i])
        elif kind == "L":
            row_hi[i] = r
            if i in rng:
                row_lo[i] = r - abs(rng[i])
    col_lo = np.zeros(n)
    col_hi = np.full(n, INF)
    for j, (lo, hi) in bounds.items():
        col_lo[j], col_hi[j] = lo, hi
    c = np.zeros(n)
    for j, v in cost.items():
        c[j] = v
    if entries:
        r_idx, c_idx, vals = zip(*entries)
    else:
        r_idx, c_idx, vals = (), (), ()
    A = sp.csr_matrix((vals, (r_idx, c_idx)), shape=(m, n))
    return LinearProgram(
        c=c,
        A=A,
        row_lo=row_lo,
        row_hi=row_hi,
        col_lo=col_lo,
        col_hi=col_hi,
        sense=sense,
        obj_const=obj_const,
        integrality=np.array(integer, dtype=bool),
        col_names=tuple(col_names),
        row_names=tuple(row_names),
    )
