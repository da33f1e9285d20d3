"""Uncertainty sets, axial-segmentation liftings and their polyhedral descriptions.

Stages are numbered from 1 with the first uncertain parameter revealed in
stage 2, so a horizon of ``T`` stages carries ``T - 1`` uncertain coordinates.
Public functions take 1-based stage numbers; arrays are stored 0-based over
the uncertain stages (``stage - 2``).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "UncertaintySet",
    "LiftingStrategy",
    "LiftedSetDescription",
    "lift_point",
    "lift_paths",
    "retract_point",
    "stage_hull",
    "outer_approximation",
    "observation_matrix",
    "unit_selector",
    "lifted_mean",
    "parse_hdr",
    "format_hdr",
]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class UncertaintySet:
    """Polytope ``{d : W d >= h}`` together with per-stage bounds ``[l_t, u_t]``."""

    W: np.ndarray
    h: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        W = _frozen(self.W)
        h = _frozen(self.h)
        lower = _frozen(self.lower)
        upper = _frozen(self.upper)
        if W.ndim != 2 or h.ndim != 1 or W.shape[0] != h.shape[0]:
            raise ValueError(f"W {W.shape} and h {h.shape} are inconsistent")
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower and upper bounds must be 1-d arrays of equal length")
        if W.shape[1] != lower.shape[0]:
            raise ValueError(
                f"W has {W.shape[1]} columns but bounds cover {lower.shape[0]} stages"
            )
        for i, (lo, up) in enumerate(zip(lower, upper)):
            if not lo < up:
                raise ValueError(f"stage {i + 2}: lower bound {lo} must be < upper bound {up}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "UncertaintySet":
        """Hyper-rectangle; rows are ordered ``d_t >= l_t`` then ``-d_t >= -u_t`` per stage."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n = lower.shape[0]
        W = np.zeros((2 * n, n))
        h = np.zeros(2 * n)
        for i in range(n):
            W[2 * i, i] = 1.0
            W[2 * i + 1, i] = -1.0
            h[2 * i] = lower[i]
            h[2 * i + 1] = -upper[i]
        return cls(W, h, lower, upper)

    @classmethod
    def uniform_box(cls, horizon: int, low: float, high: float) -> "UncertaintySet":
        n = horizon - 1
        return cls.box(np.full(n, low), np.full(n, high))

    @property
    def horizon(self) -> int:
        return self.lower.shape[0] + 1

    @property
    def n_uncertain(self) -> int:
        return self.lower.shape[0]

    @property
    def is_box(self) -> bool:
        """True when every row of ``W`` is a single-coordinate bound matching ``[l, u]``."""
        for row, rhs in zip(self.W, self.h):
            nz = np.flatnonzero(row)
            if nz.size != 1:
                return False
            i = nz[0]
            bound = rhs / row[i]
            target = self.lower[i] if row[i] > 0 else self.upper[i]
            if not np.isclose(bound, target):
                return False
        return True

    def contains(self, d: np.ndarray, tol: float = 1e-9) -> bool:
        d = np.asarray(d, dtype=float)
        return bool(np.all(self.W @ d >= self.h - tol))


@dataclass(frozen=True)
class LiftingStrategy:
    """Per-stage ordered breakpoints; stage ``t`` is split into ``r_t`` pieces.

    ``breakpoints[i]`` belongs to stage ``i + 2``.  An empty tuple means the
    stage is not lifted (``r_t = 1``).
    """

    breakpoints: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        bps = tuple(tuple(float(z) for z in stage) for stage in self.breakpoints)
        for i, stage in enumerate(bps):
            if any(b <= a for a, b in zip(stage, stage[1:])):
                raise ValueError(f"stage {i + 2}: breakpoints {stage} are not strictly increasing")
        object.__setattr__(self, "breakpoints", bps)

    # construction helpers -------------------------------------------------
    @classmethod
    def ldr(cls, horizon: int) -> "LiftingStrategy":
        return cls(tuple(() for _ in range(horizon - 1)))

    @classmethod
    def uniform(cls, horizon: int, breakpoints: Sequence[float]) -> "LiftingStrategy":
        """PLDR with the same breakpoints in every stage."""
        return cls(tuple(tuple(breakpoints) for _ in range(horizon - 1)))

    @classmethod
    def hybrid(
        cls,
        counts: Sequence[int],
        assignment: Mapping[int, Sequence[float]] | Sequence[float],
    ) -> "LiftingStrategy":
        """HDR from per-stage breakpoint counts.

        ``assignment`` is either a mapping from count to the breakpoint set used
        for every stage with that count, or a base set whose first ``k`` elements
        serve stages with ``k`` breakpoints.
        """
        stages = []
        for k in counts:
            if k == 0:
                stages.append(())
            elif isinstance(assignment, Mapping):
                z = tuple(assignment[k])
                if len(z) != k:
                    raise ValueError(f"assignment for {k} breakpoints has {len(z)} values")
                stages.append(z)
            else:
                base = tuple(assignment)
                if k > len(base):
                    raise ValueError(f"base set has only {len(base)} breakpoints, {k} requested")
                stages.append(base[:k])
        return cls(tuple(stages))

    @classmethod
    def from_json(cls, text: str) -> "LiftingStrategy":
        data = json.loads(text)
        return cls(tuple(tuple(s.get("breakpoints", ())) for s in data["stages"]))

    def to_json(self) -> str:
        return json.dumps({"stages": [{"breakpoints": list(z)} for z in self.breakpoints]})

    # derived quantities ----------------------------------------------------
    @property
    def horizon(self) -> int:
        return len(self.breakpoints) + 1

    @property
    def pieces(self) -> tuple[int, ...]:
        """``r_t`` for stages 2..T."""
        return tuple(len(z) + 1 for z in self.breakpoints)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(z) for z in self.breakpoints)

    @property
    def k_prime(self) -> int:
        return sum(self.pieces)

    @property
    def offsets(self) -> np.ndarray:
        """``offsets[i]`` is the first lifted index of stage ``i + 2``; last entry is ``k'``."""
        return np.concatenate(([0], np.cumsum(self.pieces))).astype(int)

    def window(self, stage: int) -> int:
        """Number of lifted coordinates observable at ``stage`` (``k_t``; 0 for stage 1)."""
        if not 1 <= stage <= self.horizon:
            raise ValueError(f"stage {stage} outside 1..{self.horizon}")
        return int(self.offsets[stage - 1])

    def stage_of_coordinate(self) -> np.ndarray:
        """1-based stage owning each lifted coordinate."""
        return np.repeat(np.arange(2, self.horizon + 1), self.pieces)

    @property
    def is_lifted(self) -> bool:
        return any(self.breakpoints)

    @property
    def is_non_increasing(self) -> bool:
        r = self.pieces
        return all(a >= b for a, b in zip(r, r[1:]))

    @property
    def is_non_decreasing(self) -> bool:
        r = self.pieces
        return all(a <= b for a, b in zip(r, r[1:]))

    def validate(self, lower: Sequence[float], upper: Sequence[float]) -> None:
        """Reject breakpoints that are not strictly inside their stage bounds."""
        if len(lower) != len(self.breakpoints):
            raise ValueError(
                f"strategy covers {len(self.breakpoints)} uncertain stages, bounds cover {len(lower)}"
            )
        for i, (z, lo, up) in enumerate(zip(self.breakpoints, lower, upper)):
            if z and not (lo < z[0] and z[-1] < up):
                raise ValueError(
                    f"stage {i + 2}: breakpoints {z} must lie strictly inside ({lo}, {up})"
                )

    def refines(self, other: "LiftingStrategy") -> bool:
        """True when every breakpoint of ``other`` is also a breakpoint here (same stage)."""
        if other.horizon != self.horizon:
            return False
        return all(set(o) <= set(s) for s, o in zip(self.breakpoints, other.breakpoints))

    def label(self) -> str:
        counts = set(self.counts)
        if counts == {0}:
            return "LDR"
        if len(set(self.breakpoints)) == 1:
            z = self.breakpoints[0]
            return f"PLDR-{len(z)}[{','.join(f'{v:g}' for v in z)}]"
        return f"HDR<{format_hdr(self.counts)}>"


_HDR_TOKEN = re.compile(r"^\s*(\d+)\s*\^\s*(\d+)\s*$")


def parse_hdr(text: str) -> list[int]:
    """Expand ``"3^2,2^6,1^0,0^1"`` into per-stage breakpoint counts."""
    text = text.strip()
    if text.upper().startswith("HDR"):
        text = text[3:]
    text = text.strip("<> ")
    counts: list[int] = []
    for token in text.split(","):
        m = _HDR_TOKEN.match(token)
        if m is None:
            raise ValueError(f"cannot parse HDR token {token!r} in {text!r}")
        counts.extend([int(m.group(1))] * int(m.group(2)))
    return counts


def format_hdr(counts: Sequence[int]) -> str:
    """Run-length encode per-stage counts, e.g. ``[3, 3, 2] -> "3^2,2^1"``."""
    out = []
    for k in counts:
        if out and out[-1][0] == k:
            out[-1][1] += 1
        else:
            out.append([k, 1])
    return ",".join(f"{k}^{n}" for k, n in out)


# ---------------------------------------------------------------------------
# lifting and retraction


def _lift_stage(d: np.ndarray, z: Sequence[float]) -> np.ndarray:
    """Lift one stage for an array of realizations; returns shape ``d.shape + (r,)``."""
    if not z:
        return d[..., None].copy()
    edges = np.asarray(z, dtype=float)
    r = edges.size + 1
    out = np.empty(d.shape + (r,))
    out[..., 0] = np.minimum(d, edges[0])
    for j in range(1, r - 1):
        out[..., j] = np.maximum(np.minimum(d, edges[j]) - edges[j - 1], 0.0)
    out[..., r - 1] = np.maximum(d - edges[-1], 0.0)
    return out


def lift_paths(paths: np.ndarray, strategy: LiftingStrategy) -> np.ndarray:
    """Vectorized lifting of an ``(n, T-1)`` array of realizations to ``(n, k')``."""
    paths = np.atleast_2d(np.asarray(paths, dtype=float))
    if paths.shape[1] != len(strategy.breakpoints):
        raise ValueError(f"paths have {paths.shape[1]} stages, strategy {len(strategy.breakpoints)}")
    blocks = [_lift_stage(paths[:, i], z) for i, z in enumerate(strategy.breakpoints)]
    return np.concatenate(blocks, axis=1)


def lift_point(
    d: Sequence[float],
    strategy: LiftingStrategy,
    lower: Sequence[float] | None = None,
    upper: Sequence[float] | None = None,
) -> np.ndarray:
    """Map a realization ``d`` (length ``T-1``) to its lifted vector (length ``k'``)."""
    d = np.asarray(d, dtype=float)
    if d.shape != (len(strategy.breakpoints),):
        raise ValueError(f"expected {len(strategy.breakpoints)} stage values, got shape {d.shape}")
    if lower is not None and upper is not None:
        for i, (v, lo, up) in enumerate(zip(d, lower, upper)):
            if not lo <= v <= up:
                raise ValueError(f"stage {i + 2}: value {v} outside [{lo}, {up}]")
    return lift_paths(d[None, :], strategy)[0]


def retract_point(d_lifted: Sequence[float], strategy: LiftingStrategy) -> np.ndarray:
    """Sum each stage's lifted components back to the original coordinate."""
    d_lifted = np.asarray(d_lifted, dtype=float)
    if d_lifted.shape[-1] != strategy.k_prime:
        raise ValueError(f"lifted vector has length {d_lifted.shape[-1]}, expected {strategy.k_prime}")
    return np.add.reduceat(d_lifted, strategy.offsets[:-1], axis=-1)


# ---------------------------------------------------------------------------
# polyhedral descriptions


def stage_hull(
    breakpoints: Sequence[float], lower: float, upper: float
) -> tuple[np.ndarray, np.ndarray]:
    """Facets ``A d' >= b`` of the convex hull of one lifted stage segment.

    The hull is the simplex spanned by the lifted images of ``l``, each
    breakpoint and ``u``.  In normalised piece coordinates ``lam_j`` it reads
    ``1 >= lam_1 >= lam_2 >= ... >= lam_r >= 0``.
    """
    z = tuple(float(v) for v in breakpoints)
    if not lower < upper:
        raise ValueError(f"bounds ({lower}, {upper}) are not increasing")
    if not z:
        return np.array([[1.0], [-1.0]]), np.array([lower, -upper])
    if not (lower < z[0] and z[-1] < upper) or any(b <= a for a, b in zip(z, z[1:])):
        raise ValueError(f"breakpoints {z} must be strictly increasing inside ({lower}, {upper})")
    edges = (lower,) + z + (upper,)
    widths = np.diff(edges)
    r = len(z) + 1
    A = np.zeros((r + 1, r))
    b = np.zeros(r + 1)
    # lam_1 = (d'_1 - l) / w_1, lam_j = d'_j / w_j for j >= 2
    A[0, 0] = -1.0 / widths[0]
    b[0] = -z[0] / widths[0]
    for j in range(r - 1):
        A[j + 1, j] = 1.0 / widths[j]
        A[j + 1, j + 1] = -1.0 / widths[j + 1]
    b[1] = lower / widths[0]
    A[r, r - 1] = 1.0 / widths[r - 1]
    return A, b


@dataclass(frozen=True, eq=False)
class LiftedSetDescription:
    """Outer approximation ``{d' : A_l d' >= b_l}`` of the lifted uncertainty set."""

    strategy: LiftingStrategy
    stage_A: tuple[np.ndarray, ...]
    stage_b: tuple[np.ndarray, ...]
    W_lifted: np.ndarray
    A_l: np.ndarray
    b_l: np.ndarray
    n_polytope_rows: int

    @property
    def m_prime(self) -> int:
        return sum(A.shape[0] for A in self.stage_A)

    def contains(self, d_lifted: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(self.A_l @ np.asarray(d_lifted) >= self.b_l - tol))

    def components(self) -> list[np.ndarray]:
        """Group uncertain stages that share a row of ``A_l``.

        Returns a list of 0-based stage index arrays; the polytope is the
        Cartesian product of its restrictions to these groups.
        """
        n = len(self.strategy.breakpoints)
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        stage_of = self.strategy.stage_of_coordinate() - 2
        for row in self.A_l:
            stages = np.unique(stage_of[np.flatnonzero(row)])
            for s in stages[1:]:
                a, b = find(stages[0]), find(s)
                if a != b:
                    parent[b] = a
        groups: dict[int, list[int]] = {}
        for i in range(n):
            groups.setdefault(find(i), []).append(i)
        return [np.array(g) for g in groups.values()]


def outer_approximation(
    uset: UncertaintySet,
    strategy: LiftingStrategy,
    drop_duplicate_rows: bool = False,
) -> LiftedSetDescription:
    """Stack ``W'`` (columns of ``W`` replicated per lifted piece) over the stage hulls."""
    if strategy.horizon != uset.horizon:
        raise ValueError(
            f"strategy horizon {strategy.horizon} does not match set horizon {uset.horizon}"
        )
    strategy.validate(uset.lower, uset.upper)
    W_lifted = np.repeat(uset.W, strategy.pieces, axis=1)
    stage_A, stage_b = [], []
    for z, lo, up in zip(strategy.breakpoints, uset.lower, uset.upper):
        A_t, b_t = stage_hull(z, lo, up)
        stage_A.append(_frozen(A_t))
        stage_b.append(_frozen(b_t))
    k = strategy.k_prime
    blocks = np.zeros((sum(A.shape[0] for A in stage_A), k))
    row = 0
    for A_t, start in zip(stage_A, strategy.offsets[:-1]):
        blocks[row : row + A_t.shape[0], start : start + A_t.shape[1]] = A_t
        row += A_t.shape[0]
    A_l = np.vstack([W_lifted, blocks])
    b_l = np.concatenate([uset.h, *stage_b])
    n_poly = uset.W.shape[0]
    if drop_duplicate_rows:
        seen = set()
        keep = []
        for i, (a, b) in enumerate(zip(A_l, b_l)):
            key = (tuple(np.round(a, 12)), round(float(b), 12))
            if key not in seen:
                seen.add(key)
                keep.append(i)
        A_l, b_l = A_l[keep], b_l[keep]
    return LiftedSetDescription(
        strategy=strategy,
        stage_A=tuple(stage_A),
        stage_b=tuple(stage_b),
        W_lifted=_frozen(W_lifted),
        A_l=_frozen(A_l),
        b_l=_frozen(b_l),
        n_polytope_rows=n_poly,
    )


def observation_matrix(stage: int, strategy: LiftingStrategy) -> np.ndarray:
    """Projector keeping the lifted coordinates revealed by ``stage`` (2 <= stage <= T)."""
    if not 2 <= stage <= strategy.horizon:
        raise ValueError(f"stage {stage} outside 2..{strategy.horizon}")
    diag = np.zeros(strategy.k_prime)
    diag[: strategy.window(stage)] = 1.0
    return np.diag(diag)


def unit_selector(stage: int, strategy: LiftingStrategy) -> np.ndarray:
    """Row vector with ones over the lifted block of ``stage``."""
    if not 2 <= stage <= strategy.horizon:
        raise ValueError(f"stage {stage} outside 2..{strategy.horizon}")
    e = np.zeros(strategy.k_prime)
    off = strategy.offsets
    e[off[stage - 2] : off[stage - 1]] = 1.0
    return e


# ---------------------------------------------------------------------------
# moments


def _uniform_piece_means(z: Sequence[float], lo: float, up: float) -> np.ndarray:
    # E[clamp(d - a, 0, b - a)] = ((b - a)^2 / 2 + (b - a)(u - b)) / (u - l) for d ~ U(l, u)
    edges = (lo,) + tuple(z) + (up,)
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        w = b - a
        out.append((0.5 * w * w + w * (up - b)) / (up - lo))
    out[0] += lo
    return np.array(out)


def lifted_mean(
    strategy: LiftingStrategy,
    lower: Sequence[float],
    upper: Sequence[float],
    distribution: str | Callable[[np.random.Generator, int], np.ndarray] = "uniform",
    n_samples: int = 100_000,
    seed: int = 0,
    return_stderr: bool = False,
):
    """Expected lifted vector ``E[L(d)]`` under independent stage distributions.

    ``"uniform"`` means ``d_t ~ U(l_t, u_t)`` and is evaluated in closed form.
    Any other distribution must be given as a sampler ``f(rng, n) -> (n, T-1)``
    and is estimated by seeded Monte Carlo.
    """
    strategy.validate(lower, upper)
    if isinstance(distribution, str):
        if distribution != "uniform":
            raise ValueError(f"unsupported distribution {distribution!r}; pass a sampler for Monte Carlo")
        mean = np.concatenate(
            [_uniform_piece_means(z, lo, up) for z, lo, up in zip(strategy.breakpoints, lower, upper)]
        )
        return (mean, np.zeros_like(mean)) if return_stderr else mean
    rng = np.random.default_rng(seed)
    samples = np.asarray(distribution(rng, n_samples), dtype=float)
    lifted = lift_paths(samples, strategy)
    mean = lifted.mean(axis=0)
    if return_stderr:
        return mean, lifted.std(axis=0, ddof=1) / np.sqrt(n_samples)
    return mean
