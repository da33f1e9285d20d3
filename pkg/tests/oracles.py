"""Independent brute-force oracles shared by the test modules."""

import itertools

import numpy as np


def polytope_vertices(A, b, tol=1e-9):
    """Vertices of ``{x : A x >= b}`` by solving every square subsystem of active rows."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[1]
    found = []
    for rows in itertools.combinations(range(A.shape[0]), n):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ x >= b - tol * (1 + np.abs(b))):
            if not any(np.allclose(x, y, atol=tol, rtol=0) for y in found):
                found.append(x)
    return np.array(found).reshape(-1, n)


def same_point_sets(P, Q, tol=1e-9):
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape:
        return False
    return all(np.min(np.max(np.abs(Q - p), axis=1)) <= tol for p in P) and all(
        np.min(np.max(np.abs(P - q), axis=1)) <= tol for q in Q
    )


def lp_as_inequalities(lp):
    """``G x >= h`` for every finite row and column bound of a :class:`LinearProgram`."""
    A = lp.A.toarray()
    n = lp.n_cols
    G, h = [], []
    for i in range(lp.n_rows):
        if np.isfinite(lp.row_lo[i]):
            G.append(A[i]); h.append(lp.row_lo[i])
        if np.isfinite(lp.row_hi[i]):
            G.append(-A[i]); h.append(-lp.row_hi[i])
    for j in range(n):
        e = np.zeros(n); e[j] = 1.0
        if np.isfinite(lp.col_lo[j]):
            G.append(e); h.append(lp.col_lo[j])
        if np.isfinite(lp.col_hi[j]):
            G.append(-e); h.append(-lp.col_hi[j])
    return np.array(G), np.array(h)


def brute_force_lp(lp):
    """Optimum over all basic feasible solutions of a bounded LP; ``None`` when infeasible."""
    G, h = lp_as_inequalities(lp)
    verts = polytope_vertices(G, h, tol=1e-9)
    if verts.size == 0:
        return None
    vals = verts @ lp.c + lp.obj_const
    return float(vals.min() if lp.sense == "min" else vals.max())
