"""Rectangular minimum-cost assignment.

:func:`assignment_solve` is the shortest-augmenting-path Hungarian method with
row/column potentials (O(n^2 m) for n <= m); the matrix is transposed when it
has more rows than columns. :func:`assignment_oracle` enumerates every
injection and exists to check the solver.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimError, SizeError

__all__ = ["PanelAssignment", "assignment_solve", "assignment_oracle"]

MAX_SOLVE = 64
MAX_ORACLE = 7


@dataclass
class PanelAssignment:
    pairs: list[tuple[int, int]]
    unmatched_pred: list[int] = field(default_factory=list)
    unmatched_gt: list[int] = field(default_factory=list)
    total_cost: float = 0.0

    def mapping(self) -> dict[int, int]:
        return dict(self.pairs)


def _as_matrix(cost) -> np.ndarray:
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] == 0 or c.shape[1] == 0:
        raise DimError(f"cost matrix must be non-empty 2-D, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost entries must be finite")
    return c


def _result(c: np.ndarray, pairs: list[tuple[int, int]]) -> PanelAssignment:
    pairs = sorted(pairs)
    rows = {i for i, _ in pairs}
    cols = {j for _, j in pairs}
    return PanelAssignment(
        pairs=pairs,
        unmatched_pred=[i for i in range(c.shape[0]) if i not in rows],
        unmatched_gt=[j for j in range(c.shape[1]) if j not in cols],
        total_cost=math.fsum(c[i, j] for i, j in pairs),
    )


def _hungarian(a: np.ndarray) -> list[int]:
    """Row -> column assignment for an n x m matrix with n <= m."""
    n, m = a.shape
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)  # p[j]: row (1-based) matched to column j; 0 = none
    way = [0] * (m + 1)
    rows = a.tolist()
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = rows[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    match = [-1] * n
    for j in range(1, m + 1):
        if p[j]:
            match[p[j] - 1] = j - 1
    return match


def assignment_solve(cost) -> PanelAssignment:
    """Minimum-cost matching of size min(n, m) for an n x m cost matrix."""
    c = _as_matrix(cost)
    n, m = c.shape
    if max(n, m) > MAX_SOLVE:
        raise SizeError(f"matrix {n}x{m} exceeds {MAX_SOLVE}")
    if n <= m:
        match = _hungarian(c)
        pairs = [(i, j) for i, j in enumerate(match)]
    else:
        match = _hungarian(c.T)
        pairs = [(i, j) for j, i in enumerate(match)]
    return _result(c, pairs)


def assignment_oracle(cost) -> PanelAssignment:
    """Exhaustive search over injections; for tests only (n, m <= 7)."""
    c = _as_matrix(cost)
    n, m = c.shape
    if max(n, m) > MAX_ORACLE:
        raise SizeError(f"oracle limited to {MAX_ORACLE}x{MAX_ORACLE}, got {n}x{m}")
    best = None
    best_cost = math.inf
    if n <= m:
        for cols in itertools.permutations(range(m), n):
            total = math.fsum(c[i, j] for i, j in enumerate(cols))
            if total < best_cost:
                best_cost, best = total, [(i, j) for i, j in enumerate(cols)]
    else:
        for rows in itertools.permutations(range(n), m):
            total = math.fsum(c[i, j] for j, i in enumerate(rows))
            if total < best_cost:
                best_cost, best = total, [(i, j) for j, i in enumerate(rows)]
    return _result(c, best)
