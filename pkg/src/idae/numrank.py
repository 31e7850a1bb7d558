"""Numerical rank and well-conditioned pivots of evaluated Jacobians."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .expressions import T, evaluate

DEFAULT_RANK_TOL = 1e-10
# residual norms closer than this (relative) count as ties in pivot selection
_TIE = 1e-9


class EvaluationError(ValueError):
    phase = 2


class ConstantRankViolation(ValueError):
    phase = 2


@dataclass
class RankReport:
    r: int
    row_pivots: list
    col_pivots: list
    singular_values: list
    tolerance_used: float

    @property
    def full(self) -> bool:
        # singular_values has min(m, n) entries
        return self.r == len(self.singular_values)


def _greedy_pivots(m: np.ndarray, r: int, priority=None) -> list[int]:
    """Pick ``r`` rows of ``m`` by pivoted Gram-Schmidt on the row space.

    At each step the row with the largest residual norm wins; near-ties go to
    the larger ``priority`` and then to the lower index.
    """
    rows = [np.array(v, dtype=float) for v in m]
    priority = list(priority) if priority is not None else [0] * len(rows)
    chosen: list[int] = []
    basis: list[np.ndarray] = []
    for _ in range(r):
        norms = []
        for i, v in enumerate(rows):
            if i in chosen:
                norms.append(-1.0)
                continue
            w = v.copy()
            for q in basis:
                w -= (q @ w) * q
            norms.append(float(np.linalg.norm(w)))
        top = max(norms)
        if top <= 0:
            break
        cands = [i for i, v in enumerate(norms) if v >= top * (1 - _TIE)]
        best = min(cands, key=lambda i: (-priority[i], i))
        w = rows[best].copy()
        for q in basis:
            w -= (q @ w) * q
        basis.append(w / np.linalg.norm(w))
        chosen.append(best)
    return chosen


def numeric_rank(m, tol: float = DEFAULT_RANK_TOL, row_priority=None) -> RankReport:
    """Rank from singular values relative to the largest one, plus pivots.

    Rows are chosen first (``row_priority`` breaks near-ties), then columns are
    chosen greedily within the selected rows, so the ``r x r`` minor on the
    pivots is well-conditioned.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise EvaluationError("rank needs a matrix")
    if not np.all(np.isfinite(a)):
        raise EvaluationError("matrix has non-finite entries")
    if a.size == 0:
        return RankReport(0, [], [], [], tol)
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[0] == 0:
        r = 0
    else:
        r = int(np.sum(sv / sv[0] > tol))
    rows = _greedy_pivots(a, r, row_priority)
    cols = _greedy_pivots(a[rows].T, r) if rows else []
    return RankReport(r, rows, cols, [float(v) for v in sv], tol)


def evaluate_matrix(mat: sp.Matrix, point, t: float | None = None) -> np.ndarray:
    out = np.empty(mat.shape, dtype=float)
    for i in range(mat.rows):
        for j in range(mat.cols):
            out[i, j] = evaluate(mat[i, j], point, t)
    return out


@dataclass
class RankGroup:
    r: int
    row_pivots: tuple
    col_pivots: tuple
    points: list = field(default_factory=list)
    reports: list = field(default_factory=list)


def component_rank(jac, points, t0: float = 0.0, tol: float = DEFAULT_RANK_TOL,
                   row_priority=None, *, strict: bool = False) -> list[RankGroup]:
    """Evaluate ``jac`` at each point and group points by (rank, column pivots).

    ``jac`` is a BlockJacobian or a sympy Matrix. Constant rank is only checked
    at the points supplied. With ``strict`` the points are expected to lie on a
    single component and a mixture of ranks raises.
    """
    mat = getattr(jac, "matrix", jac)
    groups: dict = {}
    for point in points:
        t = point.get(T, point.get("t", t0)) if isinstance(point, dict) else t0
        values = {k: v for k, v in point.items() if k not in (T, "t")}
        rep = numeric_rank(evaluate_matrix(mat, values, t), tol, row_priority)
        key = (rep.r, tuple(sorted(rep.col_pivots)))
        g = groups.setdefault(key, RankGroup(rep.r, tuple(rep.row_pivots), tuple(rep.col_pivots)))
        g.points.append(point)
        g.reports.append(rep)
    out = list(groups.values())
    if strict and len({g.r for g in out}) > 1:
        raise ConstantRankViolation(
            "points supplied as one component have different ranks: "
            + ", ".join(f"rank {g.r} at {len(g.points)} point(s)" for g in out))
    return out
