"""Highest-value transversal, canonical offsets and degrees of freedom."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .expressions import NEG_INF
from .signature import StructuralError


class InconsistencyError(ValueError):
    phase = 3


@dataclass(frozen=True)
class OffsetSolution:
    c: tuple
    d: tuple
    delta: int
    hvt: tuple
    value: int

    @property
    def k_c(self) -> int:
        return max(self.c)

    @property
    def k_d(self) -> int:
        return max(self.d)


def _finite(v) -> bool:
    return v != NEG_INF


def _assignment_value(sigma, rows, cols):
    """Best transversal value of the sub-matrix, or None if there is none."""
    if not rows:
        return 0
    sub = np.array([[sigma[i][j] for j in cols] for i in rows], dtype=float)
    mask = np.isfinite(sub)
    if not mask.any(axis=1).all() or not mask.any(axis=0).all():
        return None
    # forbidden edges get a cost no feasible matching can reach
    big = 1.0 + 2 * len(rows) * (np.abs(sub[mask]).max() + 1)
    cost = np.where(mask, -sub, big)
    r, c = linear_sum_assignment(cost)
    if not mask[r, c].all():
        return None
    return int(round(sub[r, c].sum()))


def hvt(sigma):
    """Lexicographically smallest highest-value transversal ``(T, value)``.

    ``T[i]`` is the column matched to row ``i``; ``-inf`` entries are forbidden.
    """
    n = len(sigma)
    rows = list(range(n))
    best = _assignment_value(sigma, rows, rows)
    if best is None:
        raise StructuralError("signature matrix does not admit a perfect matching")
    perm = []
    free = list(range(n))
    acc = 0
    for i in range(n):
        for j in free:
            if not _finite(sigma[i][j]):
                continue
            rest_cols = [c for c in free if c != j]
            rest = _assignment_value(sigma, list(range(i + 1, n)), rest_cols)
            if rest is not None and acc + sigma[i][j] + rest == best:
                perm.append(j)
                acc += sigma[i][j]
                free = rest_cols
                break
    return tuple(perm), best


def solve_offsets(sigma, max_iter: int | None = None) -> OffsetSolution:
    """Elementwise-minimal nonnegative optimal duals by fixed-point iteration."""
    n = len(sigma)
    perm, value = hvt(sigma)
    c = [0] * n
    max_iter = max_iter or 100 * (n + 1) ** 2
    for _ in range(max_iter):
        d = [max([0] + [c[i] + sigma[i][j] for i in range(n) if _finite(sigma[i][j])]) for j in range(n)]
        new_c = [d[perm[i]] - sigma[i][perm[i]] for i in range(n)]
        if new_c == c:
            break
        c = new_c
    else:
        raise StructuralError("offset iteration did not converge")
    d = [int(v) for v in d]
    c = [int(v) for v in c]
    delta = sum(d) - sum(c)
    assert delta == value
    return OffsetSolution(tuple(c), tuple(d), delta, perm, value)


def is_dual_feasible(sigma, c, d) -> bool:
    n = len(sigma)
    if min(c) < 0 or min(d) < 0:
        return False
    return all(d[j] - c[i] >= sigma[i][j] for i in range(n) for j in range(n) if _finite(sigma[i][j]))


def degrees_of_freedom(delta: int, omega_sum: int, n_constraint_eqs: int = 0, *, check: bool = True) -> int:
    """``delta + sum_j max_i omega_ij - #constraint equations``."""
    dof = delta + omega_sum - n_constraint_eqs
    if check and dof < 0:
        raise InconsistencyError(f"degree of freedom {dof} < 0: no solution manifold")
    return dof
