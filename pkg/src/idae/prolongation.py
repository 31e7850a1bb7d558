"""Prolongation ``F^(c)``, its block triangular partition, and block Jacobians."""
from __future__ import annotations

from dataclasses import dataclass

import sympy as sp

from .expressions import jet, normalize, partial, shift_to_t, total_derivative
from .model import IdaeEquation, IdaeSystem, IntegralTerm
from .offsets import OffsetSolution


class ProlongationError(ValueError):
    phase = 2


def differentiate(eq: IdaeEquation) -> IdaeEquation:
    """Total derivative of an equation; integral terms follow the Leibniz rule.

    ``d/dt int_{t0}^t K(t-s) g ds = K(0) g(t) + int_{t0}^t K'(t-s) g ds``, so a
    polynomial kernel contributes one boundary term and loses one degree.
    """
    dae = total_derivative(eq.dae_part)
    terms = []
    for term in eq.integral_terms:
        a0 = term.kernel[0] if term.kernel else 0
        if a0 != 0:
            dae += sp.Rational(a0) * shift_to_t(term.integrand)
        kernel = tuple(k * a for k, a in enumerate(term.kernel))[1:]
        if any(a != 0 for a in kernel):
            terms.append(IntegralTerm(kernel, term.integrand))
    return IdaeEquation(normalize(dae), tuple(terms))


@dataclass
class ProlongedSystem:
    base: IdaeSystem
    c: tuple
    # derivs[i][k] = F_i^(k), k = 0..c_i
    derivs: list

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def k_c(self) -> int:
        return max(self.c)

    def block(self, p: int) -> list[tuple[int, int]]:
        """``B_p`` as (equation index, derivative count) pairs."""
        out = []
        for i, ci in enumerate(self.c):
            k = p + ci - self.k_c
            if k >= 0:
                out.append((i, k))
        return out

    @property
    def blocks(self) -> list:
        return [self.block(p) for p in range(self.k_c + 1)]

    @property
    def top_block(self) -> list[IdaeEquation]:
        return [self.derivs[i][self.c[i]] for i in range(self.n)]

    @property
    def constraint_pairs(self) -> list[tuple[int, int]]:
        return [(i, k) for i in range(self.n) for k in range(self.c[i])]

    @property
    def constraints(self) -> list[IdaeEquation]:
        return [self.derivs[i][k] for i, k in self.constraint_pairs]

    @property
    def equation_count(self) -> int:
        return sum(len(d) for d in self.derivs)

    def equation(self, i: int, k: int) -> IdaeEquation:
        return self.derivs[i][k]


def prolong(sys: IdaeSystem, c) -> ProlongedSystem:
    c = tuple(int(v) for v in c)
    if len(c) != sys.n or min(c) < 0:
        raise ProlongationError("prolongation orders must be nonnegative, one per equation")
    derivs = []
    for eq, ci in zip(sys.equations, c):
        chain = [eq]
        for _ in range(ci):
            chain.append(differentiate(chain[-1]))
        derivs.append(chain)
    return ProlongedSystem(sys, c, derivs)


@dataclass
class BlockJacobian:
    """Symbolic Jacobian of the top block w.r.t. the leading derivatives ``x_j^(d_j)``."""

    matrix: sp.Matrix
    rows: list
    cols: list

    def sub_jacobian(self, prolonged: ProlongedSystem, offsets: OffsetSolution, p: int) -> sp.Matrix:
        """Jacobian of ``B_p`` w.r.t. ``X^(p + k_d - k_c)``; negative orders are dropped."""
        return sub_jacobian(prolonged, offsets, p)[0]


def block_jacobian(prolonged: ProlongedSystem, offsets: OffsetSolution) -> BlockJacobian:
    n = prolonged.n
    top = prolonged.top_block
    cols = [jet(j, offsets.d[j]) for j in range(n)]
    # integral memory terms carry no leading derivative, so only the DAE part counts
    m = sp.Matrix(n, n, lambda i, j: partial(top[i].dae_part, cols[j]))
    return BlockJacobian(m, [(i, prolonged.c[i]) for i in range(n)], cols)


def sub_jacobian(prolonged: ProlongedSystem, offsets: OffsetSolution, p: int):
    k_c = prolonged.k_c
    rows = prolonged.block(p)
    cols = []
    for j, dj in enumerate(offsets.d):
        order = p + dj - k_c
        if order >= 0:
            cols.append(jet(j, order))
    m = sp.Matrix(len(rows), len(cols),
                  lambda a, b: partial(prolonged.equation(*rows[a]).dae_part, cols[b]))
    return m, rows, cols


def smoothing_integrals(prolonged: ProlongedSystem, offsets: OffsetSolution, p: int) -> list[tuple[int, int]]:
    """Variables of ``B_p`` whose order ``p + d_j - k_c`` is negative, as (j, order).

    A negative order stands for a repeated integral of ``x_j``; these are kept
    for display and never enter a Jacobian.
    """
    k_c = prolonged.k_c
    return [(j, p + dj - k_c) for j, dj in enumerate(offsets.d) if p + dj - k_c < 0]
