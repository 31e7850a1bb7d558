"""Signature matrices of the DAE part, the integral part, and the whole IDAE."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import sympy as sp

from .expressions import NEG_INF, S, T, jet, leading_order, normalize, evaluate, MissingAssignment
from .model import IdaeSystem, IntegralTerm, decompose

INF = math.inf
UPSILON_CAP = 10
OMEGA_CAP = 10
DEGENERATION_TOL = 1e-8


class StructuralError(ValueError):
    """Raised when the structure admits no perfect matching (phase 1 failure)."""

    phase = 1


@dataclass
class SmoothingIndices:
    upsilon: list
    omega: list
    degenerate: list


@dataclass
class SignatureAnalysis:
    sigma: list
    sigma_dae: list
    sigma_iae: list
    upsilon: list
    omega: list
    degenerate: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.sigma)


def dae_signature(phi) -> list:
    n = len(phi)
    return [[leading_order(p, j) for j in range(n)] for p in phi]


def _integrand_order(terms, j):
    return max((leading_order(term.integrand, j) for term in terms), default=NEG_INF)


def diagonal_derivative(terms, p: int, var) -> sp.Expr:
    """``d/dvar [ (d^p/dt^p sum K(t-s) g)|_{s=t} ]`` for one equation's integral terms."""
    body = sum((term.body() for term in terms), sp.Integer(0))
    inner = sp.diff(body, T, p).xreplace({S: T})
    return normalize(sp.diff(inner, var))


def _vanishes_at(e, points, tol) -> bool:
    if not points:
        return False
    for point in points:
        t = point.get(T, point.get("t"))
        values = {k: v for k, v in point.items() if k not in (T, "t")}
        try:
            value = evaluate(e, values, t)
        except MissingAssignment:
            return False
        if abs(value) >= tol:
            return False
    return True


def smoothing_indices(terms, j: int, eval_points=(), *, upsilon_cap: int = UPSILON_CAP,
                      omega_cap: int = OMEGA_CAP, tol: float = DEGENERATION_TOL):
    """Smoothing index ``upsilon``, integral index ``omega`` and a degeneration flag.

    ``terms`` are the integral terms of one equation (a single ``IntegralTerm`` is
    accepted too). Derivatives are taken with respect to the leading derivative of
    variable ``j`` inside the integrands. An expression that is not identically
    zero but vanishes at every evaluation point counts as degenerate and is skipped
    when locating ``upsilon``; ``omega`` stays symbolic.
    """
    if isinstance(terms, IntegralTerm):
        terms = [terms]
    order = _integrand_order(terms, j)
    if order == NEG_INF:
        return INF, 0, False
    var = jet(j, order)
    upsilon, omega, degenerate = INF, 0, False
    cap = max(upsilon_cap, omega_cap)
    for p in range(cap):
        e = diagonal_derivative(terms, p, var)
        if e == 0:
            continue
        if p + 1 <= omega_cap:
            omega = p + 1
        if upsilon == INF and p + 1 <= upsilon_cap:
            if _vanishes_at(e, list(eval_points), tol):
                degenerate = True
            else:
                upsilon = p + 1
    else:
        if diagonal_derivative(terms, cap, var) != 0:
            warnings.warn(f"smoothing search for variable {j} hit the cap {cap}")
    return upsilon, omega, degenerate


def smoothing_tables(big_phi, n: int, eval_points=(), **kw) -> SmoothingIndices:
    ups, om, deg = [], [], []
    for terms in big_phi:
        row = [smoothing_indices(terms, j, eval_points, **kw) if terms else (INF, 0, False) for j in range(n)]
        ups.append([r[0] for r in row])
        om.append([r[1] for r in row])
        deg.append([r[2] for r in row])
    return SmoothingIndices(ups, om, deg)


def iae_signature(big_phi, upsilon) -> list:
    n = len(big_phi)
    out = []
    for i, terms in enumerate(big_phi):
        row = []
        for j in range(n):
            order = _integrand_order(terms, j)
            if order == NEG_INF or upsilon[i][j] == INF:
                row.append(NEG_INF)
            else:
                row.append(order - upsilon[i][j])
        out.append(row)
    return out


def combine(a, b) -> list:
    return [[max(x, y) for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def combined_signature(sys: IdaeSystem, eval_points=(), *, check: bool = True, **kw) -> SignatureAnalysis:
    phi, big_phi = decompose(sys)
    sig_dae = dae_signature(phi)
    tables = smoothing_tables(big_phi, sys.n, eval_points, **kw)
    sig_iae = iae_signature(big_phi, tables.upsilon)
    sigma = combine(sig_dae, sig_iae)
    if check:
        for i, row in enumerate(sigma):
            if all(v == NEG_INF for v in row):
                raise StructuralError(f"row {i} of the signature matrix is entirely -inf: no perfect matching")
    return SignatureAnalysis(sigma, sig_dae, sig_iae, tables.upsilon, tables.omega, tables.degenerate)


def omega_total(omega_tables) -> int:
    """``sum_j max_i omega_ij`` over one or more omega tables sharing columns."""
    cols: dict[int, int] = {}
    for table in omega_tables:
        for row in table:
            for j, w in enumerate(row):
                cols[j] = max(cols.get(j, 0), w)
    return sum(cols.values())
