"""Scalar expressions over ``t`` and jet variables.

Expressions are plain sympy objects. Jet variables are sympy symbols whose
name encodes what they stand for:

* ``x{j}`` / ``x{j}__{k}``  -- dependent variable ``j`` differentiated ``k`` times
* ``xi{m}``                 -- an embedding constant (total derivative is zero)
* ``z{m}``                  -- an auxiliary integral state

Keeping the encoding in the name means every sympy operation (``diff``,
``subs``, ``expand``, pickling) works on jets without any special casing.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping

import sympy as sp

T = sp.Symbol("t", real=True)
S = sp.Symbol("s", real=True)

NEG_INF = -math.inf

ALLOWED_FUNCTIONS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp, "tanh": sp.tanh}

STATE, EMBEDDED_U, EMBEDDED_XI, INTEGRAL_STATE = "state", "embedded-u", "embedded-xi", "integral-state"

_JET_RE = re.compile(r"^x(\d+)(?:__(\d+))?$")
_XI_RE = re.compile(r"^xi(\d+)$")
_Z_RE = re.compile(r"^z(\d+)$")


class MissingAssignment(KeyError):
    """Raised by :func:`evaluate` when a leaf has no value."""

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"no value assigned to {self.name}"


@dataclass(frozen=True, order=True)
class JetVariable:
    var_index: int
    deriv_order: int = 0
    kind: str = STATE

    def __post_init__(self):
        if self.deriv_order < 0:
            raise ValueError("negative derivative orders are never materialized")

    @property
    def symbol(self) -> sp.Symbol:
        if self.kind == EMBEDDED_XI:
            return sp.Symbol(f"xi{self.var_index}", real=True)
        if self.kind == INTEGRAL_STATE:
            return sp.Symbol(f"z{self.var_index}", real=True)
        return jet(self.var_index, self.deriv_order)

    @classmethod
    def from_symbol(cls, sym: sp.Symbol) -> "JetVariable":
        info = jet_info(sym)
        if info is None:
            raise ValueError(f"{sym} is not a jet variable")
        return info


def jet(j: int, k: int = 0) -> sp.Symbol:
    """Symbol for ``x_j^(k)``."""
    if k < 0:
        raise ValueError("negative derivative order")
    return sp.Symbol(f"x{j}" if k == 0 else f"x{j}__{k}", real=True)


def xi(m: int) -> sp.Symbol:
    return sp.Symbol(f"xi{m}", real=True)


def zsym(m: int) -> sp.Symbol:
    return sp.Symbol(f"z{m}", real=True)


def jet_info(sym) -> JetVariable | None:
    if not isinstance(sym, sp.Symbol):
        return None
    name = sym.name
    m = _JET_RE.match(name)
    if m:
        return JetVariable(int(m.group(1)), int(m.group(2) or 0), STATE)
    m = _XI_RE.match(name)
    if m:
        return JetVariable(int(m.group(1)), 0, EMBEDDED_XI)
    m = _Z_RE.match(name)
    if m:
        return JetVariable(int(m.group(1)), 0, INTEGRAL_STATE)
    return None


def is_state_jet(sym) -> bool:
    info = jet_info(sym)
    return info is not None and info.kind == STATE


def jets(e) -> set[sp.Symbol]:
    """State jet symbols occurring in ``e``."""
    return {s for s in sp.sympify(e).free_symbols if is_state_jet(s)}


def xis(e) -> set[sp.Symbol]:
    return {s for s in sp.sympify(e).free_symbols if _XI_RE.match(s.name)}


def normalize(e) -> sp.Expr:
    # power_exp=False keeps exp(-x1-x2) as one atom
    return sp.expand(sp.sympify(e), power_exp=False, power_base=False, log=False)


def _as_symbol(v) -> sp.Symbol:
    if isinstance(v, JetVariable):
        return v.symbol
    return v


def partial(e, v) -> sp.Expr:
    return normalize(sp.diff(sp.sympify(e), _as_symbol(v)))


def total_derivative(e) -> sp.Expr:
    """Formal total derivative ``D e = de/dt + sum_k x^(k+1) de/dx^(k)``."""
    e = sp.sympify(e)
    free = e.free_symbols
    if S in free:
        raise ValueError("total_derivative: expression contains the integration dummy s")
    for sym in free:
        if _Z_RE.match(sym.name):
            raise ValueError("total_derivative: integral states must be materialized first")
    out = sp.diff(e, T)
    for sym in free:
        info = jet_info(sym)
        if info is None or info.kind != STATE:
            continue
        out += jet(info.var_index, info.deriv_order + 1) * sp.diff(e, sym)
    return normalize(out)


def leading_order(e, j: int) -> float | int:
    """Highest derivative order of variable ``j`` in ``e`` (``-inf`` if absent)."""
    best = NEG_INF
    for sym in jets(normalize(e)):
        info = jet_info(sym)
        if info.var_index == j and info.deriv_order > best:
            best = info.deriv_order
    return best


def evaluate(e, point: Mapping, t: float | None = None) -> float:
    """Evaluate ``e`` numerically. Keys of ``point`` are symbols or JetVariables."""
    e = sp.sympify(e)
    values = {_as_symbol(k): v for k, v in point.items()}
    if t is not None:
        values[T] = t
    for sym in e.free_symbols:
        if sym not in values:
            raise MissingAssignment(sym.name)
    return float(e.xreplace({k: sp.sympify(v) for k, v in values.items() if k in e.free_symbols}))


def substitute_constants(e, values: Mapping) -> sp.Expr:
    return normalize(sp.sympify(e).xreplace({_as_symbol(k): sp.sympify(v) for k, v in values.items()}))


def max_order(e) -> int:
    orders = [jet_info(s).deriv_order for s in jets(e)]
    return max(orders) if orders else -1


def shift_to_t(e) -> sp.Expr:
    """Replace the integration dummy by ``t`` (integrand evaluated on the diagonal)."""
    return normalize(sp.sympify(e).xreplace({S: T}))
