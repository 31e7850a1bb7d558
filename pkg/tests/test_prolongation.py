import math

import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from idae.checks import check_zero_pattern
from idae.cli import bundled_systems
from idae.expressions import S, T, jet, normalize
from idae.model import IdaeEquation, IntegralTerm, parse_system
from idae.offsets import solve_offsets
from idae.prolongation import (ProlongationError, block_jacobian, differentiate, prolong, smoothing_integrals,
                               sub_jacobian)
from idae.signature import combined_signature


def structure(sys):
    off = solve_offsets(combined_signature(sys).sigma)
    pro = prolong(sys, off.c)
    return off, pro


def test_zolf_blocks(zolf):
    off, pro = structure(zolf)
    assert pro.blocks == [[(1, 0)], [(0, 0), (1, 1)]]
    assert pro.equation_count == zolf.n + sum(off.c) == 3
    f2_1 = pro.equation(1, 1)
    # d/dt of int(x1 + x2 + (t-s) x1 x2) + t^2
    assert normalize(f2_1.dae_part - (jet(0) + jet(1) + 2 * T)) == 0
    assert len(f2_1.integral_terms) == 1 and f2_1.integral_terms[0].kernel == (1,)


def test_zolf_top_jacobian(zolf):
    off, pro = structure(zolf)
    jac = block_jacobian(pro, off)
    e = sp.exp(-jet(0) - jet(1))
    assert jac.matrix == sp.Matrix([[-e, -e], [1, 1]])
    assert jac.matrix.det() == 0


def test_degenerate_top_jacobian(degenerate):
    off, pro = structure(degenerate)
    jac = block_jacobian(pro, off)
    x, y = jet(0), jet(1)
    assert jac.cols == [jet(0, 2), jet(1, 2)]
    assert jac.matrix == sp.Matrix([[2 * y, -x], [-2 * x, 1]])
    assert pro.equation(1, 3).integral_terms == ()


def test_drive2_blocks(drive2):
    off, pro = structure(drive2)
    assert pro.blocks == [[(1, 0), (3, 0)], [(1, 1), (3, 1)], [(0, 0), (1, 2), (2, 0), (3, 2)]]
    m, rows, cols = sub_jacobian(pro, off, 2)
    assert rows == [(0, 0), (1, 2), (2, 0), (3, 2)]
    assert m.shape == (4, 4)
    m0, rows0, cols0 = sub_jacobian(pro, off, 0)
    # B_0 is differentiated up to order p + d_j - k_c = -1: no columns survive
    assert rows0 == [(1, 0), (3, 0)] and cols0 == []


def test_prolong_rejects_bad_orders(zolf):
    with pytest.raises(ProlongationError):
        prolong(zolf, (0, -1))
    with pytest.raises(ProlongationError):
        prolong(zolf, (0,))


def test_griewank_zero_pattern_on_bundled():
    systems = [parse_system(p.read_text()) for p in bundled_systems()]
    result = check_zero_pattern(systems)
    assert result.passed, result.detail


TRAJ = sp.sin(S) + S / 2


def _value(eq: IdaeEquation, t):
    """Evaluate an equation along x0(s) = sin(s) + s/2, integrals by quadrature."""
    subs = {jet(0, k): sp.diff(TRAJ, S, k).xreplace({S: t}) for k in range(3)}
    total = float(eq.dae_part.xreplace({**subs, T: sp.Float(t)}))
    for term in eq.integral_terms:
        f = sp.lambdify([S], term.integrand.xreplace({jet(0): TRAJ}), "math")
        kern = sp.lambdify([S], term.kernel_expr().xreplace({T: t}), "math")
        total += quad(lambda s: kern(s) * f(s), 0, t, epsabs=1e-13, epsrel=1e-13)[0]
    return total


@settings(max_examples=25, deadline=None)
@given(kernel=st.lists(st.integers(-2, 2), min_size=1, max_size=3), power=st.integers(1, 2),
       t=st.floats(0.3, 1.5))
def test_leibniz_derivative_matches_finite_difference(kernel, power, t):
    if not any(kernel):
        kernel[0] = 1
    eq = IdaeEquation(jet(0) * T, (IntegralTerm(tuple(kernel), jet(0) ** power + S),))
    d_eq = differentiate(eq)
    h = 1e-5
    fd = (_value(eq, t + h) - _value(eq, t - h)) / (2 * h)
    assert abs(_value(d_eq, t) - fd) < 1e-6


@settings(max_examples=30, deadline=None)
@given(kernel=st.lists(st.integers(-3, 3), min_size=1, max_size=4))
def test_repeated_differentiation_removes_integrals(kernel):
    if not any(kernel):
        kernel[-1] = 1
    eq = IdaeEquation(sp.Integer(0), (IntegralTerm(tuple(kernel), jet(0)),))
    for _ in range(len(kernel)):
        eq = differentiate(eq)
    assert eq.integral_terms == ()
    # the last surviving coefficient a_m contributes m! * a_m * x^(0)
    m = max(k for k, a in enumerate(kernel) if a != 0)
    lead = normalize(eq.dae_part).coeff(jet(0, len(kernel) - 1 - m))
    assert lead == math.factorial(m) * kernel[m]


def test_smoothing_integrals_of_degenerate(degenerate):
    off = solve_offsets(combined_signature(degenerate).sigma)
    pro = prolong(degenerate, off.c)
    # B_0 = {F2} sees x and y one order below zero
    assert smoothing_integrals(pro, off, 0) == [(0, -1), (1, -1)]
    assert all(not smoothing_integrals(pro, off, p) for p in range(1, pro.k_c + 1))
