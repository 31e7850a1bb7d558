import pytest
import sympy as sp

from idae.cli import bundled_systems
from idae.expressions import S, T, jet, normalize
from idae.model import (DslSyntaxError, IdaeEquation, IdaeSystem, IntegralTerm, ModelError, canonical_terms,
                        decompose, format_term, parse_system, print_system, recompose, split_integral_body)


def same_system(a: IdaeSystem, b: IdaeSystem) -> bool:
    if a.names != b.names or a.n != b.n or a.t0 != b.t0:
        return False
    for ea, eb in zip(a.equations, b.equations):
        if normalize(ea.dae_part - eb.dae_part) != 0:
            return False
        if canonical_terms(ea.integral_terms) != canonical_terms(eb.integral_terms):
            return False
    return True


@pytest.mark.parametrize("path", bundled_systems(), ids=lambda p: p.stem)
def test_print_parse_round_trip(path):
    sys = parse_system(path.read_text())
    again = parse_system(print_system(sys))
    assert same_system(sys, again)
    assert print_system(again) == print_system(sys)


def test_zolf_parse(zolf):
    assert zolf.names == ("x1", "x2")
    eq1, eq2 = zolf.equations
    assert normalize(eq1.dae_part - (sp.exp(-jet(0) - jet(1)) - sp.exp(-T))) == 0
    assert not eq1.integral_terms
    assert normalize(eq2.dae_part - T ** 2) == 0
    terms = canonical_terms(eq2.integral_terms)
    assert [t.kernel for t in terms] == [(1,), (0, 1)]
    assert normalize(terms[0].integrand - (jet(0) + jet(1))) == 0
    assert normalize(terms[1].integrand - jet(0) * jet(1)) == 0


def test_params_are_inlined(drive1):
    eq = drive1.equations[0]
    assert not {s.name for s in eq.dae_part.free_symbols} & {"J", "K", "B"}


def test_split_integral_body_expands_kernel():
    body = (T - S) ** 2 * jet(0) + S * jet(1)
    terms = split_integral_body(body)
    by_degree = {t.degree: t.integrand for t in terms}
    assert set(by_degree) == {0, 2}
    assert normalize(by_degree[2] - jet(0)) == 0
    assert normalize(by_degree[0] - S * jet(1)) == 0


def test_kernel_cap():
    with pytest.raises(ModelError, match="cap"):
        split_integral_body((T - S) ** 5 * jet(0))


def test_integrand_may_not_depend_on_t():
    with pytest.raises(ModelError):
        IntegralTerm((1,), T * jet(0))


def test_format_term_linear_kernel():
    assert format_term(IntegralTerm((0, 1), jet(0)), ("x",)) == "int((t-s) * (x))"


def test_non_square_system_rejected():
    with pytest.raises(ModelError, match="square"):
        parse_system("system a { time t from 0; var x, y; eq x = 0; }")


def test_undeclared_variable():
    with pytest.raises(ModelError):
        parse_system("system a { time t from 0; var x; eq x + y = 0; }")


def test_disallowed_function():
    with pytest.raises(ModelError, match="not allowed"):
        parse_system("system a { time t from 0; var x; eq log(x) = 0; }")


def test_syntax_error_has_position():
    with pytest.raises(DslSyntaxError) as info:
        parse_system("system a {\n  time t from 0;\n  var x;\n  eq x + = 0;\n}")
    assert info.value.line == 4


def test_decompose_recompose(zolf):
    phi, big_phi = decompose(zolf)
    assert same_system(recompose(zolf, phi, big_phi), zolf)


def test_substitute_leaves_integrands():
    eq = IdaeEquation(jet(0) + jet(1), (IntegralTerm((1,), jet(0)),))
    out = eq.substitute({jet(0): sp.Integer(3)})
    assert out.dae_part == 3 + jet(1)
    assert out.integral_terms == eq.integral_terms
