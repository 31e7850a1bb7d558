"""IDAE systems: data types, the ``.idae`` text format, and the phi / integral split."""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from fractions import Fraction

import sympy as sp
from sympy.printing.str import StrPrinter

from .expressions import (
    ALLOWED_FUNCTIONS,
    S,
    T,
    jet,
    jet_info,
    xi,
    normalize,
    STATE,
    EMBEDDED_XI,
)

KERNEL_CAP = 4


class ModelError(ValueError):
    pass


class DslSyntaxError(ModelError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{msg} (line {line}, column {col})")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class IntegralTerm:
    """``int_{t0}^t sum_k kernel[k] (t-s)^k * integrand ds``.

    The integrand lives on the integration variable: jet symbols inside it are
    read as ``x(s)``, and it may mention ``s`` but never ``t``.
    """

    kernel: tuple
    integrand: sp.Expr

    def __post_init__(self):
        if T in sp.sympify(self.integrand).free_symbols:
            raise ModelError("integrand may not depend on t; put t-dependence in the kernel")

    @property
    def degree(self) -> int:
        nz = [k for k, a in enumerate(self.kernel) if a != 0]
        return max(nz) if nz else -1

    def kernel_expr(self) -> sp.Expr:
        return sum((sp.Rational(a) * (T - S) ** k for k, a in enumerate(self.kernel)), sp.Integer(0))

    def body(self) -> sp.Expr:
        """Kernel times integrand as a single expression in ``t`` and ``s``."""
        return self.kernel_expr() * self.integrand


@dataclass(frozen=True)
class IdaeEquation:
    dae_part: sp.Expr = sp.Integer(0)
    integral_terms: tuple = ()

    @property
    def has_integrals(self) -> bool:
        return bool(self.integral_terms)

    def is_empty(self) -> bool:
        return self.dae_part == 0 and not self.integral_terms

    def substitute(self, mapping) -> "IdaeEquation":
        """Substitute in the DAE part only; integrands are left untouched."""
        return IdaeEquation(normalize(self.dae_part.xreplace(mapping)), self.integral_terms)


@dataclass(frozen=True)
class IdaeSystem:
    name: str
    names: tuple
    equations: tuple
    t0: sp.Rational = sp.Integer(0)
    params: dict = field(default_factory=dict)
    # xi symbol name -> float, filled in by index reduction by embedding
    constants: dict = field(default_factory=dict)
    kinds: tuple = ()

    def __post_init__(self):
        if not self.kinds:
            object.__setattr__(self, "kinds", tuple(STATE for _ in self.names))
        if len(self.equations) != len(self.names):
            raise ModelError(
                f"system is not square: {len(self.equations)} equations, {len(self.names)} variables"
            )
        n = len(self.names)
        for eq in self.equations:
            exprs = [eq.dae_part] + [term.integrand for term in eq.integral_terms]
            for e in exprs:
                for sym in sp.sympify(e).free_symbols:
                    info = jet_info(sym)
                    if info is not None and info.kind == STATE and info.var_index >= n:
                        raise ModelError(f"jet variable {sym} refers to an undeclared variable")

    @property
    def n(self) -> int:
        return len(self.names)

    def with_equations(self, equations, names=None, kinds=None, constants=None) -> "IdaeSystem":
        return replace(
            self,
            equations=tuple(equations),
            names=tuple(names if names is not None else self.names),
            kinds=tuple(kinds if kinds is not None else self.kinds),
            constants=dict(constants if constants is not None else self.constants),
        )


def decompose(sys: IdaeSystem):
    """Split into DAE parts ``phi_i`` and integral term lists ``Phi_i``."""
    phi = [eq.dae_part for eq in sys.equations]
    big_phi = [list(eq.integral_terms) for eq in sys.equations]
    return phi, big_phi


def recompose(sys: IdaeSystem, phi, big_phi) -> IdaeSystem:
    eqs = [IdaeEquation(normalize(p), tuple(terms)) for p, terms in zip(phi, big_phi)]
    return sys.with_equations(eqs)


def split_integral_body(body, kernel_cap: int = KERNEL_CAP) -> list[IntegralTerm]:
    """Split ``K(t-s) g(s, x(s))`` into monomial-kernel terms ``(t-s)^k h_k``."""
    tau = sp.Dummy("tau")
    expanded = sp.expand(sp.sympify(body).xreplace({T: S + tau}), power_exp=False)
    poly = sp.Poly(expanded, tau)
    terms = []
    for (k,), coeff in sorted(poly.terms()):
        if k > kernel_cap:
            raise ModelError(f"kernel degree {k} exceeds the cap {kernel_cap}")
        coeff = normalize(coeff)
        if coeff == 0:
            continue
        if tau in coeff.free_symbols:
            raise ModelError("kernel is not polynomial in (t-s)")
        kernel = tuple(1 if i == k else 0 for i in range(k + 1))
        terms.append(IntegralTerm(kernel, coeff))
    return terms


def canonical_terms(terms) -> tuple:
    """Merge integral terms to one monomial kernel per power, sorted by power."""
    by_power: dict[int, sp.Expr] = {}
    for term in terms:
        for k, a in enumerate(term.kernel):
            if a != 0:
                by_power[k] = by_power.get(k, 0) + sp.Rational(a) * term.integrand
    out = []
    for k in sorted(by_power):
        g = normalize(by_power[k])
        if g != 0:
            out.append(IntegralTerm(tuple(1 if i == k else 0 for i in range(k + 1)), g))
    return tuple(out)


# --------------------------------------------------------------------------
# text format
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>(\#|//)[^\n]*)
  | (?P<num>\d+(\.\d*)?([eE][-+]?\d+)?|\.\d+([eE][-+]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^(),;={}])
    """,
    re.VERBOSE,
)

_XI_NAME = re.compile(r"^xi\d+$")

_KEYWORDS = {"system", "time", "from", "var", "param", "eq"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise DslSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str, kernel_cap: int):
        self.toks = _tokenize(text)
        self.i = 0
        self.kernel_cap = kernel_cap
        self.var_index: dict[str, int] = {}
        self.params: dict[str, sp.Rational] = {}
        self.in_integral = False
        self.integrals: dict[sp.Symbol, sp.Expr] = {}
        self.constants: dict[str, float] = {}

    # token helpers
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        raise DslSyntaxError(msg, tok.line, tok.col)

    def accept(self, text):
        if self.tok.text == text and self.tok.kind in ("op", "id"):
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")

    def ident(self):
        if self.tok.kind != "id":
            self.error(f"expected identifier, found {self.tok.text or 'end of input'!r}")
        tok = self.tok
        self.i += 1
        return tok

    # grammar
    def system(self) -> IdaeSystem:
        self.expect("system")
        name = self.ident().text
        self.expect("{")
        t0 = sp.Integer(0)
        names: list[str] = []
        raw_eqs = []
        while not self.accept("}"):
            tok = self.tok
            if self.accept("time"):
                tname = self.ident()
                if tname.text != "t":
                    self.error("the independent variable must be called t", tname)
                self.expect("from")
                t0 = self.const_expr()
                self.expect(";")
            elif self.accept("var"):
                while True:
                    v = self.ident()
                    if v.text in self.var_index or v.text in _KEYWORDS or v.text in ("t", "s"):
                        self.error(f"bad or duplicate variable name {v.text!r}", v)
                    self.var_index[v.text] = len(names)
                    names.append(v.text)
                    if not self.accept(","):
                        break
                self.expect(";")
            elif self.accept("param"):
                p = self.ident()
                self.expect("=")
                value = self.const_expr()
                if _XI_NAME.match(p.text):
                    self.constants[p.text] = float(value)
                else:
                    self.params[p.text] = value
                self.expect(";")
            elif self.accept("eq"):
                raw_eqs.append((tok, self.equation()))
            else:
                self.error(f"unexpected {tok.text or 'end of input'!r}")
        if self.tok.kind != "eof":
            self.error("trailing input after system block")
        if not names:
            self.error("system declares no variables", tok)
        eqs = [e for _, e in raw_eqs]
        if len(eqs) != len(names):
            raise ModelError(f"system is not square: {len(eqs)} equations, {len(names)} variables")
        return IdaeSystem(name=name, names=tuple(names), equations=tuple(eqs), t0=t0,
                          params=dict(self.params), constants=dict(self.constants))

    def const_expr(self):
        tok = self.tok
        e = self.expr()
        if e.free_symbols:
            self.error("expected a constant", tok)
        return sp.Rational(e) if e.is_Rational else e

    def equation(self) -> IdaeEquation:
        start = self.tok
        if self.tok.text in (";", "="):
            self.error("empty equation body")
        self.integrals = {}
        lhs = self.expr()
        rhs = sp.Integer(0)
        if self.accept("="):
            rhs = self.expr()
        self.expect(";")
        full = sp.expand(lhs - rhs, power_exp=False)
        placeholders = list(self.integrals)
        terms = []
        dae = full
        if placeholders:
            poly = sp.Poly(full, *placeholders)
            dae = sp.Integer(0)
            for monom, coeff in poly.terms():
                if sum(monom) == 0:
                    dae += coeff
                    continue
                if sum(monom) > 1 or coeff.free_symbols:
                    self.error("integrals must enter linearly with constant coefficients", start)
                k = monom.index(1)
                terms.extend(split_integral_body(coeff * self.integrals[placeholders[k]], self.kernel_cap))
        eq = IdaeEquation(normalize(dae), canonical_terms(terms))
        if eq.is_empty():
            self.error("equation is identically zero", start)
        return eq

    def expr(self):
        left = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            right = self.term()
            left = left + right if op == "+" else left - right
        return left

    def term(self):
        left = self.unary()
        while self.tok.text in ("*", "/") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            right = self.unary()
            left = left * right if op == "*" else left / right
        return left

    def unary(self):
        if self.accept("-"):
            return -self.unary()
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self):
        base = self.postfix()
        if self.tok.text in ("^", "**") and self.tok.kind == "op":
            tok = self.tok
            self.i += 1
            exponent = self.unary()
            if not (exponent.is_Integer and exponent >= 0):
                self.error("only non-negative integer powers are allowed", tok)
            return base ** exponent
        return base

    def postfix(self):
        e = self.primary()
        # x(s) / der(x,k)(s) notation inside integrals
        if self.tok.text == "(" and self.toks[self.i + 1].text == "s" and self.toks[self.i + 2].text == ")":
            if not (self.in_integral and isinstance(e, sp.Symbol) and jet_info(e) is not None):
                self.error("'(s)' evaluation is only allowed on variables inside int(...)")
            self.i += 3
        return e

    def primary(self):
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return sp.Rational(tok.text)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind != "id":
            self.error(f"unexpected {tok.text or 'end of input'!r}")
        self.i += 1
        name = tok.text
        if self.tok.text == "(" and self.tok.kind == "op" and name not in self.var_index:
            return self.call(tok)
        if name in self.var_index:
            return jet(self.var_index[name], 0)
        if name in self.params:
            return self.params[name]
        if name == "t":
            # inside int(...) t may only enter polynomially, as (t-s); checked when splitting
            return T
        if name == "s":
            if not self.in_integral:
                self.error("s is only defined inside int(...)", tok)
            return S
        if name in self.constants:
            return xi(int(name[2:]))
        if name == "pi":
            return sp.pi
        self.error(f"unknown identifier {name!r}", tok)

    def call(self, tok):
        name = tok.text
        self.expect("(")
        if name == "der":
            v = self.ident()
            if v.text not in self.var_index:
                self.error(f"unknown variable {v.text!r}", v)
            self.expect(",")
            k = self.tok
            if k.kind != "num" or not k.text.isdigit():
                self.error("derivative order must be a non-negative integer", k)
            self.i += 1
            self.expect(")")
            return jet(self.var_index[v.text], int(k.text))
        if name == "int":
            if self.in_integral:
                self.error("nested integrals are not supported", tok)
            self.in_integral = True
            body = self.expr()
            self.in_integral = False
            self.expect(")")
            ph = sp.Symbol(f"__int{len(self.integrals)}")
            self.integrals[ph] = body
            return ph
        if name in ALLOWED_FUNCTIONS:
            arg = self.expr()
            self.expect(")")
            return ALLOWED_FUNCTIONS[name](arg)
        self.error(f"function {name!r} is not allowed (allowed: {', '.join(sorted(ALLOWED_FUNCTIONS))})", tok)


def parse_system(text: str, kernel_cap: int = KERNEL_CAP) -> IdaeSystem:
    """Parse the ``system name { ... }`` text format."""
    return _Parser(text, kernel_cap).system()


class _DslPrinter(StrPrinter):
    def __init__(self, names, constants):
        super().__init__({"order": "lex"})
        self.names = names
        self.constants = constants

    def _print_Symbol(self, expr):
        info = jet_info(expr)
        if info is None:
            return expr.name
        if info.kind == EMBEDDED_XI:
            return expr.name
        name = self.names[info.var_index]
        return name if info.deriv_order == 0 else f"der({name},{info.deriv_order})"

    def _print_Pow(self, expr, rational=False):
        return super()._print_Pow(expr, rational).replace("**", "^")


def format_expr(e, names, constants=None) -> str:
    return _DslPrinter(names, constants or {}).doprint(sp.sympify(e)).replace("**", "^")


def format_term(term: IntegralTerm, names) -> str:
    body = format_expr(term.integrand, names)
    parts = []
    for k, a in enumerate(term.kernel):
        if a == 0:
            continue
        coeff = "" if a == 1 else f"{sp.Rational(a)}*"
        power = "(t-s)" if k == 1 else f"(t-s)^{k}"
        parts.append(f"{coeff}{power}" if k > 0 else f"{sp.Rational(a)}")
    kernel = " + ".join(parts)
    if kernel == "1":
        return f"int({body})"
    if len(parts) == 1:
        return f"int({kernel} * ({body}))"
    return f"int(({kernel}) * ({body}))"


def format_equation(eq: IdaeEquation, names) -> str:
    pieces = []
    if eq.dae_part != 0 or not eq.integral_terms:
        pieces.append(format_expr(eq.dae_part, names))
    pieces.extend(format_term(term, names) for term in eq.integral_terms)
    return " + ".join(pieces) + " = 0"


def _format_number(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(sp.Rational(v)) if sp.sympify(v).is_Rational else str(v)


def print_system(sys: IdaeSystem) -> str:
    lines = [f"system {sys.name} {{", f"  time t from {_format_number(sys.t0)};", f"  var {', '.join(sys.names)};"]
    for name, value in sys.params.items():
        lines.append(f"  param {name} = {_format_number(value)};")
    for name, value in sorted(sys.constants.items()):
        lines.append(f"  param {name} = {_format_number(value)};")
    for eq in sys.equations:
        lines.append(f"  eq {format_equation(eq, sys.names)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def as_fraction(v) -> Fraction:
    return Fraction(str(sp.Rational(v)))
