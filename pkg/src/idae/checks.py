"""Self-checks against independent oracles, run by ``idae check``."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import sympy as sp
from scipy.integrate import quad

from .expressions import NEG_INF, T, jet, normalize, partial
from .integrator import materialize_integrals
from .model import IdaeEquation, IntegralTerm
from .offsets import hvt


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def brute_force_hvt(sigma):
    """Best transversal value by enumerating permutations, ``None`` if none is finite."""
    n = len(sigma)
    best = None
    for perm in itertools.permutations(range(n)):
        vals = [sigma[i][perm[i]] for i in range(n)]
        if any(v == NEG_INF for v in vals):
            continue
        total = sum(vals)
        best = total if best is None else max(best, total)
    return best


def random_sigma(rng, n, p_absent=0.3, low=-2, high=4):
    return [[NEG_INF if rng.random() < p_absent else int(rng.integers(low, high + 1)) for _ in range(n)]
            for _ in range(n)]


def check_hvt(n_cases: int = 200, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_cases):
        n = int(rng.integers(1, 7))
        sigma = random_sigma(rng, n)
        expected = brute_force_hvt(sigma)
        try:
            _, value = hvt(sigma)
        except ValueError:
            value = None
        bad += value != expected
    return CheckResult("hvt-brute-force", bad == 0, f"{n_cases - bad}/{n_cases} agree")


_ATOMS = [lambda a: sp.sin(a), lambda a: sp.cos(a), lambda a: sp.exp(a / 3), lambda a: sp.tanh(a), lambda a: a ** 2]


def random_expression(rng, symbols, depth: int = 3):
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.8:
            return symbols[int(rng.integers(len(symbols)))]
        return sp.Rational(int(rng.integers(-5, 6)), int(rng.integers(1, 4)))
    kind = int(rng.integers(4))
    a = random_expression(rng, symbols, depth - 1)
    b = random_expression(rng, symbols, depth - 1)
    if kind == 0:
        return a + b
    if kind == 1:
        return a * b
    if kind == 2:
        return a - b
    return _ATOMS[int(rng.integers(len(_ATOMS)))](a)


def check_jacobians(n_cases: int = 50, seed: int = 1, tol: float = 1e-6) -> CheckResult:
    rng = np.random.default_rng(seed)
    syms = [jet(0), jet(0, 1), jet(1), jet(1, 2), T]
    worst = 0.0
    for _ in range(n_cases):
        e = normalize(random_expression(rng, syms))
        point = {s: float(rng.uniform(-1, 1)) for s in syms}
        f = sp.lambdify([syms], e, "math")
        for k, s in enumerate(syms[:-1]):
            exact = float(partial(e, s).xreplace({q: sp.Float(v) for q, v in point.items()}))
            h = 1e-6
            x = [point[q] for q in syms]
            xp, xm = list(x), list(x)
            xp[k] += h
            xm[k] -= h
            fd = (f(xp) - f(xm)) / (2 * h)
            worst = max(worst, abs(fd - exact) / max(1.0, abs(exact)))
    return CheckResult("finite-difference-jacobian", worst < tol, f"max relative error {worst:.2e}")


def check_reconstruction(n_cases: int = 20, seed: int = 2, tol: float = 1e-8) -> CheckResult:
    """Integral states versus adaptive quadrature along a known trajectory."""
    rng = np.random.default_rng(seed)
    x = jet(0)
    s = sp.Symbol("s", real=True)
    worst = 0.0
    for _ in range(n_cases):
        kernel = tuple(int(v) for v in rng.integers(-3, 4, size=int(rng.integers(1, 5))))
        if not any(kernel):
            kernel = (1,)
        g = normalize(random_expression(rng, [x], depth=2) + s * rng.integers(0, 2))
        term = IntegralTerm(kernel, g)
        mat = materialize_integrals([IdaeEquation(sp.Integer(0), (term,))])
        traj = lambda tt: math.sin(tt) + 0.5 * tt
        t_end = float(rng.uniform(0.5, 2.0))
        # z_p(t_end) = int s^p g(x(s), s) ds
        gf = sp.lambdify([x, s], g, "math")
        z_vals = {}
        for (gi, p), m in mat.z_index.items():
            z_vals[sp.Symbol(f"z{m}", real=True)] = quad(lambda u, p=p: u ** p * gf(traj(u), u), 0, t_end,
                                                         epsabs=1e-13, epsrel=1e-13)[0]
        recon = float(mat.residuals[0].xreplace({**{k: sp.Float(v, 20) for k, v in z_vals.items()}, T: t_end}))
        kern = sp.lambdify([s], term.kernel_expr().xreplace({T: t_end}), "math")
        direct = quad(lambda u: kern(u) * gf(traj(u), u), 0, t_end, epsabs=1e-13, epsrel=1e-13)[0]
        worst = max(worst, abs(recon - direct))
    return CheckResult("integral-reconstruction", worst < tol, f"max abs error {worst:.2e}")


def check_zero_pattern(systems) -> CheckResult:
    """Top-block Jacobian entries vanish where ``d_j - c_i > sigma_ij``; Griewank equality elsewhere."""
    from .pipeline import analyze_structure

    bad = []
    for sys in systems:
        sa = analyze_structure(sys)
        sig, off, jac = sa.signature.sigma, sa.offsets, sa.jacobian.matrix
        for i in range(sys.n):
            for j in range(sys.n):
                gap = off.d[j] - off.c[i]
                if gap > sig[i][j] and jac[i, j] != 0:
                    bad.append(f"{sys.name}[{i},{j}] nonzero")
                if gap == sig[i][j] and gap >= 0:
                    direct = partial(sys.equations[i].dae_part, jet(j, gap))
                    if normalize(direct - jac[i, j]) != 0:
                        bad.append(f"{sys.name}[{i},{j}] differs from the base partial")
    return CheckResult("griewank-zero-pattern", not bad, "; ".join(bad) or f"{len(systems)} systems")


def run_all(systems=()) -> list[CheckResult]:
    out = [check_hvt(), check_jacobians(), check_reconstruction()]
    if systems:
        out.append(check_zero_pattern(systems))
    return out
