"""Real witness points of polynomial constraint sets by homotopy continuation."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .expressions import jet_info, jets
from .ire import gauss_newton, residual_exprs

IMAG_TOL = 1e-6
DEDUP_TOL = 1e-6
REFINE_TOL = 1e-10
# smallest/largest singular value below this marks a singular endpoint
SINGULAR_TOL = 1e-7
DIVERGED = 1e8


class WitnessError(ValueError):
    phase = 2


@dataclass
class WitnessPoint:
    coords: dict
    residual: float
    component_id: int | None = None
    refined: bool = True
    singular: bool = False

    def as_names(self, names) -> dict:
        out = {}
        for sym, v in self.coords.items():
            info = jet_info(sym)
            if info is None:
                out[str(sym)] = v
                continue
            name = names[info.var_index]
            out[name if info.deriv_order == 0 else f"der({name},{info.deriv_order})"] = v
        return out


@dataclass
class WitnessSet:
    points: list
    singular_points: list = field(default_factory=list)
    n_paths: int = 0
    n_diverged: int = 0
    n_failed: int = 0
    n_stalled: int = 0
    variables: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.points)

    def __len__(self) -> int:
        return len(self.points)


# --------------------------------------------------------------------------
# squaring and path tracking
# --------------------------------------------------------------------------

def _total_degree(e, gens) -> int:
    try:
        return sp.Poly(e, *gens).total_degree()
    except sp.PolynomialError as exc:
        raise WitnessError(f"constraint {e} is not polynomial in the jet variables; "
                           "homotopy witness points need polynomial constraints") from exc


def _check_polynomial(exprs, gens):
    for e in exprs:
        _total_degree(e, gens)
        if any(not isinstance(c, (sp.Integer, sp.Rational, sp.Float)) and not c.is_number
               for c in sp.Poly(e, *gens).coeffs()):
            raise WitnessError(f"constraint {e} has non-numeric coefficients")


def square_system(exprs, gens, rng):
    """Add random real slices (under-determined) or take random combinations (over-determined)."""
    n, m = len(gens), len(exprs)
    slices = []
    if m < n:
        for _ in range(n - m):
            a = rng.standard_normal(n)
            b = rng.standard_normal()
            slices.append(sum(float(ai) * g for ai, g in zip(a, gens)) - float(b))
        return list(exprs) + slices, slices
    if m > n:
        mix = rng.standard_normal((n, m))
        combo = [sum(float(mix[i, k]) * exprs[k] for k in range(m)) for i in range(n)]
        return [sp.expand(e) for e in combo], []
    return list(exprs), []


class _Homotopy:
    def __init__(self, exprs, gens, gamma):
        self.n = len(gens)
        self.deg = [max(1, _total_degree(e, gens)) for e in exprs]
        self.gamma = gamma
        self.f = sp.lambdify([gens], exprs, "numpy")
        self.fx = sp.lambdify([gens], sp.Matrix(exprs).jacobian(gens), "numpy")

    def F(self, x):
        return np.array(self.f(x), dtype=complex)

    def Fx(self, x):
        return np.array(self.fx(x), dtype=complex).reshape(self.n, self.n)

    def G(self, x):
        return np.array([x[i] ** d - 1 for i, d in enumerate(self.deg)], dtype=complex)

    def Gx(self, x):
        return np.diag([d * x[i] ** (d - 1) for i, d in enumerate(self.deg)]).astype(complex)

    def H(self, x, tau):
        return (1 - tau) * self.gamma * self.G(x) + tau * self.F(x)

    def Hx(self, x, tau):
        return (1 - tau) * self.gamma * self.Gx(x) + tau * self.Fx(x)

    def Ht(self, x, tau):
        return self.F(x) - self.gamma * self.G(x)

    def starts(self):
        roots = [np.exp(2j * np.pi * np.arange(d) / d) for d in self.deg]
        for combo in itertools.product(*roots):
            yield np.array(combo, dtype=complex)


def _track(hom: _Homotopy, x: np.ndarray, *, h0=0.02, h_min=1e-9, h_max=0.1, tau_end=1.0):
    """Euler predictor, Newton corrector, adaptive step. Returns ``(x, status)``."""
    tau, h, good = 0.0, h0, 0
    while tau < tau_end:
        h = min(h, tau_end - tau)
        try:
            dx = np.linalg.solve(hom.Hx(x, tau), -hom.Ht(x, tau))
        except np.linalg.LinAlgError:
            return x, "failed"
        xp, tn = x + h * dx, tau + h
        ok = False
        for _ in range(4):
            try:
                step = np.linalg.solve(hom.Hx(xp, tn), -hom.H(xp, tn))
            except np.linalg.LinAlgError:
                break
            xp = xp + step
            if np.linalg.norm(step) < 1e-9 * (1 + np.linalg.norm(xp)):
                ok = True
                break
        if ok:
            x, tau = xp, tn
            good += 1
            if good >= 3:
                h, good = min(2 * h, h_max), 0
        else:
            h, good = h / 2, 0
            if h < h_min:
                # paths into singular endpoints stall just short of the target
                return x, "endgame" if tau > 0.99 else "failed"
        if np.linalg.norm(x) > DIVERGED:
            return x, "diverged"
    return x, "ok"


def _finish(hom: _Homotopy, x):
    """Newton at the target system; singular endpoints converge only slowly."""
    for _ in range(30):
        try:
            step = np.linalg.lstsq(hom.Fx(x), -hom.F(x), rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        x = x + step
        if np.linalg.norm(step) < 1e-14 * (1 + np.linalg.norm(x)):
            break
    return x


# --------------------------------------------------------------------------
# public operations
# --------------------------------------------------------------------------

def newton_refine(exprs, gens, coords, tol: float = REFINE_TOL, max_iter: int = 50) -> WitnessPoint:
    """Damped Gauss-Newton on ``exprs``; flags the point if it stalls."""
    f = sp.lambdify([gens], list(exprs), "numpy")
    jm = sp.lambdify([gens], sp.Matrix(list(exprs)).jacobian(gens), "numpy")
    x0 = np.array([coords[g] for g in gens], dtype=float) if isinstance(coords, dict) else np.array(coords, float)
    x, res, ok = gauss_newton(lambda v: np.array(f(v), dtype=float),
                              lambda v: np.array(jm(v), dtype=float).reshape(len(exprs), len(gens)),
                              x0, tol, max_iter)
    jac = np.array(jm(x), dtype=float).reshape(len(exprs), len(gens))
    sv = np.linalg.svd(jac, compute_uv=False)
    singular = bool(sv.size and (sv[0] == 0 or sv[-1] / sv[0] < SINGULAR_TOL or len(sv) < len(gens)))
    return WitnessPoint({g: float(v) for g, v in zip(gens, x)}, res, refined=ok, singular=singular)


def witness_points(constraints, gens=None, *, seed: int = 0, imag_tol: float = IMAG_TOL,
                   dedup_tol: float = DEDUP_TOL, refine_tol: float = REFINE_TOL) -> WitnessSet:
    """Real points on the zero set of polynomial ``constraints``.

    The system is squared with random real slices, every path of a
    total-degree homotopy is tracked, and the real endpoints are refined and
    deduplicated. Endpoints where the squared system is singular (points on
    non-reduced parts of the variety) are kept apart in ``singular_points``.
    """
    exprs = [sp.expand(sp.sympify(e), power_exp=False) for e in constraints]
    exprs = [e for e in exprs if e != 0]
    if gens is None:
        gens = sorted(set().union(*[e.free_symbols for e in exprs]) if exprs else set(), key=lambda s: s.name)
    gens = list(gens)
    if not exprs or not gens:
        raise WitnessError("no constraints to sample")
    _check_polynomial(exprs, gens)
    rng = np.random.default_rng(seed)
    square, slices = square_system(exprs, gens, rng)
    gamma = np.exp(2j * np.pi * rng.uniform())
    hom = _Homotopy(square, gens, gamma)
    real, n_paths, n_div, n_fail, n_stalled = [], 0, 0, 0, 0
    for start in hom.starts():
        n_paths += 1
        x, status = _track(hom, start)
        if status == "diverged":
            n_div += 1
            continue
        if status == "failed":
            n_fail += 1
            continue
        if status == "endgame":
            n_stalled += 1
        x = _finish(hom, x)
        if np.max(np.abs(x.imag)) > imag_tol * max(1.0, float(np.max(np.abs(x.real)))):
            continue
        real.append(x.real)
    full = list(exprs) + list(slices)
    points, singular = [], []
    for x in real:
        wp = newton_refine(full, gens, x, refine_tol)
        # square system combinations may admit extra roots; check the originals
        res = max(abs(float(e.xreplace({g: v for g, v in wp.coords.items()}))) for e in exprs)
        wp.residual = max(wp.residual, res)
        if wp.residual > max(refine_tol, 1e-8) and not wp.singular:
            continue
        pool = singular if wp.singular else points
        vec = np.array([wp.coords[g] for g in gens])
        if any(np.max(np.abs(vec - np.array([q.coords[g] for g in gens]))) < dedup_tol for q in pool):
            continue
        pool.append(wp)
    if not points and not singular and n_paths == n_div + n_fail:
        raise WitnessError("every homotopy path diverged or failed: no real points found")
    key = lambda w: tuple(round(w.coords[g], 8) for g in gens)
    return WitnessSet(sorted(points, key=key), sorted(singular, key=key), n_paths, n_div, n_fail, n_stalled, gens)


# --------------------------------------------------------------------------
# system level helpers
# --------------------------------------------------------------------------

def independent_blocks(sys) -> list[list[int]]:
    """Groups of equations sharing no dependent variable, as sorted index lists."""
    n = sys.n
    parent = list(range(2 * n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, eq in enumerate(sys.equations):
        syms = set(jets(eq.dae_part))
        for term in eq.integral_terms:
            syms |= jets(term.integrand)
        for s in syms:
            parent[find(i)] = find(n + jet_info(s).var_index)
    groups: dict[int, list] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values())


def system_witness(prolonged, *, seed: int = 0, **kw):
    """Witness points of ``F^(c)`` at ``t0``, block by block, then combined.

    Returns ``(points, per_block)`` where ``points`` are coordinate dicts over
    all jets and ``per_block`` the WitnessSets of the independent blocks.
    """
    sys = prolonged.base
    t0 = sys.t0
    per_block = []
    for k, rows in enumerate(independent_blocks(sys)):
        eqs = [e for i in rows for e in prolonged.derivs[i]]
        exprs = residual_exprs(eqs, t0)
        exprs = [e.xreplace({sp.Symbol(name, real=True): v for name, v in sys.constants.items()}) for e in exprs]
        per_block.append(witness_points(exprs, seed=seed + 7919 * k, **kw))
    combined = []
    for combo in itertools.product(*[ws.points for ws in per_block]):
        coords: dict = {}
        for wp in combo:
            coords.update(wp.coords)
        combined.append(coords)
    return combined, per_block


def group_components(points, jac, c, t0=0.0, tol=None) -> list[dict]:
    """Group points by (rank, replaced-column set) of the top-block Jacobian.

    The groups are candidate components: two points share a group when their
    ranks and pivot columns agree, which is necessary but not sufficient for
    lying on the same irreducible component.
    """
    from .ire import block_ranks
    from .numrank import DEFAULT_RANK_TOL

    tol = DEFAULT_RANK_TOL if tol is None else tol
    groups: dict = {}
    for p in points:
        blocks = block_ranks(jac, p, t0, c, tol)
        rank = sum(b.report.r for b in blocks)
        f_rows = tuple(sorted(i for b in blocks if b.deficiency for i in b.f_rows))
        s_cols = tuple(sorted(j for b in blocks if b.deficiency for j in b.s_cols))
        key = (-rank, s_cols)
        g = groups.setdefault(key, {"rank": rank, "f_rows": f_rows, "s_cols": s_cols, "points": []})
        g["points"].append(p)
    out = [groups[k] for k in sorted(groups)]
    for cid, g in enumerate(out):
        g["component_id"] = cid
    return out
