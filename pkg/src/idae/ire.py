"""Index reduction by embedding and the regularization loop."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .expressions import EMBEDDED_U, T, evaluate, jet, jet_info, jets, xi
from .model import IdaeSystem
from .numrank import DEFAULT_RANK_TOL, RankReport, evaluate_matrix, numeric_rank
from .offsets import OffsetSolution, degrees_of_freedom, solve_offsets
from .prolongation import BlockJacobian, ProlongedSystem, block_jacobian, prolong
from .signature import combined_signature, omega_total, smoothing_tables

XI_RANGE = (0.5, 1.5)
REFINE_TOL = 1e-10


class RegularizationError(ValueError):
    phase = 3


# --------------------------------------------------------------------------
# point handling
# --------------------------------------------------------------------------

def residual_exprs(equations, t0) -> list[sp.Expr]:
    """DAE parts at ``t = t0``; every integral over ``[t0, t0]`` vanishes."""
    out = []
    for eq in equations:
        e = sp.sympify(eq.dae_part).xreplace({T: sp.sympify(t0)})
        if e != 0:
            out.append(e)
    return out


def gauss_newton(fun, jac, x0, tol: float = 1e-12, max_iter: int = 50):
    """Minimum-norm Gauss-Newton with step halving. Returns ``(x, residual, ok)``."""
    x = np.array(x0, dtype=float)
    r = np.asarray(fun(x), dtype=float)
    res = float(np.max(np.abs(r))) if r.size else 0.0
    for _ in range(max_iter):
        if res < tol:
            return x, res, True
        step = np.linalg.lstsq(np.atleast_2d(jac(x)), -r, rcond=None)[0]
        lam = 1.0
        while lam > 1e-4:
            xn = x + lam * step
            rn = np.asarray(fun(xn), dtype=float)
            rn_res = float(np.max(np.abs(rn)))
            if np.isfinite(rn_res) and rn_res < res:
                break
            lam /= 2
        else:
            return x, res, False
        x, r, res = xn, rn, rn_res
    return x, res, res < tol


def _solve_for(exprs, unknowns, x0, tol):
    active = [e for e in exprs if e.free_symbols & set(unknowns)]
    if not active:
        return np.array(x0, dtype=float), 0.0, True
    f = sp.lambdify([unknowns], active, "numpy")
    jm = sp.lambdify([unknowns], sp.Matrix(active).jacobian(unknowns), "numpy")
    return gauss_newton(lambda v: np.array(f(v), dtype=float),
                        lambda v: np.array(jm(v), dtype=float).reshape(len(active), len(unknowns)), x0, tol)


def complete_point(point: dict, equations, wanted, t0, *, seed: int = 0,
                   tol: float = REFINE_TOL, movable: bool = True) -> dict:
    """Extend ``point`` with values for the jets in ``wanted`` it lacks.

    The missing jets are first solved with the known coordinates fixed. When
    that is impossible (the equations carry constraints the point does not yet
    satisfy) and ``movable`` is set, every state jet is corrected by a
    minimum-norm Gauss-Newton refinement; embedding constants never move.
    """
    base = residual_exprs(equations, t0)
    symbols = set().union(*[e.free_symbols for e in base]) if base else set()
    missing = sorted({s for s in set(wanted) | symbols if s not in point}, key=lambda s: s.name)
    rng = np.random.default_rng(seed)
    guess = 0.1 * rng.standard_normal(len(missing))
    known = {k: sp.Float(v, 17) for k, v in point.items() if isinstance(k, sp.Symbol)}
    exprs = [e for e in (e.xreplace(known) for e in base) if e != 0]
    x, res, ok = _solve_for(exprs, missing, guess, tol)
    out = dict(point)
    if ok:
        out.update({s: float(v) for s, v in zip(missing, x)})
        return out
    if not movable:
        raise RegularizationError(f"could not complete the point consistently (residual {res:.3g})")
    frozen = {k: sp.Float(v, 17) for k, v in point.items()
              if isinstance(k, sp.Symbol) and not (jet_info(k) and jet_info(k).kind == "state")}
    movers = sorted((set(point) - set(frozen)) & symbols, key=lambda s: s.name) + missing
    start = [point[s] for s in movers[:len(movers) - len(missing)]] + list(x)
    exprs = [e for e in (e.xreplace(frozen) for e in base) if e != 0]
    x, res, ok = _solve_for(exprs, movers, start, tol)
    if not ok:
        raise RegularizationError(f"could not refine the point onto the constraints (residual {res:.3g})")
    out.update({s: float(v) for s, v in zip(movers, x)})
    return out


def max_residual(equations, point, t0) -> float:
    vals = [abs(evaluate(e, point, None)) for e in residual_exprs(equations, t0)]
    return max(vals, default=0.0)


# --------------------------------------------------------------------------
# augmentation
# --------------------------------------------------------------------------

def jacobian_blocks(mat: sp.Matrix) -> list[tuple[list, list]]:
    """Connected components of the symbolic nonzero pattern as (rows, cols)."""
    n_rows, n_cols = mat.shape
    parent = list(range(n_rows + n_cols))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n_rows):
        for j in range(n_cols):
            if mat[i, j] != 0:
                parent[find(i)] = find(n_rows + j)
    groups: dict[int, tuple[list, list]] = {}
    for i in range(n_rows):
        groups.setdefault(find(i), ([], []))[0].append(i)
    for j in range(n_cols):
        groups.setdefault(find(n_rows + j), ([], []))[1].append(j)
    return sorted(groups.values(), key=lambda g: (min(g[0] + [10**9]), min(g[1] + [10**9])))


@dataclass
class BlockPivots:
    rows: list
    cols: list
    report: RankReport

    @property
    def f_rows(self) -> list:
        return [self.rows[p] for p in self.report.row_pivots]

    @property
    def s_cols(self) -> list:
        return [self.cols[q] for q in self.report.col_pivots]

    @property
    def deficiency(self) -> int:
        return len(self.rows) - self.report.r


def block_ranks(jac: BlockJacobian, point, t0, c, tol: float = DEFAULT_RANK_TOL) -> list[BlockPivots]:
    """Rank and pivots of each independent block of the evaluated Jacobian.

    Near-ties between rows go to the more differentiated equation.
    """
    values = evaluate_matrix(jac.matrix, point, t0)
    out = []
    for rows, cols in jacobian_blocks(jac.matrix):
        if not rows or not cols:
            continue
        sub = values[np.ix_(rows, cols)]
        rep = numeric_rank(sub, tol, row_priority=[c[i] for i in rows])
        out.append(BlockPivots(rows, cols, rep))
    return out


@dataclass
class AugmentedSystem:
    base: ProlongedSystem
    offsets: OffsetSolution
    f_rows: list
    g_rows: list
    s_vars: list
    y_vars: list
    u_map: dict
    xi_map: dict
    xi_values: dict
    system: IdaeSystem
    generation: int = 1

    @property
    def r(self) -> int:
        return len(self.f_rows)

    def with_xi(self, values: dict) -> "AugmentedSystem":
        consts = dict(self.system.constants)
        consts.update(values)
        return AugmentedSystem(self.base, self.offsets, self.f_rows, self.g_rows, self.s_vars,
                               self.y_vars, self.u_map, self.xi_map, dict(values),
                               self.system.with_equations(self.system.equations, constants=consts),
                               self.generation)


def _fresh_name(base: str, taken) -> str:
    name = base
    while name in taken:
        name += "_"
    return name


def augment(prolonged: ProlongedSystem, offsets: OffsetSolution, pivots, seed=0,
            generation: int = 1) -> AugmentedSystem:
    """Build ``F_aug = {f(s,y,z), f(u,xi,z), g(u,xi,z)}`` from the top block.

    ``pivots`` is a RankReport for the whole top block or a list of
    BlockPivots; only rank-deficient blocks are touched. Rows of full-rank
    blocks pass through unchanged.
    """
    base = prolonged.base
    n = base.n
    if isinstance(pivots, RankReport):
        pivots = [BlockPivots(list(range(n)), list(range(n)), pivots)]
    deficient = [b for b in pivots if b.deficiency > 0]
    if not deficient:
        raise RegularizationError("top block already has full rank; nothing to embed")
    f_rows, g_rows, s_cols, y_cols = [], [], [], []
    for b in deficient:
        if not b.report.row_pivots and b.report.r > 0:
            raise RegularizationError("empty pivot set")
        f_rows += b.f_rows
        g_rows += [i for i in b.rows if i not in b.f_rows]
        s_cols += b.s_cols
        y_cols += [j for j in b.cols if j not in b.s_cols]
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    names = list(base.names)
    kinds = list(base.kinds)
    n_u = sum(1 for k in kinds if k == EMBEDDED_U)
    n_xi = len(base.constants)
    u_map, xi_map, xi_values = {}, {}, {}
    for j in sorted(s_cols):
        n_u += 1
        u_map[jet(j, offsets.d[j])] = jet(len(names), 0)
        names.append(_fresh_name(f"u{n_u}", names))
        kinds.append(EMBEDDED_U)
    for j in sorted(y_cols):
        n_xi += 1
        sym = xi(n_xi)
        xi_map[jet(j, offsets.d[j])] = sym
        xi_values[sym.name] = float(rng.uniform(*XI_RANGE))
    mapping = {**u_map, **xi_map}

    top = prolonged.top_block
    eqs = [top[i] for i in range(n) if i not in g_rows]
    eqs += [top[i].substitute(mapping) for i in sorted(f_rows + g_rows)]
    consts = dict(base.constants)
    consts.update(xi_values)
    new = IdaeSystem(base.name, tuple(names), tuple(eqs), base.t0, dict(base.params), consts, tuple(kinds))
    return AugmentedSystem(prolonged, offsets, sorted(f_rows), sorted(g_rows),
                           [jet(j, offsets.d[j]) for j in sorted(s_cols)],
                           [jet(j, offsets.d[j]) for j in sorted(y_cols)],
                           u_map, xi_map, xi_values, new, generation)


def lift_point(point: dict, aug: AugmentedSystem) -> dict:
    """Copy ``s`` values into the new ``u`` coordinates and ``y`` values into ``xi``."""
    out = dict(point)
    for src, u in aug.u_map.items():
        if src not in point:
            raise RegularizationError(f"point has no value for {src}")
        out[u] = point[src]
    for src, x in aug.xi_map.items():
        if src not in point:
            raise RegularizationError(f"point has no value for {src}")
        out[x] = point[src]
    return out


def project_point(point: dict, n: int) -> dict:
    """Drop embedded coordinates (``u`` jets of index >= n and every ``xi``)."""
    out = {}
    for k, v in point.items():
        info = jet_info(k) if isinstance(k, sp.Symbol) else None
        if info is not None and info.kind == "state" and info.var_index < n:
            out[k] = v
    return out


def lifted_dual(aug: AugmentedSystem) -> tuple[tuple, tuple]:
    """The feasible pair for the augmented signature: kept rows 0, embedded rows 1.

    Old columns keep their offsets; new ``u`` columns get 1.
    """
    n_old = aug.base.n
    n_kept = n_old - len(aug.g_rows)
    n_rows = aug.system.n
    c = tuple(0 if i < n_kept else 1 for i in range(n_rows))
    d = tuple(list(aug.offsets.d) + [1] * (aug.system.n - n_old))
    return c, d


# --------------------------------------------------------------------------
# regularization loop
# --------------------------------------------------------------------------

@dataclass
class IterationRecord:
    iteration: int
    n: int
    c: tuple
    d: tuple
    delta: int
    dof: int
    rank: int
    n_constraints: int
    f_rows: list = field(default_factory=list)
    s_vars: list = field(default_factory=list)
    dof_bound: int | None = None

    @property
    def full_rank(self) -> bool:
        return self.rank == self.n


@dataclass
class RegularizedSystem:
    original: IdaeSystem
    system: IdaeSystem
    constraints: list
    offsets: OffsetSolution
    prolonged: ProlongedSystem
    jacobian: BlockJacobian
    records: list
    augmentations: list
    points: list

    @property
    def iterations(self) -> int:
        return len(self.augmentations)

    @property
    def method(self) -> str:
        return "Pryce" if not self.augmentations else "IRE"

    @property
    def dof(self) -> int:
        return self.records[-1].dof

    @property
    def all_equations(self) -> list:
        """Every equation of the regularized system ``G`` (constraints first)."""
        return list(self.constraints) + [e for chain in self.prolonged.derivs for e in chain]


def _jet_label(sym, names) -> str:
    info = jet_info(sym)
    if info is None:
        return str(sym)
    name = names[info.var_index]
    return name if info.deriv_order == 0 else f"der({name},{info.deriv_order})"


def constraint_omega(constraints, n: int, eval_points=()) -> list:
    big_phi = [list(eq.integral_terms) for eq in constraints]
    return smoothing_tables(big_phi, n, eval_points).omega


def regularize(sys: IdaeSystem, points, *, seed: int = 0, tol_rank: float = DEFAULT_RANK_TOL,
               tol_refine: float = 1e-8, max_iter: int | None = None) -> RegularizedSystem:
    """Alternate offsets, rank test and embedding until the top block is regular.

    ``points`` are consistent points of the prolonged system on one component,
    as dicts from jet symbols to values at ``t0``.
    """
    rng = np.random.default_rng(seed)
    t0 = float(sys.t0)
    current = sys
    constraints: list = []
    points = [dict(p) for p in points]
    records: list[IterationRecord] = []
    augs: list[AugmentedSystem] = []
    limit = None
    while True:
        it = len(records)
        eval_points = [{**p, T: t0} for p in points]
        sig = combined_signature(current, eval_points)
        off = solve_offsets(sig.sigma)
        pro = prolong(current, off.c)
        omega = omega_total([sig.omega, constraint_omega(constraints, current.n, eval_points)])
        dof = degrees_of_freedom(off.delta, omega, len(constraints))
        if limit is None:
            limit = max_iter if max_iter is not None else 1 + dof
        jac = block_jacobian(pro, off)
        eqs = constraints + [e for chain in pro.derivs for e in chain]
        wanted = set(jac.cols)
        for e in jac.matrix:
            wanted |= jets(e)
        points = [complete_point(p, eqs, wanted, t0, seed=seed + k) for k, p in enumerate(points)]
        for p in points:
            res = max_residual(eqs, p, t0)
            if res > tol_refine:
                raise RegularizationError(f"point is not consistent at iteration {it} (residual {res:.3g})")
        blocks = [block_ranks(jac, p, t0, off.c, tol_rank) for p in points]
        ranks = [sum(b.report.r for b in bl) for bl in blocks]
        if len(set(ranks)) > 1:
            raise RegularizationError(f"points of one component have different ranks {ranks}")
        rank = ranks[0]
        bound = None
        if records:
            prev = records[-1]
            bound = prev.dof - (prev.n - prev.rank)
            if dof > bound:
                raise RegularizationError(f"degree of freedom {dof} exceeds the bound {bound}")
        rec = IterationRecord(it, current.n, off.c, off.d, off.delta, dof, rank, len(constraints),
                              dof_bound=bound)
        records.append(rec)
        if rank == current.n:
            return RegularizedSystem(sys, current, constraints, off, pro, jac, records, augs, points)
        if len(augs) >= limit:
            raise RegularizationError(f"no regular system after {len(augs)} embeddings")
        aug = augment(pro, off, blocks[0], rng, generation=len(augs) + 1)
        rec.f_rows = [f"F{i + 1}" for i in aug.f_rows]
        rec.s_vars = [_jet_label(s, current.names) for s in aug.s_vars]
        points = [lift_point(p, aug) for p in points]
        aug = aug.with_xi({x.name: points[0][x] for x in aug.xi_map.values()})
        augs.append(aug)
        constraints = constraints + pro.constraints
        current = aug.system
