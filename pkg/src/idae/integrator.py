"""Integral terms as auxiliary states, and segmented integration of regularized systems."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp

from .expressions import S, T, jet, jet_info, normalize, xi as xi_symbol, zsym
from .ire import RegularizedSystem, block_ranks
from .model import KERNEL_CAP, format_expr

SEGMENT = 0.5
DRIFT_TOL = 1e-6
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 25


class IntegrationError(RuntimeError):
    phase = 3


# --------------------------------------------------------------------------
# integral states
# --------------------------------------------------------------------------

@dataclass
class MaterializedSystem:
    """Integrals rewritten through states ``z_{g,p} = int_{t0}^t s^p g ds``."""

    equations: list
    integrands: list
    z_index: dict
    z_rhs: list
    residuals: list

    @property
    def z_symbols(self) -> list:
        return [zsym(m) for m in range(len(self.z_rhs))]


def reconstruct(term, z_of) -> sp.Expr:
    """``sum_k a_k sum_p C(k,p) (-1)^p t^(k-p) z_p`` for one integral term."""
    out = sp.Integer(0)
    for k, a in enumerate(term.kernel):
        if a == 0:
            continue
        for p in range(k + 1):
            out += sp.Rational(a) * sp.binomial(k, p) * (-1) ** p * T ** (k - p) * z_of(p)
    return out


def materialize_integrals(equations, kernel_cap: int = KERNEL_CAP) -> MaterializedSystem:
    """One state per (distinct integrand, kernel power); residuals use the states."""
    if hasattr(equations, "equations"):
        equations = list(equations.equations)
    integrands: list = []
    degree: dict = {}
    for eq in equations:
        for term in eq.integral_terms:
            if term.degree > kernel_cap:
                raise IntegrationError(f"kernel degree {term.degree} exceeds the cap {kernel_cap}")
            g = normalize(term.integrand)
            if g not in degree:
                integrands.append(g)
                degree[g] = -1
            degree[g] = max(degree[g], term.degree)
    z_index, z_rhs = {}, []
    for gi, g in enumerate(integrands):
        for p in range(degree[g] + 1):
            z_index[(gi, p)] = len(z_rhs)
            z_rhs.append(normalize(T ** p * g.xreplace({S: T})))
    residuals = []
    for eq in equations:
        e = eq.dae_part
        for term in eq.integral_terms:
            gi = integrands.index(normalize(term.integrand))
            e += reconstruct(term, lambda p, gi=gi: zsym(z_index[(gi, p)]))
        residuals.append(normalize(e))
    return MaterializedSystem(list(equations), integrands, z_index, z_rhs, residuals)


# --------------------------------------------------------------------------
# traces
# --------------------------------------------------------------------------

@dataclass
class SolutionTrace:
    t: np.ndarray
    state_names: list
    states: np.ndarray
    residual_names: list
    residuals: np.ndarray
    drift: np.ndarray
    segments: list = field(default_factory=list)
    status: str = "ok"
    message: str = ""

    def column(self, name: str) -> np.ndarray:
        return self.states[:, self.state_names.index(name)]

    @property
    def max_drift(self) -> float:
        return float(np.max(self.drift)) if self.drift.size else 0.0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + self.state_names + self.residual_names)
            for k, t in enumerate(self.t):
                row = [t] + list(self.states[k]) + list(self.residuals[k])
                w.writerow([format(float(v), ".17g") for v in row])


# --------------------------------------------------------------------------
# integration
# --------------------------------------------------------------------------

@dataclass
class IntegrateOptions:
    segment: float = SEGMENT
    rtol: float = 1e-11
    atol: float = 1e-12
    method: str = "DOP853"
    output_step: float = 0.05
    drift_tol: float = DRIFT_TOL
    tol_rank: float = 1e-10


def _label(sym, names) -> str:
    info = jet_info(sym)
    if info is None:
        return str(sym)
    name = names[info.var_index]
    return name if info.deriv_order == 0 else f"der({name},{info.deriv_order})"


class _Model:
    """Numeric callbacks for one regularized system."""

    def __init__(self, reg: RegularizedSystem):
        sys = reg.system
        self.reg = reg
        self.n = sys.n
        d = reg.offsets.d
        self.states = [jet(j, k) for j in range(self.n) for k in range(d[j])]
        self.leads = [jet(j, d[j]) for j in range(self.n)]
        self.xis = sorted((xi_symbol(int(name[2:])) for name in sys.constants), key=lambda s: s.name)
        top = reg.prolonged.top_block
        monitor = list(reg.all_equations)
        original = list(reg.original.equations)
        self.mat = materialize_integrals(top + monitor + original)
        self.zs = self.mat.z_symbols
        n_top, n_mon = len(top), len(monitor)
        res = self.mat.residuals
        self.top_res = res[:n_top]
        self.orig_res = res[n_top + n_mon:]
        known = set(self.states) | set(self.leads) | set(self.zs) | set(self.xis) | {T}
        self.mon_res = [e for e in res[n_top:n_top + n_mon] if e.free_symbols <= known and e != 0]
        for e in self.orig_res + self.top_res + self.mat.z_rhs:
            extra = e.free_symbols - known
            if extra:
                raise IntegrationError(f"cannot evaluate {e}: jets {sorted(map(str, extra))} are not integrated")
        args = [T, self.states, self.leads, self.zs, self.xis]
        self.f_top = sp.lambdify(args, self.top_res, "numpy")
        self.j_top = sp.lambdify(args, sp.Matrix(self.top_res).jacobian(self.leads), "numpy")
        self.f_z = sp.lambdify(args, self.mat.z_rhs, "numpy") if self.zs else None
        self.f_orig = sp.lambdify(args, self.orig_res, "numpy")
        self.f_mon = sp.lambdify(args, self.mon_res, "numpy")
        self.state_pos = {s: k for k, s in enumerate(self.states)}
        self.lead_pos = {s: k for k, s in enumerate(self.leads)}
        # derivative of each state: the next state or the leading derivative
        self.next_of = []
        for s in self.states:
            info = jet_info(s)
            nxt = jet(info.var_index, info.deriv_order + 1)
            self.next_of.append(("s", self.state_pos[nxt]) if nxt in self.state_pos else ("l", self.lead_pos[nxt]))

    def solve_leads(self, t, x, z, xi, guess):
        lead = np.array(guess, dtype=float)
        for _ in range(NEWTON_MAX_ITER):
            r = np.array(self.f_top(t, x, lead, z, xi), dtype=float)
            if np.max(np.abs(r)) < NEWTON_TOL:
                return lead
            jm = np.array(self.j_top(t, x, lead, z, xi), dtype=float).reshape(self.n, self.n)
            try:
                lead = lead - np.linalg.solve(jm, r)
            except np.linalg.LinAlgError as exc:
                raise IntegrationError(f"top block singular at t={t:.6g}") from exc
        r = np.array(self.f_top(t, x, lead, z, xi), dtype=float)
        if np.max(np.abs(r)) > 1e3 * NEWTON_TOL:
            raise IntegrationError(f"leading-derivative solve failed at t={t:.6g} (residual {np.max(np.abs(r)):.3g})")
        return lead


def integrate(reg: RegularizedSystem, init: dict, span=(0.0, 5.0), opts: IntegrateOptions | None = None) -> SolutionTrace:
    """Integrate the regularized system from a consistent lifted point.

    The span is split into segments; at each boundary the embedding constants
    and ``u`` states are reassigned from the current trajectory and the rank of
    the top block is re-checked.
    """
    opts = opts or IntegrateOptions()
    model = _Model(reg)
    names = list(reg.system.names)
    t0, t_end = float(span[0]), float(span[1])
    if abs(t0 - float(reg.system.t0)) > 1e-14:
        raise IntegrationError("integration must start at the system's initial time")
    x = np.array([init[s] for s in model.states], dtype=float)
    z = np.zeros(len(model.zs))
    xi_vals = np.array([init.get(s, reg.system.constants[s.name]) for s in model.xis], dtype=float)
    lead = np.array([init.get(s, 0.0) for s in model.leads], dtype=float)
    cache = {"lead": lead}

    def rhs(t, y):
        xs, zs = y[:len(x)], y[len(x):]
        cache["lead"] = model.solve_leads(t, xs, zs, xi_vals, cache["lead"])
        dx = np.array([xs[k] if kind == "s" else cache["lead"][k] for kind, k in model.next_of], dtype=float)
        dz = np.array(model.f_z(t, xs, cache["lead"], zs, xi_vals), dtype=float) if model.f_z else np.zeros(0)
        return np.concatenate([dx, dz])

    n_out = int(round((t_end - t0) / opts.output_step))
    grid = t0 + opts.output_step * np.arange(n_out + 1)
    grid[-1] = t_end
    bounds = list(np.arange(t0, t_end, opts.segment)) + [t_end]
    ts, rows, res_rows, drift = [], [], [], []
    segments, status, message = [], "ok", ""
    y = np.concatenate([x, z])
    for a, b in zip(bounds[:-1], bounds[1:]):
        xs, zs = y[:len(x)], y[len(x):]
        cache["lead"] = model.solve_leads(a, xs, zs, xi_vals, cache["lead"])
        y, xi_vals = _relift(model, reg, a, y, xi_vals, cache["lead"])
        xs = y[:len(x)]
        cache["lead"] = model.solve_leads(a, xs, zs, xi_vals, cache["lead"])
        point = {**dict(zip(model.states, xs)), **dict(zip(model.leads, cache["lead"])),
                 **dict(zip(model.xis, xi_vals))}
        rank = sum(bp.report.r for bp in block_ranks(reg.jacobian, point, a, reg.offsets.c, opts.tol_rank))
        segments.append({"t": a, "rank": rank, "xi": {s.name: float(v) for s, v in zip(model.xis, xi_vals)}})
        if rank < model.n:
            status, message = "rank-drop", f"top block rank {rank} < {model.n} at t={a:.6g}"
            break
        # the segment end is always evaluated so the next segment starts exactly there
        t_eval = [t for t in grid if a - 1e-12 <= t < b - 1e-12] + [b]
        last = b == t_end
        try:
            sol = solve_ivp(rhs, (a, b), y, method=opts.method, rtol=opts.rtol, atol=opts.atol,
                            t_eval=t_eval, dense_output=False)
        except IntegrationError as exc:
            status, message = "newton-failure", str(exc)
            break
        failed = sol.status < 0
        for k, t in enumerate(sol.t):
            yk = sol.y[:, k]
            xs, zs = yk[:len(x)], yk[len(x):]
            lead_k = model.solve_leads(t, xs, zs, xi_vals, cache["lead"])
            orig = np.abs(np.array(model.f_orig(t, xs, lead_k, zs, xi_vals), dtype=float))
            mon = np.abs(np.array(model.f_mon(t, xs, lead_k, zs, xi_vals), dtype=float))
            dr = float(max(np.max(orig, initial=0.0), np.max(mon, initial=0.0)))
            if dr > opts.drift_tol:
                # typically the trajectory has run into a point where the component meets another one
                status, message = "drift", f"constraint drift {dr:.3g} exceeds {opts.drift_tol:g} at t={t:.6g}"
                break
            # the segment end is recorded by the next segment unless it is the final time
            if k == len(sol.t) - 1 and not last and not failed:
                break
            ts.append(t)
            rows.append(np.concatenate([xs, lead_k, zs]))
            res_rows.append(orig)
            drift.append(dr)
        if status == "ok" and failed:
            # points reached before the failure are kept
            status, message = "step-failure", f"{sol.message} (after t={sol.t[-1] if len(sol.t) else a:.6g})"
        if status != "ok":
            break
        y = sol.y[:, -1]
    # integrated states, then the leading derivatives solved from the top block, then integral states
    state_names = ([_label(s, names) for s in model.states] + [_label(s, names) for s in model.leads]
                   + _z_labels(model.mat, names))
    residual_names = [f"res_F{i + 1}" for i in range(len(model.orig_res))]
    n_cols = len(state_names)
    return SolutionTrace(np.array(ts), state_names,
                         np.array(rows).reshape(len(ts), n_cols),
                         residual_names, np.array(res_rows).reshape(len(ts), len(residual_names)),
                         np.array(drift), segments, status, message)


def _z_labels(mat: MaterializedSystem, names) -> list:
    out = [""] * len(mat.z_rhs)
    for (gi, p), m in mat.z_index.items():
        body = format_expr(mat.integrands[gi], names)
        out[m] = f"int({body})" if p == 0 else f"int(s^{p}*({body}))"
    return out


def _relift(model: _Model, reg: RegularizedSystem, t, y, xi_vals, lead):
    """Reassign every ``xi`` from its source jet and every state ``u`` from its replaced jet."""
    y = np.array(y, dtype=float)
    xi_vals = np.array(xi_vals, dtype=float)
    xs = y[:len(model.states)]

    def value(sym):
        if sym in model.state_pos:
            return xs[model.state_pos[sym]]
        if sym in model.lead_pos:
            return lead[model.lead_pos[sym]]
        return None

    for aug in reg.augmentations:
        for src, x in aug.xi_map.items():
            v = value(src)
            if v is not None and x in model.xis:
                xi_vals[model.xis.index(x)] = v
        for src, u in aug.u_map.items():
            v = value(src)
            if v is not None and u in model.state_pos:
                y[model.state_pos[u]] = v
    return y, xi_vals


def trace_errors(trace: SolutionTrace, name: str, exact) -> float:
    """Max abs deviation of a state column from ``exact(t)``."""
    col = trace.column(name)
    return float(np.max(np.abs(col - exact(trace.t))))

