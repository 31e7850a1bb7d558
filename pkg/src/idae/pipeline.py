"""End-to-end driver shared by the command line and the experiment scripts."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import sympy as sp

from .expressions import T, jet, jet_info
from .ire import RegularizationError, RegularizedSystem, regularize
from .model import IdaeSystem, format_equation, print_system
from .numrank import DEFAULT_RANK_TOL, evaluate_matrix, numeric_rank
from .offsets import OffsetSolution, degrees_of_freedom, solve_offsets
from .prolongation import (BlockJacobian, ProlongedSystem, block_jacobian, prolong, smoothing_integrals,
                           sub_jacobian)
from .signature import SignatureAnalysis, combined_signature, omega_total
from .witness import group_components, system_witness

SCHEMA = 1
_LABEL = re.compile(r"^der\(\s*([A-Za-z_][A-Za-z_0-9]*)\s*,\s*(\d+)\s*\)$")


@dataclass
class StructuralAnalysis:
    system: IdaeSystem
    signature: SignatureAnalysis
    offsets: OffsetSolution
    prolonged: ProlongedSystem
    jacobian: BlockJacobian
    dof: int


def analyze_structure(sys: IdaeSystem, eval_points=()) -> StructuralAnalysis:
    sig = combined_signature(sys, eval_points)
    off = solve_offsets(sig.sigma)
    pro = prolong(sys, off.c)
    dof = degrees_of_freedom(off.delta, omega_total([sig.omega]))
    return StructuralAnalysis(sys, sig, off, pro, block_jacobian(pro, off), dof)


@dataclass
class Component:
    component_id: int
    rank: int
    f_rows: tuple
    s_cols: tuple
    points: list
    s_labels: tuple = ()
    redundant_blocks: tuple = ()
    regularized: RegularizedSystem | None = None
    error: str = ""

    @property
    def method(self) -> str:
        if self.regularized is None:
            return "Pryce" if not self.s_cols else "IRE"
        return self.regularized.method


def label(sym, names) -> str:
    info = jet_info(sym)
    if info is None:
        return str(sym)
    name = names[info.var_index]
    return name if info.deriv_order == 0 else f"der({name},{info.deriv_order})"


def parse_point(mapping: dict, names) -> dict:
    """Coordinates keyed by ``name`` or ``der(name,k)`` to jet symbols."""
    out = {}
    for key, value in mapping.items():
        m = _LABEL.match(key.strip())
        name, k = (m.group(1), int(m.group(2))) if m else (key.strip(), 0)
        if name not in names:
            raise KeyError(f"unknown variable {name!r} in point")
        out[jet(names.index(name), k)] = float(value)
    return out


def find_components(sa: StructuralAnalysis, *, seed: int = 0, points=None,
                    tol_rank: float = DEFAULT_RANK_TOL, tol_refine: float = 1e-10):
    """Witness points (or the supplied ones) grouped into candidate components."""
    per_block = None
    if points is None:
        points, per_block = system_witness(sa.prolonged, seed=seed, refine_tol=tol_refine)
    groups = group_components(points, sa.jacobian, sa.offsets.c, float(sa.system.t0), tol_rank)
    names = sa.system.names
    comps = [Component(g["component_id"], g["rank"], g["f_rows"], g["s_cols"], g["points"],
                       tuple(label(sa.jacobian.cols[j], names) for j in g["s_cols"]),
                       redundant_blocks(sa, g["points"][0], tol_rank)) for g in groups]
    return comps, per_block


def redundant_blocks(sa: StructuralAnalysis, point, tol_rank: float = DEFAULT_RANK_TOL) -> tuple:
    """Constraint blocks ``B_p`` (p < k_c) whose Jacobian has numeric rank below their row count.

    Returns (p, equation labels) pairs.

    Such a block possibly holds a redundant constraint; DOF is not adjusted.
    Blocks whose entries are not all determined by ``point`` are skipped.
    """
    out = []
    t0 = float(sa.system.t0)
    for p in range(sa.prolonged.k_c):
        m, rows, _ = sub_jacobian(sa.prolonged, sa.offsets, p)
        if m.cols == 0:
            rank = 0
        else:
            needed = set().union(*[e.free_symbols for e in m]) - {T}
            if not needed <= set(point):
                continue
            rank = numeric_rank(evaluate_matrix(m, point, t0), tol_rank).r
        if rank < len(rows):
            out.append((p, tuple(_eq_label(i, k) for i, k in rows)))
    return tuple(out)


def regularize_components(sys: IdaeSystem, comps, *, seed: int = 0, tol_rank: float = DEFAULT_RANK_TOL,
                          max_iter: int | None = None):
    for comp in comps:
        try:
            comp.regularized = regularize(sys, comp.points, seed=seed, tol_rank=tol_rank, max_iter=max_iter)
        except RegularizationError as exc:
            comp.error = str(exc)
    return comps


# --------------------------------------------------------------------------
# JSON helpers
# --------------------------------------------------------------------------

def jsonable(v):
    """Infinite entries become ``None``; sympy numbers become floats or ints."""
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, float):
        return None if math.isinf(v) or math.isnan(v) else v
    if isinstance(v, sp.Integer):
        return int(v)
    if isinstance(v, sp.Basic) and v.is_number:
        return float(v)
    return v


def _eq_label(i: int, k: int) -> str:
    return f"F{i + 1}" if k == 0 else f"F{i + 1}^({k})"


def block_table(pro: ProlongedSystem, offsets: OffsetSolution) -> list:
    rows = []
    names = pro.base.names
    for p, block in enumerate(pro.blocks):
        rows.append({"block": p, "equations": [_eq_label(i, k) for i, k in block],
                     "smoothing_integrals": [f"{names[j]}^({k})" for j, k in smoothing_integrals(pro, offsets, p)]})
    return rows


def structure_report(sa: StructuralAnalysis) -> dict:
    sys, sig, off = sa.system, sa.signature, sa.offsets
    return {
        "signature": {
            "dae": jsonable(sig.sigma_dae),
            "iae": jsonable(sig.sigma_iae),
            "combined": jsonable(sig.sigma),
            "upsilon": jsonable(sig.upsilon),
            "omega": jsonable(sig.omega),
        },
        "offsets": {"c": list(off.c), "d": list(off.d), "delta": off.delta,
                    "transversal": list(off.hvt)},
        "dof": sa.dof,
        "blocks": block_table(sa.prolonged, off),
        "jacobian": [[str(sa.jacobian.matrix[i, j]) for j in range(sys.n)] for i in range(sys.n)],
        "leading": [label(s, sys.names) for s in sa.jacobian.cols],
    }


def system_echo(sys: IdaeSystem) -> dict:
    return {"name": sys.name, "variables": list(sys.names), "t0": float(sys.t0),
            "equations": [format_equation(eq, sys.names) for eq in sys.equations]}


def witness_report(per_block, names) -> list:
    out = []
    for k, ws in enumerate(per_block or []):
        out.append({
            "block": k,
            "paths": ws.n_paths, "diverged": ws.n_diverged, "failed": ws.n_failed, "stalled": ws.n_stalled,
            "points": [{"coords": w.as_names(names), "residual": w.residual} for w in ws.points],
            "singular_points": [{"coords": w.as_names(names), "residual": w.residual} for w in ws.singular_points],
        })
    return out


def component_report(comp: Component, names) -> dict:
    out = {
        "component": comp.component_id,
        "rank": comp.rank,
        "f": [f"F{i + 1}" for i in comp.f_rows],
        "s": list(comp.s_labels),
        "method": comp.method,
        "points": [{label(k, names): v for k, v in sorted(p.items(), key=lambda kv: kv[0].name)
                    if jet_info(k) is not None} for p in comp.points],
        "candidate": True,
        "possible_redundancy": [{"block": p, "equations": list(eqs)} for p, eqs in comp.redundant_blocks],
    }
    reg = comp.regularized
    if reg is not None:
        out["iterations"] = reg.iterations
        out["final_dof"] = reg.dof
        out["trace"] = [{
            "iteration": r.iteration, "n": r.n, "c": list(r.c), "d": list(r.d), "delta": r.delta,
            "dof": r.dof, "dof_bound": r.dof_bound, "rank": r.rank, "constraints": r.n_constraints,
            "f": r.f_rows, "s": r.s_vars,
        } for r in reg.records]
        out["system"] = print_system(reg.system)
        out["constraints"] = [format_equation(eq, reg.system.names) for eq in reg.constraints]
    if comp.error:
        out["error"] = comp.error
    return out


def full_report(sys: IdaeSystem, sa: StructuralAnalysis, comps=None, per_block=None,
                witness_error: str = "") -> dict:
    rep = {"schema": SCHEMA, "system": system_echo(sys), **structure_report(sa)}
    if per_block is not None:
        rep["witness"] = witness_report(per_block, sys.names)
    if witness_error:
        rep["witness_error"] = witness_error
    if comps is not None:
        rep["components"] = [component_report(c, sys.names) for c in comps]
        rep["note"] = ("components are candidates grouped by rank and pivots; constant rank "
                       "was checked only at the witness points, and each component is assumed "
                       "smooth there")
    return rep

