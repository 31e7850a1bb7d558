"""``idae`` command line: analyze, witness, reduce, solve, check."""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .checks import run_all
from .integrator import IntegrateOptions, IntegrationError, integrate
from .model import ModelError, parse_system, print_system
from .numrank import DEFAULT_RANK_TOL
from .pipeline import (SCHEMA, analyze_structure, component_report, find_components, full_report,
                       parse_point, regularize_components, system_echo, witness_report)
from .signature import StructuralError
from .witness import WitnessError

EXIT_OK, EXIT_USAGE, EXIT_STRUCTURAL, EXIT_NUMERIC = 0, 1, 2, 3


def resolve_system_path(path: str) -> Path:
    """A real file wins; otherwise fall back to a bundled file of the same name."""
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("idae") / "systems" / p.name
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(path)


def bundled_systems() -> list[Path]:
    root = resources.files("idae") / "systems"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".idae"))


def load(path: str):
    return parse_system(resolve_system_path(path).read_text())


def _emit(obj, args) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if getattr(args, "report", None):
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)


def _load_points(args, system):
    if not getattr(args, "point", None):
        return None
    raw = json.loads(resolve_system_path(args.point).read_text())
    raw = raw if isinstance(raw, list) else [raw]
    return [parse_point(p, system.names) for p in raw]


def _components(args, system, sa):
    """Supplied points, or witness points; non-polynomial systems without points get none."""
    points = _load_points(args, system)
    try:
        comps, per_block = find_components(sa, seed=args.seed, points=points, tol_rank=args.tol_rank,
                                           tol_refine=args.tol_refine)
        return comps, per_block, ""
    except WitnessError as exc:
        return None, None, str(exc)


def cmd_analyze(args) -> int:
    system = load(args.system)
    sa = analyze_structure(system)
    comps, per_block, werr = _components(args, system, sa)
    if comps is not None:
        regularize_components(system, comps, seed=args.seed, tol_rank=args.tol_rank, max_iter=args.max_iter)
    _emit(full_report(system, sa, comps, per_block, werr), args)
    return EXIT_OK


def cmd_witness(args) -> int:
    system = load(args.system)
    sa = analyze_structure(system)
    comps, per_block = find_components(sa, seed=args.seed, tol_rank=args.tol_rank, tol_refine=args.tol_refine)
    _emit({"schema": SCHEMA, "system": system_echo(system),
           "blocks": witness_report(per_block, system.names),
           "components": [component_report(c, system.names) for c in comps]}, args)
    return EXIT_OK


def cmd_reduce(args) -> int:
    system = load(args.system)
    sa = analyze_structure(system)
    comps, per_block, werr = _components(args, system, sa)
    if comps is None:
        raise WitnessError(werr + "; supply consistent points with --point")
    regularize_components(system, comps, seed=args.seed, tol_rank=args.tol_rank, max_iter=args.max_iter)
    for comp in comps:
        sys.stdout.write(f"# component {comp.component_id}: rank {comp.rank}, method {comp.method}\n")
        if comp.regularized is not None:
            sys.stdout.write(print_system(comp.regularized.system))
        else:
            sys.stdout.write(f"# {comp.error}\n")
    if args.report:
        Path(args.report).write_text(json.dumps(full_report(system, sa, comps, per_block, werr), indent=2) + "\n")
    return EXIT_OK


def cmd_solve(args) -> int:
    system = load(args.system)
    sa = analyze_structure(system)
    comps, per_block, werr = _components(args, system, sa)
    if comps is None:
        raise WitnessError(werr + "; supply consistent points with --point")
    regularize_components(system, comps, seed=args.seed, tol_rank=args.tol_rank, max_iter=args.max_iter)
    traces = Path(args.traces)
    traces.mkdir(parents=True, exist_ok=True)
    opts = IntegrateOptions(segment=args.segment, tol_rank=args.tol_rank)
    summary = []
    lines = [f"{'comp':>4}  {'rank':>4}  {'f':<10}  {'s':<28}  {'method':<6}  status"]
    for comp in comps:
        row = {"component": comp.component_id, "rank": comp.rank, "f": [f"F{i + 1}" for i in comp.f_rows],
               "s": list(comp.s_labels), "method": comp.method}
        if comp.regularized is None:
            row.update(status="not-regularized", message=comp.error)
        else:
            try:
                trace = integrate(comp.regularized, comp.regularized.points[0], tuple(args.span), opts)
                path = traces / f"{system.name}-component{comp.component_id}.csv"
                trace.to_csv(path)
                row.update(status=trace.status, message=trace.message, trace=path.name,
                           max_drift=trace.max_drift, t_end=float(trace.t[-1]) if len(trace.t) else None)
            except IntegrationError as exc:
                row.update(status="failed", message=str(exc))
        summary.append(row)
        lines.append(f"{comp.component_id:>4}  {comp.rank:>4}  {','.join(row['f']):<10}  "
                     f"{','.join(row['s']):<28}  {row['method']:<6}  {row['status']}")
    sys.stdout.write("\n".join(lines) + "\n")
    report = full_report(system, sa, comps, per_block, werr)
    report["solve"] = summary
    (traces / f"{system.name}-summary.json").write_text(json.dumps(report, indent=2) + "\n")
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2) + "\n")
    return EXIT_OK


def cmd_check(args) -> int:
    systems = [parse_system(p.read_text()) for p in bundled_systems()]
    results = run_all(systems)
    for r in results:
        sys.stdout.write(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="idae", description="Structural analysis and regularization of IDAEs.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol-rank", type=float, default=DEFAULT_RANK_TOL)
    common.add_argument("--tol-refine", type=float, default=1e-10)
    common.add_argument("--segment", type=float, default=0.5)
    common.add_argument("--span", type=float, nargs=2, default=[0.0, 5.0], metavar=("A", "B"))
    common.add_argument("--max-iter", type=int, default=None)
    common.add_argument("--report", default=None, help="write the JSON report here instead of stdout")
    common.add_argument("--traces", default="traces", help="directory for CSV traces")
    common.add_argument("--point", default=None, help="JSON file with consistent point(s) keyed by name or der(name,k)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, needs_system in [("analyze", cmd_analyze, True), ("witness", cmd_witness, True),
                                   ("reduce", cmd_reduce, True), ("solve", cmd_solve, True),
                                   ("check", cmd_check, False)]:
        p = sub.add_parser(name, parents=[common])
        if needs_system:
            p.add_argument("system")
        p.set_defaults(func=fn)
    return parser


def _error(exc, kind: str, phase, code: int) -> int:
    payload = {"schema": SCHEMA, "error": {"kind": kind, "phase": phase, "message": str(exc)}}
    sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    return code


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except StructuralError as exc:
        return _error(exc, "structural", 1, EXIT_STRUCTURAL)
    except (FileNotFoundError, ModelError, KeyError) as exc:
        return _error(exc, "input", None, EXIT_USAGE)
    except (ValueError, RuntimeError) as exc:
        return _error(exc, type(exc).__name__, getattr(exc, "phase", None), EXIT_NUMERIC)


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
