"""Component table of the two-stage drive: witness points, ranks, replaced variables and methods.

Usage: python3 scripts/drive_table.py [--seed N]
"""
import argparse
import time

from idae.cli import load
from idae.expressions import jet
from idae.pipeline import analyze_structure, find_components, regularize_components


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    t0 = time.perf_counter()
    system = load("drive2.idae")
    sa = analyze_structure(system)
    comps, per_block = find_components(sa, seed=args.seed)
    regularize_components(system, comps, seed=args.seed)
    elapsed = time.perf_counter() - t0

    print(f"offsets c={sa.offsets.c} d={sa.offsets.d}  DOF={sa.dof}")
    for b, ws in enumerate(per_block):
        print(f"block {b}: {ws.n_paths} paths, {len(ws)} real witness points")
    print(f"{'comp':>4}  {'rank':>4}  {'f':<8}  {'s':<28}  {'method':<6}  witness point")
    for comp in comps:
        p = comp.points[0]
        coords = ", ".join(f"{v:.11f}" for v in (p[jet(j)] for j in range(system.n)))
        f = ",".join(f"F{i + 1}" for i in comp.f_rows)
        print(f"{comp.component_id:>4}  {comp.rank:>4}  {f:<8}  {','.join(comp.s_labels):<28}  "
              f"{comp.method:<6}  ({coords})")
    print(f"total {elapsed:.2f} s")


if __name__ == "__main__":
    main()
