"""Repeated index reduction by embedding on the integral pendulum.

Prints the Jacobian size, rank and degrees of freedom at every pass, then the
replaced variables of each embedding.

Usage: python3 scripts/pendulum_ire.py [--seed N]
"""
import argparse
import json

from idae.cli import load, resolve_system_path
from idae.ire import regularize
from idae.pipeline import label, parse_point


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    system = load("pendulum.idae")
    raw = json.loads(resolve_system_path("pendulum.points.json").read_text())
    point = parse_point(raw[0], system.names)
    reg = regularize(system, [point], seed=args.seed)

    print(f"method {reg.method}, {reg.iterations} embeddings")
    print(f"{'pass':>4}  {'n':>3}  {'rank':>4}  {'DOF':>3}  bound")
    prev = None
    for k, r in enumerate(reg.records):
        bound = "" if prev is None else f"<= {prev.dof - (prev.n - prev.rank)}"
        print(f"{k:>4}  {r.n:>3}  {r.rank:>4}  {r.dof:>3}  {bound}")
        prev = r
    for k, aug in enumerate(reg.augmentations):
        names = aug.system.names
        s = ", ".join(label(v, names) for v in aug.s_vars)
        y = ", ".join(label(v, names) for v in aug.y_vars) or "-"
        print(f"embedding {k + 1}: s = {{{s}}}, y = {{{y}}}, f rows {aug.f_rows}, g rows {aug.g_rows}")
    print(f"final offsets c={reg.offsets.c} d={reg.offsets.d}")


if __name__ == "__main__":
    main()
