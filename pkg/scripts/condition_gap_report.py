"""Sufficient conditions versus observed ratios for g = sqrt and U = V = x.

The A(s) functional is infinite for every s because int_0^t V^(1-p') diverges
at the origin, yet every tested f gives a finite ratio.  For contrast the
same bound is evaluated for U = V = 1, where it is sharp.
"""

import argparse
import sys

from hardymean.conditions import ExponentPair, constant_bound_wedestig, muckenhoupt_constant, wedestig_as
from hardymean.estimator import TestFamily, best_constant_search


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--s", type=float, default=1.5)
    ap.add_argument("--grid", type=float, nargs="+", default=[-0.95, -0.9, -0.75, -0.5, -0.25, 0.0, 1.0])
    args = ap.parse_args(argv)
    e = ExponentPair(2.0, 2.0)

    print("conditions for U = V = x, p = q = 2")
    for variant in ("paper", "alternate"):
        rep = wedestig_as("x", "x", e, args.s, variant)
        print(f"  A({args.s:g}) [{variant:9s}] {rep.status:8s} cause: {rep.cause}")
    rep = muckenhoupt_constant("x", "x", e)
    print(f"  muckenhoupt           {rep.status:8s} cause: {rep.cause}")

    print("observed ratios, g = sqrt(x), f = x^a on (0, 1)")
    res = best_constant_search(TestFamily("power_truncated", tuple(args.grid)), "sqrt(x)", "x", "x", "1", e, ginv="x^2")
    for r in sorted(res.reports, key=lambda r: r.family_member):
        print(f"  {r.family_member:32s} ratio {r.ratio:.6f} +- {r.ratio_err:.1e}")
    print(f"  sup over family (lower bound on the best constant): {res.sup_ratio:.6f}")

    print("bound inf_s ((p-1)/(p-s))^(1/p') A(s) for U = V = 1")
    for variant in ("paper", "alternate"):
        rep = constant_bound_wedestig("1", "1", e, variant)
        value = f"{rep.value:.6f} at s = {rep.extremizer:.4f}" if not rep.diverged else rep.cause
        print(f"  [{variant:9s}] {value}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
