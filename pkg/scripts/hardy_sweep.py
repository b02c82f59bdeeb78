"""Ratio of the Hardy average inequality for truncated powers as a -> -1/p.

Prints one CSV row per (p, a) with the measured ratio, its closed form and
the sharp constant p/(p-1).
"""

import argparse
import csv
import sys
import time

import numpy as np

from hardymean.conditions import ExponentPair
from hardymean.estimator import inequality_ratio


def closed_form(a: float, p: float) -> float:
    # f = x^a on (0, 1): ratio^p = (1 + (ap + 1)/(p - 1)) / (a + 1)^p
    return ((1 + (a * p + 1) / (p - 1)) / (a + 1) ** p) ** (1 / p)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=float, nargs="+", default=[1.5, 2.0, 3.0])
    ap.add_argument("--points", type=int, default=6, help="gaps 1/p + a on a log grid down to --closest")
    ap.add_argument("--closest", type=float, default=1e-2)
    args = ap.parse_args(argv)

    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["p", "a", "ratio", "ratio_err", "closed_form", "sharp_constant", "seconds"])
    for p in args.p:
        for gap in np.geomspace(0.5, args.closest, args.points):
            a = -1.0 / p + float(gap)
            start = time.perf_counter()
            r = inequality_ratio(f"indicator(0, 1) * x^({a!r})", "x", "1", "1", "1", ExponentPair(p, p))
            out.writerow([p, f"{a:.6f}", f"{r.ratio:.8f}", f"{r.ratio_err:.1e}", f"{closed_form(a, p):.8f}",
                          f"{p / (p - 1):.8f}", f"{time.perf_counter() - start:.2f}"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
