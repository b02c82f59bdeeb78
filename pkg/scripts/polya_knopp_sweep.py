"""Geometric-mean inequality ratio for x^(-1+eps) on (0, 1) as eps -> 0.

The ratio is e^(1-eps) and increases to e without reaching it.
"""

import argparse
import csv
import math
import sys

import numpy as np

from hardymean.conditions import ExponentPair
from hardymean.estimator import inequality_ratio


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=8)
    ap.add_argument("--smallest", type=float, default=1e-3)
    args = ap.parse_args(argv)

    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["eps", "ratio", "ratio_err", "closed_form", "gap_to_e"])
    for eps in np.geomspace(0.9, args.smallest, args.points):
        r = inequality_ratio(f"indicator(0, 1) * x^({float(eps) - 1!r})", "ln(x)", "1", "1", "1", ExponentPair(1.0, 1.0))
        out.writerow([f"{eps:.4g}", f"{r.ratio:.8f}", f"{r.ratio_err:.1e}", f"{math.exp(1 - eps):.8f}",
                      f"{math.e - r.ratio:.3e}"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
