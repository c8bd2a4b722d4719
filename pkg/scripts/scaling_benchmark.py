"""Per-iteration wall time of one chain as p grows at fixed n.

    python3 scripts/scaling_benchmark.py --p 400 800 1600 3200
"""

import argparse

import numpy as np

from hima.engine import run_chain
from hima.harness import drop_high_missing, mri_like_mask, simulate_ar1
from hima.types import ImputationConfig, IncompleteMatrix


def region(n, p, seed):
    rng = np.random.default_rng(seed)
    Y = simulate_ar1(n, p, 0.5, rng)
    mask = mri_like_mask(n, p, rng)
    m = IncompleteMatrix.from_array(np.where(mask, Y, np.nan))
    return drop_high_missing(m)[0]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=58)
    ap.add_argument("--p", type=int, nargs="+", default=[400, 800, 1600])
    ap.add_argument("--T", type=int, default=5)
    ap.add_argument("--path", choices=["auto", "dense", "structured"], default="auto")
    args = ap.parse_args()

    base = None
    print(f"{'p':>6} {'median s/iter':>14} {'ratio':>7}")
    for p in args.p:
        m = region(args.n, p, seed=p)
        out = run_chain(m, ImputationConfig(M=1, T=args.T, covariance_path=args.path), 1)
        med = float(np.median(out.timing))
        base = base or med
        print(f"{p:>6} {med:>14.4f} {med / base:>7.2f}")


if __name__ == "__main__":
    main()
