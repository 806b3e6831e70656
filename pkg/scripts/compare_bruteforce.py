#!/usr/bin/env python3
"""Analytic constant-velocity EA against the brute-force grid oracle on random scenes."""
import argparse
import time

import numpy as np

from evasive.ea_core import BruteForceGrid, ea_bruteforce
from evasive.ea_cv import ea_cv_value
from evasive.synth import random_conflict


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    t0 = time.perf_counter()
    grid = BruteForceGrid()
    err, beyond = [], 0
    for _ in range(args.n):
        a, b = random_conflict(rng)
        e, bf = ea_cv_value(a, b).ea, ea_bruteforce(a, b, grid=grid)
        if np.isinf(bf):  # outside the grid's magnitude range
            beyond += 1
            err.append(0.0 if e > grid.a_max else np.inf)
        else:
            err.append(abs(e - bf) / max(0.01 * bf, 0.01))
    err = np.array(err)
    print(f"{args.n} scenes in {time.perf_counter() - t0:.1f} s ({beyond} beyond a_max = {grid.a_max:g})")
    print(f"within max(1%, 0.01): {np.mean(err <= 1):.2%}; worst {err.max():.2f}x the allowance")


if __name__ == "__main__":
    main()
