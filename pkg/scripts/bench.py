#!/usr/bin/env python3
"""Per-frame timing of the four-model EA on the mixed synthetic frame suite."""
import argparse

from evasive.ea_core import EaConfig, benchmark
from evasive.synth import frame_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--horizon", type=float, default=7.0)
    args = ap.parse_args()
    frames = frame_suite(args.n, args.seed)
    cfg = EaConfig(horizon=args.horizon)
    benchmark(frames[:5], cfg)  # load compiled kernels
    r = benchmark(frames, cfg)
    print(f"{r['n']} frames: mean {r['mean_ms']:.3f} ms, p95 {r['p95_ms']:.3f} ms, max {r['max_ms']:.3f} ms")


if __name__ == "__main__":
    main()
