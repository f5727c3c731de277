#!/usr/bin/env python3
"""Throughput comparison of the substep kernel lanes.

Run from the repository root:

    python3 benchmarks/bench_kernel.py [--seconds 2.0]

or equivalently `reorient bench-kernel`.
"""

import argparse

from reorient._bench_kernel import bench

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seconds", type=float, default=2.0, help="time budget per lane")
    args = ap.parse_args()
    bench(args.seconds)
