"""Throughput comparison of the substep kernel lanes."""

import argparse
import time

import numpy as np

from reorient.env import HandCubeEnv, available_lanes, sample_domain
from reorient.env.params import D_SIZE, E_SIZE


def bench(seconds: float) -> None:
    env = HandCubeEnv(seed=0)
    env.reset(cfg=sample_domain(np.random.default_rng(0)))
    pf = np.zeros(3)
    pt = np.zeros(3)
    no_frames = np.zeros((0, 24))
    energy = np.zeros(E_SIZE)
    diag = np.zeros(D_SIZE)

    results = {}
    for name, mod in available_lanes().items():
        q, qd, qb = env._q.copy(), env._qdot.copy(), env._qbar.copy()
        cx, cq = env._cx.copy(), env._cq.copy()
        cv, cw = env._cv.copy(), env._cw.copy()
        an, sp = env._anchors.copy(), env._spin_anchors.copy()
        t0 = time.perf_counter()
        n = 0
        while time.perf_counter() - t0 < seconds:
            mod.run_substeps(
                q, qd, qb, cx, cq, cv, cw, env._params, env._mounts, env._inward,
                env.qmin, env.qmax, pf, pt, an, sp, 100, 0, no_frames, energy, diag,
            )
            n += 100
        dt = time.perf_counter() - t0
        results[name] = n / dt
        print(f"{name:>9}: {n / dt:12,.0f} substeps/s  "
              f"({n / dt / 100:10,.1f} policy steps/s, "
              f"{n / dt / 1000:8.1f}x realtime)")

    if len(results) == 2:
        print(f"{'speedup':>9}: {results['compiled'] / results['python']:.1f}x")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seconds", type=float, default=2.0, help="time budget per lane")
    args = ap.parse_args()
    bench(args.seconds)
