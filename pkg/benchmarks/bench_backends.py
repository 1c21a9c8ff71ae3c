"""Time the compiled kernels against the pure-numpy fallback.

Runs simulate_paths and scan_flights on identical launch batches through
both backends, checks the outputs agree bit for bit, and prints wall times
plus the speedup. Run from the repo root:

    python3 benchmarks/bench_backends.py [--batch 4096] [--repeats 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from shuttlekit._kernels import reference
from shuttlekit.corpus import HitZone, LaunchRanges
from shuttlekit.dynamics import AeroParams

try:
    from shuttlekit._kernels import _fastpath
except ImportError:
    _fastpath = None


def sample_batch(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    r = LaunchRanges()
    lo = np.array([b[0] for b in (r.px, r.py, r.pz, r.vx, r.vy, r.vz)])
    hi = np.array([b[1] for b in (r.px, r.py, r.pz, r.vx, r.vy, r.vz)])
    return rng.uniform(lo, hi, size=(n, 6))


def best_of(fn, repeats: int) -> tuple[float, object]:
    times = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=4096, help="launches per run")
    ap.add_argument("--steps", type=int, default=1250,
                    help="RK4 steps per flight (1250 = 2.5 s at 500 Hz)")
    ap.add_argument("--repeats", type=int, default=3, help="take best of N")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if _fastpath is None:
        print("compiled extension not built; nothing to compare")
        return 1

    params = AeroParams()
    x0 = sample_batch(args.batch, args.seed)
    zone = HitZone()
    box = np.array([*zone.x_range, *zone.y_range, *zone.z_range])
    dt = 1.0 / 500.0

    print(f"batch={args.batch} steps={args.steps} dt={dt:g} "
          f"best of {args.repeats}")
    print(f"{'kernel':<16}{'compiled':>12}{'reference':>12}{'speedup':>10}")

    t_c, paths_c = best_of(
        lambda: _fastpath.simulate_paths(x0, dt, args.steps, params.L,
                                         params.g, 0), args.repeats)
    t_r, paths_r = best_of(
        lambda: reference.simulate_paths(x0, dt, args.steps, params.L,
                                         params.g, 0), args.repeats)
    same = np.array_equal(paths_c, paths_r)
    print(f"{'simulate_paths':<16}{t_c:>11.3f}s{t_r:>11.3f}s{t_r / t_c:>9.1f}x"
          f"{'' if same else '  MISMATCH'}")
    if not same:
        return 1

    t_c, scan_c = best_of(
        lambda: _fastpath.scan_flights(x0, dt, args.steps, params.L, params.g,
                                       box, 0.8, 0), args.repeats)
    t_r, scan_r = best_of(
        lambda: reference.scan_flights(x0, dt, args.steps, params.L, params.g,
                                       box, 0.8, 0), args.repeats)
    same = (np.array_equal(scan_c[0], scan_r[0])
            and np.array_equal(scan_c[1], scan_r[1]))
    print(f"{'scan_flights':<16}{t_c:>11.3f}s{t_r:>11.3f}s{t_r / t_c:>9.1f}x"
          f"{'' if same else '  MISMATCH'}")
    if not same:
        return 1

    print("outputs agree bit for bit")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
