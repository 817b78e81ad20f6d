"""Time the leapfrog step and the energy sum under the numba and numpy backends.

Both backends advance the same simplestEx state; the script reports the
time per call, the speed-up and the largest difference between the final
fields.

    python benchmarks/bench_kernels.py --L 8 --h 0.25 --steps 20
"""
import argparse
import time

import numpy as np

from nullwave import _accel
from nullwave import solver as S
from nullwave.algebra import get_preset
from nullwave.radiation import RadialProfile, radial_data


def make_state(backend, L, h):
    F = get_preset("simplestEx").F
    d1 = radial_data(RadialProfile.poly_bump(1.0, 2.0, 8), RadialProfile.bump(0.5, 1.5), eps=0.5)
    d2 = radial_data(RadialProfile.bump(0.8, 1.5), center=(0.5, 0.0, 0.0), eps=0.5)
    return S.init(F, [d1, d2], L=L, h=h, dt=h / 4, backend=backend)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench(backend, L, h, steps, repeat):
    st = make_state(backend, L, h)
    # warm-up triggers compilation (or loads it from the cache)
    S.step(st)
    S.energy(st)
    t_step = best_of(lambda: S.step(st), repeat)
    for _ in range(steps - repeat - 1):
        S.step(st)
    t_energy = best_of(lambda: S.energy(st), repeat)
    return st, t_step, t_energy


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--L", type=float, default=8.0)
    p.add_argument("--h", type=float, default=0.25)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--threads", type=int, default=None)
    args = p.parse_args(argv)
    if args.steps <= args.repeat + 1:
        p.error("--steps must exceed --repeat + 1")
    if args.threads is not None:
        _accel.set_threads(args.threads)

    n = S.grid_size(args.L, args.h)
    print(f"grid {n}^3 = {n ** 3:,} points, 2 components, {args.steps} steps")
    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA and not _accel.DISABLED_BY_ENV else [])
    results = {}
    for b in backends:
        st, ts, te = bench(b, args.L, args.h, args.steps, args.repeat)
        results[b] = (st, ts, te)
        print(f"{b:>6}: step {ts * 1e3:9.2f} ms   energy {te * 1e3:8.2f} ms   "
              f"{n ** 3 / ts / 1e6:7.1f} Mpoint/s")
    if len(results) == 2:
        a, b = results["numba"][0], results["numpy"][0]
        diff = max(float(np.max(np.abs(x - y))) for x, y in zip(a.levels, b.levels))
        scale = float(np.max(np.abs(b.levels[2])))
        print(f"speed-up: step {results['numpy'][1] / results['numba'][1]:.1f}x, "
              f"energy {results['numpy'][2] / results['numba'][2]:.1f}x")
        print(f"max |numba - numpy| = {diff:.2e} (field scale {scale:.2e})")
    else:
        print("numba unavailable or disabled; numpy timings only")


if __name__ == "__main__":
    main()
