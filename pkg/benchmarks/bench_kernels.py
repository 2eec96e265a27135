"""Time the numba and numpy pair kernels on the same inputs.

    python3 benchmarks/bench_kernels.py --sizes 101 301 601 --repeat 5

Each kernel is warmed up once (so numba compilation is excluded), then
timed ``repeat`` times; the best time is reported.  Both backends must
return identical tables, which is asserted before any timing is printed.
"""
import argparse
import time

import numpy as np

from commonfix import kernels
from commonfix.auxiliary import AuxFunction
from commonfix.metric import Domain, Grid, Metric, audit_metric, sample


def _best(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


PSIS = {
    "power_sum(1,1)": AuxFunction.power_sum(1.0, 1.0),
    "scaled(2,1,.5,.7)": AuxFunction.scaled_power(2.0, 1.0, 0.5, 0.7),
}


def bench_pairs(n, repeat, psi):
    X = np.linspace(0.0, 1.0, n)[:, None]
    AX, SX = X, X / 2
    out = {}
    for name in ("numpy", "numba"):
        with kernels.using(name):
            out[name] = kernels.max_form(AX, SX, AX, SX, 0, psi)
            out[name + "_t"] = _best(lambda: kernels.max_form(AX, SX, AX, SX, 0, psi), repeat)
    for a, b in zip(out["numpy"], out["numba"]):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
    return out["numpy_t"], out["numba_t"]


def bench_triangle(n, repeat):
    s = sample(Domain((0.0, 0.0), (1.0, 1.0)), Grid(int(round(n ** 0.5))))
    out = {}
    for name in ("numpy", "numba"):
        with kernels.using(name):
            out[name] = audit_metric(Metric("euclidean"), s).triangle
            out[name + "_t"] = _best(lambda: audit_metric(Metric("euclidean"), s), repeat)
    assert out["numpy"] == out["numba"]
    return out["numpy_t"], out["numba_t"]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[101, 301, 601])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is unavailable (or disabled); nothing to compare")

    print(f"{'kernel':<30}{'n':>6}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>9}")
    for label, psi in PSIS.items():
        for n in args.sizes:
            t_np, t_nb = bench_pairs(n, args.repeat, psi)
            name = f"pairs {label}"
            print(f"{name:<30}{n:>6}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}")
    for n in args.sizes:
        t_np, t_nb = bench_triangle(n, args.repeat)
        print(f"{'triangle audit':<30}{n:>6}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}")


if __name__ == "__main__":
    main()
