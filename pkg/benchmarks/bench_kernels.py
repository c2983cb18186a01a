"""Compare the compiled and pure-Python RK4 kernels.

Usage: python benchmarks/bench_kernels.py [--dims 2 4 8 16] [--steps 2000]

Each run propagates a random anti-Hermitian generator sequence from the
identity, checks that both backends agree, and reports the wall time per
step.  A second table times a full interaction-picture propagation of the
canonical problem through the public API.
"""

import argparse
import time

import numpy as np

from adiaswitch import kernels
from adiaswitch.io import load_shipped
from adiaswitch.propagation import evolve_from_past
from adiaswitch.switching import Exponential


def random_generators(dim, steps, rng):
    a = rng.normal(size=(2 * steps + 1, dim, dim)) + 1j * rng.normal(size=(2 * steps + 1, dim, dim))
    return np.ascontiguousarray(0.5 * (a - a.conj().transpose(0, 2, 1)))


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        tic = time.perf_counter()
        fn()
        times.append(time.perf_counter() - tic)
    return min(times)


def kernel_table(dims, steps, repeat):
    rng = np.random.default_rng(0)
    backends = kernels.available_backends()
    print(f"{'dim':>4} " + " ".join(f"{b + ' us/step':>18}" for b in backends) + f" {'speedup':>8} {'max diff':>10}")
    for dim in dims:
        gen = random_generators(dim, steps, rng)
        h = 1e-3
        results, timing = {}, {}
        for b in backends:
            kern = kernels.get_kernel(b)

            def run(kern=kern):
                u = np.eye(dim, dtype=complex)
                kern(gen, u, h)
                return u

            timing[b] = best_of(run, repeat) / steps * 1e6
            results[b] = run()
        diff = (
            np.abs(results["compiled"] - results["python"]).max() if len(backends) == 2 else float("nan")
        )
        speed = timing["python"] / timing["compiled"] if "compiled" in timing else float("nan")
        cols = " ".join(f"{timing[b]:>18.2f}" for b in backends)
        print(f"{dim:>4} {cols} {speed:>8.1f} {diff:>10.2e}")


def api_table(repeat):
    problem = load_shipped("canonical")
    profile = Exponential()
    print("\ncanonical problem, full evolution from the truncated past")
    for b in kernels.available_backends():
        for eps in (0.1, 0.025):
            t = best_of(lambda: evolve_from_past(problem, profile, eps, "full", backend=b), repeat)
            print(f"  {b:>8}  eps={eps:<6} {t * 1e3:8.1f} ms")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dims", type=int, nargs="+", default=[2, 4, 8, 16])
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    print(f"default backend: {kernels.BACKEND}")
    kernel_table(args.dims, args.steps, args.repeat)
    api_table(args.repeat)


if __name__ == "__main__":
    main()
