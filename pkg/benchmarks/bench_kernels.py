"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--requests 3000]

Reports the best-of-N time per call for each kernel, and the wall time of a
short Harmonia run with each backend.
"""
from __future__ import annotations

import argparse
import time
import timeit

import numpy as np

from hss_sim.devices import preset
from hss_sim.engine import Engine
from hss_sim.rl import Network, available_backends
from hss_sim.trace_io import TraceProfile, footprint, generate_trace


def kernel_cases(k, batch: int, atoms: int):
    rng = np.random.default_rng(0)
    net = Network(2, atoms, rng=rng, kernels=k)
    x = rng.uniform(0, 1, (batch, 7))
    nx = rng.uniform(0, 1, (batch, 7))
    actions = rng.integers(0, 2, batch)
    rewards = rng.uniform(-1, 1, batch)
    probs = rng.dirichlet(np.ones(atoms), batch) if atoms > 1 else np.ones((batch, 1))
    one = x[0].copy()
    p, g = net.w2.reshape(-1).copy(), rng.normal(size=net.w2.size)
    m, v = np.zeros_like(p), np.zeros_like(p)
    params = net.params
    return {
        "q_values (1 input)": lambda: k.q_values(*params, one, 2, atoms, net.support),
        f"forward_batch ({batch})": lambda: k.forward_batch(*params, x, 2, atoms, net.support),
        f"c51_project ({batch})": lambda: k.c51_project(rewards, 0.9, probs, net.support),
        f"dqn_loss_and_grads ({batch})": lambda: k.dqn_loss_and_grads(
            params, params, params, x, actions, rewards, nx, 0.9, 2, atoms, net.support),
        "adam_update (w2)": lambda: k.adam_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001),
    }


def time_call(fn, repeat: int) -> float:
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=128)
    ap.add_argument("--atoms", type=int, default=51)
    ap.add_argument("--requests", type=int, default=3000)
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the numpy kernels are timed")
    names = list(backends)
    cases = {n: kernel_cases(backends[n], args.batch, args.atoms) for n in names}

    header = f"{'kernel':<28}" + "".join(f"{n + ' (us)':>16}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label in cases[names[0]]:
        times = [time_call(cases[n][label], args.repeat) * 1e6 for n in names]
        row = f"{label:<28}" + "".join(f"{t:>16.2f}" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)

    prof = TraceProfile(0.8, 500.0, 2000, hot_fraction=0.05, hot_skew=0.8)
    trace = generate_trace(prof, args.requests, 0)
    hss = preset("perf_opt", footprint(trace))
    walls = {}
    for n in names:
        t0 = time.perf_counter()
        res = Engine(trace, hss, "harmonia", seed=0, kernels=backends[n]).run()
        walls[n] = time.perf_counter() - t0
        print(f"harmonia run, {args.requests} requests, {n}: {walls[n]:.2f} s "
              f"({walls[n] / args.requests * 1e3:.3f} ms/request, "
              f"avg latency {res.latencies_us.mean():.2f} us)")
    if len(walls) == 2:
        print(f"end-to-end speedup: {walls['python'] / walls['cython']:.1f}x")


if __name__ == "__main__":
    main()
