"""Compare the compiled kernels with their numpy fallbacks.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Times the three hot paths of a training step: a batch of sum-tree priority
updates, a batch of prefix-sum lookups, and one Adam update over a flat
parameter buffer the size of the default Catch network.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from rsdqn import nn, sumtree
from rsdqn.agents import AgentNet, Architecture


def bench_sumtree(backend: str, capacity: int, batch: int, number: int) -> tuple[float, float]:
    rng = np.random.default_rng(0)
    tree = sumtree.SumTree(capacity, backend=backend)
    tree.update(np.arange(capacity), rng.random(capacity))
    idx = rng.integers(capacity, size=batch)
    vals = rng.random(batch)
    mass = rng.random(batch) * tree.total()
    t_update = min(timeit.repeat(lambda: tree.update(idx, vals), number=number, repeat=3)) / number
    t_find = min(timeit.repeat(lambda: tree.find(mass), number=number, repeat=3)) / number
    return t_update, t_find


def bench_adam(backend: str, number: int) -> float:
    net = AgentNet(Architecture(input_dim=400, n_actions=3, noisy=True), np.random.default_rng(0))
    state = nn.AdamState(lr=1e-4)
    grad = np.random.default_rng(1).standard_normal(net.params.flat.shape)

    def step():
        net.params.flat_grad[...] = grad
        nn.adam_step(net.params, state, backend=backend)

    return min(timeit.repeat(step, number=number, repeat=3)) / number


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--number", type=int, default=200)
    parser.add_argument("--capacity", type=int, default=10_000)
    parser.add_argument("--batch", type=int, default=32)
    args = parser.parse_args()

    backends = ["numpy"] + (["cython"] if sumtree.BACKEND == "cython" else [])
    print(f"compiled kernels available: {sumtree.BACKEND == 'cython' and nn.BACKEND == 'cython'}")
    print(f"{'kernel':<22} " + " ".join(f"{b:>12}" for b in backends) + "   speed-up")
    rows = {}
    for b in backends:
        up, find = bench_sumtree(b, args.capacity, args.batch, args.number)
        rows.setdefault("sumtree.update", []).append(up)
        rows.setdefault("sumtree.find", []).append(find)
        rows.setdefault("adam_step", []).append(bench_adam(b, args.number))
    for name, times in rows.items():
        cells = " ".join(f"{t * 1e6:>9.1f} us" for t in times)
        ratio = f"{times[0] / times[1]:>8.1f}x" if len(times) == 2 else ""
        print(f"{name:<22} {cells}   {ratio}")


if __name__ == "__main__":
    main()
