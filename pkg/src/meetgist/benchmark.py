"""Compare the compiled and pure-Python chain kernels.

Runs identical training chains through both backends on a synthetic corpus,
verifies the resulting weight blocks and RNG state are bit-identical, and
reports per-chain timings. Run as ``python3 -m meetgist.benchmark``.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from ._kernel import _pykernel
from .features import build_registry, fit_stats
from .learning import supervised_label_space
from .model import Weights, compile_discussion
from .rng import Pcg32
from .synth import CorpusSpec, generate
from .corpus import prepare

try:
    from ._kernel import _ckernel
except ImportError:
    _ckernel = None


def _run_pass(kernel, views, weights, sums, rng_state, rounds, eta, alpha,
              epochs):
    count = 1
    for _ in range(epochs):
        for view in views:
            count = kernel.run_chain(view, weights, sums, rng_state, rounds,
                                     eta, alpha, True, count)
    return count


def _blocks(weights: Weights) -> bytes:
    return b"".join(b.tobytes() for b in (weights.wc, weights.wd,
                                          weights.wo2, weights.wcd))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="meetgist.benchmark",
        description="chain-kernel backend parity check and timing")
    parser.add_argument("--discussions", type=int, default=30)
    parser.add_argument("--rounds", type=int, default=50)
    parser.add_argument("--epochs", type=int, default=5)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    corpus = generate(CorpusSpec(count=args.discussions, seed=args.seed))
    preps = [prepare(d) for d in corpus]
    stats = fit_stats(preps)
    registry = build_registry(preps, supervised_label_space(preps), stats)
    views = [compile_discussion(p, registry, stats) for p in preps]
    chains = args.epochs * len(views)
    print(f"{len(views)} discussions, {args.epochs} epochs, "
          f"{args.rounds} rounds -> {chains} chains per pass")

    backends = [("pure", _pykernel)]
    if _ckernel is not None:
        backends.append(("compiled", _ckernel))
    else:
        print("compiled extension not built; timing the pure backend only")

    results = {}
    for name, kernel in backends:
        best = None
        for _ in range(args.repeats):
            rng = Pcg32(args.seed)
            weights = Weights.random(registry, rng, stats.fingerprint())
            sums = weights.copy()
            rng_state = np.array([rng.state, rng.inc], dtype=np.uint64)
            t0 = time.perf_counter()
            count = _run_pass(kernel, views, weights, sums, rng_state,
                              args.rounds, 0.01, 0.1, args.epochs)
            dt = time.perf_counter() - t0
            best = dt if best is None else min(best, dt)
        results[name] = (best, weights, sums, rng_state, count)
        print(f"{name:9s} {best:8.3f} s  "
              f"({1e3 * best / chains:7.3f} ms/chain)")

    if len(results) == 2:
        p = results["pure"]
        c = results["compiled"]
        same = (_blocks(p[1]) == _blocks(c[1])
                and _blocks(p[2]) == _blocks(c[2])
                and p[3].tobytes() == c[3].tobytes()
                and p[4] == c[4])
        if not same:
            print("backends DIVERGED: outputs are not bit-identical")
            return 1
        print(f"outputs bit-identical; speedup {p[0] / c[0]:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
