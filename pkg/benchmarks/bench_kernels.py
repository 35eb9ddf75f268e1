"""Time each hot kernel under the compiled and the numpy backend.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from crahnsim import kernels


def _cases(rng):
    X = rng.random((400, 5))
    Y = np.eye(4)[rng.integers(0, 4, 400)]
    w = (rng.uniform(-0.5, 0.5, (5, 5)), rng.uniform(-0.5, 0.5, 5),
         rng.uniform(-0.5, 0.5, (4, 5)), rng.uniform(-0.5, 0.5, 4))
    su = rng.uniform(0, 1000, (50, 2))
    pu = rng.uniform(0, 1000, (5, 2))
    pu_ch = np.arange(5, dtype=np.int64)
    active = np.ones(5, dtype=np.uint8)
    t = np.arange(0, 60000, 100, dtype=np.int64)
    busy = (rng.random((10, t.size)) < 0.4).astype(np.uint8)
    return {
        "train_full_batch (200 epochs, 400x5->4)":
            lambda k: k.train_full_batch(*w, X, Y, 0.5, 200, 0.0),
        "batch_mse (400x5->4)": lambda k: k.batch_mse(*w, X, Y),
        "sense_busy (50 SU x 5 PU)":
            lambda k: k.sense_busy(su, pu, pu_ch, active, 250.0, 10),
        "adjacency (50 nodes)": lambda k: k.adjacency(su, 250.0),
        "window_features (10 ch x 600 samples)":
            lambda k: k.window_features(t, busy, 0, t.size, 60000, 60000),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    cases = _cases(np.random.default_rng(0))
    backends = kernels.available_backends()
    print(f"{'kernel':42s}" + "".join(f"{b:>14s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases.items():
        times = []
        for b in backends:
            mod = kernels.get_backend(b)
            number = max(1, int(0.2 / max(timeit.timeit(lambda: fn(mod), number=1), 1e-7)))
            best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
            times.append(best)
        row = f"{name:42s}" + "".join(f"{t * 1e6:12.1f}us" for t in times)
        if len(times) > 1:
            row += f"{times[1] / times[0]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
