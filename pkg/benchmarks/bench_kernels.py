"""Compare the compiled and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]

Shapes match the default classifier on 32x32 inputs with a batch of 64.
"""
import argparse
import timeit

import numpy as np

from freqattack import kernels


def cases(rng):
    x1 = rng.uniform(size=(64, 32, 32, 1))
    w1 = rng.normal(size=(3, 3, 1, 8))
    x2 = rng.uniform(size=(64, 30, 30, 8))
    w2 = rng.normal(size=(3, 3, 8, 16))
    d1 = rng.normal(size=(64, 30, 30, 8))
    d2 = rng.normal(size=(64, 14, 14, 16))
    img = rng.uniform(size=(32, 32, 3))
    return {
        "conv1 forward": lambda k: k.conv2d_forward(x1, w1, np.zeros(8), 1),
        "conv2 forward": lambda k: k.conv2d_forward(x2, w2, np.zeros(16), 2),
        "conv1 backward": lambda k: k.conv2d_backward(x1, w1, d1, 1),
        "conv2 backward": lambda k: k.conv2d_backward(x2, w2, d2, 2),
        "median 3x3": lambda k: k.median_filter(img, 3),
        "median 5x5": lambda k: k.median_filter(img, 5),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args(argv)
    backends = kernels.available_backends()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}" + "".join(f"{b:>12}" for b in backends) + "     speedup")
    for name, fn in cases(rng).items():
        times = []
        for b in backends:
            mod = kernels.get_backend(b)
            fn(mod)
            best = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeats))
            times.append(best * 1e3)
        speed = f"{times[0] / times[-1]:10.2f}x" if len(times) > 1 else "         -"
        print(f"{name:<16}" + "".join(f"{t:10.2f}ms" for t in times) + speed)


if __name__ == "__main__":
    main()
