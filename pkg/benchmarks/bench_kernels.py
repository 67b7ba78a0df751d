"""Compare the compiled and pure-Python kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Times the DTW used for adjacent-epoch similarity (60-sample epochs,
band 10), an unbanded 200 x 200 DTW, and one LSTM direction forward and
backward at training size (T=120, B=8, H=64). Outputs of the two backends
are checked for agreement before timing.
"""

import argparse
import json
import time

import numpy as np

from radar_somnia._kernels import available_backends


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    a60, b60 = rng.normal(size=60), rng.normal(size=60)
    a200, b200 = rng.normal(size=200), rng.normal(size=200)
    T, B, H = 120, 8, 64
    xw = rng.normal(size=(T, B, 4 * H))
    wh = rng.normal(size=(H, 4 * H)) / np.sqrt(H)
    dhs = rng.normal(size=(T, B, H))
    return {
        "dtw_60_band10": lambda k: k.dtw(a60, b60, 10),
        "dtw_200_full": lambda k: k.dtw(a200, b200, -1),
        "lstm_forward_T120_B8_H64": lambda k: k.lstm_forward(xw, wh),
        "lstm_fwd_bwd_T120_B8_H64": lambda k: k.lstm_backward(dhs, *k.lstm_forward(xw, wh)[1:], wh),
    }


def _close(x, y):
    if isinstance(x, tuple):
        return all(_close(a, b) for a, b in zip(x, y))
    return np.allclose(x, y, rtol=1e-12, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args(argv)

    backends = available_backends()
    rng = np.random.default_rng(args.seed)
    results = {}
    for name, fn in cases(rng).items():
        outs = {b: fn(k) for b, k in backends.items()}
        if "cython" in outs and not _close(outs["python"], outs["cython"]):
            raise SystemExit(f"{name}: backends disagree")
        results[name] = {b: _best(lambda k=k: fn(k), args.repeat) for b, k in backends.items()}

    print(f"{'case':<28}" + "".join(f"{b + ' (ms)':>16}" for b in backends) + f"{'speedup':>10}")
    for name, r in results.items():
        row = f"{name:<28}" + "".join(f"{r[b] * 1e3:>16.3f}" for b in backends)
        if "cython" in r:
            row += f"{r['python'] / r['cython']:>9.1f}x"
        print(row)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
