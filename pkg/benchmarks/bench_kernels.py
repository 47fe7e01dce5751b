"""Compare the compiled and numpy kernel backends.

Times ``factor_batch`` (log-determinants, with and without inverses) on
scenario stacks shaped like the demo problems, after checking the two
backends agree.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import sys
import timeit

import numpy as np

from robust_oed import kernels

CASES = [
    # (label, n_y, n_theta, n_scenarios)
    ("one-out, demo size", 267, 6, 267),
    ("clipping, 100 masks", 267, 6, 100),
    ("bernoulli on a 12-sensor support", 12, 6, 4096),
    ("appendix 5x2 series", 5, 2, 16),
    ("large scenario stack", 40, 4, 100_000),
]


def make_case(n_y, n_theta, n_s, seed=0):
    rng = np.random.default_rng(seed)
    T = rng.standard_normal((n_y, n_theta))
    w = rng.uniform(0.1, 1.0, n_y)
    S = (rng.random((n_s, n_y)) > 0.1).astype(float)
    return T, w, S


def best_time(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write the timings to this file")
    args = ap.parse_args(argv)
    if "cython" not in kernels.BACKENDS:
        print("compiled backend not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 1
    rows = []
    print(f"{'case':34s} {'inv':>4s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for label, n_y, p, n_s in CASES:
        T, w, S = make_case(n_y, p, n_s)
        for want_inv in (False, True):
            ref = kernels.factor_batch(T, w, S, want_inv=want_inv, backend="python")
            got = kernels.factor_batch(T, w, S, want_inv=want_inv, backend="cython")
            np.testing.assert_array_equal(ref[1], got[1])
            np.testing.assert_allclose(ref[0], got[0], rtol=1e-10, atol=1e-10)
            t = {
                b: best_time(lambda b=b: kernels.factor_batch(T, w, S, want_inv=want_inv, backend=b), args.repeat)
                for b in ("python", "cython")
            }
            rows.append({"case": label, "n_y": n_y, "n_theta": p, "n_scenarios": n_s, "inverse": want_inv,
                         "python_s": t["python"], "cython_s": t["cython"]})
            print(f"{label:34s} {'yes' if want_inv else 'no':>4s} {1e3 * t['python']:10.3f} "
                  f"{1e3 * t['cython']:10.3f} {t['python'] / t['cython']:7.2f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
