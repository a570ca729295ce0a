"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N] [--json OUT]

Both backends are imported directly, so the result does not depend on
``INTERVALRP_PURE_PYTHON``. Exits with status 1 when the extension is absent.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from intervalrp.kernels import _pykernels

try:
    from intervalrp.kernels import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None


def cases(rng):
    T, m, kappa = 50, 2, 1
    c = rng.normal(size=T)
    S = T - (m - 1) * kappa
    dist = _pykernels.trajectory_distances(c, m, kappa)
    G = rng.normal(size=(S, S))
    x = rng.normal(size=(16, 4, 24, 24))
    k = rng.normal(size=(8, 4, 3, 3))
    gout = rng.normal(size=(16, 8, 22, 22))
    pooled, idx = _pykernels.maxpool_forward(gout, 2)
    return {
        "trajectory_distances": lambda mod: mod.trajectory_distances(c, m, kappa),
        "smooth_rp_slope": lambda mod: mod.smooth_rp_slope(dist, 0.3, 10.0),
        "series_grad": lambda mod: mod.series_grad(c, dist, G, 0.3, 10.0, m, kappa),
        "conv2d_valid": lambda mod: mod.conv2d_valid(x, k),
        "conv2d_backward": lambda mod: mod.conv2d_backward(x, k, gout),
        "maxpool_forward": lambda mod: mod.maxpool_forward(gout, 2),
        "maxpool_backward": lambda mod: mod.maxpool_backward(pooled, idx, 2, gout.shape),
    }


def best_time(fn, repeat):
    t = timeit.Timer(fn)
    n, _ = t.autorange()
    return min(t.repeat(repeat, n)) / n


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the timings here")
    a = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    rows = []
    for name, call in cases(np.random.default_rng(0)).items():
        py = best_time(lambda: call(_pykernels), a.repeat)
        cy = best_time(lambda: call(_ckernels), a.repeat)
        rows.append({"kernel": name, "python_us": py * 1e6, "cython_us": cy * 1e6, "speedup": py / cy})
    print(f"{'kernel':<22}{'python us':>12}{'cython us':>12}{'speedup':>9}")
    for r in rows:
        print(f"{r['kernel']:<22}{r['python_us']:>12.1f}{r['cython_us']:>12.1f}{r['speedup']:>9.2f}")
    if a.json:
        with open(a.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
