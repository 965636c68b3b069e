"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Both backends are checked for agreement on every input before timing.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from vflshot import kernels


def _cases(rng, rows=256):
    x = rng.normal(size=(rows, 32))
    w = rng.normal(size=(32, 32)) / np.sqrt(32)
    b = rng.normal(size=32)
    dout = rng.normal(size=(rows, 32))
    logits = rng.normal(size=(rows, 10))
    labels = rng.integers(0, 10, size=rows).astype(np.intp)
    pts = rng.normal(size=(2000, 8))
    cents = rng.normal(size=(4, 8))
    return {
        f"dense_forward {rows}x32x32": (lambda k: k.dense_forward(x, w, b, True)),
        f"dense_backward {rows}x32x32": (lambda k: k.dense_backward(x, w, x @ w + b, dout, True)),
        f"softmax_xent {rows}x10": (lambda k: k.softmax_xent(logits, labels)),
        "assign_nearest 2000x8 k=4": (lambda k: k.assign_nearest(pts, cents)),
    }


def _flatten(out):
    if isinstance(out, tuple):
        return [np.asarray(o, dtype=np.float64).ravel() for o in out]
    return [np.asarray(out, dtype=np.float64).ravel()]


_END_TO_END = """
import time
from vflshot import kernels
from vflshot.config import ExperimentConfig
from vflshot.experiment import build_split
from vflshot.protocol import run_oneshot
cfg = ExperimentConfig(seed=0)
split = build_split(cfg)
t = time.perf_counter()
run_oneshot(split, cfg)
print(kernels.BACKEND, time.perf_counter() - t)
"""


def end_to_end():
    """Wall time of one default one-shot run under each backend (fresh process each)."""
    out = {}
    for backend in ("python", "cython"):
        env = dict(os.environ, VFLSHOT_BACKEND=backend)
        res = subprocess.run([sys.executable, "-c", _END_TO_END], env=env, capture_output=True,
                             text=True, check=True)
        name, secs = res.stdout.split()
        out[name] = float(secs)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--number", type=int, default=50)
    args = ap.parse_args(argv)
    py = kernels.get_backend("python")
    try:
        cy = kernels.get_backend("cython")
    except ImportError:
        print("compiled kernels unavailable; build with `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'python us':>10s} {'cython us':>10s} {'speedup':>8s}")
    cases = {**_cases(rng, 32), **_cases(rng, 256)}
    for name, call in cases.items():
        for a, b in zip(_flatten(call(py)), _flatten(call(cy))):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)
        t_py = min(timeit.repeat(lambda: call(py), number=args.number, repeat=args.repeat)) / args.number
        t_cy = min(timeit.repeat(lambda: call(cy), number=args.number, repeat=args.repeat)) / args.number
        print(f"{name:28s} {t_py * 1e6:10.1f} {t_cy * 1e6:10.1f} {t_py / t_cy:8.2f}")
    e2e = end_to_end()
    if "cython" in e2e:
        print(f"{'one-shot run (s)':28s} {e2e['python']:10.2f} {e2e['cython']:10.2f} "
              f"{e2e['python'] / e2e['cython']:8.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
