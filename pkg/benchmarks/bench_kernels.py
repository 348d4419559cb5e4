"""Compare the numba and numpy kernel backends on desk- and full-scale inputs.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3] [--full]

Each kernel runs once untimed (numba compiles on first call), then the best
of ``--repeat`` timings is reported together with the maximum absolute
difference between the two backends' outputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ssanc import _kernels


def _best(fn, repeat: int) -> tuple[float, object]:
    out = fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(full: bool):
    rng = np.random.default_rng(0)
    n = 80_000 if full else 16_000
    taps = 284 if full else 32
    C, L = (5, 879) if full else (4, 79)

    u = rng.standard_normal(n)
    d = np.convolve(u, rng.standard_normal(taps))[:n]

    def nlms(impl):
        w = np.zeros(taps)
        sse = impl["nlms_pass"](u, d, w, 0.5, 1e-8)
        return np.append(w, sse)

    x = rng.standard_normal((C, n))

    def cov(impl):
        return impl["lagged_covariance"](x, L)

    p = rng.standard_normal(n)
    y_outer = rng.standard_normal(n)
    w_leak = 0.1 * rng.standard_normal(64)
    dg = 0.05 * rng.standard_normal(16)

    def loop(impl):
        y, p_hat = impl["closed_loop"](y_outer, p, w_leak, dg)
        return np.concatenate([y, p_hat])

    return {"nlms_pass": nlms, "lagged_covariance": cov, "closed_loop": loop}


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--full", action="store_true", help="full-scale sizes (slow with numpy)")
    args = parser.parse_args(argv)

    backends = [b for b in ("numba", "numpy") if b in _kernels.IMPLEMENTATIONS]
    print(f"{'kernel':<20}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}{'max |diff|':>14}")
    for name, fn in cases(args.full).items():
        times, outs = [], []
        for b in backends:
            t, out = _best(lambda: fn(_kernels.IMPLEMENTATIONS[b]), args.repeat)
            times.append(t)
            outs.append(np.asarray(out))
        speedup = times[-1] / times[0] if len(times) == 2 else float("nan")
        diff = float(np.max(np.abs(outs[0] - outs[-1])))
        print(f"{name:<20}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times) + f"{speedup:>9.1f}x{diff:>14.3e}")


if __name__ == "__main__":
    main()
