"""Hot inner loops, with a numba backend and a pure-numpy fallback.

The backend is picked once at import time. Set ``SSANC_DISABLE_NUMBA=1`` to
force the numpy path (useful for debugging and for the kernel benchmark), or
leave it unset to use numba whenever it is importable.

Both backends expose the same three entry points:

``nlms_pass(u, d, w_rev, step, eps)``
    One sample-recursive NLMS sweep. ``w_rev`` holds the taps in reversed
    order and is updated in place; the sum of squared a-priori errors is
    returned.
``lagged_covariance(x, L, edges)``
    Stride-1 sample covariance of the stacked delay-line vector.
``closed_loop(y_outer, p, w_leak, dg)``
    Loudspeaker/leakage-estimate recursion when the secondary-path estimate
    differs from the true path.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "BACKEND",
    "nlms_pass",
    "lagged_covariance",
    "closed_loop",
    "covariance_edges",
    "numba_available",
]


def _env_disabled() -> bool:
    return os.environ.get("SSANC_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


try:
    from numba import njit

    numba_available = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba_available = False


# ---------------------------------------------------------------------------
# Shared helpers (always numpy)
# ---------------------------------------------------------------------------


def covariance_edges(x: np.ndarray, L: int) -> tuple[np.ndarray, np.ndarray]:
    """First row and first column of every lagged cross-covariance block.

    Returns ``(row, col)`` of shape ``(C, C, L)`` with
    ``row[k, l, j] = sum_n x_k(n) x_l(n - j)`` and
    ``col[k, l, i] = sum_n x_k(n - i) x_l(n)``, the sums running over the
    valid frame positions ``n = L-1 .. N-1``.
    """
    from scipy.signal import correlate

    C = x.shape[0]
    row = np.empty((C, C, L))
    for k in range(C):
        tail = x[k, L - 1 :]
        for l in range(C):
            # valid-mode output index m pairs x_k(n) with x_l(n - (L-1-m))
            row[k, l] = correlate(x[l], tail, mode="valid")[::-1]
    col = np.transpose(row, (1, 0, 2)).copy()
    return row, col


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------


def _nlms_pass_numpy(u, d, w_rev, step, eps):
    M = w_rev.shape[0]
    up = np.concatenate((np.zeros(M - 1), u))
    sse = 0.0
    power = 0.0
    for n in range(u.shape[0]):
        reg = up[n : n + M]
        newest = up[n + M - 1]
        power += newest * newest
        if n >= M:
            oldest = up[n - 1]
            power -= oldest * oldest
        if power < 0.0:
            power = 0.0
        err = d[n] - np.dot(w_rev, reg)
        sse += err * err
        w_rev += (step * err / (power + eps)) * reg
    return sse


def _lagged_covariance_numpy(x, L, edges=None, chunk=4096):
    del edges  # direct accumulation does not need the recursion seeds
    C, N = x.shape
    T = N - L + 1
    dim = C * L
    acc = np.zeros((dim, dim))
    # frames[n', k*L + i] = x_k(n' + L - 1 - i)
    win = np.lib.stride_tricks.sliding_window_view(x, L, axis=1)[:, :, ::-1]
    for start in range(0, T, chunk):
        stop = min(start + chunk, T)
        block = np.transpose(win[:, start:stop, :], (1, 0, 2)).reshape(stop - start, dim)
        acc += block.T @ block
    return acc


def _closed_loop_numpy(y_outer, p, w_leak, dg):
    N = p.shape[0]
    Lw = w_leak.shape[0]
    Ld = dg.shape[0]
    y = np.zeros(N)
    p_hat = np.zeros(N)
    denom = 1.0 - dg[0] * w_leak[0]
    for n in range(N):
        acc_y = y_outer[n]
        for j in range(1, min(Lw, n + 1)):
            acc_y += w_leak[j] * p_hat[n - j]
        acc_p = p[n] + dg[0] * acc_y
        for j in range(1, min(Ld, n + 1)):
            acc_p += dg[j] * y[n - j]
        p_hat[n] = acc_p / denom
        y[n] = acc_y + w_leak[0] * p_hat[n]
    return y, p_hat


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if numba_available:

    @njit(cache=True, nogil=True)
    def _nlms_pass_numba(u, d, w_rev, step, eps):
        M = w_rev.shape[0]
        N = u.shape[0]
        up = np.zeros(N + M - 1)
        up[M - 1 :] = u
        sse = 0.0
        power = 0.0
        for n in range(N):
            newest = up[n + M - 1]
            power += newest * newest
            if n >= M:
                oldest = up[n - 1]
                power -= oldest * oldest
            if power < 0.0:
                power = 0.0
            yhat = 0.0
            for m in range(M):
                yhat += w_rev[m] * up[n + m]
            err = d[n] - yhat
            sse += err * err
            g = step * err / (power + eps)
            for m in range(M):
                w_rev[m] += g * up[n + m]
        return sse

    @njit(cache=True, nogil=True)
    def _lagged_recursion_numba(x, L, row, col):
        C, N = x.shape
        dim = C * L
        out = np.empty((dim, dim))
        for k in range(C):
            for l in range(C):
                ok = k * L
                ol = l * L
                for j in range(L):
                    out[ok, ol + j] = row[k, l, j]
                for i in range(1, L):
                    out[ok + i, ol] = col[k, l, i]
                for i in range(L - 1):
                    for j in range(L - 1):
                        out[ok + i + 1, ol + j + 1] = (
                            out[ok + i, ol + j]
                            + x[k, L - 2 - i] * x[l, L - 2 - j]
                            - x[k, N - 1 - i] * x[l, N - 1 - j]
                        )
        return out

    @njit(cache=True, nogil=True)
    def _closed_loop_numba(y_outer, p, w_leak, dg):
        N = p.shape[0]
        Lw = w_leak.shape[0]
        Ld = dg.shape[0]
        y = np.zeros(N)
        p_hat = np.zeros(N)
        denom = 1.0 - dg[0] * w_leak[0]
        for n in range(N):
            acc_y = y_outer[n]
            for j in range(1, min(Lw, n + 1)):
                acc_y += w_leak[j] * p_hat[n - j]
            acc_p = p[n] + dg[0] * acc_y
            for j in range(1, min(Ld, n + 1)):
                acc_p += dg[j] * y[n - j]
            p_hat[n] = acc_p / denom
            y[n] = acc_y + w_leak[0] * p_hat[n]
        return y, p_hat

    def _lagged_covariance_numba(x, L, edges=None):
        if edges is None:
            edges = covariance_edges(x, L)
        row, col = edges
        return _lagged_recursion_numba(x, L, row, col)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

IMPLEMENTATIONS = {
    "numpy": {
        "nlms_pass": _nlms_pass_numpy,
        "lagged_covariance": _lagged_covariance_numpy,
        "closed_loop": _closed_loop_numpy,
    }
}
if numba_available:
    IMPLEMENTATIONS["numba"] = {
        "nlms_pass": _nlms_pass_numba,
        "lagged_covariance": _lagged_covariance_numba,
        "closed_loop": _closed_loop_numba,
    }

BACKEND = "numba" if numba_available and not _env_disabled() else "numpy"

_active = IMPLEMENTATIONS[BACKEND]


def nlms_pass(u: np.ndarray, d: np.ndarray, w_rev: np.ndarray, step: float, eps: float) -> float:
    return float(
        _active["nlms_pass"](
            np.ascontiguousarray(u, dtype=np.float64),
            np.ascontiguousarray(d, dtype=np.float64),
            w_rev,
            float(step),
            float(eps),
        )
    )


def lagged_covariance(x: np.ndarray, L: int) -> np.ndarray:
    """Unnormalized sum of ``x~(n) x~(n)^T`` over all valid frames."""
    return _active["lagged_covariance"](np.ascontiguousarray(x, dtype=np.float64), int(L))


def closed_loop(
    y_outer: np.ndarray, p: np.ndarray, w_leak: np.ndarray, dg: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    return _active["closed_loop"](
        np.ascontiguousarray(y_outer, dtype=np.float64),
        np.ascontiguousarray(p, dtype=np.float64),
        np.ascontiguousarray(w_leak, dtype=np.float64),
        np.ascontiguousarray(dg, dtype=np.float64),
    )
