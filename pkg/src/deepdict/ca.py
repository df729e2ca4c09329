"""Critical-aperture baseline: keep a sample only when linear interpolation
from the last kept sample would exceed the error bound somewhere.

Kept values are snapped to an eps-grid (error <= eps/2) so they entropy-code
as integers; the slope envelope is evaluated against the raw samples with
the full bound, so reconstruction error stays <= eps by construction.
"""

from __future__ import annotations

import numpy as np


def compress_channel(x: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Greedy critical aperture on one channel.

    Returns (indices, value grid units m) with values 2*(eps/2)*m = eps*m.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = np.asarray(x, dtype=np.float64).ravel()
    n = x.size
    if n == 0:
        raise ValueError("empty channel")
    m = np.sign(x) * np.floor(np.abs(x) / eps + 0.5)  # value grid units
    vq = eps * m

    idx = [0]
    vals = [m[0]]
    if n == 1:
        return np.asarray(idx, dtype=np.int64), np.asarray(vals, dtype=np.int64)

    anchor = 0
    v0 = vq[0]
    s_lo, s_hi = -np.inf, np.inf
    j = 1
    while j < n:
        dx = j - anchor
        s_end = (vq[j] - v0) / dx
        if s_lo <= s_end <= s_hi:
            # j stays reachable; it may become interior, so tighten with it
            s_hi = min(s_hi, (x[j] + eps - v0) / dx)
            s_lo = max(s_lo, (x[j] - eps - v0) / dx)
            j += 1
        else:
            keep = j - 1
            idx.append(keep)
            vals.append(m[keep])
            anchor = keep
            v0 = vq[keep]
            s_lo, s_hi = -np.inf, np.inf
            # reprocess j against the new anchor (always feasible when adjacent)
    if idx[-1] != n - 1:
        idx.append(n - 1)
        vals.append(m[n - 1])
    return np.asarray(idx, dtype=np.int64), np.asarray(vals, dtype=np.int64)


def reconstruct_channel(idx: np.ndarray, vals: np.ndarray, eps: float, n: int) -> np.ndarray:
    """Linear interpolation between kept (index, grid value) pairs."""
    idx = np.asarray(idx, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64) * eps
    if idx.size == 0 or idx[0] != 0 or idx[-1] != n - 1:
        raise ValueError("kept indices must start at 0 and end at n-1")
    out = np.empty(n, dtype=np.float64)
    for a in range(idx.size - 1):
        i0, i1 = int(idx[a]), int(idx[a + 1])
        v0, v1 = vals[a], vals[a + 1]
        span = i1 - i0
        t = np.arange(span, dtype=np.float64) / span
        out[i0:i1] = v0 + (v1 - v0) * t
    out[n - 1] = vals[-1]
    return out
