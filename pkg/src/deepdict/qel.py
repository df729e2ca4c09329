"""Training losses: L1/L2 regression and the quantized entropy loss.

The entropy loss measures the Shannon entropy (nats) of the uniformly
quantized residual distribution. Its forward pass uses hard symbol counts;
the backward pass uses the smooth surrogate gradient

    dH/dr_i = sum_j (1 + ln p_j) * R(r_i - s_j)
    R(d)    = b / (n * eps) * sign(u) * |u|^(b-1) / (|u|^b + 1)^2,  u = d / eps

which is evaluated in normalized units to avoid eps**b underflow and uses
|u| with the sign restored so that odd b has no pole at u = -1 (for even b
this coincides with the plain power form). Symbols further than clamp_u
quantization half-widths from r_i contribute nothing and are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .codec import EntropyModel
from .quantize import _round_half_away


@dataclass(frozen=True)
class QELParams:
    eps: float
    b: int = 10
    clamp_u: float = 50.0

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if int(self.b) != self.b or self.b < 1:
            raise ValueError(f"b must be an integer >= 1, got {self.b}")
        if self.clamp_u <= 0:
            raise ValueError("clamp_u must be positive")


@dataclass(frozen=True)
class GradWorkspace:
    """Dense view of the backward pass, for inspection and tests."""

    distances: np.ndarray  # (|r|, |S|) with d_ij = r_i - s_j
    model: EntropyModel
    weights: np.ndarray    # 1 + ln p(s_j)


def _quantize_indices(r: np.ndarray, eps: float) -> np.ndarray:
    return _round_half_away(r / (2.0 * eps)).astype(np.int64)


def qel_forward(r: np.ndarray, params: QELParams) -> float:
    """Entropy (nats) of the empirical distribution of quantized residuals."""
    r = np.asarray(r, dtype=np.float64).ravel()
    if r.size == 0:
        raise ValueError("qel_forward needs at least one residual")
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals must be finite")
    _, counts = np.unique(_quantize_indices(r, params.eps), return_counts=True)
    n = r.size
    # ln(n) - sum(c * ln c) / n  ==  -sum p ln p, computed stably
    return float(np.log(n) - np.sum(counts * np.log(counts)) / n)


def pull_strength(d: np.ndarray, eps: float, b: int, n: int) -> np.ndarray:
    """The per-symbol gradient kernel R(d) for residual count n."""
    u = np.asarray(d, dtype=np.float64) / eps
    au = np.abs(u)
    with np.errstate(over="ignore", invalid="ignore"):
        aub = au**b
        r = (b / (n * eps)) * np.sign(u) * au ** (b - 1) / (aub + 1.0) ** 2
    # overflow of |u|^b means the kernel is indistinguishable from zero
    bad = ~np.isfinite(r)
    if np.any(bad):
        r = np.where(bad, 0.0, r)
    return r


def qel_backward(r: np.ndarray, params: QELParams) -> np.ndarray:
    """Surrogate gradient of the quantized entropy with respect to r."""
    shape = np.shape(r)
    rf = np.asarray(r, dtype=np.float64).ravel()
    if rf.size == 0:
        raise ValueError("qel_backward needs at least one residual")
    n = rf.size
    eps = params.eps
    step = 2.0 * eps
    k = _quantize_indices(rf, eps)
    symbols, counts = np.unique(k, return_counts=True)
    weights = 1.0 + np.log(counts / n)

    grad = np.zeros(n, dtype=np.float64)
    # symbols live on the lattice 2*eps*m, so only |m - k_i| <= clamp_u/2
    # can contribute; scan that fixed band of offsets
    reach = int(np.ceil(params.clamp_u / 2.0)) + 1
    for off in range(-reach, reach + 1):
        m = k + off
        pos = np.searchsorted(symbols, m)
        inside = pos < symbols.size
        hit = np.zeros(n, dtype=bool)
        hit[inside] = symbols[pos[inside]] == m[inside]
        if not hit.any():
            continue
        idx = np.flatnonzero(hit)
        d = rf[idx] - step * m[idx].astype(np.float64)
        contrib = weights[pos[idx]] * pull_strength(d, eps, params.b, n)
        contrib[np.abs(d) > params.clamp_u * eps] = 0.0
        grad[idx] += contrib
    return grad.reshape(shape)


def qel_workspace(r: np.ndarray, params: QELParams) -> GradWorkspace:
    """Materialize the full distance matrix (small inputs only)."""
    rf = np.asarray(r, dtype=np.float64).ravel()
    if rf.size == 0:
        raise ValueError("workspace needs at least one residual")
    if rf.size > 100_000:
        raise ValueError("workspace is for small inputs; use qel_backward")
    model = EntropyModel.from_symbols(_quantize_indices(rf, params.eps))
    s_vals = 2.0 * params.eps * model.symbols.astype(np.float64)
    return GradWorkspace(
        distances=rf[:, None] - s_vals[None, :],
        model=model,
        weights=1.0 + np.log(model.probs),
    )


def regression_loss(pred: np.ndarray, target: np.ndarray, kind: str) -> float:
    """Mean absolute (L1) or mean squared (L2) error."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    kind = kind.lower()
    if kind == "l1":
        return float(np.mean(np.abs(p - t)))
    if kind == "l2":
        return float(np.mean((p - t) ** 2))
    raise ValueError(f"unknown loss kind {kind!r}")


class _QelLossFn(torch.autograd.Function):
    @staticmethod
    def forward(ctx, residual, eps, b, clamp_u):
        params = QELParams(eps=eps, b=b, clamp_u=clamp_u)
        r_np = residual.detach().cpu().numpy().astype(np.float64)
        ctx.r_np = r_np
        ctx.params = params
        return residual.new_tensor(qel_forward(r_np, params))

    @staticmethod
    def backward(ctx, grad_out):
        grad = qel_backward(ctx.r_np, ctx.params)
        g = torch.from_numpy(grad).to(grad_out.dtype) * grad_out
        return g, None, None, None


def qel_loss(residual: torch.Tensor, params: QELParams) -> torch.Tensor:
    """Autograd-capable quantized entropy loss on a residual tensor."""
    return _QelLossFn.apply(residual, params.eps, params.b, params.clamp_u)
