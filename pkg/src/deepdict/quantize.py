"""Uniform residual quantization that enforces the absolute-error bound."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Beyond this magnitude the quantization index would not fit signed 64-bit.
_INDEX_LIMIT = float(2**62)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest with halves away from zero: sign(x) * floor(|x| + 0.5).

    Platform-independent, unlike banker's rounding; the rule is part of the
    container compatibility contract.
    """
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class ResidualBlock:
    """Residuals with their quantization indices and dequantized values."""

    r: np.ndarray    # float64, original units
    k: np.ndarray    # int64 indices, r_q = 2*eps*k
    r_q: np.ndarray  # float64
    eps: float


def quantize(r: np.ndarray, eps: float) -> ResidualBlock:
    """Map r to the nearest multiple of 2*eps, guaranteeing |r - r_q| <= eps."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    r = np.asarray(r, dtype=np.float64)
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals must be finite")
    scaled = r / (2.0 * eps)
    if scaled.size and float(np.max(np.abs(scaled))) >= _INDEX_LIMIT:
        raise OverflowError(
            f"|r / 2eps| exceeds 2^62; eps={eps} is too small for data of this scale"
        )
    k = _round_half_away(scaled).astype(np.int64)
    r_q = 2.0 * eps * k
    return ResidualBlock(r=r, k=k, r_q=r_q, eps=eps)


def dequantize(k: np.ndarray, eps: float) -> np.ndarray:
    """Inverse mapping: 2*eps*k as float64."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    return 2.0 * eps * np.asarray(k, dtype=np.float64)


@dataclass(frozen=True)
class MaaeReport:
    max_abs_err: float
    eps: float
    passed: bool


def verify_maae(x, x_recon, eps: float) -> MaaeReport:
    """Check max |x - x_recon| <= eps, with 4 ulp slack for float round-off."""
    a = np.asarray(getattr(x, "values", x), dtype=np.float64)
    b = np.asarray(getattr(x_recon, "values", x_recon), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    err = np.abs(a - b)
    slack = 4.0 * np.spacing(np.maximum(np.abs(a), np.abs(b)))
    passed = bool(np.all(err <= eps + slack))
    return MaaeReport(max_abs_err=float(err.max(initial=0.0)), eps=eps, passed=passed)
