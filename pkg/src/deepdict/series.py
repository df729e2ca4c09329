"""Time series containers, synthesis, windowing, and file I/O."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

F32LE_MAGIC = b"DDTS"
F32LE_VERSION = 1
_F32LE_HEADER = struct.Struct("<4sHHQ")  # magic, version, d, l_total


@dataclass(frozen=True)
class TimeSeries:
    """A finite float64 matrix of shape (l_total, d)."""

    values: np.ndarray
    name: str = "series"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        if v.ndim != 2:
            raise ValidationError(f"series values must be 1-D or 2-D, got {v.ndim}-D")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ValidationError(f"series needs >=1 sample and >=1 channel, got shape {tuple(v.shape)}")
        bad = np.argwhere(~np.isfinite(v))
        if bad.size:
            t, c = bad[0]
            raise ValidationError(f"non-finite value at sample {int(t)}, channel {int(c)}")
        object.__setattr__(self, "values", v)

    @property
    def l_total(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def nbytes_f32(self) -> int:
        """Byte size of the series stored as raw float32 (ratio accounting)."""
        return self.values.size * 4


@dataclass(frozen=True)
class WindowBatch:
    """Fixed-length windows plus the verbatim remainder of a series."""

    windows: np.ndarray  # (n_windows, l, d)
    tail: np.ndarray     # (l_total mod l, d)
    l: int

    @property
    def n_windows(self) -> int:
        return self.windows.shape[0]

    def concatenate(self) -> np.ndarray:
        """Rebuild the original (l_total, d) matrix."""
        d = self.windows.shape[2] if self.windows.size else self.tail.shape[1]
        body = self.windows.reshape(-1, d) if self.windows.size else np.empty((0, d))
        return np.concatenate([body, self.tail], axis=0)


def window(series: TimeSeries, l: int) -> WindowBatch:
    """Chunk a series into floor(l_total / l) windows; the rest is the tail."""
    if l <= 0:
        raise ValueError(f"window length must be positive, got {l}")
    v = series.values
    n = v.shape[0] // l
    body = v[: n * l].reshape(n, l, v.shape[1]).copy()
    tail = v[n * l :].copy()
    return WindowBatch(windows=body, tail=tail, l=l)


def flatten_multivariate(series: TimeSeries) -> TimeSeries:
    """Interleave channels sample-major (t0c0, t0c1, ...) into one channel."""
    return TimeSeries(values=series.values.reshape(-1, 1), name=series.name)


def unflatten_multivariate(series: TimeSeries, d: int) -> TimeSeries:
    """Inverse of :func:`flatten_multivariate` for a given channel count."""
    if d < 1:
        raise ValueError(f"channel count must be positive, got {d}")
    if series.d != 1:
        raise ValueError("unflatten expects a single-channel series")
    if series.l_total % d:
        raise ValueError(f"length {series.l_total} is not divisible by d={d}")
    return TimeSeries(values=series.values.reshape(-1, d), name=series.name)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the piecewise-polynomial generator."""

    l_total: int
    d: int = 1
    d_p: int = 2
    t_low: float = 0.0
    t_high: float = 1.0
    segment_len: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.l_total < 1 or self.d < 1:
            raise ValueError("l_total and d must be >= 1")
        if self.d_p < 0:
            raise ValueError("polynomial degree must be >= 0")
        if not self.t_low < self.t_high:
            raise ValueError("t_low must be < t_high")
        if self.segment_len < 1:
            raise ValueError("segment_len must be >= 1")


def synthesize_polynomial(spec: SyntheticSpec, coeffs: np.ndarray | None = None) -> TimeSeries:
    """Concatenate segments of (C @ [t^0..t^d_p]).T with fresh uniform C.

    ``coeffs`` pins C for every segment (test hook); otherwise each segment
    draws C uniformly from [-1, 1] with the spec's seeded generator.
    """
    rng = np.random.default_rng(spec.seed)
    t = np.linspace(spec.t_low, spec.t_high, spec.segment_len)
    powers = t[None, :] ** np.arange(spec.d_p + 1)[:, None]  # (d_p+1, segment_len)
    if coeffs is not None:
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape != (spec.d, spec.d_p + 1):
            raise ValueError(f"coeffs must have shape ({spec.d}, {spec.d_p + 1})")
    chunks = []
    produced = 0
    while produced < spec.l_total:
        c = coeffs if coeffs is not None else rng.uniform(-1.0, 1.0, size=(spec.d, spec.d_p + 1))
        seg = (c @ powers).T  # (segment_len, d)
        chunks.append(seg)
        produced += seg.shape[0]
    values = np.concatenate(chunks, axis=0)[: spec.l_total]
    return TimeSeries(values=values, name=f"poly{spec.d_p}")


def synthesize_random_walk(l_total: int, d: int = 1, seed: int = 0, step_std: float = 1.0) -> TimeSeries:
    """Gaussian random walk, one independent walk per channel."""
    if l_total < 1 or d < 1:
        raise ValueError("l_total and d must be >= 1")
    rng = np.random.default_rng(seed)
    steps = rng.normal(0.0, step_std, size=(l_total, d))
    return TimeSeries(values=np.cumsum(steps, axis=0), name="walk")


def _detect_format(path: Path) -> str:
    if path.suffix.lower() == ".csv":
        return "csv"
    try:
        with open(path, "rb") as fh:
            if fh.read(4) == F32LE_MAGIC:
                return "f32le"
    except OSError:
        pass
    return "csv"


def load_series(path: str | Path, format: str = "auto") -> TimeSeries:
    """Read a series from CSV (one row per timestamp) or the f32le container."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    if format == "auto":
        format = _detect_format(path)
    if format == "csv":
        try:
            values = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}") from exc
        if values.size == 0:
            raise ParseError(f"{path}: empty csv")
    elif format == "f32le":
        raw = path.read_bytes()
        if len(raw) < _F32LE_HEADER.size:
            raise ParseError(f"{path}: truncated header ({len(raw)} bytes)")
        magic, version, d, l_total = _F32LE_HEADER.unpack_from(raw)
        if magic != F32LE_MAGIC:
            raise ParseError(f"{path}: bad magic {magic!r}")
        if version != F32LE_VERSION:
            raise ParseError(f"{path}: unsupported version {version}")
        expect = _F32LE_HEADER.size + 4 * d * l_total
        if len(raw) != expect:
            raise ParseError(f"{path}: expected {expect} bytes, found {len(raw)}")
        values = np.frombuffer(raw, dtype="<f4", offset=_F32LE_HEADER.size)
        values = values.astype(np.float64).reshape(l_total, d)
    else:
        raise ValueError(f"unknown format {format!r}")
    return TimeSeries(values=values, name=path.stem)


def save_series(series: TimeSeries, path: str | Path, format: str = "auto") -> None:
    """Write CSV (float64 round-trip safe) or f32le (casts to float32)."""
    path = Path(path)
    if format == "auto":
        format = "csv" if path.suffix.lower() == ".csv" else "f32le"
    if format == "csv":
        np.savetxt(path, series.values, delimiter=",", fmt="%.17g")
    elif format == "f32le":
        header = _F32LE_HEADER.pack(F32LE_MAGIC, F32LE_VERSION, series.d, series.l_total)
        payload = series.values.astype("<f4").tobytes()
        path.write_bytes(header + payload)
    else:
        raise ValueError(f"unknown format {format!r}")
