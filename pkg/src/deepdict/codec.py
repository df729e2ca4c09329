"""Lossless symbol coding, latent bit packing, and entropy accounting."""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import _coder
from .errors import DecodeError

CODEC_ADAPTIVE = 0
CODEC_RAW64 = 1

_STREAM_HEADER = struct.Struct("<BQQ")  # codec_id, n_symbols, payload_len
_CRC = struct.Struct("<I")


@dataclass(frozen=True)
class EntropyModel:
    """Empirical order-0 model: sorted unique symbols, counts, probabilities."""

    symbols: np.ndarray  # int64, sorted
    counts: np.ndarray   # int64, all >= 1
    probs: np.ndarray    # float64, sums to 1

    @classmethod
    def from_symbols(cls, k: np.ndarray) -> "EntropyModel":
        k = np.asarray(k, dtype=np.int64).ravel()
        if k.size == 0:
            raise ValueError("cannot build an entropy model from zero symbols")
        symbols, counts = np.unique(k, return_counts=True)
        return cls(symbols=symbols, counts=counts, probs=counts / k.size)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def entropy_bound_bits(model: EntropyModel) -> float:
    """Lower bound on the coded size in bits: -sum n(s) * log2 p(s)."""
    n = model.counts.astype(np.float64)
    return float(np.sum(n * (np.log2(n.sum()) - np.log2(n))))


@dataclass(frozen=True)
class EncodedStream:
    """Self-delimiting coded block: header, payload, crc32 of the payload."""

    payload: bytes
    n_symbols: int
    codec_id: int

    def to_bytes(self) -> bytes:
        head = _STREAM_HEADER.pack(self.codec_id, self.n_symbols, len(self.payload))
        return head + self.payload + _CRC.pack(zlib.crc32(self.payload) & 0xFFFFFFFF)

    @property
    def nbytes(self) -> int:
        return _STREAM_HEADER.size + len(self.payload) + _CRC.size

    @classmethod
    def from_bytes(cls, buf: bytes, offset: int = 0) -> tuple["EncodedStream", int]:
        """Parse one stream starting at ``offset``; returns (stream, end offset)."""
        if len(buf) - offset < _STREAM_HEADER.size:
            raise DecodeError("truncated stream header")
        codec_id, n_symbols, payload_len = _STREAM_HEADER.unpack_from(buf, offset)
        if codec_id not in (CODEC_ADAPTIVE, CODEC_RAW64):
            raise DecodeError(f"unknown codec id {codec_id}")
        start = offset + _STREAM_HEADER.size
        end = start + payload_len + _CRC.size
        if len(buf) < end:
            raise DecodeError("truncated stream payload")
        payload = bytes(buf[start : start + payload_len])
        (crc,) = _CRC.unpack_from(buf, start + payload_len)
        if crc != (zlib.crc32(payload) & 0xFFFFFFFF):
            raise DecodeError("stream checksum mismatch")
        return cls(payload=payload, n_symbols=n_symbols, codec_id=codec_id), end


def encode_symbols(k: np.ndarray) -> EncodedStream:
    """Losslessly code int64 symbols; falls back to raw64 when that is smaller."""
    k = np.asarray(k, dtype=np.int64).ravel()
    n = int(k.size)
    if n == 0:
        return EncodedStream(payload=b"", n_symbols=0, codec_id=CODEC_ADAPTIVE)
    raw = k.astype("<i8").tobytes()
    coded = _coder.encode_adaptive(k)
    if coded is not None and len(coded) <= len(raw):
        return EncodedStream(payload=coded, n_symbols=n, codec_id=CODEC_ADAPTIVE)
    return EncodedStream(payload=raw, n_symbols=n, codec_id=CODEC_RAW64)


def decode_symbols(stream: EncodedStream) -> np.ndarray:
    """Exact inverse of :func:`encode_symbols`."""
    n = stream.n_symbols
    if n == 0:
        return np.empty(0, dtype=np.int64)
    if stream.codec_id == CODEC_RAW64:
        if len(stream.payload) != 8 * n:
            raise DecodeError(f"raw64 payload holds {len(stream.payload)} bytes, expected {8 * n}")
        return np.frombuffer(stream.payload, dtype="<i8").astype(np.int64)
    out = _coder.decode_adaptive(stream.payload, n)
    if out is None:
        raise DecodeError("adaptive stream is corrupt")
    return out


def pack_bits(c: np.ndarray) -> bytes:
    """Pack a +1/-1 sequence, +1 -> 1, little-endian within each byte."""
    c = np.asarray(c).ravel()
    if c.size and not np.all(np.abs(c) == 1):
        raise ValueError("latent values must be +1 or -1")
    bits = (c > 0).astype(np.uint8)
    return np.packbits(bits, bitorder="little").tobytes()


def unpack_bits(data: bytes, n: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns int8 values in {-1, +1}."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n > 8 * len(data):
        raise ValueError(f"{n} bits requested from {len(data)} bytes")
    if n == 0:
        return np.empty(0, dtype=np.int8)
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=n, bitorder="little")
    return (bits.astype(np.int8) * 2 - 1)
