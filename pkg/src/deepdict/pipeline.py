"""End-to-end compression pipeline and container format.

Container layout (little-endian, bit-exact):

    magic "DDC1" | version u16 | kind u8 (0=model, 1=critical aperture)
    | eps f64 | l u32 | d u16 | l_total u64 | mode flags u16 | seed u64
    | decoder_len u64 + decoder bytes
    | latent_len u64 + latent bytes
    | residual EncodedStream
    | tail_len u32 + tail float64s
    | crc32 of everything before it

Mode flags: bit0 multivariate windows, bit1 rpe, bit2 latents entropy-coded,
bit3 per-channel prescale. With prescale on, the latent slot is prefixed by
d pairs of float64 (offset, scale). Critical-aperture containers reuse the
layout with kind=1, an empty decoder slot, and the per-channel streams in
the latent slot.

The decompression-side prediction path (fp16 decoder weights run through the
numpy engine) is the same code the compressor used to form residuals, so
max |x - x_recon| <= eps holds for any model, trained or not.
"""

from __future__ import annotations

import copy
import io
import struct
import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from . import ca as ca_mod
from . import infer
from .btae import (
    BTAE,
    ModelConfig,
    load_decoder,
    load_model,
    serialize_decoder,
)
from .codec import (
    EncodedStream,
    EntropyModel,
    decode_symbols,
    encode_symbols,
    entropy_bound_bits,
    pack_bits,
    unpack_bits,
)
from .errors import DecodeError, TrainingDiverged
from .qel import QELParams, qel_loss
from .quantize import _round_half_away, dequantize, verify_maae
from .series import TimeSeries, flatten_multivariate, window

CONTAINER_MAGIC = b"DDC1"
CONTAINER_VERSION = 1
KIND_MODEL = 0
KIND_CA = 1

FLAG_MULTI = 1
FLAG_RPE = 2
FLAG_LATENT_CODED = 4
FLAG_PRESCALE = 8

_HEAD = struct.Struct("<4sHBdIHQHQ")  # magic, version, kind, eps, l, d, l_total, flags, seed
LOSSES = ("l1", "l2", "qel")


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "qel"
    qel: QELParams = field(default_factory=lambda: QELParams(eps=0.1))
    batch_size: int = 64
    lr: float = 1e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    max_epochs: int = 150
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")


@dataclass
class CompressionReport:
    original_bytes: int
    compressed_bytes: int
    ratio: float
    header_bytes: int
    decoder_bytes: int
    latent_bytes: int
    residual_bytes: int
    tail_bytes: int
    max_abs_err: float
    train_time_s: float
    entropy_bound_bits: float
    eps: float
    mode: str
    loss: str | None = None
    qel_b: int | None = None
    transfer: bool = False
    best_epoch: int | None = None
    epochs_run: int = 0
    kind: str = "deepdict"

    def to_dict(self) -> dict:
        return {
            "report_version": 1,
            "kind": self.kind,
            "original_bytes": self.original_bytes,
            "compressed_bytes": self.compressed_bytes,
            "ratio": self.ratio,
            "parts": {
                "header": self.header_bytes,
                "decoder": self.decoder_bytes,
                "latents": self.latent_bytes,
                "residuals": self.residual_bytes,
                "tail": self.tail_bytes,
            },
            "max_abs_err": self.max_abs_err,
            "train_time_s": self.train_time_s,
            "entropy_bound_bits": self.entropy_bound_bits,
            "eps": self.eps,
            "mode": self.mode,
            "loss": self.loss,
            "qel_b": self.qel_b,
            "transfer": self.transfer,
            "best_epoch": self.best_epoch,
            "epochs_run": self.epochs_run,
        }


def compression_ratio(report: CompressionReport) -> float:
    return report.original_bytes / report.compressed_bytes


@dataclass
class TrainResult:
    model: BTAE
    history: list[dict]
    best_state: dict
    best_decoder_bytes: bytes
    best_epoch: int
    best_estimate: float
    epochs_run: int
    train_time_s: float


def _quantize_vec(r: np.ndarray, eps_arr: np.ndarray | float) -> np.ndarray:
    """Round-half-away quantization with a scalar or broadcastable step."""
    scaled = r / (2.0 * eps_arr)
    if scaled.size:
        peak = float(np.max(np.abs(scaled)))
        if not np.isfinite(peak) or peak >= float(2**62):
            raise OverflowError("residual / (2 eps) exceeds the signed 64-bit index range")
    return _round_half_away(scaled).astype(np.int64)


def _channel_eps(eps: float, scales: np.ndarray | None) -> np.ndarray | float:
    if scales is None:
        return eps
    return eps / scales


def _loss_value(loss: str, x: torch.Tensor, xhat: torch.Tensor, qel_params: QELParams) -> torch.Tensor:
    if loss == "l1":
        return torch.mean(torch.abs(xhat - x))
    if loss == "l2":
        return torch.mean((xhat - x) ** 2)
    return qel_loss(x - xhat, qel_params)


def _estimate_bytes(model: BTAE, windows64: np.ndarray, eps_eff, tail_values: int) -> tuple[float, bytes]:
    """Estimated container size using the serialized (fp16) inference path."""
    dec = serialize_decoder(model)
    cfg, weights = load_decoder(dec)
    latent = model.encode(windows64)
    n = latent.c.shape[0]
    latent_bytes = (n * cfg.latent_bits + 7) // 8
    est = 100.0 + len(dec) + latent_bytes + tail_values * 8
    if n:
        xhat = infer.run_decoder(cfg, weights, latent.c.astype(np.float32)).astype(np.float64)
        k = _quantize_vec(windows64 - xhat, eps_eff)
        est += entropy_bound_bits(EntropyModel.from_symbols(k)) / 8.0
    return est, dec


def _decay_exempt(name: str) -> bool:
    """Weight decay applies only to decoder weight matrices (the bytes that
    end up in the container). Decaying the encoder collapses the Bernoulli
    codes: binarization is scale-free, so nothing opposes the shrinkage and
    every window ends up with one latent code. Biases, layer norms, and
    relative-position embeddings are exempt as usual."""
    leaf = name.split(".")[-1]
    return (
        name.startswith("encoder.")
        or "bias" in leaf
        or ".ln1." in name
        or ".ln2." in name
        or leaf == "rel_emb"
    )


def train(
    windows64: np.ndarray,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    eps_eff,
    tail_values: int = 0,
    model: BTAE | None = None,
    trainable: set[str] | None = None,
) -> TrainResult:
    """Train (or just evaluate, for max_epochs=0) and keep the checkpoint with
    the smallest estimated compressed size."""
    t0 = time.perf_counter()
    if model is None:
        model = BTAE(model_cfg)
    decay_params, plain_params = [], []
    for name, p in model.named_parameters():
        keep = trainable is None or name in trainable
        p.requires_grad_(keep)
        if keep:
            (plain_params if _decay_exempt(name) else decay_params).append(p)
    params = decay_params + plain_params
    if not params and train_cfg.max_epochs > 0:
        raise ValueError("no trainable parameters")

    n = windows64.shape[0]
    if n == 0 or train_cfg.max_epochs == 0:
        # nothing to select between; skip the size estimate entirely
        dec = serialize_decoder(model)
        state = copy.deepcopy(model.state_dict())
        history = [{"epoch": -1, "loss": None, "est_bytes": None, "best_est": None}]
        return TrainResult(model, history, state, dec, -1, float("inf"), 0,
                           time.perf_counter() - t0)

    history = []
    est, dec = _estimate_bytes(model, windows64, eps_eff, tail_values)
    best = (est, -1, dec, copy.deepcopy(model.state_dict()))
    history.append({"epoch": -1, "loss": None, "est_bytes": est, "best_est": est})

    xt = torch.from_numpy(windows64.astype(np.float32))
    opt = torch.optim.Adam(
        [
            {"params": decay_params, "weight_decay": train_cfg.weight_decay},
            {"params": plain_params, "weight_decay": 0.0},
        ],
        lr=train_cfg.lr,
        betas=(train_cfg.beta1, train_cfg.beta2),
    )
    rng = np.random.default_rng(train_cfg.seed)
    epochs_run = 0
    for epoch in range(train_cfg.max_epochs):
        perm = rng.permutation(n)
        losses = []
        for lo in range(0, n, train_cfg.batch_size):
            xb = xt[perm[lo : lo + train_cfg.batch_size]]
            opt.zero_grad()
            xhat, _, _ = model(xb)
            loss = _loss_value(train_cfg.loss, xb, xhat, train_cfg.qel)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        epochs_run = epoch + 1
        est, dec = _estimate_bytes(model, windows64, eps_eff, tail_values)
        if est < best[0]:
            best = (est, epoch, dec, copy.deepcopy(model.state_dict()))
        history.append(
            {"epoch": epoch, "loss": float(np.mean(losses)), "est_bytes": est, "best_est": best[0]}
        )
        if epoch - best[1] >= train_cfg.patience:
            break
    return TrainResult(model, history, best[3], best[2], best[1], best[0], epochs_run,
                       time.perf_counter() - t0)


def _load_transfer_source(source) -> tuple[ModelConfig, dict, dict | None]:
    """Extract (config, decoder state, encoder state or None) from a source."""
    if isinstance(source, BTAE):
        return (
            source.cfg,
            {k: v.detach().clone() for k, v in source.decoder.state_dict().items()},
            {k: v.detach().clone() for k, v in source.encoder.state_dict().items()},
        )
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
        if data[:4] == CONTAINER_MAGIC:
            parsed = parse_container(data)
            if parsed["kind"] != KIND_MODEL:
                raise ValueError("cannot transfer from a critical-aperture container")
            src_cfg, weights = load_decoder(parsed["decoder"])
            dec = {k: torch.from_numpy(np.ascontiguousarray(v)) for k, v in weights.items()}
            return src_cfg, dec, None
        src = load_model(data)
        return (
            src.cfg,
            {k: v.detach().clone() for k, v in src.decoder.state_dict().items()},
            {k: v.detach().clone() for k, v in src.encoder.state_dict().items()},
        )
    raise TypeError("transfer source must be a BTAE, model blob, or container bytes")


def _transfer_setup(
    src_cfg: ModelConfig, dec_state: dict, enc_state: dict | None,
    l: int, channels: int, mode_seed: int,
) -> tuple[BTAE, set[str]]:
    """Build a model warm-started from a source model/container.

    The latent lift and the decoder blocks are always frozen; the output
    head is reused and frozen when the channel count matches, otherwise it
    is reinitialized and trained. The encoder always trains (warm-started
    when its input width matches).
    """
    if src_cfg.window != l:
        raise ValueError(f"incompatible window: model has l={src_cfg.window}, request has l={l}")
    cfg = replace(src_cfg, channels=channels, seed=mode_seed)
    model = BTAE(cfg)

    core_prefixes = {
        "transformer": ("lift.", "blocks."),
        "rnn": ("lift.", "cell."),
        "ffn": (),  # one stack; nothing is shape-independent of d
    }[cfg.decoder_kind]
    d_matches = src_cfg.channels == channels

    new_dec = model.decoder.state_dict()
    frozen: set[str] = set()
    for key, value in dec_state.items():
        core = any(key.startswith(p) for p in core_prefixes)
        if core or d_matches:
            new_dec[key] = value
            if core or (d_matches and core_prefixes):
                frozen.add(key)
    model.decoder.load_state_dict(new_dec)

    if enc_state is not None and src_cfg.channels == channels:
        model.encoder.load_state_dict(enc_state)

    trainable = {f"encoder.{k}" for k in model.encoder.state_dict()}
    trainable |= {f"decoder.{k}" for k in new_dec if k not in frozen}
    return model, trainable


def _prescale_params(values: np.ndarray) -> np.ndarray:
    """Per-channel (offset, scale) mapping each channel into [-1, 1]."""
    lo = values.min(axis=0)
    hi = values.max(axis=0)
    offset = (hi + lo) / 2.0
    scale = np.maximum((hi - lo) / 2.0, 1e-30)
    return np.stack([offset, scale], axis=1)  # (d, 2)


def _eps_grid(eps: float, flags: int, prescale: np.ndarray | None, d: int, dw: int,
              shape: tuple) -> np.ndarray | float:
    """Effective quantization step per element of the windowed residual."""
    if prescale is None:
        return eps
    scales = prescale[:, 1]
    if flags & FLAG_MULTI:
        return (eps / scales)[None, None, :]
    # univariate mode: flattened positions cycle through channels
    n, l, _ = shape
    pos = (np.arange(n)[:, None] * l + np.arange(l)[None, :]) % d
    return (eps / scales)[pos][:, :, None]


def compress(
    series: TimeSeries,
    eps: float,
    model_config: ModelConfig | None = None,
    train_config: TrainConfig | None = None,
    mode: str = "uni",
    prescale: bool = False,
    transfer_from=None,
) -> tuple[bytes, CompressionReport, BTAE]:
    """Train on the series and assemble a self-describing container."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if mode not in ("uni", "multi"):
        raise ValueError(f"mode must be 'uni' or 'multi', got {mode!r}")
    transfer_source = None
    if transfer_from is not None:
        transfer_source = _load_transfer_source(transfer_from)
        if model_config is None:
            # adopt the pretrained geometry unless the caller pinned one
            model_config = replace(transfer_source[0], seed=(train_config or TrainConfig()).seed)
    model_config = model_config or ModelConfig()
    train_config = train_config or TrainConfig()
    train_config = replace(train_config, qel=replace(train_config.qel, eps=eps))

    flags = 0
    prescale_arr = None
    work_values = series.values
    if prescale:
        flags |= FLAG_PRESCALE
        prescale_arr = _prescale_params(series.values)
        work_values = (series.values - prescale_arr[:, 0]) / prescale_arr[:, 1]
    work = TimeSeries(values=work_values, name=series.name)

    if mode == "multi":
        flags |= FLAG_MULTI
    elif work.d > 1:
        work = flatten_multivariate(work)
    if model_config.use_rpe:
        flags |= FLAG_RPE

    dw = work.d
    model_config = replace(model_config, window=model_config.window, channels=dw)
    wb = window(work, model_config.window)
    windows64 = wb.windows
    eps_eff = _eps_grid(eps, flags, prescale_arr, series.d, dw, windows64.shape)
    if prescale_arr is not None:
        train_config = replace(
            train_config, qel=replace(train_config.qel, eps=float(np.min(eps / prescale_arr[:, 1])))
        )

    if transfer_source is not None:
        model, trainable = _transfer_setup(
            *transfer_source, model_config.window, dw, model_config.seed
        )
        result = train(windows64, model.cfg, train_config, eps_eff,
                       tail_values=wb.tail.size, model=model, trainable=trainable)
    else:
        result = train(windows64, model_config, train_config, eps_eff, tail_values=wb.tail.size)

    model = result.model
    model.load_state_dict(result.best_state)
    dec_bytes = result.best_decoder_bytes
    cfg, weights = load_decoder(dec_bytes)

    latent = model.encode(windows64)
    n_windows = latent.c.shape[0]
    if n_windows:
        xhat = infer.run_decoder(cfg, weights, latent.c.astype(np.float32)).astype(np.float64)
        r = windows64 - xhat
        k = _quantize_vec(r, eps_eff)
        r_q = (2.0 * eps_eff) * k
        max_abs_err = float(np.max(np.abs(r - r_q)))
        ent_bits = entropy_bound_bits(EntropyModel.from_symbols(k))
    else:
        k = np.empty(0, dtype=np.int64)
        max_abs_err = 0.0
        ent_bits = 0.0

    packed = pack_bits(latent.c.ravel()) if n_windows else b""
    latent_slot = packed
    if n_windows:
        coded = encode_symbols(np.frombuffer(packed, dtype=np.uint8).astype(np.int64))
        coded_bytes = coded.to_bytes()
        if len(coded_bytes) < len(packed):
            latent_slot = coded_bytes
            flags |= FLAG_LATENT_CODED
    if prescale_arr is not None:
        latent_slot = prescale_arr.astype("<f8").tobytes() + latent_slot

    residual_stream = encode_symbols(k.ravel())
    tail = wb.tail.astype("<f8").tobytes()

    container = _assemble(
        kind=KIND_MODEL,
        eps=eps,
        l=model_config.window,
        d=series.d,
        l_total=series.l_total,
        flags=flags,
        seed=model_config.seed,
        decoder=dec_bytes,
        latent=latent_slot,
        residual=residual_stream,
        tail=tail,
    )
    report = CompressionReport(
        original_bytes=series.nbytes_f32,
        compressed_bytes=len(container),
        ratio=series.nbytes_f32 / len(container),
        header_bytes=len(container) - len(dec_bytes) - len(latent_slot) - residual_stream.nbytes - len(tail),
        decoder_bytes=len(dec_bytes),
        latent_bytes=len(latent_slot),
        residual_bytes=residual_stream.nbytes,
        tail_bytes=len(tail),
        max_abs_err=max_abs_err,
        train_time_s=result.train_time_s,
        entropy_bound_bits=ent_bits,
        eps=eps,
        mode=mode,
        loss=train_config.loss,
        qel_b=train_config.qel.b,
        transfer=transfer_from is not None,
        best_epoch=result.best_epoch,
        epochs_run=result.epochs_run,
    )
    return container, report, model


def _assemble(kind, eps, l, d, l_total, flags, seed, decoder, latent, residual, tail) -> bytes:
    buf = io.BytesIO()
    buf.write(_HEAD.pack(CONTAINER_MAGIC, CONTAINER_VERSION, kind, eps, l, d, l_total, flags, seed))
    buf.write(struct.pack("<Q", len(decoder)))
    buf.write(decoder)
    buf.write(struct.pack("<Q", len(latent)))
    buf.write(latent)
    buf.write(residual.to_bytes())
    assert len(tail) % 8 == 0
    buf.write(struct.pack("<I", len(tail) // 8))
    buf.write(tail)
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def parse_container(data: bytes) -> dict:
    if len(data) < _HEAD.size + 4:
        raise DecodeError("container truncated")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if crc != (zlib.crc32(body) & 0xFFFFFFFF):
        raise DecodeError("container checksum mismatch")
    magic, version, kind, eps, l, d, l_total, flags, seed = _HEAD.unpack_from(body)
    if magic != CONTAINER_MAGIC:
        raise DecodeError(f"bad container magic {magic!r}")
    if version != CONTAINER_VERSION:
        raise DecodeError(f"unsupported container version {version}")
    off = _HEAD.size
    (dec_len,) = struct.unpack_from("<Q", body, off)
    off += 8
    decoder = body[off : off + dec_len]
    if len(decoder) != dec_len:
        raise DecodeError("container decoder slot truncated")
    off += dec_len
    (lat_len,) = struct.unpack_from("<Q", body, off)
    off += 8
    latent = body[off : off + lat_len]
    if len(latent) != lat_len:
        raise DecodeError("container latent slot truncated")
    off += lat_len
    residual, off = EncodedStream.from_bytes(body, off)
    (tail_count,) = struct.unpack_from("<I", body, off)
    off += 4
    tail = body[off : off + 8 * tail_count]
    if len(tail) != 8 * tail_count:
        raise DecodeError("container tail truncated")
    off += 8 * tail_count
    if off != len(body):
        raise DecodeError("container has trailing bytes")
    return {
        "kind": kind,
        "eps": eps,
        "l": l,
        "d": d,
        "l_total": l_total,
        "flags": flags,
        "seed": seed,
        "decoder": decoder,
        "latent": latent,
        "residual": residual,
        "tail": np.frombuffer(tail, dtype="<f8"),
    }


def decompress(data: bytes) -> TimeSeries:
    """Rebuild the series from a container alone."""
    p = parse_container(data)
    if p["kind"] == KIND_CA:
        return _ca_decompress_parsed(p)
    eps, l, d, l_total, flags = p["eps"], p["l"], p["d"], p["l_total"], p["flags"]

    latent_slot = p["latent"]
    prescale_arr = None
    if flags & FLAG_PRESCALE:
        prescale_arr = np.frombuffer(latent_slot[: 16 * d], dtype="<f8").reshape(d, 2).copy()
        latent_slot = latent_slot[16 * d :]

    cfg, weights = load_decoder(p["decoder"])
    dw = d if flags & FLAG_MULTI else 1
    rows = l_total if flags & FLAG_MULTI else l_total * d
    n_windows = rows // l

    if flags & FLAG_LATENT_CODED:
        stream, _ = EncodedStream.from_bytes(latent_slot, 0)
        packed = decode_symbols(stream).astype(np.uint8).tobytes()
    else:
        packed = bytes(latent_slot)
    bits = unpack_bits(packed, n_windows * cfg.latent_bits)
    codes = bits.reshape(n_windows, cfg.latent_bits)

    eps_eff = _eps_grid(eps, flags, prescale_arr, d, dw, (n_windows, l, dw))
    if n_windows:
        xhat = infer.run_decoder(cfg, weights, codes.astype(np.float32)).astype(np.float64)
        k = decode_symbols(p["residual"]).reshape(n_windows, l, dw)
        body = (xhat + (2.0 * eps_eff) * k).reshape(-1, dw)
    else:
        body = np.empty((0, dw))
    tail = p["tail"].reshape(-1, dw)
    values = np.concatenate([body, tail], axis=0)

    if not flags & FLAG_MULTI and d > 1:
        values = values.reshape(-1, d)
    if prescale_arr is not None:
        values = values * prescale_arr[:, 1] + prescale_arr[:, 0]
    return TimeSeries(values=values, name="decompressed")


def transfer_compress(
    series: TimeSeries,
    source,
    eps: float,
    train_config: TrainConfig | None = None,
    mode: str = "uni",
    model_config: ModelConfig | None = None,
) -> tuple[bytes, CompressionReport, BTAE]:
    """Compress reusing a pretrained decoder core (see _transfer_setup)."""
    return compress(
        series,
        eps,
        model_config=model_config,
        train_config=train_config,
        mode=mode,
        transfer_from=source,
    )


# --- critical aperture containers ------------------------------------------


def ca_compress(series: TimeSeries, eps: float) -> tuple[bytes, CompressionReport]:
    """Per-channel critical aperture packed into the shared container."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    t0 = time.perf_counter()
    chunks = []
    max_err = 0.0
    for ch in range(series.d):
        x = series.values[:, ch]
        idx, vals = ca_mod.compress_channel(x, eps)
        recon = ca_mod.reconstruct_channel(idx, vals, eps, series.l_total)
        max_err = max(max_err, float(np.max(np.abs(recon - x))))
        idx_deltas = np.diff(idx, prepend=np.int64(0))
        val_deltas = np.diff(vals, prepend=np.int64(0))
        chunks.append(struct.pack("<Q", idx.size))
        chunks.append(encode_symbols(idx_deltas).to_bytes())
        chunks.append(encode_symbols(val_deltas).to_bytes())
    payload = b"".join(chunks)
    container = _assemble(
        kind=KIND_CA,
        eps=eps,
        l=0,
        d=series.d,
        l_total=series.l_total,
        flags=0,
        seed=0,
        decoder=b"",
        latent=payload,
        residual=encode_symbols(np.empty(0, dtype=np.int64)),
        tail=b"",
    )
    report = CompressionReport(
        original_bytes=series.nbytes_f32,
        compressed_bytes=len(container),
        ratio=series.nbytes_f32 / len(container),
        header_bytes=len(container) - len(payload) - 25,
        decoder_bytes=0,
        latent_bytes=len(payload),
        residual_bytes=25,
        tail_bytes=0,
        max_abs_err=max_err,
        train_time_s=time.perf_counter() - t0,
        entropy_bound_bits=0.0,
        eps=eps,
        mode="uni",
        kind="ca",
    )
    return container, report


def _ca_decompress_parsed(p: dict) -> TimeSeries:
    d, n = p["d"], p["l_total"]
    buf = p["latent"]
    off = 0
    channels = []
    for _ in range(d):
        if len(buf) - off < 8:
            raise DecodeError("ca payload truncated")
        (count,) = struct.unpack_from("<Q", buf, off)
        off += 8
        idx_stream, off = EncodedStream.from_bytes(buf, off)
        val_stream, off = EncodedStream.from_bytes(buf, off)
        idx = np.cumsum(decode_symbols(idx_stream))
        vals = np.cumsum(decode_symbols(val_stream))
        if idx.size != count:
            raise DecodeError("ca stream count mismatch")
        channels.append(ca_mod.reconstruct_channel(idx, vals, p["eps"], n))
    return TimeSeries(values=np.stack(channels, axis=1), name="decompressed")


def ca_decompress(data: bytes) -> TimeSeries:
    p = parse_container(data)
    if p["kind"] != KIND_CA:
        raise DecodeError("not a critical-aperture container")
    return _ca_decompress_parsed(p)


def quantize_only_size(series: TimeSeries, eps: float) -> tuple[int, float]:
    """Floor baseline: quantize the raw series and entropy-code the indices.

    Returns (stream bytes, max abs error); no model, no container.
    """
    k = _quantize_vec(series.values, eps)
    stream = encode_symbols(k.ravel())
    err = float(np.max(np.abs(series.values - dequantize(k, eps))))
    return stream.nbytes, err


def roundtrip_check(series: TimeSeries, container: bytes) -> float:
    """Decompress and return the max abs error against the original."""
    recon = decompress(container)
    report = verify_maae(series, recon, parse_container(container)["eps"])
    return report.max_abs_err
