"""Bernoulli transformer autoencoder: encoder, binarization, decoders,
positional encodings, and half-precision serialization.

Training runs in float32 under torch. Anything that must be reproducible at
decompression time (the decoder weights and positional tables) is either
serialized in half precision or recomputed from the config with numpy, so
the compress-side and decompress-side inference paths share one source of
truth (see infer.py).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import LoadError

DECODER_KINDS = ("transformer", "ffn", "rnn")
RPE_KINDS = ("matrix", "learned")
_ACTIVATIONS = ("gelu",)

DECODER_MAGIC = b"DDM1"
MODEL_MAGIC = b"DDX1"
_FORMAT_VERSION = 1
# latent_bits u32, window u32, channels u16, d_model u16, n_heads u16,
# n_encoder_layers u16, n_decoder_blocks u16, ffn_hidden u16,
# activation u8, decoder_kind u8, use_rpe u8, rpe_kind u8, seed u64, n_params u64
_CONFIG_BLOCK = struct.Struct("<4sHIIHHHHHHBBBBQQ")


@dataclass(frozen=True)
class ModelConfig:
    latent_bits: int = 32
    window: int = 128
    channels: int = 1
    d_model: int = 32
    n_heads: int = 8
    n_encoder_layers: int = 3
    n_decoder_blocks: int = 2
    ffn_hidden: int = 64
    activation: str = "gelu"
    decoder_kind: str = "transformer"
    use_rpe: bool = False
    rpe_kind: str = "matrix"
    seed: int = 0

    def __post_init__(self):
        if self.latent_bits < 1 or self.window < 1 or self.channels < 1:
            raise ValueError("latent_bits, window, and channels must be >= 1")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.d_model % 2:
            raise ValueError("d_model must be even for the sinusoidal encoding")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.decoder_kind not in DECODER_KINDS:
            raise ValueError(f"unknown decoder kind {self.decoder_kind!r}")
        if self.rpe_kind not in RPE_KINDS:
            raise ValueError(f"unknown rpe kind {self.rpe_kind!r}")
        if self.n_encoder_layers < 1 or self.n_decoder_blocks < 1 or self.ffn_hidden < 1:
            raise ValueError("layer counts and hidden width must be >= 1")


@dataclass(frozen=True)
class LatentCode:
    """Pre-binarization activations y and the Bernoulli code c in {-1,+1}."""

    y: np.ndarray  # (n, latent_bits) float32
    c: np.ndarray  # (n, latent_bits) int8


@dataclass(frozen=True)
class PositionalEncodings:
    ape: np.ndarray  # (l, d_model) float32, sinusoidal
    rpe: np.ndarray  # (l, l) float32, rpe[i, j] = j - i


def build_positional(l: int, d_model: int) -> PositionalEncodings:
    """Sinusoidal absolute table and the relative-offset matrix."""
    if l < 1:
        raise ValueError("l must be >= 1")
    if d_model % 2:
        raise ValueError("d_model must be even")
    pos = np.arange(l, dtype=np.float64)[:, None]
    i2 = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, i2 / d_model)
    ape = np.empty((l, d_model), dtype=np.float64)
    ape[:, 0::2] = np.sin(angle)
    ape[:, 1::2] = np.cos(angle)
    idx = np.arange(l)
    rpe = (idx[None, :] - idx[:, None]).astype(np.float64)
    return PositionalEncodings(ape=ape.astype(np.float32), rpe=rpe.astype(np.float32))


def binarize(y: np.ndarray) -> np.ndarray:
    """Threshold to {-1, +1}; y >= 0 maps to +1."""
    y = np.asarray(y)
    if not np.all(np.isfinite(y)):
        raise ValueError("latent activations must be finite")
    return np.where(y >= 0, 1, -1).astype(np.int8)


class BinarizeSte(torch.autograd.Function):
    """Hard threshold forward; backward scales the gradient by 1 - tanh^2(y)."""

    @staticmethod
    def forward(ctx, y):
        ctx.save_for_backward(y)
        return torch.where(y >= 0, torch.ones_like(y), -torch.ones_like(y))

    @staticmethod
    def backward(ctx, grad_out):
        (y,) = ctx.saved_tensors
        return grad_out * (1.0 - torch.tanh(y) ** 2)


def _mlp(n_in: int, hidden: list[int], n_out: int) -> nn.Sequential:
    layers: list[nn.Module] = []
    prev = n_in
    for h in hidden:
        layers.append(nn.Linear(prev, h))
        layers.append(nn.GELU(approximate="tanh"))
        prev = h
    layers.append(nn.Linear(prev, n_out))
    return nn.Sequential(*layers)


class RelativeAttention(nn.Module):
    """Multi-head attention with an additive relative-position term.

    softmax((Q K^T + RPE) / sqrt(d_model)) V per head; RPE is either the
    literal offset matrix (j - i) or a learned per-distance embedding scored
    against the queries.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.n_heads = cfg.n_heads
        self.d_head = cfg.d_model // cfg.n_heads
        self.scale = 1.0 / float(np.sqrt(cfg.d_model))
        self.use_rpe = cfg.use_rpe
        self.rpe_kind = cfg.rpe_kind
        self.wq = nn.Linear(cfg.d_model, cfg.d_model)
        self.wk = nn.Linear(cfg.d_model, cfg.d_model)
        self.wv = nn.Linear(cfg.d_model, cfg.d_model)
        self.wo = nn.Linear(cfg.d_model, cfg.d_model)
        if cfg.use_rpe and cfg.rpe_kind == "learned":
            self.rel_emb = nn.Parameter(
                torch.randn(cfg.n_heads, 2 * cfg.window - 1, self.d_head) * 0.02
            )

    def forward(self, z, rpe_matrix, rel_index):
        b, l, dm = z.shape
        q = self.wq(z).view(b, l, self.n_heads, self.d_head).transpose(1, 2)
        k = self.wk(z).view(b, l, self.n_heads, self.d_head).transpose(1, 2)
        v = self.wv(z).view(b, l, self.n_heads, self.d_head).transpose(1, 2)
        logits = torch.matmul(q, k.transpose(-2, -1))
        if self.use_rpe:
            if self.rpe_kind == "matrix":
                logits = logits + rpe_matrix
            else:
                rel = torch.einsum("bhld,hrd->bhlr", q, self.rel_emb)
                bias = torch.gather(rel, -1, rel_index.expand(b, self.n_heads, l, l))
                logits = logits + bias
        attn = torch.softmax(logits * self.scale, dim=-1)
        out = torch.matmul(attn, v).transpose(1, 2).reshape(b, l, dm)
        return self.wo(out)


class DecoderBlock(nn.Module):
    """Pre-norm transformer block with the relative-position attention."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.attn = RelativeAttention(cfg)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.ffn = _mlp(cfg.d_model, [cfg.ffn_hidden], cfg.d_model)

    def forward(self, z, rpe_matrix, rel_index):
        z = z + self.attn(self.ln1(z), rpe_matrix, rel_index)
        return z + self.ffn(self.ln2(z))


class TransformerDecoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.lift = _mlp(cfg.latent_bits, [cfg.ffn_hidden], cfg.d_model)
        self.blocks = nn.ModuleList(DecoderBlock(cfg) for _ in range(cfg.n_decoder_blocks))
        self.out = _mlp(cfg.d_model, [cfg.ffn_hidden], cfg.channels)
        pos = build_positional(cfg.window, cfg.d_model)
        self.register_buffer("ape", torch.from_numpy(pos.ape), persistent=False)
        self.register_buffer("rpe", torch.from_numpy(pos.rpe), persistent=False)
        idx = np.arange(cfg.window)
        rel_index = (idx[None, :] - idx[:, None]) + cfg.window - 1
        self.register_buffer(
            "rel_index",
            torch.from_numpy(rel_index[None, None].astype(np.int64)),
            persistent=False,
        )

    def forward(self, c):
        u = self.lift(c)  # (B, d_model)
        z = u.unsqueeze(1).expand(-1, self.cfg.window, -1) + self.ape
        for block in self.blocks:
            z = block(z, self.rpe, self.rel_index)
        return self.out(z)  # (B, l, d)


class FfnDecoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        hidden = [cfg.ffn_hidden] * 3
        self.net = _mlp(cfg.latent_bits, hidden, cfg.window * cfg.channels)

    def forward(self, c):
        return self.net(c).view(-1, self.cfg.window, self.cfg.channels)


class RnnDecoder(nn.Module):
    """Auto-regressive gated recurrent decoder; the lifted code is step one."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.lift = _mlp(cfg.latent_bits, [cfg.ffn_hidden], cfg.d_model)
        self.cell = nn.GRUCell(cfg.d_model, cfg.d_model)
        self.in_proj = nn.Linear(cfg.channels, cfg.d_model)
        self.head = _mlp(cfg.d_model, [cfg.ffn_hidden], cfg.channels)

    def forward(self, c):
        b = c.shape[0]
        h = c.new_zeros(b, self.cfg.d_model)
        inp = self.lift(c)
        outs = []
        for _ in range(self.cfg.window):
            h = self.cell(inp, h)
            y = self.head(h)
            outs.append(y)
            inp = self.in_proj(y)
        return torch.stack(outs, dim=1)  # (B, l, d)


def build_decoder(kind: str, cfg: ModelConfig) -> nn.Module:
    if kind == "transformer":
        return TransformerDecoder(cfg)
    if kind == "ffn":
        return FfnDecoder(cfg)
    if kind == "rnn":
        return RnnDecoder(cfg)
    raise ValueError(f"unknown decoder kind {kind!r}")


class BTAE(nn.Module):
    """Feed-forward encoder, Bernoulli binarization, configurable decoder."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        torch.manual_seed(cfg.seed)
        self.cfg = cfg
        n_in = cfg.window * cfg.channels
        self.encoder = _mlp(n_in, [cfg.ffn_hidden] * cfg.n_encoder_layers, cfg.latent_bits)
        self.decoder = build_decoder(cfg.decoder_kind, cfg)

    def forward(self, x):
        """x: (B, l, d) -> (x_hat, y, c)."""
        flat = x.reshape(x.shape[0], -1)
        y = self.encoder(flat)
        c = BinarizeSte.apply(y)
        return self.decoder(c), y, c

    @torch.no_grad()
    def encode(self, windows: np.ndarray, chunk: int = 1024) -> LatentCode:
        """Encode (n, l, d) windows to latent codes."""
        w = np.asarray(windows, dtype=np.float32)
        if w.ndim == 2:
            w = w[None]
        if w.shape[1] != self.cfg.window or w.shape[2] != self.cfg.channels:
            raise ValueError(
                f"windows of shape {w.shape[1:]} do not match config "
                f"({self.cfg.window}, {self.cfg.channels})"
            )
        ys = []
        for lo in range(0, w.shape[0], chunk):
            xb = torch.from_numpy(w[lo : lo + chunk].reshape(-1, self.cfg.window * self.cfg.channels))
            ys.append(self.encoder(xb).numpy())
        y = np.concatenate(ys, axis=0) if ys else np.empty((0, self.cfg.latent_bits), np.float32)
        return LatentCode(y=y, c=binarize(y))


# --- serialization ---------------------------------------------------------


def decoder_param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Names and shapes of decoder parameters in state_dict order.

    Must match torch's registration order exactly; this is the fixed
    traversal order of the serialized blob.
    """
    fh, dm, d = cfg.ffn_hidden, cfg.d_model, cfg.channels
    shapes: list[tuple[str, tuple[int, ...]]] = []

    def seq(prefix, n_in, hidden, n_out):
        prev = n_in
        i = 0
        for h in hidden:
            shapes.append((f"{prefix}.{i}.weight", (h, prev)))
            shapes.append((f"{prefix}.{i}.bias", (h,)))
            prev = h
            i += 2
        shapes.append((f"{prefix}.{i}.weight", (n_out, prev)))
        shapes.append((f"{prefix}.{i}.bias", (n_out,)))

    if cfg.decoder_kind == "transformer":
        seq("lift", cfg.latent_bits, [fh], dm)
        for bi in range(cfg.n_decoder_blocks):
            p = f"blocks.{bi}"
            shapes.append((f"{p}.ln1.weight", (dm,)))
            shapes.append((f"{p}.ln1.bias", (dm,)))
            if cfg.use_rpe and cfg.rpe_kind == "learned":
                # direct parameters precede child modules in state_dict order
                shapes.append((f"{p}.attn.rel_emb", (cfg.n_heads, 2 * cfg.window - 1, dm // cfg.n_heads)))
            for w in ("wq", "wk", "wv", "wo"):
                shapes.append((f"{p}.attn.{w}.weight", (dm, dm)))
                shapes.append((f"{p}.attn.{w}.bias", (dm,)))
            shapes.append((f"{p}.ln2.weight", (dm,)))
            shapes.append((f"{p}.ln2.bias", (dm,)))
            seq(f"{p}.ffn", dm, [fh], dm)
        seq("out", dm, [fh], d)
    elif cfg.decoder_kind == "ffn":
        seq("net", cfg.latent_bits, [fh, fh, fh], cfg.window * d)
    else:  # rnn
        seq("lift", cfg.latent_bits, [fh], dm)
        shapes.append(("cell.weight_ih", (3 * dm, dm)))
        shapes.append(("cell.weight_hh", (3 * dm, dm)))
        shapes.append(("cell.bias_ih", (3 * dm,)))
        shapes.append(("cell.bias_hh", (3 * dm,)))
        shapes.append(("in_proj.weight", (dm, d)))
        shapes.append(("in_proj.bias", (dm,)))
        seq("head", dm, [fh], d)
    return shapes


def encoder_param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    shapes: list[tuple[str, tuple[int, ...]]] = []
    prev = cfg.window * cfg.channels
    i = 0
    for _ in range(cfg.n_encoder_layers):
        shapes.append((f"{i}.weight", (cfg.ffn_hidden, prev)))
        shapes.append((f"{i}.bias", (cfg.ffn_hidden,)))
        prev = cfg.ffn_hidden
        i += 2
    shapes.append((f"{i}.weight", (cfg.latent_bits, prev)))
    shapes.append((f"{i}.bias", (cfg.latent_bits,)))
    return shapes


def _pack_config(cfg: ModelConfig, n_params: int) -> bytes:
    return _CONFIG_BLOCK.pack(
        DECODER_MAGIC,
        _FORMAT_VERSION,
        cfg.latent_bits,
        cfg.window,
        cfg.channels,
        cfg.d_model,
        cfg.n_heads,
        cfg.n_encoder_layers,
        cfg.n_decoder_blocks,
        cfg.ffn_hidden,
        _ACTIVATIONS.index(cfg.activation),
        DECODER_KINDS.index(cfg.decoder_kind),
        1 if cfg.use_rpe else 0,
        RPE_KINDS.index(cfg.rpe_kind),
        cfg.seed,
        n_params,
    )


def _unpack_config(buf: bytes) -> tuple[ModelConfig, int]:
    if len(buf) < _CONFIG_BLOCK.size:
        raise LoadError("decoder blob too short for its header")
    (magic, version, latent_bits, window, channels, d_model, n_heads, n_enc,
     n_blocks, ffn_hidden, act, kind, use_rpe, rpe_kind, seed, n_params) = _CONFIG_BLOCK.unpack_from(buf)
    if magic != DECODER_MAGIC:
        raise LoadError(f"bad decoder magic {magic!r}")
    if version != _FORMAT_VERSION:
        raise LoadError(f"unsupported decoder format version {version}")
    try:
        cfg = ModelConfig(
            latent_bits=latent_bits,
            window=window,
            channels=channels,
            d_model=d_model,
            n_heads=n_heads,
            n_encoder_layers=n_enc,
            n_decoder_blocks=n_blocks,
            ffn_hidden=ffn_hidden,
            activation=_ACTIVATIONS[act],
            decoder_kind=DECODER_KINDS[kind],
            use_rpe=bool(use_rpe),
            rpe_kind=RPE_KINDS[rpe_kind],
            seed=seed,
        )
    except (IndexError, ValueError) as exc:
        raise LoadError(f"invalid decoder config: {exc}") from exc
    return cfg, n_params


def serialize_decoder(model: "BTAE | nn.Module", cfg: ModelConfig | None = None) -> bytes:
    """Half-precision decoder blob: DDM1 | config | params fp16 | crc32."""
    if isinstance(model, BTAE):
        decoder, cfg = model.decoder, model.cfg
    else:
        decoder = model
        if cfg is None:
            raise ValueError("cfg is required when passing a bare decoder")
    state = decoder.state_dict()
    expected = decoder_param_shapes(cfg)
    names = [n for n, _ in expected]
    if list(state.keys()) != names:
        raise LoadError("decoder state does not match the declared traversal order")
    blob = b"".join(
        state[name].detach().cpu().numpy().astype("<f2").tobytes() for name in names
    )
    n_params = sum(int(np.prod(s)) for _, s in expected)
    head = _pack_config(cfg, n_params)
    body = head + blob
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def load_decoder(data: bytes) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    """Parse a decoder blob into float32 weights (dequantized from fp16)."""
    if len(data) < _CONFIG_BLOCK.size + 4:
        raise LoadError("decoder blob truncated")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if crc != (zlib.crc32(body) & 0xFFFFFFFF):
        raise LoadError("decoder blob checksum mismatch")
    cfg, n_params = _unpack_config(body)
    shapes = decoder_param_shapes(cfg)
    declared = sum(int(np.prod(s)) for _, s in shapes)
    if n_params != declared:
        raise LoadError(f"parameter count mismatch: header says {n_params}, config implies {declared}")
    blob = body[_CONFIG_BLOCK.size :]
    if len(blob) != 2 * declared:
        raise LoadError(f"parameter blob holds {len(blob)} bytes, expected {2 * declared}")
    weights: dict[str, np.ndarray] = {}
    off = 0
    for name, shape in shapes:
        n = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f2", count=n, offset=off)
        weights[name] = arr.astype(np.float32).reshape(shape)
        off += 2 * n
    return cfg, weights


def load_decoder_into(model: BTAE, weights: dict[str, np.ndarray]) -> None:
    """Copy parsed decoder weights into a torch model (fp16-dequantized)."""
    state = {k: torch.from_numpy(np.ascontiguousarray(v)) for k, v in weights.items()}
    model.decoder.load_state_dict(state)


def serialize_model(model: BTAE) -> bytes:
    """Full model blob for transfer: DDX1 | decoder blob | encoder fp16 | crc32."""
    dec = serialize_decoder(model)
    enc_state = model.encoder.state_dict()
    names = [n for n, _ in encoder_param_shapes(model.cfg)]
    if list(enc_state.keys()) != names:
        raise LoadError("encoder state does not match the declared traversal order")
    enc_blob = b"".join(enc_state[n].detach().cpu().numpy().astype("<f2").tobytes() for n in names)
    body = MODEL_MAGIC + struct.pack("<HQ", _FORMAT_VERSION, len(dec)) + dec + enc_blob
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def load_model(data: bytes) -> BTAE:
    """Rebuild a full BTAE (half-precision weights) from a DDX1 blob."""
    if len(data) < 18 or data[:4] != MODEL_MAGIC:
        raise LoadError("bad model magic")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if crc != (zlib.crc32(body) & 0xFFFFFFFF):
        raise LoadError("model blob checksum mismatch")
    version, dec_len = struct.unpack_from("<HQ", body, 4)
    if version != _FORMAT_VERSION:
        raise LoadError(f"unsupported model format version {version}")
    dec_end = 14 + dec_len
    cfg, dec_weights = load_decoder(body[14:dec_end])
    model = BTAE(cfg)
    load_decoder_into(model, dec_weights)
    enc_blob = body[dec_end:]
    shapes = encoder_param_shapes(cfg)
    declared = sum(int(np.prod(s)) for _, s in shapes)
    if len(enc_blob) != 2 * declared:
        raise LoadError("encoder blob length mismatch")
    state = {}
    off = 0
    for name, shape in shapes:
        n = int(np.prod(shape))
        arr = np.frombuffer(enc_blob, dtype="<f2", count=n, offset=off)
        state[name] = torch.from_numpy(arr.astype(np.float32).reshape(shape).copy())
        off += 2 * n
    model.encoder.load_state_dict(state)
    return model
