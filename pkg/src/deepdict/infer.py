"""Deterministic numpy inference for serialized decoders.

This is the single inference path used both when residuals are computed at
compression time and when a container is decompressed, so the error bound
cannot drift between the two sides. All math runs in float32 with a fixed
operation order; no torch kernels are involved.
"""

from __future__ import annotations

import numpy as np

from .btae import ModelConfig, build_positional

_LN_EPS = np.float32(1e-5)
_GELU_C = np.float32(0.7978845608028654)  # sqrt(2/pi)
_GELU_A = np.float32(0.044715)


def _gelu(x: np.ndarray) -> np.ndarray:
    return np.float32(0.5) * x * (np.float32(1.0) + np.tanh(_GELU_C * (x + _GELU_A * x * x * x)))


def _linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w.T + b


def _layernorm(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True, dtype=np.float32)
    centered = x - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True, dtype=np.float32)
    return centered / np.sqrt(var + _LN_EPS) * w + b


def _softmax(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True, dtype=np.float32)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.float32(1.0) / (np.float32(1.0) + np.exp(-x))


def _mlp(x: np.ndarray, weights: dict, prefix: str, n_linear: int) -> np.ndarray:
    for i in range(n_linear):
        x = _linear(x, weights[f"{prefix}.{2 * i}.weight"], weights[f"{prefix}.{2 * i}.bias"])
        if i < n_linear - 1:
            x = _gelu(x)
    return x


def _run_transformer(
    cfg: ModelConfig,
    weights: dict,
    codes: np.ndarray,
    rpe_override: np.ndarray | None,
    collect_attn: list | None,
) -> np.ndarray:
    l, dm, h = cfg.window, cfg.d_model, cfg.n_heads
    dh = dm // h
    scale = np.float32(1.0 / np.sqrt(dm))
    pos = build_positional(l, dm)
    rpe = pos.rpe if rpe_override is None else np.asarray(rpe_override, dtype=np.float32)
    idx = np.arange(l)
    rel_index = (idx[None, :] - idx[:, None]) + l - 1  # (l, l) into 2l-1 distances

    u = _mlp(codes, weights, "lift", 2)  # (B, dm)
    z = np.ascontiguousarray(np.broadcast_to(u[:, None, :], (codes.shape[0], l, dm)))
    z = z + pos.ape[None]
    for bi in range(cfg.n_decoder_blocks):
        p = f"blocks.{bi}"
        hz = _layernorm(z, weights[f"{p}.ln1.weight"], weights[f"{p}.ln1.bias"])
        b = hz.shape[0]
        q = _linear(hz, weights[f"{p}.attn.wq.weight"], weights[f"{p}.attn.wq.bias"])
        k = _linear(hz, weights[f"{p}.attn.wk.weight"], weights[f"{p}.attn.wk.bias"])
        v = _linear(hz, weights[f"{p}.attn.wv.weight"], weights[f"{p}.attn.wv.bias"])
        q = q.reshape(b, l, h, dh).transpose(0, 2, 1, 3)
        k = k.reshape(b, l, h, dh).transpose(0, 2, 1, 3)
        v = v.reshape(b, l, h, dh).transpose(0, 2, 1, 3)
        logits = np.matmul(q, k.transpose(0, 1, 3, 2))
        if cfg.use_rpe:
            if cfg.rpe_kind == "matrix":
                logits = logits + rpe[None, None]
            else:
                emb = weights[f"{p}.attn.rel_emb"]  # (h, 2l-1, dh)
                rel = np.einsum("bhld,hrd->bhlr", q, emb).astype(np.float32)
                logits = logits + rel[:, :, np.arange(l)[:, None], rel_index]
        attn = _softmax(logits * scale)
        if collect_attn is not None:
            collect_attn.append(attn)
        o = np.matmul(attn, v).transpose(0, 2, 1, 3).reshape(b, l, dm)
        z = z + _linear(o, weights[f"{p}.attn.wo.weight"], weights[f"{p}.attn.wo.bias"])
        g = _layernorm(z, weights[f"{p}.ln2.weight"], weights[f"{p}.ln2.bias"])
        z = z + _mlp(g, weights, f"{p}.ffn", 2)
    return _mlp(z, weights, "out", 2)


def _run_ffn(cfg: ModelConfig, weights: dict, codes: np.ndarray) -> np.ndarray:
    y = _mlp(codes, weights, "net", 4)
    return y.reshape(-1, cfg.window, cfg.channels)


def _run_rnn(cfg: ModelConfig, weights: dict, codes: np.ndarray) -> np.ndarray:
    dm = cfg.d_model
    w_ih, w_hh = weights["cell.weight_ih"], weights["cell.weight_hh"]
    b_ih, b_hh = weights["cell.bias_ih"], weights["cell.bias_hh"]
    b = codes.shape[0]
    h = np.zeros((b, dm), dtype=np.float32)
    inp = _mlp(codes, weights, "lift", 2)
    outs = np.empty((b, cfg.window, cfg.channels), dtype=np.float32)
    for t in range(cfg.window):
        gi = inp @ w_ih.T + b_ih
        gh = h @ w_hh.T + b_hh
        r = _sigmoid(gi[:, :dm] + gh[:, :dm])
        zz = _sigmoid(gi[:, dm : 2 * dm] + gh[:, dm : 2 * dm])
        nn_ = np.tanh(gi[:, 2 * dm :] + r * gh[:, 2 * dm :])
        h = (np.float32(1.0) - zz) * nn_ + zz * h
        y = _mlp(h, weights, "head", 2)
        outs[:, t, :] = y
        inp = _linear(y, weights["in_proj.weight"], weights["in_proj.bias"])
    return outs


def run_decoder(
    cfg: ModelConfig,
    weights: dict[str, np.ndarray],
    codes: np.ndarray,
    chunk: int = 256,
    rpe_override: np.ndarray | None = None,
    collect_attn: list | None = None,
) -> np.ndarray:
    """Decode latent codes (n, latent_bits) of +-1 into (n, l, d) float32.

    Work is chunked to bound the attention buffers. Results are bit-stable
    for a fixed chunk size; callers on the compression and decompression
    sides must use the same chunk (both use the default), since BLAS kernel
    selection varies with operand shape at float32 round-off level.
    """
    c = np.asarray(codes, dtype=np.float32)
    if c.ndim == 1:
        c = c[None]
    if c.shape[1] != cfg.latent_bits:
        raise ValueError(f"codes have {c.shape[1]} bits, config says {cfg.latent_bits}")
    out = np.empty((c.shape[0], cfg.window, cfg.channels), dtype=np.float32)
    for lo in range(0, c.shape[0], chunk):
        part = np.ascontiguousarray(c[lo : lo + chunk])
        if cfg.decoder_kind == "transformer":
            out[lo : lo + chunk] = _run_transformer(cfg, weights, part, rpe_override, collect_attn)
        elif cfg.decoder_kind == "ffn":
            out[lo : lo + chunk] = _run_ffn(cfg, weights, part)
        else:
            out[lo : lo + chunk] = _run_rnn(cfg, weights, part)
    return out
