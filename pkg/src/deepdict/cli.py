"""Command-line surface: compress, decompress, verify, synth, bench.

Exit codes: 0 success, 1 verification failure, 2 argument/usage errors,
3 data errors (parse, validation, corrupt containers), 4 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .btae import ModelConfig, serialize_model
from .errors import DecodeError, LoadError, ParseError, TrainingDiverged, ValidationError
from .pipeline import (
    TrainConfig,
    ca_compress,
    compress,
    decompress,
    parse_container,
    quantize_only_size,
)
from .qel import QELParams
from .quantize import verify_maae
from .series import (
    SyntheticSpec,
    TimeSeries,
    load_series,
    save_series,
    synthesize_polynomial,
    synthesize_random_walk,
)

_DATA_ERRORS = (ParseError, ValidationError, DecodeError, LoadError)


def _add_compress(sub):
    p = sub.add_parser("compress", help="compress a series into a container")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--eps", type=float, default=0.1, help="maximum absolute error")
    p.add_argument("--window", type=int, default=128)
    p.add_argument("--latent-bits", type=int, default=32)
    p.add_argument("--loss", choices=["l1", "l2", "qel"], default="qel")
    p.add_argument("--b", type=int, default=10, help="entropy-loss sharpness exponent")
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["uni", "multi"], default="uni")
    p.add_argument("--decoder", choices=["transformer", "ffn", "rnn"], default="transformer")
    p.add_argument("--rpe", action="store_true", help="enable relative position encoding")
    p.add_argument("--rpe-kind", choices=["matrix", "learned"], default="matrix")
    p.add_argument("--transfer", metavar="MODEL", help="warm-start from a model file or container")
    p.add_argument("--report", metavar="JSON", help="write a JSON compression report")
    p.add_argument("--save-model", metavar="PATH", help="save the trained model for transfer")
    p.add_argument("--prescale", action="store_true", help="per-channel affine prescale")
    p.add_argument("--format", choices=["auto", "csv", "f32le"], default="auto")


def _add_simple(sub):
    p = sub.add_parser("decompress", help="rebuild a series from a container")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--format", choices=["auto", "csv", "f32le"], default="auto")

    p = sub.add_parser("verify", help="check a container against the original series")
    p.add_argument("original")
    p.add_argument("container")
    p.add_argument("--format", choices=["auto", "csv", "f32le"], default="auto")

    p = sub.add_parser("synth", help="generate a synthetic series")
    p.add_argument("output")
    p.add_argument("--kind", choices=["poly", "walk"], default="poly")
    p.add_argument("--length", type=int, default=20000)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--t-low", type=float, default=0.0)
    p.add_argument("--t-high", type=float, default=1.0)
    p.add_argument("--segment", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["auto", "csv", "f32le"], default="auto")

    p = sub.add_parser("bench", help="compare methods over a dataset suite")
    p.add_argument("--suite", default="synth", help="'synth' or a directory of csv/f32le files")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--methods", default="deepdict,ca,quantize-only")
    p.add_argument("--out", help="write the table here (.md for markdown, else csv)")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--window", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepdict", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_compress(sub)
    _add_simple(sub)
    return parser


def _model_config(args) -> ModelConfig:
    return ModelConfig(
        latent_bits=args.latent_bits,
        window=args.window,
        decoder_kind=args.decoder,
        use_rpe=args.rpe,
        rpe_kind=args.rpe_kind,
        seed=args.seed,
    )


def _train_config(args, eps: float) -> TrainConfig:
    return TrainConfig(
        loss=args.loss,
        qel=QELParams(eps=eps, b=args.b),
        batch_size=args.batch,
        max_epochs=args.epochs,
        patience=args.patience,
        seed=args.seed,
    )


def _cmd_compress(args) -> int:
    if args.eps <= 0:
        raise ValueError("--eps must be positive")
    series = load_series(args.input, args.format)
    transfer_src = Path(args.transfer).read_bytes() if args.transfer else None
    container, report, model = compress(
        series,
        args.eps,
        model_config=_model_config(args),
        train_config=_train_config(args, args.eps),
        mode=args.mode,
        prescale=args.prescale,
        transfer_from=transfer_src,
    )
    Path(args.output).write_bytes(container)
    if args.save_model:
        Path(args.save_model).write_bytes(serialize_model(model))
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(json.dumps({"ratio": report.ratio, "compressed_bytes": report.compressed_bytes,
                      "max_abs_err": report.max_abs_err}))
    return 0


def _cmd_decompress(args) -> int:
    series = decompress(Path(args.input).read_bytes())
    save_series(series, args.output, args.format)
    print(json.dumps({"l_total": series.l_total, "d": series.d}))
    return 0


def _cmd_verify(args) -> int:
    original = load_series(args.original, args.format)
    data = Path(args.container).read_bytes()
    eps = parse_container(data)["eps"]
    recon = decompress(data)
    report = verify_maae(original, recon, eps)
    print(json.dumps({"max_abs_err": report.max_abs_err, "eps": eps, "pass": report.passed}))
    return 0 if report.passed else 1


def _cmd_synth(args) -> int:
    if args.kind == "poly":
        spec = SyntheticSpec(
            l_total=args.length,
            d=args.channels,
            d_p=args.degree,
            t_low=args.t_low,
            t_high=args.t_high,
            segment_len=args.segment,
            seed=args.seed,
        )
        series = synthesize_polynomial(spec)
    else:
        series = synthesize_random_walk(args.length, args.channels, args.seed)
    save_series(series, args.output, args.format)
    print(json.dumps({"l_total": series.l_total, "d": series.d}))
    return 0


def _bench_suite(args) -> list[tuple[str, TimeSeries]]:
    if args.suite == "synth":
        return [
            ("poly-uni", synthesize_polynomial(
                SyntheticSpec(l_total=16384, d=1, d_p=2, segment_len=args.window, seed=args.seed))),
            ("poly-multi", synthesize_polynomial(
                SyntheticSpec(l_total=8192, d=3, d_p=1, segment_len=args.window, seed=args.seed + 1))),
            ("walk", synthesize_random_walk(16384, 1, seed=args.seed + 2)),
        ]
    suite_dir = Path(args.suite)
    if not suite_dir.is_dir():
        raise ValueError(f"suite {args.suite!r} is not a directory")
    datasets = []
    for path in sorted(suite_dir.iterdir()):
        if path.suffix.lower() in (".csv", ".f32", ".f32le", ".bin"):
            datasets.append((path.stem, load_series(path)))
    if not datasets:
        raise ValueError(f"no datasets found under {suite_dir}")
    return datasets


def _bench_cell(method: str, series: TimeSeries, args) -> dict:
    t0 = time.perf_counter()
    if method == "deepdict":
        container, report, _ = compress(
            series,
            args.eps,
            model_config=ModelConfig(window=args.window, seed=args.seed),
            train_config=TrainConfig(
                loss="qel", qel=QELParams(eps=args.eps), max_epochs=args.epochs, seed=args.seed
            ),
            mode="uni",
        )
        recon = decompress(container)
        err = verify_maae(series, recon, args.eps).max_abs_err
        nbytes = len(container)
    elif method == "ca":
        container, report = ca_compress(series, args.eps)
        recon = decompress(container)
        err = verify_maae(series, recon, args.eps).max_abs_err
        nbytes = len(container)
    elif method == "quantize-only":
        nbytes, err = quantize_only_size(series, args.eps)
    else:
        raise ValueError(f"unknown method {method!r}")
    return {
        "ratio": series.nbytes_f32 / nbytes,
        "max_abs_err": err,
        "seconds": time.perf_counter() - t0,
    }


def _cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    rows = []
    any_ok = False
    for name, series in _bench_suite(args):
        for method in methods:
            try:
                cell = _bench_cell(method, series, args)
                rows.append({"dataset": name, "method": method, "status": "ok",
                             "ratio": f"{cell['ratio']:.4f}",
                             "max_abs_err": f"{cell['max_abs_err']:.3e}",
                             "seconds": f"{cell['seconds']:.2f}"})
                any_ok = True
            except Exception as exc:  # per-cell failures must not kill the table
                rows.append({"dataset": name, "method": method, "status": f"error: {exc}",
                             "ratio": "", "max_abs_err": "", "seconds": ""})
    fields = ["dataset", "method", "status", "ratio", "max_abs_err", "seconds"]
    if args.out and args.out.endswith(".md"):
        lines = ["| " + " | ".join(fields) + " |", "|" + "---|" * len(fields)]
        lines += ["| " + " | ".join(str(r[f]) for f in fields) + " |" for r in rows]
        Path(args.out).write_text("\n".join(lines) + "\n")
    else:
        out = open(args.out, "w", newline="") if args.out else sys.stdout
        try:
            writer = csv.DictWriter(out, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)
        finally:
            if args.out:
                out.close()
    return 0 if any_ok else 3


_COMMANDS = {
    "compress": _cmd_compress,
    "decompress": _cmd_decompress,
    "verify": _cmd_verify,
    "synth": _cmd_synth,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OverflowError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
