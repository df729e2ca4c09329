"""Acceptance suite: one test per release criterion.

Run with ``pytest tests/test_acceptance.py -s`` to get a [PASS]/[FAIL]
checklist. Criteria 1 and 5 are the long ones (minutes, not seconds).
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest
import torch

import deepdict as dd
from deepdict.btae import BTAE, ModelConfig, binarize, build_positional, load_model, serialize_model
from deepdict.codec import EntropyModel, encode_symbols, entropy_bound_bits
from deepdict.pipeline import (
    TrainConfig,
    ca_compress,
    compress,
    decompress,
    quantize_only_size,
    train,
    transfer_compress,
)
from deepdict.qel import QELParams, pull_strength, qel_backward, qel_forward
from deepdict.quantize import quantize, verify_maae
from deepdict.series import SyntheticSpec, synthesize_polynomial, synthesize_random_walk, window


def report(name: str, ok: bool, detail: str = "") -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))


# -- criterion 1: hard error bound over randomized cases ---------------------


def test_criterion_1_error_bound():
    t_start = time.perf_counter()
    rng = np.random.default_rng(12345)
    eps_choices = (0.01, 0.1, 1.0)
    violations = 0
    worst = 0.0
    for case in range(100):
        d = int(rng.integers(1, 6))
        l_total = int(round(10 ** rng.uniform(3.0, math.log10(5e4))))
        eps = float(rng.choice(eps_choices))
        seed = int(rng.integers(0, 2**31))
        if rng.random() < 0.5:
            series = synthesize_random_walk(l_total, d, seed=seed)
        else:
            spec = SyntheticSpec(l_total=l_total, d=d, d_p=int(rng.integers(0, 4)),
                                 segment_len=128, seed=seed)
            series = synthesize_polynomial(spec)
        mode = "multi" if (d > 1 and rng.random() < 0.5) else "uni"
        kind = "transformer" if case % 10 else ("ffn" if case % 20 else "rnn")
        cfg = ModelConfig(window=128, decoder_kind=kind, seed=seed % 1000)
        # mostly untrained (0 epochs); a few short trainings
        epochs = 2 if (case % 12 == 0 and l_total <= 5000) else 0
        tc = TrainConfig(loss="l2", max_epochs=epochs, seed=seed % 1000)
        container, _, _ = compress(series, eps, model_config=cfg, train_config=tc, mode=mode)
        rep = verify_maae(series, decompress(container), eps)
        worst = max(worst, rep.max_abs_err / eps)
        if not rep.passed:
            violations += 1
    elapsed = time.perf_counter() - t_start
    ok = violations == 0 and elapsed <= 600
    report("criterion 1 (error bound, 100 cases)", ok,
           f"violations={violations}, worst err/eps={worst:.6f}, {elapsed:.0f}s")
    assert violations == 0
    assert elapsed <= 600


# -- criterion 2: codec losslessness and efficiency --------------------------


def test_criterion_2_codec():
    rng = np.random.default_rng(777)
    n_big = 1_000_000
    streams = {
        "uniform": rng.integers(-128, 128, size=n_big),
        "geometric": rng.geometric(0.05, size=n_big) - 1,
        "zipf": np.clip(rng.zipf(2.5, size=n_big), 1, 32767),
        "constant": np.zeros(n_big, dtype=np.int64),
    }
    lossless = True
    efficient = True
    details = []
    for name, k in streams.items():
        s = encode_symbols(k)
        back = dd.decode_symbols(s)
        lossless &= bool(np.array_equal(back, k))
        k_small = k[:150_000]
        s_small = encode_symbols(k_small)
        bound = entropy_bound_bits(EntropyModel.from_symbols(k_small))
        budget = 1.02 * bound + 512
        bits = 8 * len(s_small.payload)
        efficient &= bits <= budget
        details.append(f"{name}: bits={bits} budget={budget:.0f}")
    report("criterion 2 (codec lossless + efficiency)", lossless and efficient, "; ".join(details))
    assert lossless and efficient


# -- criterion 3: gradient kernel matches an independent scalar oracle -------


def scalar_R_literal(d: float, eps: float, b: int, n: int) -> float:
    return (b / (n * eps**b)) * d ** (b - 1) / ((d**b / eps**b) + 1) ** 2


def test_criterion_3_gradient_oracle():
    rng = np.random.default_rng(31337)
    n = 128
    worst_rel = 0.0
    for _ in range(10_000):
        b = int(rng.choice([2, 4, 6, 8, 10, 12]))
        eps = 10.0 ** rng.uniform(-6, 2)
        d = rng.uniform(0.0, 20.0) * rng.choice([-1.0, 1.0]) * eps
        got = float(pull_strength(np.array([d]), eps, b, n)[0])
        want = scalar_R_literal(d, eps, b, n)
        if want == 0.0:
            assert got == 0.0
        else:
            worst_rel = max(worst_rel, abs(got - want) / abs(want))
    spot_zero = float(pull_strength(np.array([0.0]), 0.1, 10, 100)[0]) == 0.0
    spot_eps = math.isclose(
        float(pull_strength(np.array([0.1]), 0.1, 10, 100)[0]), 10 / (4 * 100 * 0.1), rel_tol=1e-12
    )
    ok = worst_rel <= 1e-9 and spot_zero and spot_eps
    report("criterion 3 (gradient oracle)", ok,
           f"worst rel err={worst_rel:.2e}, R(0)=0 {spot_zero}, R(eps) {spot_eps}")
    assert ok


# -- criterion 4: one bounded entropy-descent step ----------------------------


def test_criterion_4_descent():
    params = QELParams(eps=0.1, b=10)
    wins = 0
    for seed in range(100):
        r = np.random.default_rng(seed).uniform(-1, 1, size=100)
        g = qel_backward(r, params)
        mg = float(np.max(np.abs(g)))
        eta = (params.eps / 2) / mg if mg > 0 else 0.0
        if qel_forward(r - eta * g, params) <= qel_forward(r, params) + 1e-15:
            wins += 1
    report("criterion 4 (entropy descent)", wins >= 95, f"{wins}/100 trials reduced H")
    assert wins >= 95


# -- criterion 5: scaled compression-ratio trend ------------------------------

TREND_SPEC = SyntheticSpec(l_total=200_000, d=5, d_p=0, segment_len=128, seed=2024)
TREND_EPS = 0.1
TREND_EPOCHS = 60


def _trend_run(series, loss):
    tc = TrainConfig(loss=loss, qel=QELParams(eps=TREND_EPS), lr=1e-3,
                     max_epochs=TREND_EPOCHS, patience=TREND_EPOCHS, seed=0)
    container, rep, _ = compress(series, TREND_EPS, model_config=ModelConfig(window=128, seed=0),
                                 train_config=tc, mode="multi")
    assert verify_maae(series, decompress(container), TREND_EPS).passed
    return rep.ratio


def test_criterion_5_ratio_trend():
    t0 = time.perf_counter()
    series = synthesize_polynomial(TREND_SPEC)
    qo_bytes, _ = quantize_only_size(series, TREND_EPS)
    qo_ratio = series.nbytes_f32 / qo_bytes
    _, ca_rep = ca_compress(series, TREND_EPS)
    ratio_qel = _trend_run(series, "qel")
    ratio_l1 = _trend_run(series, "l1")
    elapsed = time.perf_counter() - t0

    checks = {
        "qel >= l1": ratio_qel >= ratio_l1,
        "qel > quantize-only": ratio_qel > qo_ratio,
        "l1 > quantize-only": ratio_l1 > qo_ratio,
        "qel > ca": ratio_qel > ca_rep.ratio,
        "l1 > ca": ratio_l1 > ca_rep.ratio,
        "runtime <= 30 min": elapsed <= 1800,
    }
    detail = (f"qel={ratio_qel:.2f} l1={ratio_l1:.2f} ca={ca_rep.ratio:.2f} "
              f"qo={qo_ratio:.2f} time={elapsed:.0f}s")
    for name, ok in checks.items():
        report(f"criterion 5 ({name})", ok, detail if not ok else "")
    report("criterion 5 (ratio trend, overall)", all(checks.values()), detail)
    assert all(checks.values()), detail


# -- criterion 6: unit equalities ---------------------------------------------


def test_criterion_6_unit_equalities():
    pos = build_positional(3, 4)
    rpe_ok = np.array_equal(pos.rpe, np.array([[0, 1, 2], [-1, 0, 1], [-2, -1, 0]], np.float32))
    ape = build_positional(8, 32).ape
    ape_ok = np.array_equal(ape[0, 0::2], np.zeros(16)) and np.array_equal(ape[0, 1::2], np.ones(16))
    bin_ok = binarize(np.array([0.0]))[0] == 1 and binarize(np.array([-0.3]))[0] == -1
    rb = quantize(np.array([0.37]), 0.1)
    quant_ok = rb.k[0] == 2 and abs(rb.r_q[0] - 0.4) < 1e-12
    model = EntropyModel.from_symbols(np.array([1, 1, 1, 2]))
    ent_ok = abs(entropy_bound_bits(model) - 3.2451124978365313) < 1e-9
    ok = rpe_ok and ape_ok and bin_ok and quant_ok and ent_ok
    report("criterion 6 (unit equalities)", ok,
           f"rpe={rpe_ok} ape={ape_ok} binarize={bin_ok} quantize={quant_ok} entropy={ent_ok}")
    assert ok


# -- criterion 7: cross-process determinism -----------------------------------


def test_criterion_7_determinism(tmp_path):
    data = tmp_path / "x.csv"
    dd.save_series(synthesize_polynomial(
        SyntheticSpec(l_total=3000, d=2, d_p=1, segment_len=128, seed=5)), data, format="csv")

    def run(cmd):
        res = subprocess.run([sys.executable, "-m", "deepdict", *cmd],
                             capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        return res

    outs = []
    for name in ("c1.ddc", "c2.ddc"):
        out = tmp_path / name
        run(["compress", str(data), str(out), "--eps", "0.1", "--epochs", "2", "--seed", "9"])
        outs.append(out.read_bytes())
    containers_equal = outs[0] == outs[1]

    recs = []
    for name in ("r1.csv", "r2.csv"):
        path = tmp_path / name
        run(["decompress", str(tmp_path / "c1.ddc"), str(path)])
        recs.append(path.read_bytes())
    outputs_equal = recs[0] == recs[1]

    report("criterion 7 (determinism)", containers_equal and outputs_equal,
           f"containers identical={containers_equal}, outputs identical={outputs_equal}")
    assert containers_equal and outputs_equal


# -- criterion 8: transfer freezing and faster best checkpoint -----------------


def test_criterion_8_transfer():
    src_series = synthesize_polynomial(
        SyntheticSpec(l_total=20_000, d=1, d_p=1, segment_len=128, seed=100))
    pretrain_tc = TrainConfig(loss="l2", lr=1e-3, max_epochs=15, patience=15, seed=0)
    _, _, src_model = compress(src_series, 0.1, model_config=ModelConfig(window=128, seed=0),
                               train_config=pretrain_tc)
    blob = serialize_model(src_model)
    src_state = load_model(blob).decoder.state_dict()

    tgt_series = synthesize_polynomial(
        SyntheticSpec(l_total=20_000, d=1, d_p=1, segment_len=128, seed=200))
    wb = window(tgt_series, 128)

    frozen_ok = True
    transfer_epochs = []
    scratch_epochs = []
    for seed in range(5):
        tc = TrainConfig(loss="l2", lr=1e-3, max_epochs=12, patience=12, seed=seed)
        _, rep_t, model_t = transfer_compress(tgt_series, blob, 0.1, train_config=tc)
        transfer_epochs.append(rep_t.best_epoch)
        for key, val in src_state.items():
            if not torch.equal(val, model_t.decoder.state_dict()[key]):
                frozen_ok = False
        cfg = ModelConfig(window=128, seed=seed)
        _, rep_s, _ = compress(tgt_series, 0.1, model_config=cfg, train_config=tc)
        scratch_epochs.append(rep_s.best_epoch)

    med_t = float(np.median(transfer_epochs))
    med_s = float(np.median(scratch_epochs))
    faster = med_t < med_s
    report("criterion 8 (transfer)", frozen_ok and faster,
           f"frozen={frozen_ok}, median best epoch transfer={med_t} vs scratch={med_s} "
           f"({transfer_epochs} vs {scratch_epochs})")
    assert frozen_ok and faster
