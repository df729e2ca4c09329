import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepdict.quantize import dequantize, quantize, verify_maae


class TestQuantize:
    def test_paper_example(self):
        rb = quantize(np.array([0.37]), 0.1)
        assert rb.k[0] == 2
        assert rb.r_q[0] == pytest.approx(0.4, abs=1e-12)
        assert abs(rb.r[0] - rb.r_q[0]) <= 0.1

    def test_zero(self):
        rb = quantize(np.array([0.0]), 0.1)
        assert rb.k[0] == 0 and rb.r_q[0] == 0.0

    def test_half_away_from_zero_boundary(self):
        # -0.1 / 0.2 = -0.5 rounds away from zero to -1
        rb = quantize(np.array([-0.1]), 0.1)
        assert rb.k[0] == -1
        assert rb.r_q[0] == pytest.approx(-0.2, abs=1e-12)
        assert abs(rb.r[0] - rb.r_q[0]) <= 0.1 + 1e-15

    def test_positive_half_boundary(self):
        rb = quantize(np.array([0.1]), 0.1)
        assert rb.k[0] == 1

    def test_eps_must_be_positive(self):
        with pytest.raises(ValueError):
            quantize(np.array([1.0]), 0.0)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            quantize(np.array([np.nan]), 0.1)

    def test_overflow_detected(self):
        with pytest.raises(OverflowError):
            quantize(np.array([1e30]), 1e-10)

    def test_error_bound_over_magnitudes(self):
        # 10^6 values spanning 1e-6 .. 1e6 in magnitude
        rng = np.random.default_rng(0)
        mag = 10.0 ** rng.uniform(-6, 6, size=1_000_000)
        r = mag * rng.choice([-1.0, 1.0], size=mag.size)
        for eps in (1e-3, 0.1, 10.0):
            rb = quantize(r, eps)
            assert np.max(np.abs(rb.r - rb.r_q)) <= eps * (1 + 1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        r = rng.normal(size=1000) * 50
        rb = quantize(r, 0.25)
        rb2 = quantize(rb.r_q, 0.25)
        np.testing.assert_array_equal(rb2.r_q, rb.r_q)

    @given(st.floats(-1e6, 1e6), st.floats(1e-6, 1e3))
    @settings(max_examples=300, deadline=None)
    def test_bound_property(self, r, eps):
        rb = quantize(np.array([r]), eps)
        assert abs(rb.r[0] - rb.r_q[0]) <= eps * (1 + 1e-12)


class TestDequantize:
    def test_definition(self):
        assert dequantize(np.array([2]), 0.1)[0] == pytest.approx(0.4, abs=1e-15)
        assert dequantize(np.array([0]), 0.1)[0] == 0.0

    def test_matches_quantize_rq(self):
        r = np.random.default_rng(2).normal(size=100)
        rb = quantize(r, 0.05)
        np.testing.assert_array_equal(dequantize(rb.k, 0.05), rb.r_q)


class TestVerifyMaae:
    def test_identical(self):
        x = np.random.default_rng(3).normal(size=(50, 2))
        rep = verify_maae(x, x, 0.1)
        assert rep.passed and rep.max_abs_err == 0.0

    def test_off_by_two_eps_fails(self):
        x = np.zeros(10)
        y = x.copy()
        y[3] = 0.2
        assert not verify_maae(x, y, 0.1).passed

    def test_exactly_eps_passes(self):
        x = np.zeros(10)
        y = x.copy()
        y[3] = 0.1
        assert verify_maae(x, y, 0.1).passed

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            verify_maae(np.zeros(3), np.zeros(4), 0.1)
