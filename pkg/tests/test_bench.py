import io

import numpy as np
import pytest

from ssmstream.bench import (
    METHODS,
    attention_forward,
    compare_backends,
    count_flops,
    loglog_slope,
    records_to_csv,
    run_scaling,
)
from ssmstream.errors import ContractError


class TestCountFlops:
    def test_recurrent_unit_case(self):
        # L*H*(8N + 8N + 2) with everything 1
        assert count_flops("recurrent", 1, 1, 1) == 18

    def test_recurrent_scales_linearly(self):
        base = count_flops("recurrent", 4, 16, 1024)
        assert count_flops("recurrent", 4, 16, 2048) == 2 * base

    def test_sts_single_chunk_is_fft_plus_state_terms(self):
        H, N, L = 4, 16, 4096
        sts = count_flops("sts_chunked", H, N, L, segment_len=L)
        fft = count_flops("fft_full", H, N, L)
        assert sts == fft + 2 * H * 8 * N * L

    def test_attention_doubling_approaches_quadratic(self):
        for L in (1 << 14, 1 << 16):
            ratio = count_flops("attention", 1, 1, 2 * L, d_attn=64) / \
                count_flops("attention", 1, 1, L, d_attn=64)
            assert ratio >= 3.5

    def test_sts_doubling_bounded(self):
        for L in (1 << 14, 1 << 16):
            ratio = count_flops("sts_chunked", 8, 16, 2 * L, segment_len=1024) / \
                count_flops("sts_chunked", 8, 16, L, segment_len=1024)
            assert ratio <= 2.2

    def test_monotone_in_length(self):
        for method in METHODS:
            kw = {"segment_len": 256} if method == "sts_chunked" else {}
            if method == "attention":
                kw["d_attn"] = 64
            counts = [count_flops(method, 4, 8, L, **kw)
                      for L in (256, 512, 1024, 4096)]
            assert counts == sorted(counts)
            assert all(c > 0 for c in counts)

    def test_segment_longer_than_sequence_rejected(self):
        with pytest.raises(ContractError):
            count_flops("sts_chunked", 1, 1, 64, segment_len=128)

    def test_unknown_method(self):
        with pytest.raises(ContractError):
            count_flops("quantum", 1, 1, 1)


class TestAttention:
    def test_blocked_equals_unblocked(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((4, 256))
        full = attention_forward(x, 16, seed=5, block_rows=256)
        blocked = attention_forward(x, 16, seed=5, block_rows=32)
        assert full == pytest.approx(blocked, rel=1e-10)


class TestRunScaling:
    def test_checksums_agree_across_ssm_methods(self):
        records = run_scaling([512, 2048], channels=4, state_size=8,
                              segment_len=128, repetitions=1,
                              methods=("recurrent", "fft_full", "sts_chunked"))
        by_length = {}
        for r in records:
            by_length.setdefault(r.L, []).append(r.checksum)
        for L, sums in by_length.items():
            ref = sums[0]
            for s in sums[1:]:
                assert s == pytest.approx(ref, rel=1e-7)

    def test_sts_peak_constant_across_lengths(self):
        records = run_scaling([1024, 8192], channels=4, state_size=8,
                              segment_len=256, repetitions=1,
                              methods=("sts_chunked",))
        peaks = [r.peak_bytes for r in records]
        assert abs(peaks[1] - peaks[0]) <= 128 * 1024

    def test_attention_skipped_over_ceiling(self):
        records = run_scaling([4096], channels=2, state_size=4,
                              segment_len=256, repetitions=1,
                              methods=("attention",), mem_ceiling_bytes=1024)
        assert len(records) == 1 and records[0].skipped
        assert "attention" not in records_to_csv(records)

    def test_csv_shape_and_order(self):
        records = run_scaling([256, 512], channels=2, state_size=4,
                              segment_len=64, repetitions=1)
        text = records_to_csv(records)
        lines = text.strip().split("\n")
        assert lines[0] == "method,L,M,flops,wall_ns,peak_bytes,checksum"
        body = [ln.split(",") for ln in lines[1:]]
        # deterministic order: method groups in canonical order, L ascending
        methods = [row[0] for row in body]
        assert methods == sorted(methods, key=lambda m: METHODS.index(m))
        for row in body:
            assert len(row) == 7
            float(row[6])  # checksum parses
        fh = io.StringIO()
        records_to_csv(records, fh)
        assert fh.getvalue() == text


class TestSlope:
    def test_exact_powers(self):
        assert loglog_slope([1, 2, 4], [1, 2, 4]) == pytest.approx(1.0)
        assert loglog_slope([1, 2, 4], [1, 4, 16]) == pytest.approx(2.0)

    def test_needs_two_points(self):
        with pytest.raises(ContractError):
            loglog_slope([4], [1.0])


class TestBackendCompare:
    def test_lanes_agree(self):
        records = compare_backends([512], channels=2, state_size=4,
                                   repetitions=1)
        assert {r.method.split("[")[0] for r in records} == {"recurrent"}
        sums = [r.checksum for r in records]
        for s in sums[1:]:
            assert s == pytest.approx(sums[0], rel=1e-10)
