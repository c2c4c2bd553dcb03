"""Scaling benchmark: analytic FLOP model plus wall-clock/peak-memory sweeps.

Counts use an explicit convention (complex multiply = 6 real FLOPs, complex
add = 2, FFT of size P = 5*P*log2(P)) so every number is reproducible by
hand; absolute counts depend on the convention, ratios do not. Wall-clock
acceptance works on log-log slopes and ratios only, never absolute times.
"""

import math
import time
import tracemalloc
from dataclasses import dataclass

import numpy as np

from . import _accel
from .core import DiscreteParams, SsmConfig, discretize, init_s4d_lin, scan_recurrent
from .errors import ContractError
from .kernels import cached_kernels, clear_kernel_cache, eval_conv_path
from .transfer import ReadoutPolicy, SegmentPlan, Session, plan_segments

__all__ = [
    "METHODS",
    "BenchRecord",
    "count_flops",
    "run_scaling",
    "records_to_csv",
    "loglog_slope",
    "attention_forward",
    "compare_backends",
]

METHODS = ("recurrent", "fft_full", "sts_chunked", "attention")

CSV_HEADER = "method,L,M,flops,wall_ns,peak_bytes,checksum"

_ATTN_BLOCK_ROWS = 512


def _next_pow2(n: int) -> int:
    return 1 if n <= 1 else 1 << (n - 1).bit_length()


def count_flops(
    method: str,
    channels: int,
    state_size: int,
    L: int,
    segment_len: int | None = None,
    d_attn: int | None = None,
) -> int:
    """Closed-form FLOP count for one full-sequence evaluation."""
    H, N = channels, state_size
    if min(H, N, L) < 1:
        raise ContractError("shape parameters must be >= 1")
    if method == "recurrent":
        return L * H * (8 * N + 8 * N + 2)
    if method == "fft_full":
        P = _next_pow2(2 * L - 1)
        per_channel = 3 * (5 * P * int(math.log2(P))) + 6 * P + 8 * N * L
        return H * per_channel
    if method == "sts_chunked":
        if segment_len is None:
            raise ContractError("sts_chunked needs a segment length")
        M = segment_len
        if M > L:
            raise ContractError(f"segment length {M} exceeds sequence length {L}")
        segments = -(-L // M)
        per_segment = count_flops("fft_full", H, N, M) + H * 8 * N * M + H * 8 * N * M
        return segments * per_segment
    if method == "attention":
        if d_attn is None:
            raise ContractError("attention needs a head dimension")
        d = d_attn
        return 2 * L * L * d + 5 * L * L + 2 * L * L * d
    raise ContractError(f"unknown method {method!r}")


@dataclass
class BenchRecord:
    method: str
    L: int
    M: int
    flops: int
    wall_ns: int
    peak_bytes: int
    checksum: float
    skipped: bool = False

    def csv_row(self) -> str:
        return (f"{self.method},{self.L},{self.M},{self.flops},"
                f"{self.wall_ns},{self.peak_bytes},{self.checksum!r}")


def records_to_csv(records, fh=None) -> str:
    """Render records (skipped runs excluded) in deterministic row order."""
    order = {m: i for i, m in enumerate(METHODS)}
    rows = sorted(
        (r for r in records if not r.skipped),
        key=lambda r: (order.get(r.method, len(order)), r.method, r.L),
    )
    text = "\n".join([CSV_HEADER] + [r.csv_row() for r in rows]) + "\n"
    if fh is not None:
        fh.write(text)
    return text


def loglog_slope(lengths, walls) -> float:
    """Least-squares slope of log(wall) against log(length)."""
    lx = np.log(np.asarray(lengths, dtype=np.float64))
    ly = np.log(np.asarray(walls, dtype=np.float64))
    if len(lx) < 2:
        raise ContractError("need at least two points for a slope")
    return float(np.polyfit(lx, ly, 1)[0])


def attention_forward(x: np.ndarray, d: int, seed: int,
                      block_rows: int = _ATTN_BLOCK_ROWS) -> float:
    """Single-head scaled-dot-product attention over the same input stream.

    Tokens are the per-timestep channel vectors, projected to dimension d by
    a seeded random matrix. Rows are processed in blocks so peak memory is
    O(block_rows * L) rather than O(L^2); the arithmetic is the genuine
    quadratic computation, not a simulation. Returns the output sum.
    """
    H, L = x.shape
    rng = np.random.default_rng(np.uint64(seed))
    w = rng.standard_normal((H, d)) / np.sqrt(H)
    e = x.T @ w  # [L, d]
    scale = 1.0 / np.sqrt(d)
    total = 0.0
    for i in range(0, L, block_rows):
        q = e[i:i + block_rows]
        s = (q @ e.T) * scale
        s -= s.max(axis=1, keepdims=True)
        np.exp(s, out=s)
        s /= s.sum(axis=1, keepdims=True)
        total += float((s @ e).sum())
    return total


def attention_peak_estimate(L: int, d: int,
                            block_rows: int = _ATTN_BLOCK_ROWS) -> int:
    """Bytes the blocked attention evaluation is expected to touch at peak."""
    return 2 * 8 * block_rows * L + 3 * 8 * L * d


def _make_system(channels: int, state_size: int, seed: int) -> DiscreteParams:
    cfg = SsmConfig(channels=channels, state_size=state_size, seed=seed)
    return discretize(init_s4d_lin(cfg))


def _sts_checksum(params: DiscreteParams, x: np.ndarray, M: int) -> float:
    """Stream x through a session, accumulating the output sum segment by
    segment so nothing proportional to the stream length is retained."""
    session = Session(params, SegmentPlan(M), policy=ReadoutPolicy.ALL_TOKENS)
    total = 0.0
    for s, m in plan_segments(x.shape[1], M):
        total += float(session.process_segment(x[:, s:s + m]).values.sum())
    return total


def _timed(fn, repetitions: int) -> tuple[int, float]:
    """Median wall time over reps (after one warmup) and the last result."""
    fn()
    walls = []
    result = 0.0
    for _ in range(repetitions):
        t0 = time.perf_counter_ns()
        result = fn()
        walls.append(time.perf_counter_ns() - t0)
    return int(np.median(walls)), result


def _peak_bytes(fn) -> int:
    tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        fn()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return int(peak)


def run_scaling(
    lengths,
    channels: int = 8,
    state_size: int = 16,
    segment_len: int = 1024,
    d_attn: int = 64,
    repetitions: int = 3,
    methods=METHODS,
    mem_ceiling_bytes: int = 256 * 1024 * 1024,
    seed: int = 0,
    parallel: bool = False,
    log=None,
) -> list[BenchRecord]:
    """Measure each method over the sweep; one seeded input per length.

    Runs are serialized by default so methods do not contend; ``parallel``
    interleaves them on a thread pool (coarser numbers, faster sweeps).
    Attention runs whose estimated working set exceeds the memory ceiling are
    recorded as skipped, never failed.
    """
    lengths = sorted(int(L) for L in lengths)
    if repetitions < 1:
        raise ContractError("repetitions must be >= 1")
    H, N, M, d = channels, state_size, segment_len, d_attn
    params = _make_system(H, N, seed)
    rng = np.random.default_rng(np.uint64(seed) + 1)
    inputs = {L: rng.standard_normal((H, L)) for L in lengths}

    def one(method: str, L: int) -> BenchRecord:
        x = inputs[L]
        if method == "recurrent":
            flops = count_flops(method, H, N, L)
            fn = lambda: float(scan_recurrent(params, x)[0].sum())
        elif method == "fft_full":
            flops = count_flops(method, H, N, L)

            def fn():
                # one-shot evaluation materializes its kernels every time
                clear_kernel_cache()
                ks = cached_kernels(params, L)
                return float(eval_conv_path(params, ks, x)[0].sum())
        elif method == "sts_chunked":
            flops = count_flops(method, H, N, L, segment_len=min(M, L))
            fn = lambda: _sts_checksum(params, x, min(M, L))
        elif method == "attention":
            flops = count_flops(method, H, N, L, d_attn=d)
            est = attention_peak_estimate(L, d)
            if est > mem_ceiling_bytes:
                if log is not None:
                    print(
                        f"skipping attention at L={L}: estimated working set "
                        f"{est} bytes exceeds ceiling {mem_ceiling_bytes}",
                        file=log,
                    )
                return BenchRecord(method, L, 0, flops, 0, 0, 0.0, skipped=True)
            fn = lambda: attention_forward(x, d, seed)
        else:
            raise ContractError(f"unknown method {method!r}")

        wall_ns, checksum = _timed(fn, repetitions)
        if method == "sts_chunked":
            clear_kernel_cache()  # cold cache: peak must include the kernels
        peak = _peak_bytes(fn)
        m_used = min(M, L) if method == "sts_chunked" else 0
        return BenchRecord(method, L, m_used, flops, wall_ns, peak, checksum)

    work = [(m, L) for m in methods for L in lengths]
    if parallel:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor() as pool:
            records = list(pool.map(lambda w: one(*w), work))
    else:
        records = [one(*w) for w in work]
    return records


def compare_backends(
    lengths, channels: int = 8, state_size: int = 16,
    repetitions: int = 3, seed: int = 0,
) -> list[BenchRecord]:
    """Time the recurrent scan on the compiled lane and the numpy lane.

    Emits records named recurrent[numba] / recurrent[numpy]; the compiled row
    is present only when numba is active in this process.
    """
    H, N = channels, state_size
    params = _make_system(H, N, seed)
    rng = np.random.default_rng(np.uint64(seed) + 1)
    records = []
    lanes = [("numpy", _accel._scan_numpy)]
    if _accel.BACKEND == "numba":
        lanes.insert(0, ("numba", _accel.scan_core))
    for L in sorted(int(v) for v in lengths):
        x = rng.standard_normal((H, L))
        h0 = np.zeros((H, N), dtype=np.complex128)
        flops = count_flops("recurrent", H, N, L)
        for lane, fn in lanes:
            run = lambda: float(
                fn(params.A_bar, params.B_bar, params.C_bar, params.D, x, h0)[0].sum()
            )
            wall_ns, checksum = _timed(run, repetitions)
            records.append(
                BenchRecord(f"recurrent[{lane}]", L, 0, flops, wall_ns,
                            _peak_bytes(run), checksum)
            )
    return records
