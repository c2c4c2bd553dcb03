"""Self-contained equivalence suite: every evaluation path against the scan.

Each property runs over a grid of seeded random stable systems and reports
the worst relative error it saw; the suite passes only if every cell stays
within its tolerance. ``exponent_bias`` injects a deliberate off-by-one into
the segment-boundary exponents so the suite can demonstrate it actually
detects that class of defect.
"""

from dataclasses import dataclass

import numpy as np

from .core import (
    SsmConfig,
    TransferState,
    discretize,
    init_s4d_lin,
    scan_recurrent,
    step,
)
from .kernels import cached_kernels, eval_conv_path, materialize_kernels
from .transfer import run_chunked, state_from_bytes, state_to_bytes

__all__ = ["PropertyResult", "run_verification", "format_results", "rel_err"]

DEFAULT_SIZES = (1, 2, 3, 8, 64, 256, 1024)
DEFAULT_SEEDS = (0, 1, 2)
_SHAPES = ((1, 4), (4, 16))


def tolerance_for(L: int) -> float:
    """Path-agreement tolerance: 1e-10 up to 4096 steps, 1e-7 beyond."""
    return 1e-10 if L <= 4096 else 1e-7


def rel_err(got: np.ndarray, want: np.ndarray) -> float:
    """Max absolute deviation normalized by the reference magnitude."""
    if want.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(want))), 1e-30)
    return float(np.max(np.abs(got - want))) / scale


@dataclass
class PropertyResult:
    name: str
    cells: int
    max_err: float
    tol: float  # tolerance at the worst cell
    passed: bool
    worst: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        tail = f"  worst: {self.worst}" if (self.worst and not self.passed) else ""
        return (f"{self.name:<24} cells={self.cells:<5d} "
                f"max_rel_err={self.max_err:.3e} tol={self.tol:.0e} "
                f"{status}{tail}")


class _Tracker:
    def __init__(self, name: str):
        self.name = name
        self.cells = 0
        self.worst_ratio = 0.0
        self.max_err = 0.0
        self.tol = 0.0
        self.worst = ""

    def add(self, err: float, tol: float, where: str):
        self.cells += 1
        ratio = err / tol if tol > 0 else (0.0 if err == 0.0 else np.inf)
        if ratio >= self.worst_ratio:
            self.worst_ratio = ratio
            self.max_err = err
            self.tol = tol
            self.worst = where

    def result(self) -> PropertyResult:
        return PropertyResult(self.name, self.cells, self.max_err, self.tol,
                              self.worst_ratio <= 1.0, self.worst)


def _systems(seeds):
    for seed in seeds:
        for H, N in _SHAPES:
            cfg = SsmConfig(channels=H, state_size=N, seed=seed)
            yield seed, H, N, discretize(init_s4d_lin(cfg))


def partitions_for(L: int) -> list[int]:
    """The standard partition grid; lengths above L act as one short segment."""
    return sorted({1, 7, 64, max(L // 2, 1), L})


def run_verification(
    sizes=DEFAULT_SIZES,
    seeds=DEFAULT_SEEDS,
    exponent_bias: int = 0,
) -> list[PropertyResult]:
    """Run every property over the grid; returns one result per property."""
    sizes = sorted(int(v) for v in sizes)

    path_eq = _Tracker("path_equivalence")
    chunk_inv = _Tracker("chunking_invariance")
    m1_step = _Tracker("m1_equals_step")
    ckpt = _Tracker("checkpoint_roundtrip")
    lin = _Tracker("linearity")
    caus = _Tracker("causality")
    kcons = _Tracker("kernel_consistency")

    for seed, H, N, params in _systems(seeds):
        rng = np.random.default_rng(np.uint64(seed) * 7919 + 17)
        for L in sizes:
            tol = tolerance_for(L)
            x = rng.standard_normal((H, L))
            h0 = TransferState(
                h=rng.standard_normal((H, N)) + 1j * rng.standard_normal((H, N))
            )
            y_ref, s_ref = scan_recurrent(params, x)
            y_ref0, s_ref0 = scan_recurrent(params, x, h0.copy())

            # convolution path against the scan, zero and nonzero input state
            ks = cached_kernels(params, L, exponent_bias=exponent_bias)
            y_c, s_c = eval_conv_path(params, ks, x)
            err = max(rel_err(y_c, y_ref), rel_err(s_c.h, s_ref.h))
            path_eq.add(err, tol, f"seed={seed} H={H} N={N} L={L} h0=0")
            y_c0, s_c0 = eval_conv_path(params, ks, x, h0.copy())
            err = max(rel_err(y_c0, y_ref0), rel_err(s_c0.h, s_ref0.h))
            path_eq.add(err, tol, f"seed={seed} H={H} N={N} L={L} h0!=0")

            # every partition of the stream must reproduce the scan
            for M in partitions_for(L):
                y_s, s_s = run_chunked(params, x, M, exponent_bias=exponent_bias)
                err = max(rel_err(y_s, y_ref), rel_err(s_s.h, s_ref.h))
                chunk_inv.add(err, tol, f"seed={seed} H={H} N={N} L={L} M={M}")

            # M=1 chunking against literally composed single steps
            if L <= 256:
                y_m1, _ = run_chunked(params, x, 1, exponent_bias=exponent_bias)
                st = TransferState.zeros(H, N)
                y_st = np.empty((H, L))
                for k in range(L):
                    y_st[:, k], st = step(params, x[:, k], st)
                m1_step.add(rel_err(y_m1, y_st), 1e-12, f"seed={seed} L={L}")

            # checkpoint round trip and split-run replay, both exact
            blob = state_to_bytes(s_ref0)
            restored = state_from_bytes(blob, params)
            exact = (state_to_bytes(restored) == blob
                     and restored.position == s_ref0.position)
            ckpt.add(0.0 if exact else 1.0, 0.0, f"seed={seed} L={L} roundtrip")
            if L >= 2:
                cut = L // 2
                y_a, s_a = scan_recurrent(params, x[:, :cut])
                s_b = state_from_bytes(state_to_bytes(s_a), params)
                y_b, s_fin = scan_recurrent(params, x[:, cut:], s_b)
                same = (np.array_equal(np.concatenate([y_a, y_b], axis=1), y_ref)
                        and np.array_equal(s_fin.h, s_ref.h))
                ckpt.add(0.0 if same else 1.0, 0.0, f"seed={seed} L={L} split")

            # linearity of the scan in its input
            if L <= 1024:
                z = rng.standard_normal((H, L))
                a, b = 0.7, -1.3
                y_mix, _ = scan_recurrent(params, a * x + b * z)
                y_z, _ = scan_recurrent(params, z)
                lin.add(rel_err(y_mix, a * y_ref + b * y_z), 1e-12,
                        f"seed={seed} L={L}")

            # causality: a change at position k leaves y[:, :k] untouched
            if L >= 2:
                k = int(rng.integers(1, L))
                x_mut = x.copy()
                x_mut[:, k] += 1.0
                y_mut, _ = scan_recurrent(params, x_mut)
                exact = np.array_equal(y_mut[:, :k], y_ref[:, :k])
                caus.add(0.0 if exact else 1.0, 0.0, f"seed={seed} L={L} k={k}")

            # output kernel must be the C-contraction of the state kernel
            ks_plain = materialize_kernels(params, min(L, 256))
            combined = np.einsum("hn,hnl->hl", params.C_bar, ks_plain.K_state).real
            kcons.add(rel_err(combined, ks_plain.K_out), 1e-12,
                      f"seed={seed} L={L}")

    return [t.result() for t in
            (path_eq, chunk_inv, m1_step, ckpt, lin, caus, kcons)]


def format_results(results) -> str:
    lines = [r.line() for r in results]
    ok = all(r.passed for r in results)
    lines.append("all properties PASS" if ok else "verification FAILED")
    return "\n".join(lines)
