"""Streaming diagonal state-space sequence engine.

Evaluates long input streams in fixed memory by carrying the hidden state
across consecutive segments, with a recurrent reference path, an FFT
convolution path, checkpointable state, and a scaling benchmark.
"""

from ._accel import backend_name
from .core import (
    ContinuousParams,
    DiscreteParams,
    SsmConfig,
    TransferState,
    discretize,
    init_s4d_lin,
    scan_recurrent,
    step,
)
from .kernels import (
    KernelSet,
    cached_kernels,
    clear_kernel_cache,
    conv_causal_fft,
    conv_causal_naive,
    eval_conv_path,
    materialize_kernels,
)
from .transfer import (
    ReadoutPolicy,
    SegmentEmission,
    SegmentPlan,
    Session,
    bucketize_time,
    load_state,
    plan_segments,
    run_chunked,
    save_state,
    state_from_bytes,
    state_to_bytes,
)

__version__ = "0.1.0"

__all__ = [
    "backend_name",
    "SsmConfig",
    "ContinuousParams",
    "DiscreteParams",
    "TransferState",
    "init_s4d_lin",
    "discretize",
    "scan_recurrent",
    "step",
    "KernelSet",
    "materialize_kernels",
    "cached_kernels",
    "clear_kernel_cache",
    "conv_causal_fft",
    "conv_causal_naive",
    "eval_conv_path",
    "SegmentPlan",
    "ReadoutPolicy",
    "SegmentEmission",
    "Session",
    "plan_segments",
    "bucketize_time",
    "save_state",
    "load_state",
    "state_to_bytes",
    "state_from_bytes",
    "run_chunked",
    "__version__",
]
