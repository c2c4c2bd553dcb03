"""Streaming engine: segment planning, stateful sessions, state checkpoints.

A Session consumes an unbounded stream segment by segment in fixed memory.
Each segment is evaluated in convolution mode seeded by the state carried
over from the previous segment, so the concatenated outputs are equal (to
rounding) to evaluating the whole stream at once. Segment inputs are not
retained after processing.
"""

import enum
import struct
from dataclasses import dataclass

import numpy as np

from ._accel import scan_core
from .core import DiscreteParams, TransferState
from .errors import ContractError, FormatError, NumericError, PlanError
from .kernels import cached_kernels, conv_segment_core

__all__ = [
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
]

CHECKPOINT_MAGIC = b"STST"
CHECKPOINT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIIIQ")  # magic, version, H, N, position


class ReadoutPolicy(enum.Enum):
    """Which per-timestep outputs a segment emits; never affects the state."""

    ALL_TOKENS = "all"
    LAST_TOKEN_PER_SEGMENT = "last_per_segment"
    FINAL_TOKEN_ONLY = "final"

    @classmethod
    def parse(cls, name: str) -> "ReadoutPolicy":
        for member in cls:
            if member.value == name:
                return member
        raise ContractError(
            f"unknown readout policy {name!r}; expected one of "
            f"{[m.value for m in cls]}"
        )


@dataclass(frozen=True)
class SegmentPlan:
    """Segment length and whether a short final segment is legal."""

    segment_len: int
    allow_partial_tail: bool = True

    def __post_init__(self):
        if self.segment_len < 1:
            raise ContractError(
                f"segment_len must be >= 1, got {self.segment_len}"
            )


def plan_segments(
    total_len: int, segment_len: int, allow_partial_tail: bool = True
) -> list[tuple[int, int]]:
    """Split [0, total_len) into consecutive (start, length) segments.

    All segments have the planned length except possibly the last; an
    indivisible total with partial tails disallowed is a plan error.
    """
    if segment_len < 1:
        raise ContractError(f"segment_len must be >= 1, got {segment_len}")
    if total_len < 0:
        raise ContractError("total_len must be non-negative")
    tail = total_len % segment_len
    if tail and not allow_partial_tail:
        raise PlanError(
            f"total length {total_len} is not divisible by segment length "
            f"{segment_len} and partial tails are disallowed"
        )
    out = [(s, segment_len) for s in range(0, total_len - tail, segment_len)]
    if tail:
        out.append((total_len - tail, tail))
    return out


def bucketize_time(t: int, total: int, buckets: int = 32) -> int:
    """Map an absolute timestep onto one of ``buckets`` coarse time bins."""
    if total < 1:
        raise ContractError("total must be >= 1")
    if t < 0 or t > total:
        raise ContractError(f"t must lie in [0, {total}], got {t}")
    return min(int(t) * buckets // int(total), buckets - 1)


@dataclass
class SegmentEmission:
    """Outputs released by one segment: values[:, i] belongs to start + i."""

    start: int
    values: np.ndarray  # [H, k], k may be 0

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.values.shape[1],
                         dtype=np.uint64)

    def __len__(self) -> int:
        return self.values.shape[1]


class Session:
    """Single-owner streaming evaluator over one parameter set.

    Feeds are strictly ordered; a partial (short) segment is by definition
    the stream tail and closes the session. Peak working memory depends only
    on (channels, state size, segment length).
    """

    def __init__(
        self,
        params: DiscreteParams,
        plan: SegmentPlan,
        policy: ReadoutPolicy = ReadoutPolicy.LAST_TOKEN_PER_SEGMENT,
        state: TransferState | None = None,
        declared_total: int | None = None,
        exponent_bias: int = 0,
    ):
        self.params = params
        self.plan = plan
        self.policy = policy
        self.declared_total = declared_total
        self._bias = exponent_bias
        if state is None:
            state = TransferState.zeros(params.channels, params.state_size)
        elif state.h.shape != (params.channels, params.state_size):
            raise ContractError(
                f"state shape {state.h.shape} does not match params "
                f"({params.channels}, {params.state_size})"
            )
        self._h = np.ascontiguousarray(state.h, dtype=np.complex128)
        self._position = state.position
        self.segment_index = state.position // plan.segment_len
        self._closed = False
        self._final = None  # last output column, kept for FINAL_TOKEN_ONLY
        # materialize eagerly so feeds hit a warm cache
        if plan.segment_len > 1:
            cached_kernels(params, plan.segment_len, exponent_bias=self._bias)

    @property
    def state(self) -> TransferState:
        return TransferState(h=self._h, position=self._position)

    @property
    def position(self) -> int:
        return self._position

    @property
    def closed(self) -> bool:
        return self._closed

    def process_segment(self, x_seg) -> SegmentEmission:
        """Evaluate the next segment and emit outputs per the readout policy."""
        if self._closed:
            raise ContractError("session is closed")
        x_seg = np.ascontiguousarray(x_seg, dtype=np.float64)
        H = self.params.channels
        if x_seg.ndim != 2 or x_seg.shape[0] != H:
            raise ContractError(
                f"segment must have shape [{H}, m], got {x_seg.shape}"
            )
        m = x_seg.shape[1]
        if m < 1 or m > self.plan.segment_len:
            raise ContractError(
                f"segment length must be in [1, {self.plan.segment_len}], got {m}"
            )
        if m < self.plan.segment_len and not self.plan.allow_partial_tail:
            raise PlanError(
                f"partial segment of {m} < {self.plan.segment_len} is disallowed"
            )
        if not np.all(np.isfinite(x_seg)):
            raise NumericError("non-finite input")

        p = self.params
        start = self._position
        if m == 1:
            # degenerate segment: the plain recurrent step
            y, h_out = scan_core(p.A_bar, p.B_bar, p.C_bar, p.D, x_seg, self._h)
        else:
            ks = cached_kernels(p, m, exponent_bias=self._bias)
            y, h_out = conv_segment_core(p, ks, x_seg, self._h)
        if not np.all(np.isfinite(y)):
            bad = int(np.argmin(np.isfinite(y).all(axis=0)))
            raise NumericError(f"non-finite output at timestep {start + bad}")
        self._h = h_out
        self._position = start + m
        self.segment_index += 1
        if m < self.plan.segment_len:
            self._closed = True

        if self.policy is ReadoutPolicy.ALL_TOKENS:
            return SegmentEmission(start=start, values=y)
        if self.policy is ReadoutPolicy.LAST_TOKEN_PER_SEGMENT:
            return SegmentEmission(start=start + m - 1, values=y[:, -1:].copy())
        self._final = (start + m - 1, y[:, -1:].copy())
        return SegmentEmission(start=start + m, values=y[:, :0].copy())

    def close(self) -> SegmentEmission:
        """Close the session; under FINAL_TOKEN_ONLY this releases the output."""
        self._closed = True
        if self.policy is ReadoutPolicy.FINAL_TOKEN_ONLY and self._final:
            start, values = self._final
            return SegmentEmission(start=start, values=values)
        return SegmentEmission(
            start=self._position,
            values=np.empty((self.params.channels, 0)),
        )

    def save_state(self) -> bytes:
        return state_to_bytes(self.state)


def state_to_bytes(state: TransferState) -> bytes:
    """Serialize a state bit-exactly (little-endian float64 re/im pairs)."""
    H, N = state.h.shape
    header = _CKPT_HEADER.pack(
        CHECKPOINT_MAGIC, CHECKPOINT_VERSION, H, N, state.position
    )
    payload = np.ascontiguousarray(state.h, dtype="<c16").tobytes()
    return header + payload


def state_from_bytes(data: bytes, params: DiscreteParams) -> TransferState:
    """Parse and validate a checkpoint against the owning parameters."""
    if len(data) < _CKPT_HEADER.size:
        raise FormatError(
            f"checkpoint truncated: header needs {_CKPT_HEADER.size} bytes, "
            f"got {len(data)}"
        )
    magic, version, H, N, position = _CKPT_HEADER.unpack_from(data, 0)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if (H, N) != (params.channels, params.state_size):
        raise FormatError(
            f"checkpoint shape ({H}, {N}) does not match params "
            f"({params.channels}, {params.state_size})"
        )
    expected = _CKPT_HEADER.size + H * N * 16
    if len(data) != expected:
        raise FormatError(
            f"checkpoint payload truncated: expected {expected} bytes total, "
            f"got {len(data)}"
        )
    h = np.frombuffer(data, dtype="<c16", offset=_CKPT_HEADER.size).reshape(H, N)
    return TransferState(h=h.copy(), position=position)


def save_state(session: Session) -> bytes:
    return session.save_state()


def load_state(data: bytes, params: DiscreteParams) -> TransferState:
    return state_from_bytes(data, params)


def run_chunked(
    params: DiscreteParams,
    x,
    segment_len: int,
    h0: TransferState | None = None,
    exponent_bias: int = 0,
) -> tuple[np.ndarray, TransferState]:
    """Evaluate a whole in-memory sequence through the streaming path.

    Drives a Session over consecutive segments and concatenates all outputs;
    convenience for equivalence checks against ``scan_recurrent``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ContractError("input must have shape [H, L]")
    session = Session(
        params,
        SegmentPlan(segment_len, allow_partial_tail=True),
        policy=ReadoutPolicy.ALL_TOKENS,
        state=h0.copy() if h0 is not None else None,
        exponent_bias=exponent_bias,
    )
    chunks = [
        session.process_segment(x[:, s:s + m]).values
        for s, m in plan_segments(x.shape[1], segment_len)
    ]
    if chunks:
        y = np.concatenate(chunks, axis=1)
    else:
        y = np.empty((x.shape[0], 0))
    return y, session.state
