"""Command-line surface: stream generation, streaming runs, verify, bench."""

import argparse
import sys

import numpy as np

from . import bench as bench_mod
from ._accel import backend_name
from .core import SsmConfig, discretize, init_s4d_lin
from .errors import SsmStreamError
from .streamfile import RunConfig, StreamReader, StreamWriter, parse_run_config
from .transfer import (
    ReadoutPolicy,
    SegmentPlan,
    Session,
    bucketize_time,
    state_from_bytes,
)
from .verify import (
    DEFAULT_SEEDS,
    DEFAULT_SIZES,
    format_results,
    run_verification,
)

_GEN_BLOCK = 65536


def _params_from_config(cfg: RunConfig):
    sc = SsmConfig(
        channels=cfg.channels,
        state_size=cfg.state_size,
        dt_min=cfg.dt_min,
        dt_max=cfg.dt_max,
        seed=cfg.seed,
    )
    return discretize(init_s4d_lin(sc))


# ---------------------------------------------------------------- gen

def _gen_blocks(kind: str, channels: int, frames: int, seed: int):
    """Yield [H, m] blocks; deterministic for a fixed (kind, seed, shape)."""
    rng = np.random.default_rng(np.uint64(seed))
    if kind == "noise":
        for start in range(0, frames, _GEN_BLOCK):
            m = min(_GEN_BLOCK, frames - start)
            yield rng.standard_normal((channels, m))
        return
    if kind == "sine_mix":
        waves = 3
        freq = rng.uniform(1e-4, 0.2, (channels, waves))
        phase = rng.uniform(0, 2 * np.pi, (channels, waves))
        amp = rng.uniform(0.2, 1.0, (channels, waves))
        for start in range(0, frames, _GEN_BLOCK):
            m = min(_GEN_BLOCK, frames - start)
            t = np.arange(start, start + m)
            block = np.einsum(
                "cw,cwt->ct", amp,
                np.sin(2 * np.pi * freq[:, :, None] * t + phase[:, :, None]),
            )
            block += 0.05 * rng.standard_normal((channels, m))
            yield block
        return
    if kind == "piecewise_events":
        # constant-mean events with abrupt change points
        mean_len = max(frames // 16, 1)
        cuts = []
        pos = 0
        while pos < frames:
            pos += int(rng.integers(max(mean_len // 2, 1), 2 * mean_len + 1))
            if pos < frames:
                cuts.append(pos)
        print("event-change-points: " + " ".join(map(str, cuts)),
              file=sys.stderr)
        bounds = [0] + cuts + [frames]
        for a, b in zip(bounds[:-1], bounds[1:]):
            mean = rng.standard_normal((channels, 1))
            for start in range(a, b, _GEN_BLOCK):
                m = min(_GEN_BLOCK, b - start)
                yield mean + 0.1 * rng.standard_normal((channels, m))
        return
    raise SsmStreamError(f"unknown generator kind {kind!r}")


def cmd_gen(args) -> int:
    if args.frames == 0 and not args.allow_empty:
        print("refusing to write an empty stream without --allow-empty",
              file=sys.stderr)
        return 2
    with StreamWriter(args.out, args.channels, args.frames) as w:
        for block in _gen_blocks(args.kind, args.channels, args.frames,
                                 args.seed):
            w.write_block(block)
    print(f"wrote {args.frames} frames x {args.channels} channels to {args.out}")
    return 0


# ---------------------------------------------------------------- run

def _emission_rows(emission, channels: int, total: int | None):
    for i, p in enumerate(emission.positions):
        p = int(p)
        b = "" if total is None else bucketize_time(p, total)
        for c in range(channels):
            yield f"{p},{b},{c},{float(emission.values[c, i])!r}\n"


def cmd_run(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = parse_run_config(fh.read())
    params = _params_from_config(cfg)
    policy = ReadoutPolicy.parse(cfg.readout_policy)

    resume_state = None
    if args.resume:
        with open(args.resume, "rb") as fh:
            resume_state = state_from_bytes(fh.read(), params)
        if resume_state.position % cfg.segment_len:
            raise SsmStreamError(
                f"checkpoint position {resume_state.position} is not aligned "
                f"to segment length {cfg.segment_len}"
            )

    if args.limit_frames is not None and args.limit_frames % cfg.segment_len:
        raise SsmStreamError(
            f"--limit-frames must be a multiple of segment length "
            f"{cfg.segment_len}"
        )

    with StreamReader(args.stream) as reader:
        if reader.channels != cfg.channels:
            raise SsmStreamError(
                f"stream has {reader.channels} channels but config declares "
                f"{cfg.channels}"
            )
        total = cfg.declared_total or (reader.frame_count or None)
        session = Session(
            params,
            SegmentPlan(cfg.segment_len, allow_partial_tail=True),
            policy=policy,
            state=resume_state,
            declared_total=total,
        )
        if resume_state is not None:
            reader.seek_to_frame(resume_state.position)

        segments = 0
        with open(args.out, "w", encoding="utf-8", newline="") as out:
            if not args.resume:
                out.write("position,bucket,channel,value\n")
            while True:
                if (args.limit_frames is not None
                        and session.position >= args.limit_frames):
                    break
                block = reader.read_frames(cfg.segment_len)
                if block.shape[1] == 0:
                    break
                emission = session.process_segment(block)
                out.writelines(_emission_rows(emission, cfg.channels, total))
                segments += 1
                if session.closed:
                    break
            final = session.close()
            out.writelines(_emission_rows(final, cfg.channels, total))

        if args.save_state:
            with open(args.save_state, "wb") as fh:
                fh.write(session.save_state())
        print(
            f"processed {session.position} frames in {segments} segments "
            f"(policy={cfg.readout_policy})",
            file=sys.stderr,
        )
    return 0


# ---------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    bias = -1 if args.sabotage == "off-by-one" else 0
    results = run_verification(
        sizes=args.sizes or DEFAULT_SIZES,
        seeds=args.seeds or DEFAULT_SEEDS,
        exponent_bias=bias,
    )
    print(format_results(results))
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------- bench

def cmd_bench(args) -> int:
    records = bench_mod.run_scaling(
        args.lengths,
        channels=args.channels,
        state_size=args.state_size,
        segment_len=args.segment_len,
        d_attn=args.dim,
        repetitions=args.reps,
        methods=tuple(args.methods),
        mem_ceiling_bytes=args.mem_ceiling_mb * 1024 * 1024,
        seed=args.seed,
        parallel=args.parallel,
        log=sys.stderr,
    )
    text = bench_mod.records_to_csv(records)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench_backends(args) -> int:
    records = bench_mod.compare_backends(
        args.lengths,
        channels=args.channels,
        state_size=args.state_size,
        repetitions=args.reps,
        seed=args.seed,
    )
    print(f"active backend: {backend_name()}", file=sys.stderr)
    sys.stdout.write(bench_mod.records_to_csv(records))
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ssmstream",
        description="Streaming diagonal state-space sequence engine",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic token stream file")
    g.add_argument("--out", required=True)
    g.add_argument("--channels", type=int, required=True)
    g.add_argument("--frames", type=int, required=True)
    g.add_argument("--kind", default="noise",
                   choices=["noise", "sine_mix", "piecewise_events"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--allow-empty", action="store_true",
                   help="permit writing a header-only stream")
    g.set_defaults(fn=cmd_gen)

    r = sub.add_parser("run", help="stream a file through a session")
    r.add_argument("--config", required=True, help="RunConfig JSON path")
    r.add_argument("--in", dest="stream", required=True)
    r.add_argument("--out", required=True, help="emission CSV path")
    r.add_argument("--resume", help="state checkpoint to resume from")
    r.add_argument("--save-state", help="write final state checkpoint here")
    r.add_argument("--limit-frames", type=int,
                   help="stop after this absolute stream position "
                        "(multiple of segment_len)")
    r.set_defaults(fn=cmd_run)

    v = sub.add_parser("verify", help="run the equivalence property suite")
    v.add_argument("--sizes", type=int, nargs="+")
    v.add_argument("--seeds", type=int, nargs="+")
    v.add_argument("--sabotage", choices=["off-by-one"],
                   help="fault injection: flip the segment-boundary exponent "
                        "convention (the suite must then fail)")
    v.set_defaults(fn=cmd_verify)

    b = sub.add_parser("bench", help="scaling benchmark over sequence lengths")
    b.add_argument("--lengths", type=int, nargs="+",
                   default=[4096, 16384, 65536])
    b.add_argument("--channels", type=int, default=8)
    b.add_argument("--state-size", type=int, default=16)
    b.add_argument("--segment-len", type=int, default=1024)
    b.add_argument("--dim", type=int, default=64,
                   help="attention head dimension")
    b.add_argument("--reps", type=int, default=3)
    b.add_argument("--methods", nargs="+", default=list(bench_mod.METHODS),
                   choices=list(bench_mod.METHODS))
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--mem-ceiling-mb", type=int, default=256,
                   help="skip attention runs whose estimated working set "
                        "exceeds this many MiB")
    b.add_argument("--out", help="CSV output path (default stdout)")
    b.add_argument("--parallel", action="store_true",
                   help="interleave methods on a thread pool")
    b.set_defaults(fn=cmd_bench)

    bb = sub.add_parser(
        "bench-backends",
        help="compare the compiled and pure-numpy scan kernels",
    )
    bb.add_argument("--lengths", type=int, nargs="+",
                    default=[4096, 65536, 1048576])
    bb.add_argument("--channels", type=int, default=8)
    bb.add_argument("--state-size", type=int, default=16)
    bb.add_argument("--reps", type=int, default=3)
    bb.add_argument("--seed", type=int, default=0)
    bb.set_defaults(fn=cmd_bench_backends)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (SsmStreamError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
