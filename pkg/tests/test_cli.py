import json

import numpy as np
import pytest

from ssmstream import scan_recurrent
from ssmstream.cli import main
from ssmstream.errors import ConfigurationError, FormatError
from ssmstream.streamfile import StreamReader, StreamWriter, parse_run_config
from conftest import random_system


def write_config(path, **overrides):
    doc = {
        "state_size": 4,
        "channels": 2,
        "seed": 21,
        "segment_len": 16,
        "readout_policy": "last_per_segment",
    }
    doc.update(overrides)
    path.write_text(json.dumps(doc))
    return doc


class TestStreamFile:
    def test_roundtrip(self, tmp_path, rng):
        path = tmp_path / "s.bin"
        data = rng.standard_normal((3, 100)).astype("<f4").astype(np.float64)
        with StreamWriter(path, 3, 100) as w:
            w.write_block(data[:, :60])
            w.write_block(data[:, 60:])
        with StreamReader(path) as r:
            assert r.channels == 3 and r.frame_count == 100
            got = np.concatenate([r.read_frames(64), r.read_frames(64)], axis=1)
            assert r.read_frames(8).shape == (3, 0)
        np.testing.assert_array_equal(got, data)

    def test_declared_count_enforced(self, tmp_path):
        w = StreamWriter(tmp_path / "s.bin", 2, 10)
        w.write_block(np.zeros((2, 4)))
        with pytest.raises(FormatError):
            w.close()

    def test_bad_magic_offset_zero(self, tmp_path):
        p = tmp_path / "s.bin"
        p.write_bytes(b"JUNKXXXXXXXXXXXXXXXXXXXX")
        with pytest.raises(FormatError, match="byte 0"):
            StreamReader(p)

    def test_truncated_header(self, tmp_path):
        p = tmp_path / "s.bin"
        p.write_bytes(b"STSS\x01")
        with pytest.raises(FormatError, match="truncated"):
            StreamReader(p)

    def test_truncated_payload_reports_offset(self, tmp_path):
        p = tmp_path / "s.bin"
        with StreamWriter(p, 2, 0) as w:
            w.write_block(np.ones((2, 3)))
        raw = p.read_bytes()
        p.write_bytes(raw[:-3])
        with StreamReader(p) as r:
            with pytest.raises(FormatError, match="byte"):
                r.read_frames(10)

    def test_declared_count_vs_payload_mismatch(self, tmp_path):
        p = tmp_path / "s.bin"
        w = StreamWriter(p, 2, 5)
        w.write_block(np.ones((2, 3)))
        w._fh.close()  # bypass the writer's own consistency check
        with StreamReader(p) as r:
            with pytest.raises(FormatError, match="declares 5"):
                r.read_frames(10)

    def test_open_ended_stream_reads_to_eof(self, tmp_path):
        p = tmp_path / "s.bin"
        with StreamWriter(p, 2, 0) as w:
            w.write_block(np.ones((2, 7)))
        with StreamReader(p) as r:
            assert r.read_frames(100).shape == (2, 7)


class TestRunConfig:
    def test_defaults(self):
        cfg = parse_run_config(
            '{"state_size": 4, "channels": 2, "seed": 1, "segment_len": 8}'
        )
        assert cfg.dt_min == 0.001 and cfg.dt_max == 0.1
        assert cfg.readout_policy == "last_per_segment"
        assert cfg.declared_total is None

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown"):
            parse_run_config(
                '{"state_size": 4, "channels": 2, "seed": 1, '
                '"segment_len": 8, "segement_len": 9}'
            )

    def test_missing_key_rejected(self):
        with pytest.raises(ConfigurationError, match="missing"):
            parse_run_config('{"state_size": 4}')

    def test_bad_policy_rejected(self):
        with pytest.raises(ConfigurationError, match="readout_policy"):
            parse_run_config(
                '{"state_size": 4, "channels": 2, "seed": 1, '
                '"segment_len": 8, "readout_policy": "some"}'
            )

    def test_not_json(self):
        with pytest.raises(ConfigurationError):
            parse_run_config("state_size: 4")


class TestGen:
    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        for p in (a, b):
            assert main(["gen", "--out", str(p), "--channels", "4",
                         "--frames", "1000", "--seed", "7"]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_kinds_differ(self, tmp_path):
        outs = {}
        for kind in ("noise", "sine_mix", "piecewise_events"):
            p = tmp_path / f"{kind}.bin"
            assert main(["gen", "--out", str(p), "--channels", "2",
                         "--frames", "256", "--kind", kind, "--seed", "3"]) == 0
            outs[kind] = p.read_bytes()
        assert len(set(outs.values())) == 3

    def test_change_points_on_stderr(self, tmp_path, capsys):
        assert main(["gen", "--out", str(tmp_path / "e.bin"), "--channels",
                     "1", "--frames", "400", "--kind", "piecewise_events",
                     "--seed", "1"]) == 0
        assert "event-change-points:" in capsys.readouterr().err

    def test_empty_needs_flag(self, tmp_path):
        out = tmp_path / "empty.bin"
        assert main(["gen", "--out", str(out), "--channels", "2",
                     "--frames", "0"]) == 2
        assert main(["gen", "--out", str(out), "--channels", "2",
                     "--frames", "0", "--allow-empty"]) == 0
        with StreamReader(out) as r:
            assert r.frame_count == 0
            assert r.read_frames(4).shape == (2, 0)


class TestRun:
    def test_last_per_segment_row_count(self, tmp_path):
        stream = tmp_path / "s.bin"
        main(["gen", "--out", str(stream), "--channels", "2", "--frames",
              "1024", "--seed", "5"])
        cfg_path = tmp_path / "cfg.json"
        write_config(cfg_path)
        out = tmp_path / "out.csv"
        assert main(["run", "--config", str(cfg_path), "--in", str(stream),
                     "--out", str(out)]) == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "position,bucket,channel,value"
        # 64 segments x 2 channels
        assert len(lines) == 1 + 64 * 2

    def test_policy_all_single_segment_matches_scan(self, tmp_path):
        stream = tmp_path / "s.bin"
        main(["gen", "--out", str(stream), "--channels", "2", "--frames",
              "16", "--seed", "5"])
        cfg_path = tmp_path / "cfg.json"
        write_config(cfg_path, readout_policy="all")
        out = tmp_path / "out.csv"
        assert main(["run", "--config", str(cfg_path), "--in", str(stream),
                     "--out", str(out)]) == 0
        rows = [ln.split(",") for ln in out.read_text().strip().split("\n")[1:]]
        got = np.empty((2, 16))
        for pos, _bucket, chan, val in rows:
            got[int(chan), int(pos)] = float(val)
        with StreamReader(stream) as r:
            x = r.read_frames(16)
        params = random_system(2, 4, seed=21)
        y, _ = scan_recurrent(params, x)
        np.testing.assert_allclose(got, y, rtol=1e-12, atol=1e-12)

    def test_resume_is_byte_exact(self, tmp_path):
        stream = tmp_path / "s.bin"
        main(["gen", "--out", str(stream), "--channels", "2", "--frames",
              "640", "--seed", "9"])
        cfg_path = tmp_path / "cfg.json"
        write_config(cfg_path)
        full = tmp_path / "full.csv"
        main(["run", "--config", str(cfg_path), "--in", str(stream),
              "--out", str(full)])
        p1, p2 = tmp_path / "p1.csv", tmp_path / "p2.csv"
        ckpt = tmp_path / "mid.ckpt"
        assert main(["run", "--config", str(cfg_path), "--in", str(stream),
                     "--out", str(p1), "--limit-frames", "320",
                     "--save-state", str(ckpt)]) == 0
        assert main(["run", "--config", str(cfg_path), "--in", str(stream),
                     "--out", str(p2), "--resume", str(ckpt)]) == 0
        assert p1.read_bytes() + p2.read_bytes() == full.read_bytes()

    def test_misaligned_limit_rejected(self, tmp_path):
        stream = tmp_path / "s.bin"
        main(["gen", "--out", str(stream), "--channels", "2", "--frames",
              "64", "--seed", "9"])
        cfg_path = tmp_path / "cfg.json"
        write_config(cfg_path)
        assert main(["run", "--config", str(cfg_path), "--in", str(stream),
                     "--out", str(tmp_path / "x.csv"),
                     "--limit-frames", "21"]) == 2

    def test_channel_mismatch_is_usage_error(self, tmp_path):
        stream = tmp_path / "s.bin"
        main(["gen", "--out", str(stream), "--channels", "3", "--frames",
              "64", "--seed", "9"])
        cfg_path = tmp_path / "cfg.json"
        write_config(cfg_path)  # declares 2 channels
        assert main(["run", "--config", str(cfg_path), "--in", str(stream),
                     "--out", str(tmp_path / "x.csv")]) == 2

    def test_bucket_column_uses_declared_total(self, tmp_path):
        stream = tmp_path / "s.bin"
        main(["gen", "--out", str(stream), "--channels", "2", "--frames",
              "128", "--seed", "5"])
        cfg_path = tmp_path / "cfg.json"
        write_config(cfg_path, declared_total=128)
        out = tmp_path / "out.csv"
        main(["run", "--config", str(cfg_path), "--in", str(stream),
              "--out", str(out)])
        rows = [ln.split(",") for ln in out.read_text().strip().split("\n")[1:]]
        assert [r[1] for r in rows[:2]] == ["3", "3"]  # position 15 of 128
        last = rows[-1]
        assert last[0] == "127" and last[1] == "31"


class TestVerifyCommand:
    def test_default_passes(self, capsys):
        assert main(["verify", "--sizes", "1", "2", "8", "64",
                     "--seeds", "0"]) == 0
        assert "all properties PASS" in capsys.readouterr().out

    def test_sizes_one(self):
        assert main(["verify", "--sizes", "1", "--seeds", "0", "1"]) == 0

    def test_sabotage_fails_loudly(self, capsys):
        assert main(["verify", "--sizes", "8", "64", "--seeds", "0",
                     "--sabotage", "off-by-one"]) == 1
        out = capsys.readouterr().out
        assert "FAIL" in out


class TestBenchCommand:
    def test_csv_to_file(self, tmp_path):
        out = tmp_path / "bench.csv"
        assert main(["bench", "--lengths", "256", "512", "--segment-len",
                     "64", "--reps", "1", "--channels", "2", "--state-size",
                     "4", "--methods", "recurrent", "sts_chunked",
                     "--out", str(out)]) == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0].startswith("method,")
        assert len(lines) == 5

    def test_backend_compare_runs(self, capsys):
        assert main(["bench-backends", "--lengths", "256", "--reps", "1",
                     "--channels", "2", "--state-size", "4"]) == 0
        out = capsys.readouterr().out
        assert "recurrent[" in out
