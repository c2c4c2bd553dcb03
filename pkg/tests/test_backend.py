"""Kernel-lane selection and numba/numpy agreement."""

import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_system
from ssmstream import _accel
from ssmstream.verify import rel_err


def test_active_backend_reported():
    assert _accel.backend_name() in ("numba", "numpy")


def test_scan_lanes_agree(rng):
    p = random_system(3, 8, seed=5)
    x = rng.standard_normal((3, 500))
    h0 = rng.standard_normal((3, 8)) + 1j * rng.standard_normal((3, 8))
    y_np, h_np = _accel._scan_numpy(p.A_bar, p.B_bar, p.C_bar, p.D, x,
                                    h0.copy())
    y, h = _accel.scan_core(p.A_bar, p.B_bar, p.C_bar, p.D, x, h0.copy())
    assert rel_err(y, y_np) <= 1e-12
    assert rel_err(h, h_np) <= 1e-12


def test_naive_conv_lanes_agree(rng):
    k = rng.standard_normal((2, 300))
    x = rng.standard_normal((2, 300))
    want = _accel._naive_conv_numpy(k, x)
    got = _accel.naive_conv_core(k, x)
    assert rel_err(got, want) <= 1e-12


@pytest.mark.parametrize("flag,expected", [("numpy", "numpy"), ("auto", None)])
def test_env_flag_selects_lane(flag, expected):
    env = dict(os.environ, SSMSTREAM_BACKEND=flag)
    out = subprocess.run(
        [sys.executable, "-c",
         "import ssmstream; print(ssmstream.backend_name())"],
        env=env, capture_output=True, text=True, check=True,
    ).stdout.strip()
    if expected is not None:
        assert out == expected
    else:
        assert out in ("numba", "numpy")


def test_bad_env_flag_rejected():
    env = dict(os.environ, SSMSTREAM_BACKEND="cuda")
    proc = subprocess.run(
        [sys.executable, "-c", "import ssmstream"],
        env=env, capture_output=True, text=True,
    )
    assert proc.returncode != 0
    assert "SSMSTREAM_BACKEND" in proc.stderr


def test_numpy_lane_full_equivalence(rng):
    """The fallback lane must satisfy the same chunking invariance."""
    env = dict(os.environ, SSMSTREAM_BACKEND="numpy")
    code = (
        "import numpy as np\n"
        "from ssmstream import SsmConfig, init_s4d_lin, discretize, "
        "scan_recurrent, run_chunked\n"
        "from ssmstream.verify import rel_err\n"
        "p = discretize(init_s4d_lin(SsmConfig(channels=2, state_size=8, "
        "seed=3)))\n"
        "x = np.random.default_rng(0).standard_normal((2, 512))\n"
        "y_ref, s_ref = scan_recurrent(p, x)\n"
        "for M in (1, 7, 64, 512):\n"
        "    y, s = run_chunked(p, x, M)\n"
        "    assert rel_err(y, y_ref) <= 1e-10, M\n"
        "    assert rel_err(s.h, s_ref.h) <= 1e-10, M\n"
        "print('ok')\n"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "ok"
