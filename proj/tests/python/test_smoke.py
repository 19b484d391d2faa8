import os
import struct
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import stmp

HERE = Path(__file__).resolve().parent

DESK = """
system.k = 40
system.n = 4
system.m = 2
system.t = 16
system.lambda = 0.1
system.seed = 3
snr.db = 20
harness.trials = 6
"""


def rand_c(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def test_pilot_fast_matches_dense():
    rng = np.random.default_rng(0)
    op = stmp.PilotOperator.build(16, 3, 7, power=2.0, seed=5)
    q = op.dense()
    assert q.shape == (21, 48)
    assert np.allclose(q @ q.conj().T, 32.0 * np.eye(21), atol=1e-9)
    x = rand_c(rng, 48)
    y = rand_c(rng, 21)
    assert np.allclose(op.apply(x), q @ x, atol=1e-12)
    assert np.allclose(op.adjoint(y), q.conj().T @ y, atol=1e-12)


def test_gaussian_denoise_is_shrinkage():
    rng = np.random.default_rng(1)
    h = rand_c(rng, 10, 4, 2)
    post, tau_post = stmp.denoise(h, [0.5, 0.5], sigma2=2.0)
    assert np.allclose(post, h * 2.0 / 2.5, atol=1e-12)
    assert np.allclose(tau_post, 0.5 * 2.0 / 2.5, atol=1e-12)


def test_mixture_against_quadrature():
    prior = [(0.3, 1 + 0j, 0.2), (0.7, -1 + 0.5j, 0.5)]
    z = np.array([0.2 - 0.1j])
    mean, var = stmp.brute_force_mmse(prior, z, 0.3)
    post, tau_post = stmp.denoise(z.reshape(1, 1, 1), [0.3], backend="gm", gm=prior)
    assert abs(post[0, 0, 0] - mean[0]) < 1e-5
    assert abs(tau_post[0] - min(var[0], 0.3)) < 1e-5


def write_chnl(path, h):
    count, n, m = h.shape
    path.write_bytes(b"CHNL" + struct.pack("<III", count, n, m) + h.astype("<c16").tobytes())


def test_chnl_format(tmp_path):
    rng = np.random.default_rng(2)
    h = rand_c(rng, 5, 3, 2)
    write_chnl(tmp_path / "a.chnl", h)
    assert np.array_equal(stmp.read_channel_dump(tmp_path / "a.chnl"), h)
    stmp.write_channel_dump(tmp_path / "b.chnl", h)
    assert (tmp_path / "b.chnl").read_bytes() == (tmp_path / "a.chnl").read_bytes()
    (tmp_path / "c.chnl").write_bytes(b"CHNX" + (tmp_path / "a.chnl").read_bytes()[4:])
    with pytest.raises(stmp.FormatError):
        stmp.read_channel_dump(tmp_path / "c.chnl")


def test_pilt_format(tmp_path):
    op = stmp.PilotOperator.build(12, 2, 5, power=1.5, seed=9)
    stmp.write_pilot_file(tmp_path / "p.pilt", op)
    raw = (tmp_path / "p.pilt").read_bytes()
    assert raw[:4] == b"PILT"
    k, n, t, p = struct.unpack_from("<IIId", raw, 4)
    assert (k, n, t, p) == (12, 2, 5, 1.5)
    rows = list(struct.unpack_from("<10I", raw, 24))
    assert rows == list(op.rows)
    assert len(raw) == 24 + 4 * 10
    assert stmp.read_pilot_file(tmp_path / "p.pilt") == op
    back = stmp.PilotOperator.from_rows(12, 2, 5, 1.5, rows)
    assert back == op


def test_request_frame_layout():
    rng = np.random.default_rng(3)
    h = rand_c(rng, 2, 3, 4)
    frame = stmp.bridge.encode_request(3, 0.25, h)
    want = b"STMP" + struct.pack("<BBHIIId", 1, 3, 0, 2, 3, 4, 0.25) + h.astype("<c16").tobytes()
    assert frame == want


def test_response_frame_layout():
    s1 = np.full((1, 2, 2), 0.5 - 0.25j)
    s2 = np.full((1, 2, 2), -0.75)
    frame = stmp.bridge.encode_response(3, 0, s1, s2)
    assert frame == b"STMP\x01\x03\x00" + s1.astype("<c16").tobytes() + s2.astype("<f8").tobytes()
    assert stmp.bridge.encode_response(1, 1) == b"STMP\x01\x01\x01"


def test_python_server_interoperates():
    rng = np.random.default_rng(4)
    h = rand_c(rng, 3, 2, 2)
    addr = f"exec:{sys.executable} {HERE / 'gaussian_server.py'} 1.5"
    status, s1, s2 = stmp.bridge.call(addr, 3, 0.5, h)
    want1, want2 = stmp.score(h, 0.5, sigma2=1.5)
    assert status == 0
    assert np.array_equal(s1, want1)
    assert np.array_equal(s2, want2)
    assert stmp.bridge.call(addr, 1, -1.0, h)[0] == 1

    post, _ = stmp.denoise(h, [0.5, 0.5], backend="bridge", addr=addr)
    assert np.array_equal(post, stmp.denoise(h, [0.5, 0.5], sigma2=1.5)[0])


def test_simulate_is_deterministic():
    a = stmp.simulate(DESK, axis="snr.db", values=[0, 20], workers=1)
    b = stmp.simulate(DESK, axis="snr.db", values=[0, 20], workers=4)
    assert a == b
    lines = a.strip().splitlines()
    assert lines[0].startswith("axis,value,trials,nmse_db_mean")
    assert len(lines) == 3


def test_run_trial():
    r = stmp.run_trial(DESK, trial=2)
    assert r["ok"]
    assert 1 <= r["iterations"] <= 30
    assert r["trace_csv"].startswith("iter,residual,nmse_db")
    assert r == {**stmp.run_trial(DESK, trial=2)}


def test_config_errors():
    assert "system.k = 40" in stmp.check_config(DESK)
    with pytest.raises(stmp.InvalidConfig):
        stmp.check_config("system.k = 0\n")
    with pytest.raises(stmp.InvalidConfig):
        stmp.check_config("no.such.key = 1\n")


@pytest.mark.skipif("STMP_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_validate(tmp_path):
    cfg = tmp_path / "desk.cfg"
    cfg.write_text(DESK)
    assert subprocess.run([os.environ["STMP_CLI"], "validate", str(cfg)]).returncode == 0
    cfg.write_text("system.lambda = 2\n")
    assert subprocess.run([os.environ["STMP_CLI"], "validate", str(cfg)], capture_output=True).returncode == 1
