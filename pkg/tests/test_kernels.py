import os
import subprocess
import sys

import numpy as np
import pytest

from cocycle_lab import kernels
from cocycle_lab._kernels_py import qr_batch


def qr_reference(mats, row):
    """Unbatched Householder QR with numpy, one step at a time."""
    d = mats.shape[1]
    Q = np.eye(d, dtype=mats.dtype)
    sums = np.zeros(d)
    for k in row:
        if k < 0:
            break
        Q, R = np.linalg.qr(mats[k] @ Q)
        sums += np.log(np.abs(np.diag(R)))
    return sums


@pytest.mark.parametrize("dtype", [float, complex])
def test_backends_agree(dtype):
    rng = np.random.default_rng(0)
    mats = rng.standard_normal((5, 3, 3)).astype(dtype)
    if dtype is complex:
        mats += 1j * rng.standard_normal((5, 3, 3))
    idx = rng.integers(0, 5, (4, 3000))
    idx[2, 1700:] = -1
    py = kernels.qr_log_sums(mats, idx, every=500, backend="python")
    assert py[2].tolist() == [3000, 3000, 1700, 3000]
    for row, s in zip(idx, py[0]):
        np.testing.assert_allclose(s, qr_reference(mats, row), rtol=1e-11)
    if kernels.BACKEND == "compiled":
        cc = kernels.qr_log_sums(mats, idx, every=500, backend="compiled")
        np.testing.assert_allclose(cc[0], py[0], rtol=1e-11)
        np.testing.assert_allclose(cc[1], py[1], rtol=1e-11)
        assert np.array_equal(cc[2], py[2])


def test_sample_markov_backends():
    cum = np.cumsum([[0.3, 0.7], [1.0, 0.0]], axis=1)
    cum[:, -1] = 1.0
    u = np.random.default_rng(1).random(10000)
    a = kernels.sample_markov(cum, 0, u, backend="python")
    assert not np.any((a[:-1] == 1) & (a[1:] == 1))
    assert abs(np.mean(a[1:][a[:-1] == 0] == 0) - 0.3) < 0.02
    if kernels.BACKEND == "compiled":
        assert np.array_equal(a, kernels.sample_markov(cum, 0, u, backend="compiled"))


def test_thread_count_determinism(monkeypatch):
    rng = np.random.default_rng(2)
    mats = rng.standard_normal((3, 2, 2))
    idx = rng.integers(0, 3, (8, 2000))
    out = []
    for n in ("1", "3", "8"):
        monkeypatch.setenv("COCYCLE_LAB_THREADS", n)
        assert kernels.thread_count(8) == int(n)
        out.append(kernels.qr_log_sums(mats, idx)[0])
    assert all(np.array_equal(out[0], o) for o in out[1:])


def test_pure_flag_selects_fallback():
    env = dict(os.environ, COCYCLE_LAB_PURE="1")
    res = subprocess.run([sys.executable, "-c", "from cocycle_lab import kernels; print(kernels.BACKEND)"], env=env, capture_output=True, text=True)
    assert res.stdout.strip() == "python"


def test_batched_fallback_matches_single_rows():
    rng = np.random.default_rng(3)
    mats = rng.standard_normal((4, 2, 2))
    idx = rng.integers(0, 4, (3, 500))
    sums, _, _ = qr_batch(mats, idx)
    for r, s in zip(idx, sums):
        np.testing.assert_allclose(qr_batch(mats, r[None])[0][0], s, rtol=1e-13)
