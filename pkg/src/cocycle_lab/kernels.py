"""Kernel backend selection.

The compiled extension is used when it imports; setting ``COCYCLE_LAB_PURE=1``
forces the numpy fallback. ``COCYCLE_LAB_THREADS`` caps the worker threads the
compiled backend uses across samples.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _kernels_py

_compiled = None
if os.environ.get("COCYCLE_LAB_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def thread_count(n_tasks: int) -> int:
    env = os.environ.get("COCYCLE_LAB_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def qr_log_sums(mats: np.ndarray, idx: np.ndarray, every: int = 0, backend: str | None = None):
    """QR Lyapunov log-sums for each row of ``idx`` (negative entries end a row).

    Returns ``(sums[S, d], trace[S, n // every, d], steps[S])``. Rows are
    independent, so the compiled backend spreads them over threads; the
    result does not depend on the thread count.
    """
    backend = backend or BACKEND
    idx = np.atleast_2d(np.asarray(idx, dtype=np.intp))
    if backend == "python" or _compiled is None:
        return _kernels_py.qr_batch(mats, idx, every)
    dtype = np.complex128 if np.iscomplexobj(mats) else np.float64
    mats = np.ascontiguousarray(mats, dtype=dtype)
    rows = [np.ascontiguousarray(r) for r in idx]
    workers = thread_count(len(rows))
    if workers == 1:
        out = [_compiled.qr_run(mats, r, every) for r in rows]
    else:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(lambda r: _compiled.qr_run(mats, r, every), rows))
    sums = np.array([o[0] for o in out]).reshape(len(rows), mats.shape[1])
    trace = np.array([o[1] for o in out]).reshape(len(rows), -1, mats.shape[1])
    steps = np.array([o[2] for o in out], dtype=np.intp)
    return sums, trace, steps


def sample_markov(cum: np.ndarray, start: int, u: np.ndarray, backend: str | None = None) -> np.ndarray:
    backend = backend or BACKEND
    out = np.empty(len(u), dtype=np.intp)
    impl = _kernels_py if backend == "python" or _compiled is None else _compiled
    impl.sample_markov(np.ascontiguousarray(cum, dtype=np.float64), int(start), np.ascontiguousarray(u, dtype=np.float64), out)
    return out
