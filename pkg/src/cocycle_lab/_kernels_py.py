"""Pure numpy versions of the compiled kernels (used when the extension is unavailable)."""

import bisect

import numpy as np


def qr_batch(mats, idx, every=0):
    """Batched QR Lyapunov sums for every row of ``idx`` at once.

    Rows may end early with negative padding. Returns ``(sums, trace, steps)``
    shaped ``(S, d)``, ``(S, n // every, d)`` and ``(S,)``.
    """
    idx = np.asarray(idx, dtype=np.intp)
    S, n = idx.shape
    d = mats.shape[1]
    dtype = complex if np.iscomplexobj(mats) else float
    Q = np.broadcast_to(np.eye(d, dtype=dtype), (S, d, d)).copy()
    sums = np.zeros((S, d))
    trace = np.zeros((S, n // every if every > 0 else 0, d))
    steps = np.zeros(S, dtype=np.intp)
    for t in range(n):
        k = idx[:, t]
        active = k >= 0
        if active.all():
            Q, R = np.linalg.qr(mats[k] @ Q)
            sums += np.log(np.abs(np.diagonal(R, axis1=1, axis2=2)))
        elif active.any():
            Qa, R = np.linalg.qr(mats[k[active]] @ Q[active])
            sums[active] += np.log(np.abs(np.diagonal(R, axis1=1, axis2=2)))
            Q[active] = Qa
        else:
            break
        steps[active] += 1
        if every > 0 and (t + 1) % every == 0:
            trace[active, (t + 1) // every - 1] = sums[active]
    return sums, trace, steps


def qr_run(mats, idx, every=0):
    sums, trace, steps = qr_batch(mats, np.asarray(idx)[None, :], every)
    return sums[0], trace[0], int(steps[0])


def sample_markov(cum, start, u, out):
    rows = [list(r[:-1]) for r in np.asarray(cum, dtype=float)]
    n = len(out)
    if n == 0:
        return out
    vals = [0] * n
    vals[0] = s = int(start)
    for t in range(1, n):
        s = bisect.bisect_right(rows[s], u[t])
        vals[t] = s
    out[:] = vals
    return out
