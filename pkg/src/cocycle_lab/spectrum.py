"""Monte-Carlo Lyapunov spectra, multiplicity blocks and the induced-exponent scaling check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .cocycle import TableCocycle
from .errors import InadmissibleError, PreconditionError
from .shift import InducedSystem, ShiftSystem, Word, parse_word, return_time_distribution

DELTA_GAP = 1e-4
MAX_MISSING_MASS = 1e-3


# ---------------------------------------------------------------------------
# measures


@dataclass(frozen=True, eq=False)
class MeasureSpec:
    """Bernoulli (``probs``) or Markov (``transition`` with stationary ``probs``) measure."""

    kind: str
    probs: np.ndarray
    transition: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        if self.kind not in ("bernoulli", "markov"):
            raise PreconditionError(f"unknown measure kind {self.kind!r}")
        if p.ndim != 1 or (p < 0).any() or abs(p.sum() - 1) > 1e-12:
            raise PreconditionError("probabilities must be nonnegative and sum to 1")
        if self.kind == "markov":
            Q = np.asarray(self.transition, dtype=float)
            object.__setattr__(self, "transition", Q)
            if Q.shape != (len(p), len(p)) or (Q < 0).any() or np.abs(Q.sum(axis=1) - 1).max() > 1e-12:
                raise PreconditionError("Markov transition must be a row-stochastic square matrix")
            if np.abs(p @ Q - p).max() > 1e-10:
                raise PreconditionError("probs is not stationary for the transition matrix")

    @classmethod
    def bernoulli(cls, probs) -> "MeasureSpec":
        return cls("bernoulli", np.asarray(probs, dtype=float))

    @classmethod
    def uniform(cls, k: int) -> "MeasureSpec":
        return cls.bernoulli(np.full(k, 1.0 / k))

    @classmethod
    def markov(cls, transition, stationary=None) -> "MeasureSpec":
        Q = np.asarray(transition, dtype=float)
        if stationary is None:
            vals, vecs = np.linalg.eig(Q.T)
            v = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
            stationary = v / v.sum()
            stationary[np.abs(stationary) < 1e-15] = 0.0
            stationary = stationary / stationary.sum()
        return cls("markov", np.asarray(stationary, dtype=float), Q)

    @property
    def alphabet_size(self) -> int:
        return len(self.probs)

    def matrix(self) -> np.ndarray:
        """Transition matrix of the chain (rows equal to ``probs`` for Bernoulli)."""
        if self.kind == "markov":
            return self.transition
        return np.tile(self.probs, (len(self.probs), 1))

    def check(self, system: ShiftSystem) -> None:
        """Reject measures that charge inadmissible transitions or miss admissible ones."""
        if self.alphabet_size != system.alphabet_size:
            raise InadmissibleError("measure and system use different alphabets")
        Q = self.matrix()
        T = system.transition_matrix
        support = self.probs > 0
        for a in range(len(Q)):
            for b in range(len(Q)):
                if not support[a]:
                    continue
                if Q[a, b] > 0 and not T[a, b]:
                    raise InadmissibleError(f"measure charges the forbidden transition {a}->{b}")
                if T[a, b] and support[b] and Q[a, b] == 0:
                    raise InadmissibleError(f"measure gives zero weight to the admissible transition {a}->{b}")

    def word_probability(self, word) -> float:
        w = list(word)
        if not w:
            return 1.0
        pr = float(self.probs[w[0]])
        Q = self.matrix()
        for a, b in zip(w, w[1:]):
            pr *= Q[a, b]
        return pr

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Stationary itinerary of length ``n`` (one uniform stream, inverse-CDF sampling)."""
        u = rng.random(n)
        cum0 = np.cumsum(self.probs)
        cum0[-1] = 1.0
        if self.kind == "bernoulli":
            return np.minimum(np.searchsorted(cum0, u, side="right"), len(cum0) - 1).astype(np.intp)
        cum = np.cumsum(self.transition, axis=1)
        cum[:, -1] = 1.0
        start = min(int(np.searchsorted(cum0, u[0], side="right")), len(cum0) - 1)
        return kernels.sample_markov(cum, start, u)


# ---------------------------------------------------------------------------
# multiplicity


@dataclass(frozen=True)
class MultiplicityReport:
    blocks: tuple
    gaps: tuple
    thresholds: tuple
    delta_gap: float

    @property
    def simple(self) -> bool:
        return all(len(b) == 1 for b in self.blocks)


def multiplicity_report(est, delta_gap: float = DELTA_GAP, std_errors=None) -> MultiplicityReport:
    """Group indices whose adjacent gap is below ``max(delta_gap, 3 * combined std error)``.

    ``est`` is a ``SpectrumEstimate`` or a plain sequence of exponents (then
    ``std_errors`` is required).
    """
    if isinstance(est, SpectrumEstimate):
        lam, se = est.exponents, est.std_errors
    else:
        lam, se = np.asarray(est, dtype=float), np.asarray(std_errors, dtype=float)
    blocks, gaps, thr = [[0]], [], []
    for i in range(len(lam) - 1):
        g = float(lam[i] - lam[i + 1])
        t = max(delta_gap, 3.0 * math.hypot(se[i], se[i + 1]))
        gaps.append(g)
        thr.append(t)
        if g < t:
            blocks[-1].append(i + 1)
        else:
            blocks.append([i + 1])
    return MultiplicityReport(tuple(tuple(b) for b in blocks), tuple(gaps), tuple(thr), delta_gap)


# ---------------------------------------------------------------------------
# spectrum


@dataclass(frozen=True, eq=False)
class SpectrumEstimate:
    exponents: np.ndarray
    std_errors: np.ndarray
    n_iter: int
    n_samples: int
    seed: int
    samples: np.ndarray
    checkpoints: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    running: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    delta_gap: float = DELTA_GAP

    @property
    def report(self) -> MultiplicityReport:
        return multiplicity_report(self, self.delta_gap)

    @property
    def blocks(self):
        return self.report.blocks

    @property
    def simple(self) -> bool:
        return self.report.simple

    @property
    def sum_std_error(self) -> float:
        s = self.samples.sum(axis=1)
        return float(s.std(ddof=1) / math.sqrt(len(s))) if len(s) > 1 else 0.0

    def trace_rows(self):
        """``(iteration, exponent_index, running_estimate)`` rows of the convergence trace."""
        for c, it in enumerate(self.checkpoints):
            for i in range(self.running.shape[1]):
                yield int(it), i, float(self.running[c, i])


def _summarize(per_sample: np.ndarray, n_iter, seed, checkpoints, running, delta_gap) -> SpectrumEstimate:
    mean = per_sample.mean(axis=0)
    order = np.argsort(-mean, kind="stable")
    per_sample = per_sample[:, order]
    mean = mean[order]
    S = len(per_sample)
    se = per_sample.std(axis=0, ddof=1) / math.sqrt(S) if S > 1 else np.zeros_like(mean)
    return SpectrumEstimate(mean, se, n_iter, S, seed, per_sample, checkpoints, running[:, order] if running.size else running, delta_gap)


def sample_seeds(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def estimate_spectrum(
    A: TableCocycle,
    system: ShiftSystem,
    mu: MeasureSpec,
    n_iter: int = 100_000,
    n_samples: int = 16,
    seed: int = 0,
    trace_every: int = 0,
    delta_gap: float = DELTA_GAP,
    min_iter: int = 1000,
) -> SpectrumEstimate:
    """Average QR log-diagonals over ``n_samples`` independent itineraries of length ``n_iter``.

    Each sample draws ``n_iter + 2w`` stationary symbols from its own seed
    (spawned from ``seed``), so results do not depend on threading.
    """
    if n_iter < min_iter:
        raise PreconditionError(f"n_iter must be at least {min_iter}")
    if n_samples < 1:
        raise PreconditionError("n_samples must be positive")
    mu.check(system)
    w = A.window
    rows = []
    for rng in sample_seeds(seed, n_samples):
        rows.append(A.indices_from_symbols(mu.sample(rng, n_iter + 2 * w)))
    idx = np.array(rows)
    sums, trace, steps = kernels.qr_log_sums(A.mats, idx, trace_every)
    per_sample = sums / steps[:, None]
    if trace_every:
        checkpoints = trace_every * np.arange(1, trace.shape[1] + 1)
        running = trace.mean(axis=0) / checkpoints[:, None]
    else:
        checkpoints, running = np.zeros(0, dtype=int), np.zeros((0, 0))
    return _summarize(per_sample, n_iter, seed, checkpoints, running, delta_gap)


def log_det_expectation(A: TableCocycle, mu: MeasureSpec) -> float:
    """``E_mu[log |det A|]`` summed exactly over the table's window words."""
    logdet = np.log(np.abs(np.linalg.det(A.mats)))
    weights = np.array([mu.word_probability(w) for w in A.words])
    return float(weights @ logdet)


# ---------------------------------------------------------------------------
# inducing


def induced_cocycle(A: TableCocycle, induced: InducedSystem, eta: float | None = None) -> TableCocycle:
    """Table of ``A^{r(l)}`` over the return-word alphabet.

    The window radius of ``A`` carries over: every return word has length at
    least one, so ``w`` neighbouring words cover ``w`` base symbols.
    """
    words = induced.return_words
    if not words:
        raise PreconditionError("induced system has no return words")
    w = A.window
    K = len(words)
    entries = {}
    for combo in np.ndindex(*([K] * (2 * w + 1))):
        parts = [words[c].word for c in combo]
        symbols = np.array([s for part in parts for s in part], dtype=np.intp)
        offset = sum(len(part) for part in parts[:w])
        r = words[combo[w]].r
        try:
            idx = A.indices_from_symbols(symbols[offset - w : offset + r + w])
        except InadmissibleError:
            continue
        M = np.eye(A.dim, dtype=A.mats.dtype)
        for i in idx:
            M = A.mats[i] @ M
        entries[tuple(combo)] = M
    return TableCocycle(entries, w, K, field=A.field, eta=A.eta if eta is None else eta)


def _segment(symbols: np.ndarray, pattern: Word) -> list[int]:
    """Start of every (possibly overlapping) occurrence of ``pattern`` in ``symbols``."""
    k = len(pattern)
    n = len(symbols) - k + 1
    if n <= 0:
        return []
    hit = np.ones(n, dtype=bool)
    for j, s in enumerate(pattern):
        hit &= symbols[j : j + n] == s
    return np.flatnonzero(hit).tolist()


def induced_itinerary(symbols: np.ndarray, pattern: Word, R: int):
    """Concatenate the return words with ``r <= R`` cut from a stationary chain.

    Returns ``(kept_symbols, n_words, n_dropped)``.  The symbols before the
    first occurrence of the pattern and after the last are discarded.
    """
    occ = _segment(symbols, pattern)
    pieces, kept, dropped = [], 0, 0
    for a, b in zip(occ, occ[1:]):
        if b - a <= R:
            pieces.append(symbols[a:b])
            kept += 1
        else:
            dropped += 1
    if not pieces:
        return np.zeros(0, dtype=np.intp), 0, dropped
    return np.concatenate(pieces), kept, dropped


@dataclass(frozen=True)
class ScalingReport:
    target: float
    ratios: tuple
    ratio_errors: tuple
    within: tuple
    skipped: tuple
    base: SpectrumEstimate
    induced: SpectrumEstimate
    missing_mass: float
    mean_return: float
    verdicts_agree: bool
    notes: tuple = ()

    @property
    def ok(self) -> bool:
        return all(self.within) and self.verdicts_agree and self.missing_mass < MAX_MISSING_MASS


def check_scaling(
    A: TableCocycle,
    system: ShiftSystem,
    base_cylinder,
    mu: MeasureSpec,
    R: int = 60,
    n_iter: int = 100_000,
    n_samples: int = 16,
    seed: int = 0,
    delta_gap: float = DELTA_GAP,
) -> ScalingReport:
    """Compare induced exponents with ``lambda_i / mu([I])``.

    The induced spectrum is sampled by cutting stationary chains at the
    occurrences of ``I``; the pieces are i.i.d. return words distributed by
    the induced measure, and words longer than ``R`` are discarded (their
    mass is reported).  Each induced sample covers ``n_iter`` return words.
    """
    I = parse_word(base_cylinder, system.alphabet_size)
    mu.check(system)
    mass_I = mu.word_probability(I)
    if mass_I <= 0:
        raise PreconditionError("base cylinder has zero measure")
    target = 1.0 / mass_I
    _, masses = return_time_distribution(system, I, R, mu.matrix() if mu.kind == "markov" else np.tile(mu.probs, (len(mu.probs), 1)))
    missing = float(1.0 - masses.sum())
    if missing >= MAX_MISSING_MASS:
        raise PreconditionError(f"R = {R} leaves induced mass {missing:.3g} uncovered (needs < {MAX_MISSING_MASS})")

    base = estimate_spectrum(A, system, mu, n_iter, n_samples, seed, delta_gap=delta_gap)
    w = A.window
    length = int(math.ceil((n_iter + 64) * target * 1.1)) + 4 * R + 2 * w
    rows, counts = [], []
    for rng in sample_seeds(seed + 1, n_samples):
        symbols, n_words = np.zeros(0, dtype=np.intp), 0
        chunk = length
        while n_words < n_iter + 2 * w + 2:
            more, k, _ = induced_itinerary(mu.sample(rng, chunk), I, R)
            symbols = np.concatenate([symbols, more])
            n_words += k
            chunk = max(chunk // 4, 1000)
        rows.append(symbols)
        counts.append(n_words)
    # every row keeps exactly n_iter words, padded by w whole words on each side for the window
    idx_rows = []
    for symbols in rows:
        starts = np.array(_segment(symbols, I) + [len(symbols)])
        a = starts[w] if w else 0
        b = starts[w + n_iter]
        idx_rows.append(A.indices_from_symbols(symbols[a - w : b + w]))
    width = max(len(r) for r in idx_rows)
    idx = np.full((len(idx_rows), width), -1, dtype=np.intp)
    for i, r in enumerate(idx_rows):
        idx[i, : len(r)] = r
    sums, _, _ = kernels.qr_log_sums(A.mats, idx)
    per_sample = sums / n_iter
    induced = _summarize(per_sample, n_iter, seed + 1, np.zeros(0, dtype=int), np.zeros((0, 0)), delta_gap)
    mean_return = float(np.mean([len(r) - 2 * w for r in idx_rows]) / n_iter)

    ratios, errs, within, skipped, notes = [], [], [], [], []
    for i in range(A.dim):
        lt, st = base.exponents[i], base.std_errors[i]
        li, si = induced.exponents[i], induced.std_errors[i]
        if abs(lt) <= 3 * st or lt == 0:
            skipped.append(i)
            notes.append(f"exponent {i} of the base cocycle is indistinguishable from 0; ratio skipped")
            ratios.append(math.nan)
            errs.append(math.nan)
            within.append(True)
            continue
        rho = li / lt
        sig = abs(rho) * math.hypot(st / lt, si / li if li else math.inf)
        ratios.append(rho)
        errs.append(sig)
        within.append(abs(rho - target) <= 3 * sig)
    agree = base.report.blocks == induced.report.blocks
    return ScalingReport(target, tuple(ratios), tuple(errs), tuple(within), tuple(skipped), base, induced, missing, mean_return, agree, tuple(notes))
