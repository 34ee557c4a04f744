"""Matrix cocycles over the shift: tables, long-range evaluators, products, bunching."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import InadmissibleError, NotFiberBunched, PreconditionError
from .shift import ShiftSystem, SymbolicPoint, Word, format_word, parse_word, shift

COND_LIMIT = 1e12


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def opnorm(m: np.ndarray) -> float:
    """Spectral norm."""
    return float(np.linalg.norm(m, 2))


def _word_codes(words: np.ndarray, k: int) -> np.ndarray:
    """Base-k integer code of each row of ``words``."""
    weights = k ** np.arange(words.shape[1] - 1, -1, -1, dtype=np.int64)
    return words.astype(np.int64) @ weights


class MatrixTable:
    """A matrix-valued map that depends on the window ``x_{-w} ... x_{w}``.

    Entries need not be invertible; tangent vectors to the space of cocycles
    are plain tables.
    """

    def __init__(self, entries: Mapping, window: int, alphabet_size: int, dtype=complex):
        if window < 0:
            raise PreconditionError("window radius must be nonnegative")
        items = sorted((parse_word(w, alphabet_size), np.asarray(m)) for w, m in entries.items()) if entries else []
        if not items:
            raise PreconditionError("empty table")
        width = 2 * window + 1
        for w, _ in items:
            if len(w) != width:
                raise PreconditionError(f"word {format_word(w, alphabet_size)} has length {len(w)}, expected {width}")
        words = tuple(w for w, _ in items)
        mats = np.array([m for _, m in items], dtype=dtype)
        self._init(words, mats, window, alphabet_size)

    def _init(self, words, mats, window, alphabet_size):
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise PreconditionError("table entries must be square matrices of one size")
        mats = np.ascontiguousarray(mats)
        mats.setflags(write=False)
        self.words: tuple[Word, ...] = tuple(words)
        self.mats = mats
        self.window = int(window)
        self.alphabet_size = int(alphabet_size)
        self.dim = mats.shape[1]
        self.index = {w: i for i, w in enumerate(self.words)}
        codes = _word_codes(np.array(self.words, dtype=np.int64).reshape(len(self.words), 2 * self.window + 1), self.alphabet_size)
        lookup = np.full(self.alphabet_size ** (2 * self.window + 1), -1, dtype=np.intp)
        lookup[codes] = np.arange(len(self.words))
        self._lookup = lookup

    @classmethod
    def from_arrays(cls, words, mats, window, alphabet_size, **kw):
        obj = cls.__new__(cls)
        obj._init(words, np.asarray(mats), window, alphabet_size)
        obj._post(**kw)
        return obj

    def _post(self, **kw):
        pass

    def __len__(self):
        return len(self.words)

    def window_word(self, x: SymbolicPoint) -> Word:
        return tuple(int(s) for s in x.window(-self.window, self.window + 1))

    def entry(self, word) -> np.ndarray:
        word = parse_word(word, self.alphabet_size)
        try:
            return self.mats[self.index[word]]
        except KeyError:
            raise InadmissibleError(f"window word {format_word(word, self.alphabet_size)} is not in the table") from None

    def evaluate(self, x: SymbolicPoint) -> np.ndarray:
        if x.alphabet_size != self.alphabet_size:
            raise PreconditionError("point and table use different alphabets")
        return self.entry(self.window_word(x))

    def indices_from_symbols(self, symbols: np.ndarray) -> np.ndarray:
        """Table index of every full window in a symbol array (length ``len - 2w``)."""
        symbols = np.asarray(symbols)
        width = 2 * self.window + 1
        n = symbols.shape[-1] - width + 1
        if n <= 0:
            return np.empty(symbols.shape[:-1] + (0,), dtype=np.intp)
        code = np.zeros(symbols.shape[:-1] + (n,), dtype=np.int64)
        for j in range(width):
            code = code * self.alphabet_size + symbols[..., j : j + n]
        idx = self._lookup[code]
        if (idx < 0).any():
            bad = np.argwhere(idx < 0)[0]
            start = bad[-1]
            word = symbols[tuple(bad[:-1]) + (slice(start, start + width),)]
            raise InadmissibleError(f"window word {format_word(word, self.alphabet_size)} is not in the table")
        return idx

    def indices_along(self, x: SymbolicPoint, a: int, b: int) -> np.ndarray:
        """Table indices of ``A(f^j x)`` for ``a <= j < b``."""
        return self.indices_from_symbols(x.window(a - self.window, b + self.window))

    def replace(self, updates: Mapping):
        """Copy with some entries replaced (words must already be present)."""
        mats = self.mats.copy()
        for w, m in updates.items():
            w = parse_word(w, self.alphabet_size)
            if w not in self.index:
                raise InadmissibleError(f"window word {format_word(w, self.alphabet_size)} is not in the table")
            mats[self.index[w]] = m
        return self._rebuild(mats)

    def _rebuild(self, mats):
        return type(self).from_arrays(self.words, mats, self.window, self.alphabet_size)

    def widen(self, system: ShiftSystem, window: int):
        """Same map re-tabulated on windows of a larger radius."""
        if window < self.window:
            raise PreconditionError("can only widen a table")
        if window == self.window:
            return self
        words = tuple(w for w in system.words(2 * window + 1) if w[window - self.window : window + self.window + 1] in self.index)
        cut = window - self.window
        idx = [self.index[w[cut : len(w) - cut]] for w in words]
        return type(self).from_arrays(words, self.mats[idx], window, self.alphabet_size, **self._kw())

    def narrow(self, window: int):
        """Inverse of ``widen``: ``None`` unless every entry depends only on the smaller window."""
        if window > self.window:
            raise PreconditionError("narrow needs a smaller window")
        if window == self.window:
            return self
        cut = self.window - window
        groups: dict = {}
        for i, w in enumerate(self.words):
            groups.setdefault(w[cut : len(w) - cut], []).append(i)
        for idx in groups.values():
            if not all(np.array_equal(self.mats[idx[0]], self.mats[i]) for i in idx[1:]):
                return None
        words = tuple(sorted(groups))
        mats = self.mats[[groups[w][0] for w in words]]
        return type(self).from_arrays(words, mats, window, self.alphabet_size, **self._kw())

    def _kw(self):
        return {}

    def sup_norm(self) -> float:
        return float(np.linalg.norm(self.mats, 2, axis=(1, 2)).max())

    def holder_constant(self, theta: float, eta: float) -> float:
        """Smallest C with ``||M(x) - M(y)|| <= C d(x, y)^eta`` on the table."""
        diff = np.linalg.norm(self.mats[:, None] - self.mats[None, :], 2, axis=(2, 3))
        return float((diff / _pair_scale(self, theta, eta)).max())

    def holder_norm(self, theta: float, eta: float) -> float:
        """``sup ||M|| + Holder constant``, the ``||.||_{0,eta}`` norm."""
        return self.sup_norm() + self.holder_constant(theta, eta)


def _pair_depths(table: MatrixTable) -> np.ndarray:
    """Largest symmetric agreement depth reachable by points carrying each pair of window words."""
    cache = getattr(table, "_depth_cache", None)
    if cache is not None:
        return cache
    w = table.window
    words = np.array(table.words).reshape(len(table.words), 2 * w + 1)
    pos = np.arange(-w, w + 1)
    limit = np.where(pos >= 0, pos, -pos - 1)
    differ = words[:, None, :] != words[None, :, :]
    depth = np.where(differ, limit, w + 1).min(axis=2)
    table._depth_cache = depth
    return depth


def _pair_scale(table: MatrixTable, theta: float, eta: float) -> np.ndarray:
    """``theta^(N eta)`` lower bound on ``d^eta`` for each pair; 1 on the diagonal (numerators vanish there)."""
    depth = _pair_depths(table)
    scale = np.power(theta, depth * eta)
    np.fill_diagonal(scale, 1.0)
    return scale


class TableCocycle(MatrixTable):
    """Finite-window cocycle: ``A(x)`` looked up from ``x_{-w} ... x_{w}``.

    Parameters
    ----------
    entries : mapping
        Window word (string or tuple) to invertible ``d x d`` matrix.
    window : int
        Window radius ``w``.
    alphabet_size : int
    field : {"complex", "real"}
        ``"real"`` stores float64 entries and turns on real-mode pinching downstream.
    eta : float
        Holder exponent used by the bunching certificate.
    """

    def __init__(self, entries: Mapping, window: int, alphabet_size: int, field: str = "complex", eta: float = 1.0):
        dtype = _dtype_for(field, entries.values())
        super().__init__(entries, window, alphabet_size, dtype=dtype)
        self._post(field=field, eta=eta)

    def _post(self, field="complex", eta=1.0):
        if field not in ("complex", "real"):
            raise PreconditionError(f"unknown scalar field {field!r}")
        if field == "real":
            if np.iscomplexobj(self.mats):
                if np.abs(self.mats.imag).max() > 0:
                    raise PreconditionError("real cocycle has complex entries")
                mats = np.ascontiguousarray(self.mats.real)
                mats.setflags(write=False)
                self.mats = mats
        elif not np.iscomplexobj(self.mats):
            mats = self.mats.astype(complex)
            mats.setflags(write=False)
            self.mats = mats
        if not 0 < eta <= 1:
            raise PreconditionError("Holder exponent must lie in (0, 1]")
        self.field = field
        self.eta = float(eta)
        cond = np.linalg.cond(self.mats)
        if not np.all(np.isfinite(cond)) or cond.max() > COND_LIMIT:
            bad = int(np.argmax(np.where(np.isfinite(cond), cond, np.inf)))
            raise PreconditionError(f"entry {format_word(self.words[bad], self.alphabet_size)} is not invertible")

    def _kw(self):
        return {"field": self.field, "eta": self.eta}

    def _rebuild(self, mats):
        return TableCocycle.from_arrays(self.words, mats, self.window, self.alphabet_size, **self._kw())

    @property
    def real(self) -> bool:
        return self.field == "real"

    def inverse_mats(self) -> np.ndarray:
        inv = getattr(self, "_inv", None)
        if inv is None:
            inv = np.linalg.inv(self.mats)
            self._inv = inv
        return inv

    def scaled(self, c: float) -> "TableCocycle":
        return self._rebuild(self.mats * c)

    def perturbed(self, tangent: MatrixTable, h, system: ShiftSystem | None = None) -> "TableCocycle":
        """``A + h * tangent``, widening whichever table is narrower."""
        a, t = self, tangent
        if t.window != a.window:
            if system is None:
                raise PreconditionError("tables of different windows need the shift system to be aligned")
            w = max(a.window, t.window)
            a, t = a.widen(system, w), t.widen(system, w)
        if t.words != a.words:
            raise PreconditionError("tangent table does not match the cocycle's window words")
        mats = a.mats + h * t.mats
        field = a.field if not np.iscomplexobj(mats) or not np.abs(mats.imag).any() or a.field == "complex" else "complex"
        return TableCocycle.from_arrays(a.words, mats, a.window, a.alphabet_size, field=field, eta=a.eta)

    def __eq__(self, other):
        return (
            isinstance(other, TableCocycle)
            and self.words == other.words
            and self.window == other.window
            and self.field == other.field
            and self.eta == other.eta
            and np.array_equal(self.mats, other.mats)
        )

    __hash__ = None

    def __repr__(self):
        return f"TableCocycle(d={self.dim}, window={self.window}, entries={len(self.words)}, field={self.field!r})"


def _dtype_for(field, mats):
    if field == "real":
        return complex if any(np.iscomplexobj(np.asarray(m)) for m in mats) else float
    return complex


def tangent_table(entries: Mapping, window: int, alphabet_size: int) -> MatrixTable:
    return MatrixTable(entries, window, alphabet_size, dtype=complex)


def zero_tangent(A: MatrixTable) -> MatrixTable:
    return MatrixTable.from_arrays(A.words, np.zeros(A.mats.shape, dtype=complex), A.window, A.alphabet_size)


def table_from_symbols(symbol_mats: Mapping | Sequence, field: str = "complex", eta: float = 1.0) -> TableCocycle:
    """Window-0 cocycle ``A(x) = M[x_0]``."""
    if not isinstance(symbol_mats, Mapping):
        symbol_mats = dict(enumerate(symbol_mats))
    k = max(int(s) for s in symbol_mats) + 1
    return TableCocycle({(int(s),): m for s, m in symbol_mats.items()}, 0, k, field=field, eta=eta)


def table_from_function(system: ShiftSystem, window: int, fn: Callable[[Word], np.ndarray], field="complex", eta=1.0) -> TableCocycle:
    words = system.words(2 * window + 1)
    return TableCocycle({w: fn(w) for w in words}, window, system.alphabet_size, field=field, eta=eta)


def constant_cocycle(system: ShiftSystem, matrix, field: str = "complex", eta: float = 1.0) -> TableCocycle:
    return table_from_function(system, 0, lambda w: np.asarray(matrix), field=field, eta=eta)


# ---------------------------------------------------------------------------
# long-range cocycles


@dataclass(frozen=True)
class LongRangeCocycle:
    """Cocycle given by an evaluator together with declared Holder data.

    The declared constants must satisfy, for all points ``x, y``:
    ``||A(y)|| / ||A(x)|| <= exp(c1 d(x,y)^eta)`` (same for inverses) and
    ``||A(x)^-1 A(y) - I|| <= c2 d(x,y)^eta``.
    """

    evaluator: Callable[[SymbolicPoint], np.ndarray]
    dim: int
    alphabet_size: int
    eta: float
    c1: float
    c2: float
    sup_norm: float
    sup_inv_norm: float
    field: str = "complex"

    def evaluate(self, x: SymbolicPoint) -> np.ndarray:
        if x.alphabet_size != self.alphabet_size:
            raise PreconditionError("point and cocycle use different alphabets")
        return np.asarray(self.evaluator(x), dtype=complex)

    @property
    def real(self) -> bool:
        return self.field == "real"


def builtin_long_range(symbol_mats: Sequence, generator, weights: Sequence[float] | None = None, theta: float = 0.5, k_max: int = 64) -> LongRangeCocycle:
    """``A(x) = exp(g(x) L0) M[x_0]`` with ``g(x) = sum_{|n| <= k_max} 2^-|n| s(x_n)``.

    The dependence on far coordinates decays geometrically, so the cocycle is
    not finite-window; Holder constants are derived in closed form.
    """
    mats = [np.asarray(m, dtype=complex) for m in symbol_mats]
    k = len(mats)
    L0 = np.asarray(generator, dtype=complex)
    s = np.asarray(range(k) if weights is None else weights, dtype=float)
    if not 0.5 <= theta < 1:
        raise PreconditionError("the built-in family needs theta in [1/2, 1) so that 2^-N <= d(x, y)")
    eta = 1.0
    n = np.arange(-k_max, k_max + 1)
    decay = 0.5 ** np.abs(n)

    def evaluator(x: SymbolicPoint) -> np.ndarray:
        g = float(decay @ s[x.window(-k_max, k_max + 1)])
        return scipy.linalg.expm(g * L0) @ mats[x.coordinate(0)]

    L_norm = opnorm(L0)
    skew = np.allclose(L0, -L0.conj().T)
    g_max = 3.0 * np.abs(s).max()
    spread = float(s.max() - s.min())
    # ||exp(g L0)|| is 1 for skew generators, otherwise at most exp(|g| ||L0||)
    grow = 1.0 if skew else math.exp(g_max * L_norm)
    sup_norm = grow * max(opnorm(m) for m in mats)
    sup_inv_norm = grow * max(opnorm(np.linalg.inv(m)) for m in mats)
    # same x_0: |g(x) - g(y)| <= 3 spread 2^-N <= 3 spread d(x, y)
    t = 3.0 * spread * L_norm
    c1 = max(t, math.log(sup_norm * sup_inv_norm))
    kappa = max(opnorm(m) * opnorm(np.linalg.inv(m)) for m in mats)
    c2_same = kappa * t * math.exp(t)
    c2_diff = sup_norm * sup_inv_norm + 1.0
    return LongRangeCocycle(evaluator, mats[0].shape[0], k, eta, c1, max(c2_same, c2_diff), sup_norm, sup_inv_norm)


# ---------------------------------------------------------------------------
# evaluation and products


def evaluate(A, x: SymbolicPoint) -> np.ndarray:
    return A.evaluate(x)


def _chain(mats: np.ndarray, d: int) -> np.ndarray:
    out = np.eye(d, dtype=mats.dtype if len(mats) else complex)
    for m in mats:
        out = m @ out
    return out


def product(A, x: SymbolicPoint, n: int) -> np.ndarray:
    """``A^n(x)``: ``A(f^{n-1}x) ... A(x)`` for ``n > 0``, ``(A^{-n}(f^n x))^{-1}`` for ``n < 0``."""
    if n == 0:
        return np.eye(A.dim, dtype=complex if not getattr(A, "real", False) else float)
    if n < 0:
        return np.linalg.inv(product(A, shift(x, n), -n))
    if isinstance(A, MatrixTable):
        return _chain(A.mats[A.indices_along(x, 0, n)], A.dim)
    out = np.eye(A.dim, dtype=complex)
    for j in range(n):
        out = A.evaluate(shift(x, j)) @ out
    return out


# ---------------------------------------------------------------------------
# Holder data and fiber bunching


@dataclass(frozen=True)
class HolderData:
    eta: float
    c1: float
    c2: float


def holder_data(A, system: ShiftSystem) -> HolderData:
    """Exponential-Holder constant ``c1`` and transition constant ``c2``.

    For tables both are exact maxima over pairs of window words, each pair
    divided by the smallest ``d^eta`` two points carrying those words can have.
    """
    if isinstance(A, LongRangeCocycle):
        return HolderData(A.eta, A.c1, A.c2)
    scale = _pair_scale(A, system.theta, A.eta)
    s = np.linalg.svd(A.mats, compute_uv=False)
    log_norm = np.log(s[:, 0])
    log_inv = -np.log(s[:, -1])
    ratio = np.maximum(log_norm[None, :] - log_norm[:, None], log_inv[None, :] - log_inv[:, None])
    c1 = float(np.maximum(ratio, 0.0).__truediv__(scale).max())
    inv = A.inverse_mats()
    eye = np.eye(A.dim)
    mid = np.linalg.norm(inv[:, None] @ A.mats[None, :] - eye, 2, axis=(2, 3))
    # identical entries contribute exactly zero, not roundoff
    mid[(A.mats[:, None] == A.mats[None, :]).all(axis=(2, 3))] = 0.0
    c2 = float((mid / scale).max())
    return HolderData(A.eta, c1, c2)


@dataclass(frozen=True)
class BunchingCertificate:
    eta: float
    theta: float
    tau: float
    C: float
    C1: float
    C2: float
    sup_norm: float
    sup_inv_norm: float
    exhaustive: bool = True
    perturbation_margin: float = 0.0
    witness: str = ""

    @property
    def holonomy_constant(self) -> float:
        """``C C2``: the geometric rate constant of the holonomy Cauchy sequence."""
        return self.C * self.C2


def certify_bunching(A, system: ShiftSystem) -> BunchingCertificate:
    """Certify ``||A(x)|| ||A(x)^-1|| theta^eta <= tau < 1`` and the constants that follow from it.

    Raises
    ------
    NotFiberBunched
        If the maximum reaches 1.
    """
    kappa_theta = system.theta ** A.eta
    hd = holder_data(A, system)
    C = math.exp(hd.c1 * 2.0 / (1.0 - kappa_theta))
    if isinstance(A, LongRangeCocycle):
        tau = A.sup_norm * A.sup_inv_norm * kappa_theta
        if tau >= 1:
            raise NotFiberBunched("declared sup bounds", tau)
        return BunchingCertificate(A.eta, system.theta, tau, C, hd.c1, hd.c2, A.sup_norm, A.sup_inv_norm, exhaustive=False, witness="declared")
    s = np.linalg.svd(A.mats, compute_uv=False)
    vals = s[:, 0] / s[:, -1] * kappa_theta
    worst = int(np.argmax(vals))
    tau = float(vals[worst])
    word = format_word(A.words[worst], A.alphabet_size)
    if tau >= 1:
        raise NotFiberBunched(word, tau)
    # entries moved by less than this stay bunched: (s_max + e) theta^eta < s_min - e
    margin = float(((s[:, -1] - kappa_theta * s[:, 0]) / (1.0 + kappa_theta)).min())
    return BunchingCertificate(
        A.eta, system.theta, tau, C, hd.c1, hd.c2, float(s[:, 0].max()), float((1 / s[:, -1]).max()),
        exhaustive=True, perturbation_margin=margin, witness=word,
    )
