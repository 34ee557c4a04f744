"""Shift spaces restricted to eventually bi-periodic points.

Points are triples ``(left_tail, core, right_tail)`` placed on the integers:
the core occupies ``[start, start + len(core))``, the left tail repeats to
the left of it and the right tail repeats to the right.  Every instance is
stored in canonical form, so ``==`` is coordinate-wise equality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import InadmissibleError, PreconditionError, TruncationError

Word = tuple[int, ...]


def parse_word(word, alphabet_size: int | None = None) -> Word:
    """Accept ``"0110"``, ``"3,11,2"`` or any integer sequence."""
    if isinstance(word, str):
        word = word.strip()
        if not word:
            return ()
        if "," in word:
            out = tuple(int(tok) for tok in word.split(","))
        else:
            out = tuple(int(ch) for ch in word)
    else:
        out = tuple(int(s) for s in word)
    if alphabet_size is not None:
        for s in out:
            if not 0 <= s < alphabet_size:
                raise PreconditionError(f"symbol {s} outside alphabet of size {alphabet_size}")
    return out


def format_word(word: Sequence[int], alphabet_size: int = 10) -> str:
    if alphabet_size <= 10:
        return "".join(str(s) for s in word)
    return ",".join(str(s) for s in word)


def primitive_root(word: Word) -> Word:
    n = len(word)
    for p in range(1, n + 1):
        if n % p == 0 and word[:p] * (n // p) == word:
            return word[:p]
    return word


def _rotl(w: Word, k: int = 1) -> Word:
    k %= len(w)
    return w[k:] + w[:k]


@dataclass(frozen=True)
class SymbolicPoint:
    left_tail: Word
    core: Word
    right_tail: Word
    alphabet_size: int
    start: int = 0

    def __post_init__(self):
        k = int(self.alphabet_size)
        left = parse_word(self.left_tail, k)
        core = parse_word(self.core, k)
        right = parse_word(self.right_tail, k)
        if k < 1:
            raise PreconditionError("alphabet_size must be positive")
        if not left or not right:
            raise PreconditionError("tails must be nonempty")
        start = int(self.start)

        left = primitive_root(left)
        right = primitive_root(right)
        # absorb the core into the left tail from the front
        while core and core[0] == left[0]:
            left = _rotl(left)
            core = core[1:]
            start += 1
        # then into the right tail from the back
        while core and core[-1] == right[-1]:
            right = _rotl(right, -1)
            core = core[:-1]
        if not core:
            # slide the junction while the left pattern keeps predicting the right one
            limit = len(left) * len(right) // math.gcd(len(left), len(right))
            steps = 0
            while right[0] == left[0] and steps < limit:
                left = _rotl(left)
                right = _rotl(right)
                start += 1
                steps += 1
            if steps == limit:
                # purely periodic: anchor the pattern at coordinate 0
                period = left
                right = tuple(period[(n - start) % len(period)] for n in range(len(period)))
                left = right
                start = 0
        object.__setattr__(self, "left_tail", left)
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "right_tail", right)
        object.__setattr__(self, "alphabet_size", k)
        object.__setattr__(self, "start", start)

    # -- coordinates -------------------------------------------------------
    @property
    def end(self) -> int:
        return self.start + len(self.core)

    def coordinate(self, n: int) -> int:
        s, e = self.start, self.start + len(self.core)
        if n < s:
            return self.left_tail[(n - s) % len(self.left_tail)]
        if n < e:
            return self.core[n - s]
        return self.right_tail[(n - e) % len(self.right_tail)]

    def __getitem__(self, n: int) -> int:
        return self.coordinate(n)

    def window(self, a: int, b: int) -> np.ndarray:
        """Coordinates ``x_a, ..., x_{b-1}`` as an int array."""
        n = np.arange(a, b)
        s, e = self.start, self.end
        left = np.asarray(self.left_tail)
        right = np.asarray(self.right_tail)
        out = np.empty(len(n), dtype=np.intp)
        m = n < s
        out[m] = left[(n[m] - s) % len(left)]
        m2 = (n >= s) & (n < e)
        if m2.any():
            out[m2] = np.asarray(self.core)[n[m2] - s]
        m3 = n >= e
        out[m3] = right[(n[m3] - e) % len(right)]
        return out

    @property
    def is_periodic(self) -> bool:
        return not self.core and self.start == 0 and self.left_tail == self.right_tail

    @property
    def period(self) -> int:
        if not self.is_periodic:
            raise PreconditionError("point is not periodic")
        return len(self.right_tail)

    def __str__(self) -> str:
        return format_point(self)


def format_point(x: SymbolicPoint) -> str:
    k = x.alphabet_size
    text = "|".join(format_word(w, k) for w in (x.left_tail, x.core, x.right_tail))
    if x.start:
        text += f"@{x.start}"
    return text


def parse_point(text: str, alphabet_size: int) -> SymbolicPoint:
    """Parse ``left|core|right`` with an optional ``@start`` suffix."""
    body, _, start = text.strip().partition("@")
    parts = body.split("|")
    if len(parts) != 3:
        raise PreconditionError(f"point {text!r} is not of the form left|core|right")
    left, core, right = (parse_word(p, alphabet_size) for p in parts)
    return SymbolicPoint(left, core, right, alphabet_size, int(start) if start else 0)


def shift(x: SymbolicPoint, j: int = 1) -> SymbolicPoint:
    """``f^j(x)``: coordinate ``n`` of the result is ``x.coordinate(n + j)``."""
    return SymbolicPoint(x.left_tail, x.core, x.right_tail, x.alphabet_size, x.start - j)


def agree_on(x: SymbolicPoint, y: SymbolicPoint, a: int | None, b: int | None) -> bool:
    """True iff ``x_n == y_n`` for all ``a <= n < b`` (``None`` means unbounded)."""
    lo = min(x.start, y.start)
    hi = max(x.end, y.end)
    pl = len(x.left_tail) * len(y.left_tail)
    pr = len(x.right_tail) * len(y.right_tail)
    # both points are jointly periodic left of lo and right of hi: one joint period per side suffices
    pieces = []
    top = lo if b is None else min(b, lo)
    bottom = top - pl if a is None else max(a, top - pl)
    pieces.append((bottom, top))
    pieces.append((lo if a is None else max(a, lo), hi if b is None else min(b, hi)))
    left_edge = hi if a is None else max(a, hi)
    right_edge = left_edge + pr if b is None else min(b, left_edge + pr)
    pieces.append((left_edge, right_edge))
    for s, e in pieces:
        if s < e and not np.array_equal(x.window(s, e), y.window(s, e)):
            return False
    return True


def in_local_stable(x: SymbolicPoint, y: SymbolicPoint) -> bool:
    return agree_on(x, y, 0, None)


def in_local_unstable(x: SymbolicPoint, y: SymbolicPoint) -> bool:
    return agree_on(x, y, None, 0)


def agreement_depth(x: SymbolicPoint, y: SymbolicPoint) -> int | None:
    """Largest ``N`` with ``x_i == y_i`` on ``[-N, N)``; ``None`` when ``x == y``."""
    if x == y:
        return None
    n = 0
    while True:
        if x.coordinate(-n - 1) != y.coordinate(-n - 1) or x.coordinate(n) != y.coordinate(n):
            return n
        n += 1


def distance(x: SymbolicPoint, y: SymbolicPoint, theta: float = 0.5) -> float:
    """Ultrametric ``theta**N`` with ``N`` the symmetric agreement depth."""
    if x.alphabet_size != y.alphabet_size:
        raise PreconditionError("points live on different alphabets")
    n = agreement_depth(x, y)
    return 0.0 if n is None else float(theta) ** n


def isolating_depth(center: SymbolicPoint, avoid: Iterable[SymbolicPoint]) -> int:
    """Least ``D >= 0`` such that no point of ``avoid`` agrees with ``center`` on ``[-D, D]``."""
    depth = 0
    for z in avoid:
        if z == center:
            raise PreconditionError(f"avoid list contains the center {center}")
        d = 0
        while center.coordinate(d) == z.coordinate(d) and center.coordinate(-d) == z.coordinate(-d):
            d += 1
        depth = max(depth, d)
    return depth


# ---------------------------------------------------------------------------
# shift systems


@dataclass(frozen=True, eq=False)
class ShiftSystem:
    alphabet_size: int
    transition_matrix: np.ndarray = None
    theta: float = 0.5

    def __post_init__(self):
        k = int(self.alphabet_size)
        if k < 1:
            raise PreconditionError("alphabet_size must be positive")
        t = np.ones((k, k), dtype=np.int8) if self.transition_matrix is None else np.array(self.transition_matrix, dtype=np.int8)
        if t.shape != (k, k) or not np.isin(t, (0, 1)).all():
            raise PreconditionError("transition matrix must be a k x k 0/1 matrix")
        if not (t.any(axis=1).all() and t.any(axis=0).all()):
            raise PreconditionError("every symbol needs an incoming and an outgoing transition")
        if not 0.0 < self.theta < 1.0:
            raise PreconditionError("theta must lie in (0, 1)")
        t.setflags(write=False)
        object.__setattr__(self, "alphabet_size", k)
        object.__setattr__(self, "transition_matrix", t)
        object.__setattr__(self, "theta", float(self.theta))

    @classmethod
    def full(cls, k: int, theta: float = 0.5) -> "ShiftSystem":
        return cls(k, None, theta)

    @property
    def is_full(self) -> bool:
        return bool(self.transition_matrix.all())

    def __eq__(self, other):
        return (
            isinstance(other, ShiftSystem)
            and self.alphabet_size == other.alphabet_size
            and self.theta == other.theta
            and np.array_equal(self.transition_matrix, other.transition_matrix)
        )

    def __hash__(self):
        return hash((self.alphabet_size, self.theta, self.transition_matrix.tobytes()))

    def first_violation(self, word: Sequence[int], cyclic: bool = False) -> tuple[int, int] | None:
        t = self.transition_matrix
        pairs = list(zip(word, word[1:]))
        if cyclic and word:
            pairs.append((word[-1], word[0]))
        for a, b in pairs:
            if not t[a, b]:
                return a, b
        return None

    def is_admissible(self, word: Sequence[int], cyclic: bool = False) -> bool:
        return self.first_violation(word, cyclic) is None

    def check_admissible(self, word: Sequence[int], cyclic: bool = False) -> None:
        bad = self.first_violation(word, cyclic)
        if bad is not None:
            raise InadmissibleError(f"transition {bad[0]}->{bad[1]} is forbidden in {format_word(word, self.alphabet_size)}")

    def point_is_admissible(self, x: SymbolicPoint) -> bool:
        if x.alphabet_size != self.alphabet_size:
            return False
        lo = x.start - 2 * len(x.left_tail)
        hi = x.end + 2 * len(x.right_tail)
        return self.is_admissible(tuple(x.window(lo, hi)))

    def words(self, length: int) -> list[Word]:
        """All admissible words of a given length, lexicographically."""
        if length == 0:
            return [()]
        out: list[Word] = [(a,) for a in range(self.alphabet_size)]
        t = self.transition_matrix
        for _ in range(length - 1):
            out = [w + (b,) for w in out for b in range(self.alphabet_size) if t[w[-1], b]]
        return out


def make_periodic(word, system: ShiftSystem) -> SymbolicPoint:
    """The bi-infinite repetition of ``word`` with ``word[0]`` at coordinate 0."""
    w = parse_word(word, system.alphabet_size)
    if not w:
        raise PreconditionError("periodic word must be nonempty")
    system.check_admissible(w, cyclic=True)
    return SymbolicPoint(w, (), w, system.alphabet_size)


@dataclass(frozen=True)
class HomoclinicData:
    p: SymbolicPoint
    q: SymbolicPoint
    m: int

    def __post_init__(self):
        if not self.p.is_periodic:
            raise PreconditionError("p must be periodic")
        if self.m < 1 or self.m % self.p.period:
            raise PreconditionError(f"m={self.m} must be a positive multiple of per(p)={self.p.period}")
        if not in_local_unstable(self.p, self.q):
            raise PreconditionError("q must agree with p on all negative coordinates")
        if not in_local_stable(self.p, shift(self.q, self.m)):
            raise PreconditionError("f^m(q) must agree with p on all nonnegative coordinates")


def make_homoclinic(p: SymbolicPoint, connector, system: ShiftSystem | None = None) -> HomoclinicData:
    """Homoclinic point with the periodic pattern of ``p`` on both sides of ``connector``."""
    if not p.is_periodic:
        raise PreconditionError("p must be periodic")
    c = parse_word(connector, p.alphabet_size)
    period = p.right_tail
    if not c or len(c) % len(period):
        raise PreconditionError(f"connector length {len(c)} must be a positive multiple of per(p)={len(period)}")
    if c == period * (len(c) // len(period)):
        raise PreconditionError("connector repeats the periodic pattern, so q would equal p")
    if system is not None:
        system.check_admissible(period[-1:] + c + period[:1])
    q = SymbolicPoint(period, c, period, p.alphabet_size)
    return HomoclinicData(p, q, len(c))


# ---------------------------------------------------------------------------
# inducing on a cylinder


def _failure_function(pattern: Word) -> list[int]:
    fail = [0] * (len(pattern) + 1)
    fail[0] = -1
    k = -1
    for i, s in enumerate(pattern):
        while k >= 0 and pattern[k] != s:
            k = fail[k]
        k += 1
        fail[i + 1] = k
    return fail


def _kmp_step(pattern: Word, fail: list[int], state: int, s: int) -> int:
    if state == len(pattern):
        state = fail[state]
    while state >= 0 and pattern[state] != s:
        state = fail[state]
    return state + 1


@dataclass(frozen=True)
class ReturnWord:
    """First-return itinerary ``tau_0 ... tau_{r-1}``; ``full`` appends the next copy of the base word."""

    word: Word
    r: int
    full: Word


@dataclass(frozen=True, eq=False)
class InducedSystem:
    """First-return system on ``[base_cylinder]``, truncated at return time ``R``.

    Return words are enumerated lazily, in ``(r, word)`` lexicographic order.
    """

    base: ShiftSystem
    base_cylinder: Word
    R: int
    max_words: int = 200_000

    @cached_property
    def return_words(self) -> list[ReturnWord]:
        counts = return_time_distribution(self.base, self.base_cylinder, self.R)[0]
        total = int(counts.sum())
        if total > self.max_words:
            raise TruncationError(f"{total} return words with r <= {self.R} exceed max_words={self.max_words}")
        pattern = self.base_cylinder
        k = len(pattern)
        fail = _failure_function(pattern)
        t = self.base.transition_matrix
        out: list[ReturnWord] = []
        # r = number of symbols read after the base word when it next occurs
        live: list[tuple[Word, int]] = [((), k)]
        for r in range(1, self.R + 1):
            nxt = []
            for suffix, state in live:
                last = suffix[-1] if suffix else pattern[-1]
                for s in range(self.base.alphabet_size):
                    if not t[last, s]:
                        continue
                    st = _kmp_step(pattern, fail, state, s)
                    sfx = suffix + (s,)
                    if st == k:
                        full = pattern + sfx
                        out.append(ReturnWord(full[:r], r, full))
                    else:
                        nxt.append((sfx, st))
            live = nxt
        out.sort(key=lambda w: (w.r, w.word))
        return out

    @property
    def alphabet_size(self) -> int:
        return len(self.return_words)

    @property
    def system(self) -> ShiftSystem:
        """The induced full shift on the enumerated return words."""
        return ShiftSystem.full(self.alphabet_size, self.base.theta)

    def return_times(self) -> np.ndarray:
        return np.array([w.r for w in self.return_words])


def return_time_distribution(system: ShiftSystem, base_cylinder, R: int, transition_probs=None):
    """Counts and conditional masses of first returns to ``[base_cylinder]`` by return time.

    Returns ``(counts, masses)`` indexed by ``r = 1..R`` (index 0 unused).  ``masses[r]`` is
    the probability of first return at time ``r`` given the start cylinder, for the Markov
    kernel ``transition_probs`` (rows indexed by the previous symbol); it is ``None`` when
    no kernel is given.
    """
    pattern = parse_word(base_cylinder, system.alphabet_size)
    if not pattern:
        raise PreconditionError("base cylinder must be nonempty")
    system.check_admissible(pattern)
    if R < 1:
        raise PreconditionError("R must be positive")
    k = len(pattern)
    fail = _failure_function(pattern)
    t = system.transition_matrix
    a = system.alphabet_size
    # transfer tables: (state, last symbol) -> (state', s)
    counts = np.zeros(R + 1, dtype=object)
    masses = np.zeros(R + 1) if transition_probs is not None else None
    cnt = {(k, pattern[-1]): 1}
    prob = {(k, pattern[-1]): 1.0}
    for r in range(1, R + 1):
        ncnt: dict = {}
        nprob: dict = {}
        for (state, last), c in cnt.items():
            for s in range(a):
                if not t[last, s]:
                    continue
                st = _kmp_step(pattern, fail, state, s)
                key = (st, s)
                ncnt[key] = ncnt.get(key, 0) + c
                if transition_probs is not None:
                    nprob[key] = nprob.get(key, 0.0) + prob[(state, last)] * transition_probs[last, s]
        # reaching state k after r symbols means the next occurrence starts at coordinate r
        cnt, prob = {}, {}
        for key, c in ncnt.items():
            if key[0] == k:
                counts[r] += c
                if masses is not None:
                    masses[r] += nprob[key]
            else:
                cnt[key] = c
                if transition_probs is not None:
                    prob[key] = nprob[key]
    return counts, masses


def induce(system: ShiftSystem, base_cylinder, R: int, max_words: int = 200_000) -> InducedSystem:
    word = parse_word(base_cylinder, system.alphabet_size)
    if not word:
        raise PreconditionError("base cylinder must be nonempty")
    system.check_admissible(word)
    if R < 1:
        raise PreconditionError("R must be at least 1")
    return InducedSystem(system, word, int(R), max_words)
