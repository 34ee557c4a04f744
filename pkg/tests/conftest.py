import sys
import numpy as np
import pytest
from hypothesis import strategies as st

from cocycle_lab import ShiftSystem, SymbolicPoint, rotation, table_from_symbols


@pytest.fixture
def full2():
    return ShiftSystem.full(2)


@pytest.fixture
def standard_pair():
    """A0 = diag(1.2, 0.9), A1 = R(0.3) diag(1.1, 1), window 0."""
    return table_from_symbols([np.diag([1.2, 0.9]), rotation(0.3) @ np.diag([1.1, 1.0])])


def words(k=2, min_size=1, max_size=4):
    return st.lists(st.integers(0, k - 1), min_size=min_size, max_size=max_size).map(tuple)


@st.composite
def points(draw, k=2):
    return SymbolicPoint(draw(words(k)), draw(words(k, 0, 6)), draw(words(k)), k, draw(st.integers(-5, 5)))


def long_range(skew=True, theta=0.5):
    from cocycle_lab import builtin_long_range

    L0 = [[0.0, 0.05], [-0.05, 0.0]] if skew else [[0.02, 0.05], [0.01, -0.03]]
    return builtin_long_range([np.diag([1.1, 0.95]), rotation(0.4)], L0, [0.0, 1.0], theta)


def window1(system, seed=0, spread=0.15, field="real"):
    from cocycle_lab.cocycle import table_from_function

    rng = np.random.default_rng(seed)
    return table_from_function(
        system, 1, lambda w: np.eye(2) + spread * rng.standard_normal((2, 2)) + 0.1 * np.diag([1, -1]) * w[1], field=field
    )


def stable_pair(rng, k=2, depth=0, tail_len=8):
    """Two points agreeing on all n >= 0 (and on [-depth, 0)), differing at -depth-1."""
    right = tuple(rng.integers(0, k, rng.integers(1, 4)))
    fwd = tuple(rng.integers(0, k, tail_len))
    past = [tuple(rng.integers(0, k, tail_len)) for _ in range(2)]
    past[1] = past[1][: tail_len - depth - 1] + ((past[0][tail_len - depth - 1] + 1) % k,) + past[0][tail_len - depth :]
    pts = [SymbolicPoint(tuple(rng.integers(0, k, 2)), p + fwd, right, k, -tail_len) for p in past]
    return pts[0], pts[1]


def unstable_pair(rng, k=2, depth=0, tail_len=8):
    """Two points agreeing on all n < 0 (and on [0, depth)), differing at coordinate depth."""
    left = tuple(rng.integers(0, k, rng.integers(1, 4)))
    back = tuple(rng.integers(0, k, tail_len))
    fut = [tuple(rng.integers(0, k, tail_len)) for _ in range(2)]
    fut[1] = fut[0][:depth] + ((fut[0][depth] + 1) % k,) + fut[1][depth + 1 :]
    pts = [SymbolicPoint(left, back + f, tuple(rng.integers(0, k, 2)), k, -tail_len) for f in fut]
    return pts[0], pts[1]


def third_point(rng, x, kind, k=2, tail_len=8):
    """A point in the same local stable (unstable) set as ``x``."""
    if kind == "s":
        # copy x up to a point where its right tail restarts in phase
        end = 40
        while (end - x.end) % len(x.right_tail) or end < x.end:
            end += 1
        left = tuple(rng.integers(0, k, 2))
        return SymbolicPoint(left, tuple(rng.integers(0, k, tail_len)) + tuple(x.window(0, end)), x.right_tail, k, -tail_len)
    start = -40
    while (x.start - start) % len(x.left_tail) or start > x.start:
        start -= 1
    return SymbolicPoint(x.left_tail, tuple(x.window(start, 0)) + tuple(rng.integers(0, k, tail_len)), tuple(rng.integers(0, k, 2)), k, start)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
