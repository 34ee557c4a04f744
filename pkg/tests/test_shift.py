import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cocycle_lab import (
    HomoclinicData,
    ShiftSystem,
    SymbolicPoint,
    distance,
    induce,
    isolating_depth,
    make_homoclinic,
    make_periodic,
    parse_point,
    shift,
)
from cocycle_lab.errors import InadmissibleError, PreconditionError
from cocycle_lab.shift import (
    agreement_depth,
    format_point,
    in_local_stable,
    in_local_unstable,
    return_time_distribution,
)

from conftest import points

GOLDEN = ShiftSystem(2, np.array([[1, 1], [1, 0]]))


def pt(text):
    return parse_point(text, 2)


def test_shift_examples(full2):
    p = make_periodic("0", full2)
    assert shift(p, 5) == p
    x = pt("0|1|0")
    y = shift(x, 1)
    assert y.coordinate(-1) == 1
    assert all(y.coordinate(n) == 0 for n in range(-20, 20) if n != -1)
    p2 = make_periodic("01", full2)
    assert shift(p2, 2) == p2
    assert shift(p2, 1) != p2


def test_canonical_form():
    # core absorbed by the tails, tails reduced to primitive roots
    assert SymbolicPoint((0, 0), (0, 0), (0,), 2) == SymbolicPoint((0,), (), (0,), 2)
    x = SymbolicPoint((0, 1), (0, 1, 1), (1, 1), 2)
    assert x.right_tail == (1,)
    assert format_point(pt("0|1|0")) == "0|1|0"


def test_distance_examples(full2):
    p = make_periodic("0", full2)
    q = pt("0|1|0")
    assert distance(p, p) == 0.0
    # disagreement at coordinate 0 gives N = 0
    assert distance(p, q, 0.5) == 1.0
    # after one shift the disagreement sits at -1, still inside [-1, 1)
    assert distance(shift(p, 1), shift(q, 1), 0.5) == 1.0
    # a disagreement at coordinate 1 gives N = 1
    assert distance(p, shift(q, -1), 0.5) == 0.5


def test_make_periodic(full2):
    assert make_periodic("0", full2).period == 1
    assert make_periodic("01", full2).period == 2
    assert make_periodic("00", full2).period == 1
    with pytest.raises(InadmissibleError, match="1->1"):
        make_periodic("011", GOLDEN)


def test_make_homoclinic(full2):
    p = make_periodic("0", full2)
    h = make_homoclinic(p, "1", full2)
    assert h.m == 1 and h.q == pt("0|1|0")
    with pytest.raises(PreconditionError):
        make_homoclinic(p, "0", full2)
    p2 = make_periodic("01", full2)
    h2 = make_homoclinic(p2, "11", full2)
    assert h2.m == 2 and h2.q.window(0, 2).tolist() == [1, 1]
    W = 3 * h2.m + 3 * p2.period
    for n in range(-W, 0):
        assert h2.q[n] == p2[n]
    fq = shift(h2.q, h2.m)
    for n in range(0, W):
        assert fq[n] == p2[n]
    with pytest.raises(PreconditionError):
        make_homoclinic(p2, "1", full2)
    with pytest.raises(InadmissibleError):
        make_homoclinic(make_periodic("0", GOLDEN), "11", GOLDEN)


def test_homoclinic_validation(full2):
    p = make_periodic("0", full2)
    with pytest.raises(PreconditionError):
        HomoclinicData(p, pt("1|1|0"), 1)
    with pytest.raises(PreconditionError):
        HomoclinicData(p, pt("0|1|0"), 0)


def test_isolating_depth(full2):
    p = make_periodic("0", full2)
    q = pt("0|1|0")
    assert isolating_depth(q, [p]) == 0
    # f(q) carries its 1 at coordinate -1
    assert isolating_depth(q, [shift(q, 1)]) == 0
    assert isolating_depth(q, [pt("0|11|0")]) == 1
    assert isolating_depth(q, [pt("0|1|0110")]) == 2
    assert isolating_depth(p, [q]) == 0
    with pytest.raises(PreconditionError):
        isolating_depth(q, [q])


def test_induce_examples(full2):
    ind = induce(full2, "0", 3)
    assert [(w.word, w.r) for w in ind.return_words] == [((0,), 1), ((0, 1), 2), ((0, 1, 1), 3)]
    assert [w.word for w in induce(full2, "0", 1).return_words] == [(0,)]
    assert [w.word for w in induce(GOLDEN, "0", 3).return_words] == [(0,), (0, 1)]
    with pytest.raises(InadmissibleError):
        induce(GOLDEN, "11", 3)


def test_induce_brute_force():
    # every admissible word starting with I whose first later occurrence of I starts at r
    sysm = ShiftSystem(3, np.array([[1, 1, 0], [1, 0, 1], [1, 1, 1]]))
    I, R = (0, 1), 6
    expected = set()
    for L in range(len(I) + 1, R + len(I) + 1):
        for w in sysm.words(L):
            if w[: len(I)] != I:
                continue
            occ = [s for s in range(1, L - len(I) + 1) if w[s : s + len(I)] == I]
            if occ and occ[0] == L - len(I):
                expected.add((w[: L - len(I)], L - len(I)))
    got = {(w.word, w.r) for w in induce(sysm, I, R).return_words}
    assert got == expected


def test_kac_identity(full2):
    # sum of mu(J) r / mu([I]) tends to 1 / mu([I]) = 2
    _, masses = return_time_distribution(full2, "0", 60, np.full((2, 2), 0.5))
    r = np.arange(len(masses))
    assert abs((masses * r).sum() - 2.0) < 1e-12
    _, masses = return_time_distribution(full2, "00", 200, np.full((2, 2), 0.5))
    assert abs((masses * np.arange(len(masses))).sum() - 4.0) < 1e-9


@settings(max_examples=100, deadline=None)
@given(points(), st.integers(-64, 64))
def test_shift_roundtrip(x, j):
    assert shift(shift(x, j), -j) == x
    y = shift(x, j)
    for n in range(-10, 10):
        assert y[n] == x[n + j]


@settings(max_examples=100, deadline=None)
@given(points(), points())
def test_equality_is_coordinatewise(x, y):
    L = 2 * sum(len(z.left_tail) + len(z.core) + len(z.right_tail) + abs(z.start) for z in (x, y))
    same = all(x[n] == y[n] for n in range(-L, L + 1))
    assert (x == y) == same
    assert (parse_point(format_point(x), 2) == x)


@settings(max_examples=100, deadline=None)
@given(points(), points(), points())
def test_ultrametric(x, y, z):
    dxy, dyz, dxz = distance(x, y), distance(y, z), distance(x, z)
    assert dxy == distance(y, x)
    assert dxz <= max(dxy, dyz) + 1e-15
    assert (dxy == 0) == (x == y)


@settings(max_examples=100, deadline=None)
@given(points(), st.lists(st.integers(0, 1), min_size=1, max_size=3), st.integers(1, 6))
def test_stable_contraction(x, tail, k):
    # y agrees with x on n > -k and differs at -k
    L = k + 2
    n = len(x.right_tail)
    b = x.end + n * max(0, -(-(1 - x.end) // n))
    core = x.window(-L, b).copy()
    core[L - k] = 1 - core[L - k]
    y = SymbolicPoint(tuple(tail), tuple(core), x.right_tail, 2, -L)
    assert in_local_stable(x, y) and x != y
    assert distance(shift(x, 1), shift(y, 1)) == pytest.approx(0.5 * distance(x, y))
    assert agreement_depth(x, y) == k - 1


@settings(max_examples=100, deadline=None)
@given(points(), st.lists(st.integers(0, 1), min_size=1, max_size=3), st.integers(0, 6))
def test_unstable_contraction(x, tail, k):
    # y agrees with x on n < k and differs at k
    n = len(x.left_tail)
    a = x.start - n * max(0, -(-x.start // n))
    core = x.window(a, k + 3).copy()
    core[k - a] = 1 - core[k - a]
    y = SymbolicPoint(x.left_tail, tuple(core), tuple(tail), 2, a)
    assert in_local_unstable(x, y) and x != y
    assert distance(shift(x, -1), shift(y, -1)) == pytest.approx(0.5 * distance(x, y))
