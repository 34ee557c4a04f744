import dataclasses

import numpy as np
import pytest

from cocycle_lab import (
    certify_bunching,
    constant_cocycle,
    holonomy_identities_check,
    parse_point,
    product,
    rotation,
    stable_holonomy,
    stable_holonomy_derivative,
    unstable_holonomy,
    unstable_holonomy_derivative,
)
from cocycle_lab.cocycle import opnorm, tangent_table, zero_tangent
from cocycle_lab.errors import PreconditionError
from cocycle_lab.holonomy import holonomy_sequence, tail_bound
from cocycle_lab.shift import distance, shift

from conftest import long_range, stable_pair, third_point, unstable_pair, window1


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_window0_stable_is_identity(full2, standard_pair):
    cert = certify_bunching(standard_pair, full2)
    rng = np.random.default_rng(0)
    for _ in range(10):
        x, y = stable_pair(rng)
        r = stable_holonomy(standard_pair, cert, x, y)
        assert r.exact and r.error_bound == 0
        np.testing.assert_allclose(r.value, np.eye(2), atol=1e-14)


def test_window1_stable_exact(full2):
    A = window1(full2)
    cert = certify_bunching(A, full2)
    rng = np.random.default_rng(1)
    for _ in range(10):
        x, y = stable_pair(rng)
        r = stable_holonomy(A, cert, x, y)
        np.testing.assert_allclose(r.value, np.linalg.solve(A.evaluate(y), A.evaluate(x)), rtol=1e-13)
        np.testing.assert_allclose(r.value, holonomy_sequence(A, "s", x, y, 10)[-1], rtol=1e-12)


def test_long_range_truncation(full2):
    A = long_range()
    cert = certify_bunching(A, full2)
    assert not cert.exhaustive
    x = parse_point("0|01|0", 2)
    y = parse_point("1|01|0", 2)
    assert distance(x, y) == 1.0
    r = stable_holonomy(A, cert, x, y, tol=1e-8)
    assert not r.exact and r.error_bound < 1e-8
    deep = holonomy_sequence(A, "s", x, y, r.terms_used + 20)[-1]
    assert opnorm(r.value - deep) <= 1e-8
    # a tighter tolerance needs more terms and never a larger bound
    r2 = stable_holonomy(A, cert, x, y, tol=1e-10)
    assert r2.terms_used >= r.terms_used and r2.error_bound <= r.error_bound


def test_unstable_examples(full2, standard_pair):
    cert = certify_bunching(standard_pair, full2)
    p, q = parse_point("0||0", 2), parse_point("0|1|0", 2)
    r = unstable_holonomy(standard_pair, cert, p, q)
    np.testing.assert_allclose(r.value, np.eye(2), atol=1e-14)
    C = constant_cocycle(full2, rotation(0.2) @ np.diag([1.1, 0.9]))
    np.testing.assert_allclose(unstable_holonomy(C, certify_bunching(C, full2), p, q).value, np.eye(2), atol=1e-14)
    A = window1(full2, seed=4)
    cert = certify_bunching(A, full2)
    rng = np.random.default_rng(2)
    for _ in range(10):
        x, y = unstable_pair(rng)
        r = unstable_holonomy(A, cert, x, y)
        np.testing.assert_allclose(r.value, holonomy_sequence(A, "u", x, y, 12)[-1], rtol=1e-12)
        # window 1: one backward step, A(f^-1 y) A(f^-1 x)^-1
        ex = A.evaluate(shift(y, -1)) @ np.linalg.inv(A.evaluate(shift(x, -1)))
        np.testing.assert_allclose(r.value, ex, rtol=1e-12)


def test_rejections(full2, standard_pair):
    cert = certify_bunching(standard_pair, full2)
    x, y = parse_point("0||0", 2), parse_point("0|1|0", 2)
    with pytest.raises(PreconditionError):
        stable_holonomy(standard_pair, cert, x, y)
    with pytest.raises(PreconditionError):
        unstable_holonomy(standard_pair, cert, x, y, tol=0)
    with pytest.raises(PreconditionError):
        holonomy_identities_check(standard_pair, cert, x, x, x, 0)


def test_identities_constant(full2):
    C = constant_cocycle(full2, rotation(0.2) @ np.diag([1.1, 0.9]))
    cert = certify_bunching(C, full2)
    rng = np.random.default_rng(3)
    x, y = stable_pair(rng)
    z = third_point(rng, x, "s")
    rep = holonomy_identities_check(C, cert, x, y, z, 3)
    assert rep.composition == 0 and rep.inverse == 0 and rep.equivariance < 1e-15


@pytest.mark.parametrize("kind", ["s", "u"])
def test_identities_window1(full2, kind):
    A = window1(full2, seed=6)
    cert = certify_bunching(A, full2)
    rng = np.random.default_rng(4)
    for j in range(1, 9):
        x, y = (stable_pair if kind == "s" else unstable_pair)(rng)
        z = third_point(rng, x, kind)
        rep = holonomy_identities_check(A, cert, x, y, z, j, kind=kind)
        assert rep.ok
        assert max(rep.composition, rep.inverse) <= 1e-12
        scale = opnorm(product(A, y, j if kind == "s" else -j)) * opnorm(np.linalg.inv(product(A, x, j if kind == "s" else -j)))
        assert rep.equivariance <= 1e-10 * scale


@pytest.mark.parametrize("kind", ["s", "u"])
def test_identities_long_range(full2, kind):
    A = long_range()
    cert = certify_bunching(A, full2)
    rng = np.random.default_rng(5)
    x, y = (stable_pair if kind == "s" else unstable_pair)(rng)
    z = third_point(rng, x, kind)
    rep = holonomy_identities_check(A, cert, x, y, z, 2, tol=1e-8, kind=kind)
    assert rep.ok
    assert max(rep.composition, rep.inverse, rep.equivariance) <= 3e-8


@pytest.mark.parametrize("skew", [True, False])
def test_cauchy_rate(full2, skew):
    A = long_range(skew)
    cert = certify_bunching(A, full2)
    rng = np.random.default_rng(6)
    for depth in (0, 2):
        for kind, pair in (("s", stable_pair), ("u", unstable_pair)):
            x, y = pair(rng, depth=depth)
            d = distance(x, y)
            H = holonomy_sequence(A, kind, x, y, 41)
            for n in range(41):
                assert opnorm(H[n + 1] - H[n]) <= cert.C * cert.C2 * cert.tau**n * d**cert.eta


def test_continuity_bound(full2):
    A = long_range(False)
    cert = certify_bunching(A, full2)
    rng = np.random.default_rng(7)
    for depth in range(6):
        x, y = stable_pair(rng, depth=depth, tail_len=10)
        d = distance(x, y)
        h = stable_holonomy(A, cert, x, y, tol=1e-12)
        assert opnorm(h.value - np.eye(2)) <= cert.C * cert.C2 * d**cert.eta / (1 - cert.tau) + h.error_bound


def test_tail_bound_monotone(full2):
    cert = certify_bunching(long_range(), full2)
    b = [tail_bound(cert, 0.5, n) for n in range(50)]
    assert all(u > v for u, v in zip(b, b[1:]))


def test_derivative_zero_cases(full2, standard_pair):
    cert = certify_bunching(standard_pair, full2)
    rng = np.random.default_rng(8)
    x, y = stable_pair(rng)
    assert not stable_holonomy_derivative(standard_pair, cert, zero_tangent(standard_pair), x, y).any()
    T = tangent_table({(0,): rng.standard_normal((2, 2)), (1,): rng.standard_normal((2, 2))}, 0, 2)
    np.testing.assert_allclose(stable_holonomy_derivative(standard_pair, cert, T, x, y), 0, atol=1e-14)
    u, v = unstable_pair(rng)
    assert not unstable_holonomy_derivative(standard_pair, cert, zero_tangent(standard_pair), u, v).any()
    # constant A, tangent supported on the word 111 that neither backward orbit visits
    C = constant_cocycle(full2, rotation(0.2) @ np.diag([1.1, 0.9])).widen(full2, 1)
    Tw = tangent_table({w: (np.eye(2) if w == (1, 1, 1) else np.zeros((2, 2))) for w in C.words}, 1, 2)
    p, q = parse_point("0||0", 2), parse_point("0|1|0", 2)
    np.testing.assert_allclose(unstable_holonomy_derivative(C, certify_bunching(C, full2), Tw, p, q), 0, atol=1e-14)


def _fd(A, T, kind, x, y, h, system):
    def H(B):
        return (stable_holonomy if kind == "s" else unstable_holonomy)(B, certify_bunching(B, system), x, y).value

    return (H(A.perturbed(T, h)) - H(A.perturbed(T, -h))) / (2 * h)


@pytest.mark.parametrize("kind", ["s", "u"])
def test_derivative_finite_difference(full2, kind):
    rng = np.random.default_rng(9)
    for seed in range(4):
        A = window1(full2, seed=seed, field="complex")
        cert = certify_bunching(A, full2)
        x, y = (stable_pair if kind == "s" else unstable_pair)(rng)
        T = tangent_table({w: rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) for w in A.words}, 1, 2)
        D = (stable_holonomy_derivative if kind == "s" else unstable_holonomy_derivative)(A, cert, T, x, y)
        errs = [rel(_fd(A, T, kind, x, y, h, full2), D) for h in (1e-3, 1e-4)]
        assert errs[1] <= 1e-6
        slope = np.log10(errs[0] / errs[1])
        assert 1.7 <= slope <= 2.3


def test_derivative_single_word(full2):
    A = window1(full2, seed=11, field="complex")
    cert = certify_bunching(A, full2)
    rng = np.random.default_rng(10)
    x, y = stable_pair(rng)
    word = tuple(int(c) for c in x.window(-1, 2))
    T = tangent_table({w: (rng.standard_normal((2, 2)) if w == word else np.zeros((2, 2))) for w in A.words}, 1, 2)
    D = stable_holonomy_derivative(A, cert, T, x, y)
    assert np.linalg.norm(D) > 0
    assert rel(_fd(A, T, "s", x, y, 1e-5, full2), D) <= 1e-6


def test_derivative_long_range(full2):
    # the tangent direction is a table; the perturbed long-range cocycle keeps its constants
    A = long_range(False)
    cert = certify_bunching(A, full2)
    rng = np.random.default_rng(11)
    T = tangent_table({w: rng.standard_normal((2, 2)) for w in full2.words(3)}, 1, 2)
    x, y = stable_pair(rng)
    D = stable_holonomy_derivative(A, cert, T, x, y, tol=1e-10)
    h = 1e-5

    def H(s):
        B = dataclasses.replace(A, evaluator=lambda z: A.evaluator(z) + s * T.evaluate(z))
        return stable_holonomy(B, cert, x, y, tol=1e-13).value

    fd = (H(h) - H(-h)) / (2 * h)
    assert rel(fd, D) <= 1e-6
