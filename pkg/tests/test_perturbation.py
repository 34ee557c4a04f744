import numpy as np
import pytest

from cocycle_lab import (
    ShiftSystem,
    certify_bunching,
    certify_simple,
    constant_cocycle,
    make_homoclinic,
    make_periodic,
    make_simple,
    perturb_homoclinic,
    perturb_periodic,
    product,
    rotation,
    submersion_rank_probe,
    table_from_symbols,
    transition_map,
)
from cocycle_lab import parse_point
from cocycle_lab.cocycle import TableCocycle, opnorm
from cocycle_lab.errors import PreconditionError, SupportCollision
from cocycle_lab.holonomy import stable_holonomy, unstable_holonomy
from cocycle_lab.perturbation import site_window
from cocycle_lab.shift import shift

from conftest import window1


def max_change(A, B, system):
    w = max(A.window, B.window)
    a, b = A.widen(system, w), B.widen(system, w)
    return float(np.max(np.linalg.norm(a.mats - b.mats, 2, axis=(1, 2))))


def test_periodic_fixed_point(full2, standard_pair):
    p = make_periodic("0", full2)
    T = np.array([[1.25, 0.02], [0.0, 0.85]])
    plan = perturb_periodic(standard_pair, full2, p, T)
    B = plan.apply(standard_pair, full2)
    np.testing.assert_allclose(B.entry((0,)), T, rtol=1e-14)
    np.testing.assert_array_equal(B.entry((1,)), standard_pair.entry((1,)))
    assert plan.size == pytest.approx(opnorm(T - standard_pair.entry((0,))))


def test_periodic_period_two(full2):
    A = window1(full2, seed=1)
    p = make_periodic("01", full2)
    T = product(A, p, 2) @ rotation(0.05)
    plan = perturb_periodic(A, full2, p, T)
    B = plan.apply(A, full2)
    np.testing.assert_allclose(product(B, p, 2), T, rtol=1e-13)
    assert len(plan.new_entries) == 1


def test_periodic_no_op_and_collision(full2, standard_pair):
    p = make_periodic("0", full2)
    plan = perturb_periodic(standard_pair, full2, p, np.diag([1.2, 0.9]))
    assert plan.empty and plan.size == 0
    assert plan.apply(standard_pair, full2) is standard_pair
    # an avoided point carrying the same radius-0 word
    with pytest.raises(SupportCollision) as err:
        perturb_periodic(standard_pair, full2, p, np.eye(2), depth=0, avoid=[parse_point("1|0|1", 2)])
    assert err.value.points


def test_plan_roundtrip(full2):
    A = window1(full2, seed=2)
    h = make_homoclinic(make_periodic("0", full2), "1", full2)
    psi, _ = transition_map(A, certify_bunching(A, full2), h)
    plan = perturb_homoclinic(A, full2, h, rotation(0.1) @ psi)
    B = plan.apply(A, full2)
    assert B != A
    assert plan.revert(B, full2) == A


def test_homoclinic_window0(full2, standard_pair):
    h = make_homoclinic(make_periodic("0", full2), "1", full2)
    target = rotation(0.5) @ np.diag([1.05, 0.98])
    plan = perturb_homoclinic(standard_pair, full2, h, target)
    B = plan.apply(standard_pair, full2)
    # holonomies are identities, so the q entry becomes the target itself
    q_word = plan.support_word
    np.testing.assert_allclose(B.entry(q_word), target, rtol=1e-13)
    psi, _ = transition_map(B, certify_bunching(B, full2), h)
    np.testing.assert_allclose(psi, target, rtol=1e-13)


def test_homoclinic_no_op(full2, standard_pair):
    h = make_homoclinic(make_periodic("0", full2), "1", full2)
    psi, _ = transition_map(standard_pair, certify_bunching(standard_pair, full2), h)
    assert perturb_homoclinic(standard_pair, full2, h, psi).empty


@pytest.mark.parametrize("conn", ["1", "11", "101"])
def test_homoclinic_window1_exact_support(full2, conn):
    A = window1(full2, seed=3)
    h = make_homoclinic(make_periodic("0", full2), conn, full2)
    cert = certify_bunching(A, full2)
    psi, _ = transition_map(A, cert, h)
    target = rotation(0.07) @ psi
    plan = perturb_homoclinic(A, full2, h, target)
    B = plan.apply(A, full2)
    cB = certify_bunching(B, full2)
    psiB, _ = transition_map(B, cB, h)
    assert opnorm(psiB - target) <= 1e-10 * opnorm(target)
    assert np.array_equal(product(A, h.p, 1), product(B, h.p, 1))
    for kind, f in (("s", stable_holonomy), ("u", unstable_holonomy)):
        args = (shift(h.q, h.m), h.p) if kind == "s" else (h.p, h.q)
        assert opnorm(f(A, cert, *args).value - f(B, cB, *args).value) <= 1e-12


def test_make_simple_rotation(full2):
    A = constant_cocycle(full2, rotation(0.3))
    B, sc, plans = make_simple(A, full2, 0.05, rng_seed=0)
    assert sc.simple
    assert [p.site for p in plans] == ["periodic", "homoclinic"]
    assert max_change(A, B, full2) <= 0.05
    for p in plans:
        assert p.size < 0.05 / 2 + 1e-15
    certify_bunching(B, full2)
    # the certificate is reproducible from B
    again = certify_simple(B, full2, sc.homoclinic)
    assert again.simple and again.twisting_margin == pytest.approx(sc.twisting_margin, rel=1e-12)
    # applying the plans in order to A reproduces B, reverting in reverse order restores A
    C = A
    for p in plans:
        C = p.apply(C, full2)
    assert C == B
    for p in reversed(plans):
        C = p.revert(C, full2)
    assert C == A


def test_make_simple_idempotent_and_deterministic(full2):
    A = constant_cocycle(full2, rotation(0.3))
    B, sc, _ = make_simple(A, full2, 0.05, rng_seed=4)
    B2, sc2, plans2 = make_simple(B, full2, 0.05, rng_seed=9)
    assert plans2 == [] and B2 == B
    B3, _, _ = make_simple(A, full2, 0.05, rng_seed=4)
    assert B3 == B


def test_make_simple_already_simple(full2, standard_pair):
    B, sc, plans = make_simple(standard_pair, full2, 0.05)
    assert plans == [] and B == standard_pair and sc.simple


def test_make_simple_only_twisting(full2):
    A = constant_cocycle(full2, np.diag([1.2, 0.9]))
    B, sc, plans = make_simple(A, full2, 0.01, rng_seed=1)
    assert [p.site for p in plans] == ["homoclinic"]
    assert sc.simple and max_change(A, B, full2) <= 0.01


def test_make_simple_openness(full2):
    A = constant_cocycle(full2, rotation(0.3))
    B, sc, _ = make_simple(A, full2, 0.05, rng_seed=2)
    # margins are measured in different units; use a cautious fraction of the smaller one
    size = min(sc.pinching_margin, sc.twisting_margin) / 10
    rng = np.random.default_rng(0)
    for _ in range(20):
        E = rng.standard_normal(B.mats.shape) + 1j * rng.standard_normal(B.mats.shape)
        E *= size * rng.uniform(0, 1) / np.linalg.norm(E, 2, axis=(1, 2))[:, None, None]
        C = TableCocycle.from_arrays(B.words, B.mats + E, B.window, 2)
        assert certify_simple(C, full2, sc.homoclinic).simple


def test_make_simple_rejections(full2):
    A = constant_cocycle(full2, rotation(0.3))
    with pytest.raises(PreconditionError, match="max admissible eps"):
        make_simple(A, full2, 0.9)
    with pytest.raises(PreconditionError):
        make_simple(A, full2, 0.0)
    with pytest.raises(PreconditionError, match="conjugate"):
        make_simple(constant_cocycle(full2, rotation(0.3), field="real"), full2, 0.05)


def test_make_simple_real_mode(full2):
    # conjugate pair at 0^inf, real distinct moduli at 1^inf
    A = table_from_symbols([rotation(0.3), rotation(0.05) @ np.diag([1.3, 0.8]) @ rotation(-0.05)], field="real")
    B, sc, plans = make_simple(A, full2, 0.05)
    assert sc.simple and sc.real_mode and np.isrealobj(B.mats)


def test_make_simple_d3(full2):
    A = constant_cocycle(full2, np.diag([1.1, 1.1, 0.9]) @ scipy_rot3(0.2))
    B, sc, plans = make_simple(A, full2, 0.05, rng_seed=0)
    assert sc.simple and max_change(A, B, full2) <= 0.05


def scipy_rot3(t):
    R = np.eye(3)
    R[:2, :2] = rotation(t)
    return R


def test_site_window(full2, standard_pair):
    s1 = [make_homoclinic(make_periodic("0", full2), "1", full2)]
    assert site_window(standard_pair, s1) == 0
    s2 = s1 + [make_homoclinic(make_periodic("1", full2), "0", full2)]
    assert site_window(standard_pair, s2) == 1


def test_rank_probe(full2, standard_pair):
    s1 = [make_homoclinic(make_periodic("0", full2), "1", full2)]
    rep = submersion_rank_probe(standard_pair, full2, s1)
    assert rep.rank == 8 and rep.full_rank and rep.analytic_discrepancy <= 1e-4
    rep = submersion_rank_probe(standard_pair, full2, s1, directions=5)
    assert rep.rank == 5 and rep.full_rank is None
    with pytest.raises(PreconditionError):
        submersion_rank_probe(standard_pair, full2, s1, h=1e-2)


def test_rank_probe_two_sites(full2, standard_pair):
    sites = [
        make_homoclinic(make_periodic("0", full2), "1", full2),
        make_homoclinic(make_periodic("1", full2), "0", full2),
    ]
    rep = submersion_rank_probe(standard_pair, full2, sites)
    assert rep.window == 1 and rep.rank == 16 and rep.ok
