"""Cylinder-supported edits that restore pinching and twisting, and the submersion rank probe."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .cocycle import MatrixTable, TableCocycle, certify_bunching, opnorm, product
from .criterion import (
    DELTA_PINCH,
    DELTA_TWIST,
    SimplicityCertificate,
    certify_simple,
    check_pinching,
    check_twisting,
    pinching_margin,
    search_pinching_point,
    transition_map,
)
from .errors import PreconditionError, SupportCollision
from .holonomy import DEFAULT_TOL, stable_holonomy, stable_holonomy_derivative, unstable_holonomy, unstable_holonomy_derivative
from .shift import HomoclinicData, ShiftSystem, SymbolicPoint, Word, format_word, isolating_depth, make_homoclinic, make_periodic, shift

MAX_RETRIES = 16


@dataclass(frozen=True)
class PerturbationPlan:
    """Replacement of a few table entries, all on one window radius.

    ``base_window`` is the radius of the table the plan was computed from;
    reverting narrows back to it when the edit forced a wider table.
    """

    site: str
    support_word: Word
    window: int
    base_window: int
    old_entries: dict = field(default_factory=dict)
    new_entries: dict = field(default_factory=dict)
    size: float = 0.0
    intent: np.ndarray | None = None

    @property
    def empty(self) -> bool:
        return not self.new_entries

    def apply(self, A: TableCocycle, system: ShiftSystem) -> TableCocycle:
        if self.empty:
            return A
        return A.widen(system, self.window).replace(self.new_entries)

    def revert(self, A: TableCocycle, system: ShiftSystem) -> TableCocycle:
        if self.empty:
            return A
        back = A.widen(system, self.window).replace(self.old_entries)
        narrow = back.narrow(min(self.base_window, back.window))
        return back if narrow is None else narrow


def _plan(site, word, table, base_window, updates, intent):
    old = {word: table.entry(word).copy()}
    new = {word: np.asarray(updates, dtype=table.mats.dtype)}
    size = opnorm(new[word] - old[word])
    return PerturbationPlan(site, word, table.window, base_window, old, new, size, np.asarray(intent))


def _empty(site, word, window, base_window, intent):
    return PerturbationPlan(site, word, window, base_window, {}, {}, 0.0, np.asarray(intent))


def _same(a, b) -> bool:
    return opnorm(np.asarray(a) - np.asarray(b)) <= 1e-15 * max(1.0, opnorm(np.asarray(b)))


def _collisions(word: Word, radius: int, points):
    return [z for z in points if tuple(int(s) for s in z.window(-radius, radius + 1)) == word]


# ---------------------------------------------------------------------------
# periodic edits


def perturb_periodic(
    A: TableCocycle,
    system: ShiftSystem,
    p: SymbolicPoint,
    target,
    depth: int | None = None,
    avoid=(),
) -> PerturbationPlan:
    """Edit the entry on ``p``'s window word so that ``A'^per(p)(p) = target``.

    The new entry is ``A(p) P^-1 target`` with ``P`` the current period
    matrix; every other orbit point of ``p`` (and every point in ``avoid``)
    must carry a different window word of radius ``depth``.
    """
    target = np.asarray(target)
    if not p.is_periodic:
        raise PreconditionError("p must be periodic")
    if abs(np.linalg.det(target)) == 0 or np.linalg.cond(target) > 1e12:
        raise PreconditionError("target period matrix must be invertible")
    n = p.period
    orbit = [shift(p, j) for j in range(1, n)]
    need = max(A.window, isolating_depth(p, orbit))
    if depth is None:
        depth = need
    depth = max(depth, A.window)
    word = tuple(int(s) for s in p.window(-depth, depth + 1))
    hits = _collisions(word, depth, orbit) + _collisions(word, depth, avoid)
    if hits:
        raise SupportCollision(
            f"depth {depth} cylinder at {p} also contains {', '.join(map(str, hits))} (need depth >= {need})", hits
        )
    B = A.widen(system, depth)
    P = product(B, p, n)
    if _same(P, target):
        return _empty("periodic", word, depth, A.window, target)
    new = B.entry(word) @ np.linalg.solve(P, target)
    return _plan("periodic", word, B, A.window, new, target)


# ---------------------------------------------------------------------------
# homoclinic edits


def psi_evaluation_points(h: HomoclinicData, radius: int, extra: int = 3) -> list[SymbolicPoint]:
    """Every point where a window-``radius`` table is read while computing ``Psi`` and the period matrix,
    except ``q`` itself. ``extra`` covers the stabilization check of the holonomy engine."""
    p, q, m = h.p, h.q, h.m
    pts = [shift(q, j) for j in range(1, m)]
    span = radius + extra
    pts += [shift(q, m + j) for j in range(span)]
    pts += [shift(p, j) for j in range(max(span, p.period))]
    pts += [shift(p, -j) for j in range(1, span + 1)]
    pts += [shift(q, -j) for j in range(1, span + 1)]
    return pts


def homoclinic_depth(A: TableCocycle, h: HomoclinicData) -> int:
    """Least radius ``>= A.window`` at which ``q``'s window word is read nowhere else in ``Psi``."""
    depth = A.window
    while True:
        need = isolating_depth(h.q, psi_evaluation_points(h, depth))
        if need <= depth:
            return depth
        depth = need


def perturb_homoclinic(
    A: TableCocycle,
    system: ShiftSystem,
    h: HomoclinicData,
    target_psi,
    depth: int | None = None,
    tol: float = DEFAULT_TOL,
    cert=None,
) -> PerturbationPlan:
    """Edit the entry on ``q``'s window word so that ``Psi_{A',p,q} = target_psi``.

    The new entry is ``A^{m-1}(f q)^-1 (H^s)^-1 target (H^u)^-1``.  Holonomies
    and the period matrix never read that entry, which is rechecked after the edit.
    """
    target_psi = np.asarray(target_psi)
    if np.linalg.cond(target_psi) > 1e12:
        raise PreconditionError("target transition map must be invertible")
    need = homoclinic_depth(A, h)
    if depth is None:
        depth = need
    depth = max(depth, A.window)
    word = tuple(int(s) for s in h.q.window(-depth, depth + 1))
    hits = _collisions(word, depth, psi_evaluation_points(h, depth))
    if hits:
        raise SupportCollision(
            f"depth {depth} cylinder at q = {h.q} contains evaluation point(s) {', '.join(map(str, hits[:4]))} (need depth >= {need})",
            hits,
        )
    B = A.widen(system, depth)
    if cert is None:
        cert = certify_bunching(B, system)
    psi, _ = transition_map(B, cert, h, tol)
    if _same(psi, target_psi):
        return _empty("homoclinic", word, depth, A.window, target_psi)
    hs = stable_holonomy(B, cert, shift(h.q, h.m), h.p, tol).value
    hu = unstable_holonomy(B, cert, h.p, h.q, tol).value
    rest = product(B, shift(h.q, 1), h.m - 1)
    new = np.linalg.solve(hs @ rest, target_psi) @ np.linalg.inv(hu)
    if B.real and np.isrealobj(B.mats):
        new = new.real
    plan = _plan("homoclinic", word, B, A.window, new, target_psi)
    # support check by recomputation
    B2 = plan.apply(B, system)
    P0, P1 = product(B, h.p, h.p.period), product(B2, h.p, h.p.period)
    if not np.array_equal(P0, P1):
        raise AssertionError("homoclinic edit changed the period matrix")
    hs2 = stable_holonomy(B2, cert, shift(h.q, h.m), h.p, tol).value
    hu2 = unstable_holonomy(B2, cert, h.p, h.q, tol).value
    if opnorm(hs2 - hs) > 1e-12 * max(1.0, opnorm(hs)) or opnorm(hu2 - hu) > 1e-12 * max(1.0, opnorm(hu)):
        raise AssertionError("homoclinic edit changed a holonomy")
    return plan


# ---------------------------------------------------------------------------
# two-stage repair


def default_connector(p: SymbolicPoint, system: ShiftSystem, max_blocks: int = 3) -> HomoclinicData:
    """First admissible connector (shortest, then lexicographic) giving a homoclinic point of ``p``."""
    n = p.period
    for k in range(1, max_blocks + 1):
        for c in system.words(n * k):
            try:
                return make_homoclinic(p, c, system)
            except (PreconditionError, ValueError):
                continue
    raise PreconditionError(f"no connector of length <= {max_blocks * n} for {p}")


def _random_skew(rng, d, real):
    """Skew-Hermitian (real: skew-symmetric) matrix of unit spectral norm."""
    if real:
        G = rng.standard_normal((d, d))
        K = G - G.T
    else:
        G = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        K = G - G.conj().T
    return K / opnorm(K)


def _pinching_target(P, eps, rng, real, scale):
    vals, V = np.linalg.eig(P)
    if np.linalg.cond(V) > 1e6:
        # nudge a defective matrix to a diagonalizable neighbor
        noise = rng.standard_normal(P.shape)
        if not real:
            noise = noise + 1j * rng.standard_normal(P.shape)
        vals, V = np.linalg.eig(P + eps / 64 * opnorm(P) * noise / opnorm(noise))
    order = np.argsort(-np.abs(vals), kind="stable")
    vals, V = vals[order], V[:, order]
    d = len(vals)
    # distinct factors in [1 - eps/4, 1 + eps/4], largest on the largest modulus
    spread = np.sort(rng.uniform(0.5, 1.0, d))[::-1] * np.linspace(1.0, -1.0, d) if d > 1 else np.zeros(1)
    factors = 1.0 + scale * eps / 4 * spread
    T = V @ np.diag(vals * factors) @ np.linalg.inv(V)
    if real:
        T = T.real
    return T


def _entry_change(plans) -> float:
    return max((pl.size for pl in plans), default=0.0)


def make_simple(
    A: TableCocycle,
    system: ShiftSystem,
    eps: float,
    delta_pinch: float = DELTA_PINCH,
    delta_twist: float = DELTA_TWIST,
    rng_seed: int = 0,
    max_period: int = 4,
    tol: float = DEFAULT_TOL,
):
    """Two-stage repair: pinch at a periodic point, then twist along a homoclinic loop.

    Returns ``(A', certificate, plans)`` with every entry moved by less than
    ``eps`` and fiber bunching re-certified.
    """
    if not eps > 0:
        raise PreconditionError("eps must be positive")
    cert0 = certify_bunching(A, system)
    if eps > cert0.perturbation_margin:
        raise PreconditionError(
            f"eps = {eps:g} exceeds the bunching perturbation margin; max admissible eps is {cert0.perturbation_margin:.6g}"
        )
    rng = np.random.default_rng(rng_seed)
    real = A.real
    found = search_pinching_point(A, system, max_period, delta_pinch, real)
    if found is not None:
        p = found[0]
    else:
        p = make_periodic(system.words(1)[0] if system.is_full else _first_periodic(system), system)
    h = default_connector(p, system)
    plans = []

    # stage 1: pinching at p
    pin = check_pinching(A, p, delta_pinch, real)
    B = A
    if not pin.ok:
        if real and pin.eigen.conjugate_pairs:
            raise PreconditionError(
                f"real mode: every periodic orbit up to period {max_period} has a complex conjugate pair; "
                "no real pinching point to perturb"
            )
        scale = 1.0
        for _ in range(40):
            T = _pinching_target(pin.period_matrix, eps, rng, real, scale)
            if pinching_margin(np.linalg.eigvals(T)[np.argsort(-np.abs(np.linalg.eigvals(T)))]) > delta_pinch:
                plan = perturb_periodic(A, system, p, T, avoid=[shift(h.q, j) for j in range(h.m)])
                if plan.size < eps / 2:
                    break
            scale /= 2
        else:
            raise PreconditionError("could not find a pinching target within eps / 2")
        plans.append(plan)
        B = plan.apply(A, system)
        if not check_pinching(B, p, delta_pinch, real).ok:
            raise AssertionError("stage 1 did not produce pinching")

    # stage 2: twisting at (p, q)
    cert = certify_bunching(B, system)
    sc = certify_simple(B, system, h, delta_pinch, delta_twist, tol, real, cert)
    trajectory = [sc.twisting_margin]
    if sc.verdict == "not-twisting":
        depth = homoclinic_depth(B, h)
        Bw = B.widen(system, depth)
        cert = certify_bunching(Bw, system)
        psi, _ = transition_map(Bw, cert, h, tol)
        hs = stable_holonomy(Bw, cert, shift(h.q, h.m), h.p, tol).value
        hu = unstable_holonomy(Bw, cert, h.p, h.q, tol).value
        rest = product(Bw, shift(h.q, 1), h.m - 1)
        # ||entry change|| <= ||(H^s A^{m-1})^-1|| ||G - I|| ||Psi (H^u)^-1|| and ||G - I|| <= angle
        factor = opnorm(np.linalg.inv(hs @ rest)) * opnorm(psi @ np.linalg.inv(hu))
        a_max = 0.99 * (eps / 2) / factor
        for attempt in range(MAX_RETRIES):
            angle = rng.uniform(0.0, a_max)
            G = scipy.linalg.expm(angle * _random_skew(rng, A.dim, real))
            plan = perturb_homoclinic(Bw, system, h, G @ psi, tol=tol, cert=cert)
            C = plan.apply(Bw, system)
            sc = certify_simple(C, system, h, delta_pinch, delta_twist, tol, real)
            trajectory.append(sc.twisting_margin)
            if sc.simple and plan.size < eps / 2:
                break
        else:
            raise PreconditionError(f"twisting repair failed after {MAX_RETRIES} retries; margins {trajectory}")
        if plans:
            # express stage 1 on the final window so that both plans apply to A in order
            plans[0] = _rewindow(plans[0], system, plan.window)
        plans.append(_rebase(plan, A.window))
        B = C
    elif sc.verdict != "simple":
        raise AssertionError(f"unexpected verdict {sc.verdict} after stage 1")
    certify_bunching(B, system)
    return B, sc, plans


def _first_periodic(system):
    for n in range(1, system.alphabet_size + 2):
        for w in system.words(n):
            if system.is_admissible(w, cyclic=True):
                return w
    raise PreconditionError("system has no periodic point")


def _rebase(plan: PerturbationPlan, base_window: int) -> PerturbationPlan:
    return PerturbationPlan(plan.site, plan.support_word, plan.window, base_window, plan.old_entries, plan.new_entries, plan.size, plan.intent)


def _rewindow(plan: PerturbationPlan, system: ShiftSystem, window: int) -> PerturbationPlan:
    """The same edit listed on every window word of radius ``window`` that extends the support word."""
    if plan.window == window or plan.empty:
        return plan
    cut = window - plan.window
    old, new = {}, {}
    for w in system.words(2 * window + 1):
        core = w[cut : len(w) - cut]
        if core in plan.new_entries:
            old[w] = plan.old_entries[core]
            new[w] = plan.new_entries[core]
    return PerturbationPlan(plan.site, plan.support_word, window, plan.base_window, old, new, plan.size, plan.intent)


# ---------------------------------------------------------------------------
# submersion probe


@dataclass(frozen=True)
class RankReport:
    rank: int
    expected: int
    columns: int
    singular_values: np.ndarray
    threshold: float
    full_rank: bool | None
    analytic_discrepancy: float
    window: int
    site_words: tuple
    seed: int

    @property
    def ok(self) -> bool:
        return self.full_rank is not False and self.analytic_discrepancy <= 1e-4


def _theta_hat(B, cert, sites, tol):
    parts = []
    for h in sites:
        parts.append(product(B, h.p, h.p.period).ravel())
    for h in sites:
        parts.append(transition_map(B, cert, h, tol)[0].ravel())
    return np.concatenate(parts)


def _theta_hat_derivative(B, cert, sites, T, tol):
    parts = []
    for h in sites:
        n = h.p.period
        parts.append(_product_derivative(B, T, h.p, n).ravel())
    for h in sites:
        hs = stable_holonomy(B, cert, shift(h.q, h.m), h.p, tol).value
        hu = unstable_holonomy(B, cert, h.p, h.q, tol).value
        Am = product(B, h.q, h.m)
        dhs = stable_holonomy_derivative(B, cert, T, shift(h.q, h.m), h.p, tol)
        dhu = unstable_holonomy_derivative(B, cert, T, h.p, h.q, tol)
        dAm = _product_derivative(B, T, h.q, h.m)
        parts.append((dhs @ Am @ hu + hs @ dAm @ hu + hs @ Am @ dhu).ravel())
    return np.concatenate(parts)


def _product_derivative(B, T, x, n):
    """Leibniz rule for ``A^n(x)``: sum over the factor that is differentiated."""
    out = np.zeros((B.dim, B.dim), dtype=complex)
    for j in range(n):
        xj = shift(x, j)
        out += product(B, shift(xj, 1), n - j - 1) @ T.evaluate(xj) @ product(B, x, j)
    return out


def site_window(A: TableCocycle, sites) -> int:
    """Least radius giving every site its own window word, none read by another site's objects."""
    depth = A.window
    while True:
        words = []
        for h in sites:
            words.append(tuple(int(s) for s in h.p.window(-depth, depth + 1)))
        for h in sites:
            words.append(tuple(int(s) for s in h.q.window(-depth, depth + 1)))
        clash = len(set(words)) < len(words)
        if not clash:
            for i, h in enumerate(sites):
                qword = words[len(sites) + i]
                for k, g in enumerate(sites):
                    pts = psi_evaluation_points(g, depth)
                    if k != i:
                        pts = pts + [g.q]
                    if _collisions(qword, depth, pts):
                        clash = True
                        break
                if clash:
                    break
        if not clash:
            return depth
        depth += 1
        if depth > 64:
            raise SupportCollision("sites cannot be separated by window words of radius <= 64")


def submersion_rank_probe(
    A: TableCocycle,
    system: ShiftSystem,
    sites,
    directions: int | None = None,
    h: float = 1e-5,
    rng_seed: int = 0,
    tol: float = DEFAULT_TOL,
    check_columns: int = 4,
) -> RankReport:
    """Numerical rank of ``B -> (B^per(p_i)(p_i), Psi_{B,p_i,q_i})_i`` along tangents supported on the sites.

    Columns are central differences with step ``h`` along random complex
    tables carried by the site window words; the first ``check_columns``
    are compared with the analytic derivative.
    """
    if not 1e-7 <= h <= 1e-3:
        raise PreconditionError("step h must lie in [1e-7, 1e-3]")
    sites = [s if isinstance(s, HomoclinicData) else HomoclinicData(*s) for s in sites]
    d, l = A.dim, len(sites)
    expected = 2 * l * d * d
    if directions is None:
        directions = expected + 4
    depth = site_window(A, sites)
    B = A.widen(system, depth)
    cert = certify_bunching(B, system)
    words = [tuple(int(s) for s in g.p.window(-depth, depth + 1)) for g in sites]
    words += [tuple(int(s) for s in g.q.window(-depth, depth + 1)) for g in sites]
    rng = np.random.default_rng(rng_seed)
    cols, worst = [], 0.0
    for j in range(directions):
        mats = np.zeros(B.mats.shape, dtype=complex)
        for w in words:
            mats[B.index[w]] = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        T = MatrixTable.from_arrays(B.words, mats, B.window, B.alphabet_size)
        plus = _theta_hat(B.perturbed(T, h), cert, sites, tol)
        minus = _theta_hat(B.perturbed(T, -h), cert, sites, tol)
        col = (plus - minus) / (2 * h)
        cols.append(col)
        if j < check_columns:
            exact = _theta_hat_derivative(B, cert, sites, T, tol)
            worst = max(worst, float(np.linalg.norm(col - exact) / np.linalg.norm(exact)))
    J = np.array(cols).T
    s = np.linalg.svd(J, compute_uv=False)
    threshold = h**1.5 * max(1.0, float(s[0]))
    rank = int(np.sum(s > threshold))
    full = (rank == expected) if directions >= expected else None
    return RankReport(rank, expected, directions, s, threshold, full, worst, depth, tuple(format_word(w, A.alphabet_size) for w in words), rng_seed)
