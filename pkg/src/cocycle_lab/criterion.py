"""Transition maps and the pinching / twisting simplicity criterion."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .cocycle import BunchingCertificate, certify_bunching, opnorm, product
from .errors import InadmissibleError, PreconditionError
from .holonomy import DEFAULT_TOL, stable_holonomy, unstable_holonomy
from .shift import HomoclinicData, ShiftSystem, SymbolicPoint, make_periodic, primitive_root, shift

DELTA_PINCH = 1e-6
DELTA_TWIST = 1e-8
# eigenbasis condition number beyond which a period matrix counts as defective
DEFECTIVE_COND = 1e8


@dataclass(frozen=True)
class EigenData:
    """Eigenvalues sorted by decreasing modulus, with unit eigenvectors as columns."""

    values: np.ndarray
    vectors: np.ndarray
    cond: float
    conjugate_pairs: int = 0

    @property
    def defective(self) -> bool:
        return not self.cond < DEFECTIVE_COND

    def permuted(self, order) -> "EigenData":
        order = list(order)
        return EigenData(self.values[order], self.vectors[:, order], self.cond, self.conjugate_pairs)


def eigen_data(M: np.ndarray) -> EigenData:
    vals, vecs = np.linalg.eig(M)
    order = np.lexsort((np.angle(vals), -np.abs(vals)))
    vals = vals[order]
    vecs = vecs[:, order]
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    cond = float(np.linalg.cond(vecs))
    tiny = 1e-12 * max(1.0, float(np.abs(vals).max()))
    pairs = int(np.sum(vals.imag > tiny)) if np.isrealobj(M) or not np.abs(M.imag).any() else 0
    return EigenData(vals, vecs, cond if math.isfinite(cond) else math.inf, pairs)


def pinching_margin(values: np.ndarray) -> float:
    """Smallest relative modulus gap between consecutive eigenvalues (1 for ``d = 1``)."""
    mod = np.abs(values)
    if len(mod) < 2:
        return 1.0
    return float(((mod[:-1] - mod[1:]) / mod[:-1]).min())


@dataclass(frozen=True)
class PinchingResult:
    ok: bool
    margin: float
    eigen: EigenData
    period_matrix: np.ndarray
    diagnostic: str = ""

    def __iter__(self):
        return iter((self.ok, self.margin, self.eigen))


def check_pinching(A, p: SymbolicPoint, delta_pinch: float = DELTA_PINCH, real_mode: bool | None = None) -> PinchingResult:
    """Do the eigenvalues of ``A^per(p)(p)`` have distinct moduli (with margin ``delta_pinch``)?

    In real mode the number of complex conjugate pairs is reported and any
    such pair fails the check. A defective period matrix never passes.
    """
    if not p.is_periodic:
        raise PreconditionError("pinching needs a periodic point")
    if real_mode is None:
        real_mode = getattr(A, "real", False)
    M = product(A, p, p.period)
    if real_mode:
        M = M.real if np.iscomplexobj(M) else M
    eig = eigen_data(M)
    margin = max(0.0, pinching_margin(eig.values))
    if eig.defective:
        return PinchingResult(False, margin, eig, M, f"defective period matrix: eigenbasis condition {eig.cond:.3g}")
    ok = margin > delta_pinch
    note = ""
    if real_mode and eig.conjugate_pairs:
        ok = False
        note = f"{eig.conjugate_pairs} complex conjugate pair(s)"
    elif not ok:
        note = f"pinching margin {margin:.3g} <= {delta_pinch:.3g}"
    return PinchingResult(ok, margin, eig, M, note)


def transition_map(A, cert: BunchingCertificate, h: HomoclinicData, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, float]:
    """``Psi = H^s_{f^m q, p} A^m(q) H^u_{p,q}`` and a bound on its truncation error."""
    hs = stable_holonomy(A, cert, shift(h.q, h.m), h.p, tol)
    hu = unstable_holonomy(A, cert, h.p, h.q, tol)
    Am = product(A, h.q, h.m)
    psi = hs.value @ Am @ hu.value
    a = opnorm(Am)
    err = hs.error_bound * a * opnorm(hu.value) + opnorm(hs.value) * a * hu.error_bound + hs.error_bound * a * hu.error_bound
    return psi, float(err)


def subsets_pairs(d: int):
    """All ``(I, J)`` index subsets with ``|I| + |J| = d``."""
    idx = range(d)
    for k in range(d + 1):
        for I in itertools.combinations(idx, k):
            for J in itertools.combinations(idx, d - k):
                yield I, J


@dataclass(frozen=True)
class TwistingResult:
    ok: bool
    margin: float
    worst_pair: tuple
    propagated_error: float = 0.0

    def __iter__(self):
        return iter((self.ok, self.margin, self.worst_pair))


def check_twisting(eigen: EigenData, psi: np.ndarray, delta_twist: float = DELTA_TWIST, psi_error: float = 0.0) -> TwistingResult:
    """Smallest singular value of ``[Psi v_I | v_J]`` (unit columns) over every ``(I, J)`` pair.

    Twisting holds when that minimum exceeds ``delta_twist`` plus the error
    that ``psi_error`` can induce on the normalized columns.
    """
    V = eigen.vectors
    d = V.shape[0]
    PV = psi @ V
    lengths = np.linalg.norm(PV, axis=0)
    PV = PV / lengths
    margin = math.inf
    worst = ((), ())
    for I, J in subsets_pairs(d):
        M = np.concatenate([PV[:, list(I)], V[:, list(J)]], axis=1)
        s = float(np.linalg.svd(M, compute_uv=False)[-1])
        if s < margin:
            margin, worst = s, (I, J)
    # each normalized column moves by at most 2 e / ||Psi v||
    propagated = 2.0 * math.sqrt(d) * psi_error / float(lengths.min())
    return TwistingResult(margin > delta_twist + propagated, margin, worst, propagated)


@dataclass(frozen=True)
class SimplicityCertificate:
    p: SymbolicPoint
    q: SymbolicPoint
    m: int
    period_matrix: np.ndarray
    eigen: EigenData
    pinching_margin: float
    psi: np.ndarray | None
    twisting_margin: float
    worst_pair: tuple
    holonomy_error_budget: float
    verdict: str
    delta_pinch: float = DELTA_PINCH
    delta_twist: float = DELTA_TWIST
    tol: float = DEFAULT_TOL
    real_mode: bool = False
    propagated_error: float = 0.0
    diagnostic: str = ""
    bunching: BunchingCertificate | None = field(default=None, compare=False)

    @property
    def simple(self) -> bool:
        return self.verdict == "simple"

    @property
    def homoclinic(self) -> HomoclinicData:
        return HomoclinicData(self.p, self.q, self.m)


def certify_simple(
    A,
    system: ShiftSystem,
    h: HomoclinicData,
    delta_pinch: float = DELTA_PINCH,
    delta_twist: float = DELTA_TWIST,
    tol: float = DEFAULT_TOL,
    real_mode: bool | None = None,
    cert: BunchingCertificate | None = None,
) -> SimplicityCertificate:
    """Bunching, pinching at ``h.p`` and twisting at ``(h.p, h.q)``, bundled as a certificate.

    Raises ``NotFiberBunched`` when the cocycle is not bunched.
    """
    for name, pt in (("p", h.p), ("q", h.q)):
        if pt.alphabet_size != system.alphabet_size or not system.point_is_admissible(pt):
            raise InadmissibleError(f"witness {name} = {pt} is not an admissible point of the system")
    if real_mode is None:
        real_mode = getattr(A, "real", False)
    if cert is None:
        cert = certify_bunching(A, system)
    pin = check_pinching(A, h.p, delta_pinch, real_mode)
    common = dict(
        p=h.p, q=h.q, m=h.m, period_matrix=pin.period_matrix, eigen=pin.eigen, pinching_margin=pin.margin,
        delta_pinch=delta_pinch, delta_twist=delta_twist, tol=tol, real_mode=real_mode, bunching=cert,
    )
    if not pin.ok:
        return SimplicityCertificate(
            psi=None, twisting_margin=0.0, worst_pair=((), ()), holonomy_error_budget=0.0,
            verdict="not-pinching", diagnostic=pin.diagnostic, **common,
        )
    psi, err = transition_map(A, cert, h, tol)
    tw = check_twisting(pin.eigen, psi, delta_twist, err)
    return SimplicityCertificate(
        psi=psi, twisting_margin=tw.margin, worst_pair=tw.worst_pair, holonomy_error_budget=err,
        verdict="simple" if tw.ok else "not-twisting", propagated_error=tw.propagated_error,
        diagnostic="" if tw.ok else f"twisting margin {tw.margin:.3g} at pair {tw.worst_pair}", **common,
    )


def _lyndon(word) -> bool:
    return primitive_root(word) == word and all(word <= word[i:] + word[:i] for i in range(1, len(word)))


def search_pinching_point(A, system: ShiftSystem, max_period: int, delta_pinch: float = DELTA_PINCH, real_mode: bool | None = None):
    """First periodic orbit (shortest, then lexicographic) where ``A`` pinches, as ``(p, margin)`` or ``None``.

    Each orbit is visited once, through its lexicographically least rotation.
    """
    if real_mode is None:
        real_mode = getattr(A, "real", False)
    for n in range(1, max_period + 1):
        for w in system.words(n):
            if not _lyndon(w) or not system.is_admissible(w, cyclic=True):
                continue
            p = make_periodic(w, system)
            res = check_pinching(A, p, delta_pinch, real_mode)
            if res.ok and not (real_mode and np.abs(res.eigen.values.imag).max() > 0):
                return p, res.margin
    return None
