"""Stable and unstable holonomies and their derivatives with respect to the cocycle."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cocycle import BunchingCertificate, MatrixTable, opnorm, product
from .errors import PreconditionError, TruncationError
from .shift import SymbolicPoint, distance, in_local_stable, in_local_unstable, shift

MAX_TERMS = 10_000
DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class HolonomyResult:
    value: np.ndarray
    error_bound: float
    terms_used: int
    exact: bool


def _check_tol(tol):
    if not tol > 0:
        raise PreconditionError("tol must be positive")


def _check_pair(kind, x, y):
    if kind == "s":
        if not in_local_stable(x, y):
            raise PreconditionError(f"{y} is not in the local stable set of {x}")
    elif not in_local_unstable(x, y):
        raise PreconditionError(f"{y} is not in the local unstable set of {x}")


def _eye(A):
    return np.eye(A.dim, dtype=complex)


def holonomy_sequence(A, kind: str, x: SymbolicPoint, y: SymbolicPoint, n_max: int) -> np.ndarray:
    """``H^n`` for ``n = 0..n_max``: forward products for ``kind="s"``, backward for ``"u"``.

    The sequence is accumulated by its increments
    ``H^{n+1} - H^n = A^n(y)^-1 [A(f^n y)^-1 A(f^n x) - I] A^n(x)`` (stable case),
    each of norm at most ``C tau^n``. Forming ``A^n(y)^-1 A^n(x)`` directly
    would cancel two factors whose norms grow like ``cond^n``.
    """
    out = np.empty((n_max + 1, A.dim, A.dim), dtype=complex)
    H = _eye(A)
    left = _eye(A)
    right = _eye(A)
    out[0] = H
    for n in range(n_max):
        if kind == "s":
            ax, ay = A.evaluate(shift(x, n)), A.evaluate(shift(y, n))
            mid = np.linalg.solve(ay, ax - ay)
            H = H + left @ mid @ right
            left = np.linalg.solve(ay.T, left.T).T
            right = ax @ right
        else:
            # H^n = A^n(f^-n y) A^n(f^-n x)^-1
            ax, ay = A.evaluate(shift(x, -n - 1)), A.evaluate(shift(y, -n - 1))
            mid = np.linalg.solve(ax.T, (ay - ax).T).T
            H = H + left @ mid @ right
            left = left @ ay
            right = np.linalg.solve(ax, right)
        # keep the two factors balanced; their product is unchanged
        s = math.sqrt(max(opnorm(right), 1e-300) / max(opnorm(left), 1e-300))
        left, right = left * s, right / s
        out[n + 1] = H
    return out


def _exact_value(A, kind, x, y, n):
    if kind == "s":
        return np.linalg.solve(product(A, y, n), product(A, x, n))
    px = product(A, shift(x, -n), n)
    py = product(A, shift(y, -n), n)
    return np.linalg.solve(px.T, py.T).T


def tail_bound(cert: BunchingCertificate, d: float, n: int) -> float:
    """Sum of the Cauchy increments from ``n`` on: ``C C2 tau^n d^eta / (1 - tau)``."""
    return cert.C * cert.C2 * cert.tau**n * d**cert.eta / (1.0 - cert.tau)


def truncation_index(cert: BunchingCertificate, d: float, tol: float) -> int:
    if d == 0 or cert.C2 == 0:
        return 0
    lead = tail_bound(cert, d, 0)
    if lead < tol:
        return 0
    n = math.ceil(math.log(tol / lead) / math.log(cert.tau))
    while n > 0 and tail_bound(cert, d, n - 1) < tol:
        n -= 1
    while tail_bound(cert, d, n) >= tol:
        n += 1
    if n > MAX_TERMS:
        raise TruncationError(f"holonomy needs {n} terms, above the cap {MAX_TERMS}")
    return n


def _holonomy(A, cert, kind, x, y, tol):
    _check_tol(tol)
    _check_pair(kind, x, y)
    if x == y:
        return HolonomyResult(_eye(A), 0.0, 0, True)
    if isinstance(A, MatrixTable):
        w = A.window
        value = _exact_value(A, kind, x, y, w)
        # the window argument says H^n is constant from n = w on; confirm it
        check = _exact_value(A, kind, x, y, w + 3)
        scale = max(1.0, opnorm(value))
        if opnorm(check - value) > 1e-9 * scale:
            raise AssertionError("finite-window holonomy did not stabilize at the window radius")
        return HolonomyResult(value, 0.0, w, True)
    d = distance(x, y, cert.theta)
    n = truncation_index(cert, d, tol)
    value = holonomy_sequence(A, kind, x, y, n)[-1]
    return HolonomyResult(value, tail_bound(cert, d, n), n, False)


def stable_holonomy(A, cert: BunchingCertificate, x: SymbolicPoint, y: SymbolicPoint, tol: float = DEFAULT_TOL) -> HolonomyResult:
    """``H^s_{x,y} = lim A^n(y)^-1 A^n(x)`` for ``y`` in the local stable set of ``x``.

    Finite-window tables give the exact limit at ``n = w``. Long-range
    cocycles are truncated at the least ``n`` whose certified tail is below ``tol``.
    """
    return _holonomy(A, cert, "s", x, y, tol)


def unstable_holonomy(A, cert: BunchingCertificate, x: SymbolicPoint, y: SymbolicPoint, tol: float = DEFAULT_TOL) -> HolonomyResult:
    """``H^u_{x,y} = lim A^-n(y)^-1 A^-n(x)`` for ``y`` in the local unstable set of ``x``."""
    return _holonomy(A, cert, "u", x, y, tol)


def holonomy(A, cert, kind, x, y, tol=DEFAULT_TOL) -> HolonomyResult:
    return _holonomy(A, cert, kind, x, y, tol)


@dataclass(frozen=True)
class IdentityReport:
    composition: float
    inverse: float
    equivariance: float
    composition_bound: float
    inverse_bound: float
    equivariance_bound: float

    @property
    def ok(self) -> bool:
        return (
            self.composition <= self.composition_bound
            and self.inverse <= self.inverse_bound
            and self.equivariance <= self.equivariance_bound
        )


def _product_error(a: HolonomyResult, b: HolonomyResult) -> float:
    """Error bound on ``a.value @ b.value`` from the two factor bounds."""
    return a.error_bound * opnorm(b.value) + opnorm(a.value) * b.error_bound + a.error_bound * b.error_bound


def holonomy_identities_check(A, cert, x, y, z, j: int, tol: float = DEFAULT_TOL, kind: str = "s", slack: float = 1e-10) -> IdentityReport:
    """Residuals of the composition, inverse and equivariance identities.

    For ``kind="u"`` equivariance is checked along ``f^-j``, the direction in
    which unstable pairs stay local.
    """
    if j < 1:
        raise PreconditionError("j must be at least 1")
    _check_pair(kind, x, y)
    _check_pair(kind, x, z)
    h = lambda a, b: _holonomy(A, cert, kind, a, b, tol)
    hxy, hzy, hxz, hyx = h(x, y), h(z, y), h(x, z), h(y, x)
    eye = _eye(A)
    comp = opnorm(hxy.value - hzy.value @ hxz.value)
    comp_bound = hxy.error_bound + _product_error(hzy, hxz)
    inv = opnorm(hyx.value @ hxy.value - eye)
    inv_bound = _product_error(hyx, hxy)
    step = j if kind == "s" else -j
    fx, fy = shift(x, step), shift(y, step)
    hf = h(fx, fy)
    if kind == "s":
        ay, ax_inv = product(A, y, j), np.linalg.inv(product(A, x, j))
    else:
        ay, ax_inv = product(A, y, -j), np.linalg.inv(product(A, x, -j))
    equi = opnorm(hf.value - ay @ hxy.value @ ax_inv)
    scale = opnorm(ay) * opnorm(ax_inv) * max(1.0, opnorm(hxy.value))
    equi_bound = hf.error_bound + opnorm(ay) * hxy.error_bound * opnorm(ax_inv)
    return IdentityReport(
        comp, inv, equi,
        comp_bound + slack * max(1.0, opnorm(hxy.value)),
        inv_bound + slack,
        equi_bound + slack * scale,
    )


# ---------------------------------------------------------------------------
# derivatives in the cocycle


def _tangent_holder_norm(Adot: MatrixTable, cert) -> float:
    return Adot.holder_norm(cert.theta, cert.eta)


def _inverse_holder_norm(A, cert) -> float:
    if isinstance(A, MatrixTable):
        inv = MatrixTable.from_arrays(A.words, A.inverse_mats(), A.window, A.alphabet_size)
        return inv.holder_norm(cert.theta, cert.eta)
    # ||A(x)^-1 - A(y)^-1|| <= ||A(x)^-1 A(y) - I|| ||A(y)^-1||
    return cert.sup_inv_norm * (1.0 + cert.C2)


def derivative_term_bound(A, cert, Adot, d: float, i: int) -> float:
    """Bound on the ``i``-th series term: ``C C4 tau^i d^eta ||Adot||_{0,eta}``."""
    cbar = cert.C * cert.C2 / (1.0 - cert.tau)
    c4 = (2.0 * cbar + 1.0) * _inverse_holder_norm(A, cert)
    return cert.C * c4 * cert.tau**i * d**cert.eta * _tangent_holder_norm(Adot, cert)


def _bracket(A, Adot, cert, u, v, kind, tol):
    h = _holonomy(A, cert, kind, u, v, tol).value
    gu = np.linalg.solve(A.evaluate(u), Adot.evaluate(u))
    gv = np.linalg.solve(A.evaluate(v), Adot.evaluate(v))
    return h @ gu - gv @ h


def _derivative(A, cert, Adot, x, y, tol, kind):
    _check_tol(tol)
    _check_pair(kind, x, y)
    if x == y:
        return np.zeros((A.dim, A.dim), dtype=complex)
    sign = 1 if kind == "s" else -1
    first = 0 if kind == "s" else 1
    exact = isinstance(A, MatrixTable)
    if exact:
        # bracket terms vanish once both windows sit inside the agreement region
        n_terms = max(A.window, Adot.window) + 1
        inner_tol = tol
    else:
        d = distance(x, y, cert.theta)
        lead = derivative_term_bound(A, cert, Adot, d, 0) / (1.0 - cert.tau)
        n_terms = 0 if lead < tol else math.ceil(math.log(tol / lead) / math.log(cert.tau))
        while derivative_term_bound(A, cert, Adot, d, n_terms) / (1.0 - cert.tau) >= tol:
            n_terms += 1
        if n_terms > MAX_TERMS:
            raise TruncationError(f"derivative series needs {n_terms} terms, above the cap {MAX_TERMS}")
        inner_tol = tol * (1.0 - cert.tau) / max(1, n_terms)
    total = np.zeros((A.dim, A.dim), dtype=complex)
    extra = 2 if exact else 0
    for i in range(first, first + n_terms + extra):
        u, v = shift(x, sign * i), shift(y, sign * i)
        if kind == "s":
            left = np.linalg.inv(product(A, y, i))
            right = product(A, x, i)
        else:
            left = np.linalg.inv(product(A, y, -i))
            right = product(A, x, -i)
        term = left @ _bracket(A, Adot, cert, u, v, kind, inner_tol) @ right
        if i >= first + n_terms:
            if opnorm(term) > 1e-12 * max(1.0, opnorm(total)):
                raise AssertionError("finite-window derivative series did not terminate at the window radius")
            continue
        total += term
    return sign * total


def stable_holonomy_derivative(A, cert, Adot: MatrixTable, x, y, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Derivative of ``B -> H^s_{B,x,y}`` at ``A`` in the direction ``Adot``.

    Sums ``B^i(y)^-1 [H^s_i B(f^i x)^-1 Adot(f^i x) - B(f^i y)^-1 Adot(f^i y) H^s_i] B^i(x)``
    over ``i >= 0``, where ``H^s_i`` is the holonomy between ``f^i x`` and ``f^i y``.
    """
    return _derivative(A, cert, Adot, x, y, tol, "s")


def unstable_holonomy_derivative(A, cert, Adot: MatrixTable, x, y, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Derivative of ``B -> H^u_{B,x,y}``: the backward series over ``i >= 1`` with a leading minus sign."""
    return _derivative(A, cert, Adot, x, y, tol, "u")
