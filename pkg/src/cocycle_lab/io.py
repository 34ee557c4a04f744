"""Plain-text formats for cocycle tables, certificates and result files.

Numbers are written with ``repr`` so that parsing returns the same floats.
Complex entries are written as ``re,im``; matrix rows are separated by ``;``.
"""

from __future__ import annotations

import numpy as np

from .cocycle import TableCocycle
from .criterion import SimplicityCertificate
from .errors import ScenarioError
from .shift import ShiftSystem, format_point, format_word, parse_word


def format_number(z, real: bool = False) -> str:
    z = complex(z)
    if real:
        return repr(z.real)
    return f"{z.real!r},{z.imag!r}"


def parse_number(text: str, line=None) -> complex:
    try:
        if "," in text:
            re, im = text.split(",")
            return complex(float(re), float(im))
        return complex(float(text), 0.0)
    except ValueError:
        raise ScenarioError(f"bad number {text!r}", line) from None


def format_matrix(M, real: bool = False) -> str:
    M = np.atleast_2d(np.asarray(M))
    return " ; ".join(" ".join(format_number(z, real) for z in row) for row in M)


def parse_matrix(text: str, line=None) -> np.ndarray:
    rows = [r.split() for r in text.split(";")]
    if not rows or any(len(r) != len(rows[0]) for r in rows) or not rows[0]:
        raise ScenarioError(f"ragged or empty matrix {text!r}", line)
    return np.array([[parse_number(t, line) for t in r] for r in rows])


def format_transitions(system: ShiftSystem) -> str:
    return " ".join("".join(str(int(v)) for v in row) for row in system.transition_matrix)


def parse_transitions(text: str, line=None) -> np.ndarray:
    rows = text.split()
    try:
        T = np.array([[int(c) for c in r] for r in rows])
    except ValueError:
        raise ScenarioError(f"bad transition matrix {text!r}", line) from None
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ScenarioError("transition matrix must be square", line)
    return T


def _key_values(text: str, first_word_ok=("word",)):
    """``(key, value, line)`` triples, skipping blanks and ``#`` comments."""
    out = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head = line.split(None, 1)[0]
        if head in first_word_ok:
            out.append((head, line[len(head):].strip(), n))
            continue
        if "=" not in line:
            raise ScenarioError(f"expected 'key = value', got {line!r}", n)
        k, v = line.split("=", 1)
        out.append((k.strip(), v.strip(), n))
    return out


# ---------------------------------------------------------------------------
# cocycle tables


def dump_cocycle(A: TableCocycle, system: ShiftSystem) -> str:
    real = A.real
    lines = [
        "# cocycle table",
        f"d = {A.dim}",
        f"field = {A.field}",
        f"window = {A.window}",
        f"theta = {system.theta!r}",
        f"eta = {A.eta!r}",
        f"alphabet = {A.alphabet_size}",
    ]
    if not system.is_full:
        lines.append(f"transitions = {format_transitions(system)}")
    for w, M in zip(A.words, A.mats):
        lines.append(f"word {format_word(w, A.alphabet_size)} : {format_matrix(M, real)}")
    return "\n".join(lines) + "\n"


def load_cocycle(text: str) -> tuple[TableCocycle, ShiftSystem]:
    header, entries = {}, []
    for key, value, n in _key_values(text):
        if key == "word":
            if ":" not in value:
                raise ScenarioError("word record needs 'word <w> : <matrix>'", n)
            w, m = value.split(":", 1)
            entries.append((w.strip(), m.strip(), n))
        else:
            header[key] = (value, n)
    for req in ("d", "field", "window", "theta", "eta", "alphabet"):
        if req not in header:
            raise ScenarioError(f"cocycle header is missing {req!r}")
    try:
        d = int(header["d"][0])
        window = int(header["window"][0])
        theta = float(header["theta"][0])
        eta = float(header["eta"][0])
        k = int(header["alphabet"][0])
    except ValueError as exc:
        raise ScenarioError(f"bad header value: {exc}") from None
    field = header["field"][0]
    T = parse_transitions(*header["transitions"]) if "transitions" in header else None
    system = ShiftSystem(k, T, theta)
    table = {}
    for w, m, n in entries:
        try:
            word = parse_word(w, k)
        except ValueError as exc:
            raise ScenarioError(str(exc), n) from None
        M = parse_matrix(m, n)
        if M.shape != (d, d):
            raise ScenarioError(f"entry for {w} is {M.shape[0]}x{M.shape[1]}, expected {d}x{d}", n)
        table[word] = M.real if field == "real" else M
    if not table:
        raise ScenarioError("cocycle file has no word records")
    try:
        A = TableCocycle(table, window, k, field=field, eta=eta)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    return A, system


# ---------------------------------------------------------------------------
# certificates

CERT_FLOATS = ("pinching_margin", "twisting_margin", "holonomy_error_budget", "tau")
CERT_MATRICES = ("period_matrix", "psi")


def dump_certificate(cert: SimplicityCertificate) -> str:
    I, J = cert.worst_pair
    lines = [
        "# simplicity certificate",
        f"p = {format_point(cert.p)}",
        f"q = {format_point(cert.q)}",
        f"m = {cert.m}",
        f"real_mode = {str(cert.real_mode).lower()}",
        f"delta_pinch = {cert.delta_pinch!r}",
        f"delta_twist = {cert.delta_twist!r}",
        f"tol = {cert.tol!r}",
        f"verdict = {cert.verdict}",
        f"pinching_margin = {cert.pinching_margin!r}",
        f"twisting_margin = {cert.twisting_margin!r}",
        f"worst_pair = {','.join(map(str, I))} / {','.join(map(str, J))}",
        f"holonomy_error_budget = {cert.holonomy_error_budget!r}",
        f"tau = {cert.bunching.tau!r}" if cert.bunching is not None else "tau = nan",
        f"eigenvalues = {' '.join(format_number(z) for z in cert.eigen.values)}",
        f"period_matrix = {format_matrix(cert.period_matrix)}",
    ]
    if cert.psi is not None:
        lines.append(f"psi = {format_matrix(cert.psi)}")
    return "\n".join(lines) + "\n"


def load_certificate(text: str) -> dict:
    """Certificate fields as a dict (points stay as text; numbers and matrices are parsed)."""
    raw = {k: (v, n) for k, v, n in _key_values(text, ())}
    for req in ("p", "q", "m", "verdict", "pinching_margin", "twisting_margin", "period_matrix"):
        if req not in raw:
            raise ScenarioError(f"certificate is missing {req!r}")
    out = {"p": raw["p"][0], "q": raw["q"][0], "verdict": raw["verdict"][0]}
    try:
        out["m"] = int(raw["m"][0])
        for k in ("delta_pinch", "delta_twist", "tol") + CERT_FLOATS:
            if k in raw:
                out[k] = float(raw[k][0])
    except ValueError as exc:
        raise ScenarioError(f"bad certificate value: {exc}") from None
    out["real_mode"] = raw.get("real_mode", ("false", 0))[0] == "true"
    for k in CERT_MATRICES:
        if k in raw:
            out[k] = parse_matrix(*raw[k])
    return out


# ---------------------------------------------------------------------------
# result files


def format_value(v) -> str:
    if isinstance(v, np.ndarray) and v.ndim == 2:
        return format_matrix(v)
    if isinstance(v, np.ndarray):
        return " ".join(repr(float(x)) if np.isrealobj(x) else format_number(x) for x in v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (list, tuple)):
        return " ".join(format_value(x) for x in v)
    return str(v)
