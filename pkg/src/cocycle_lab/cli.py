"""Command-line front end: ``cocycle-lab run <scenario.toml>`` and ``cocycle-lab verify <cert> <cocycle>``.

Exit status is 0 when every task assertion holds, 1 when one fails (or a
certificate does not verify), and 2 for unreadable input.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import io
from .cocycle import TableCocycle, builtin_long_range, certify_bunching, rotation, table_from_function
from .criterion import DELTA_PINCH, DELTA_TWIST, certify_simple
from .errors import CocycleLabError, NotFiberBunched, ScenarioError
from .holonomy import holonomy, holonomy_identities_check
from .perturbation import make_simple, submersion_rank_probe
from .shift import HomoclinicData, ShiftSystem, format_point, induce, make_homoclinic, make_periodic, parse_point, return_time_distribution
from .spectrum import DELTA_GAP, MeasureSpec, check_scaling, estimate_spectrum, log_det_expectation

TASKS = ("certify-bunching", "holonomy", "certify-simple", "make-simple", "perturb", "spectrum", "induce", "scaling-check", "rank-probe")


class TaskFailed(Exception):
    """A task ran but its assertion did not hold."""


def _line_of(text: str, needle: str):
    for n, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return n
    return None


# ---------------------------------------------------------------------------
# scenario parsing


def _matrix(value, where, text):
    if isinstance(value, dict):
        M = np.eye(len(value.get("diag", [1, 1])), dtype=complex)
        if "diag" in value:
            M = np.diag(np.asarray(value["diag"], dtype=complex))
        if "rotation" in value:
            if M.shape != (2, 2):
                raise ScenarioError(f"{where}: rotation needs d = 2", _line_of(text, "rotation"))
            M = rotation(float(value["rotation"])) @ M
        return M
    try:
        return np.array([[complex(v) for v in row] for row in value])
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: matrix must be a list of rows of numbers", _line_of(text, where)) from None


def parse_scenario(text: str, base_dir: Path = Path(".")):
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        raise ScenarioError(f"TOML syntax error: {exc}", line) from None
    for sec in ("system", "cocycle", "tasks"):
        if sec not in doc:
            raise ScenarioError(f"missing [{sec}] section")
    sysd = doc["system"]
    T = None
    if "transitions" in sysd:
        T = io.parse_transitions(" ".join(sysd["transitions"]), _line_of(text, "transitions"))
    try:
        system = ShiftSystem(int(sysd.get("alphabet", 2)), T, float(sysd.get("theta", 0.5)))
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"[system]: {exc}", _line_of(text, "[system]")) from None
    A = _parse_cocycle(doc["cocycle"], system, text, base_dir)
    mu = None
    if "measure" in doc:
        md = doc["measure"]
        try:
            if md.get("kind", "bernoulli") == "markov":
                mu = MeasureSpec.markov(md["transition"], md.get("stationary"))
            else:
                mu = MeasureSpec.bernoulli(md.get("probs", [1.0 / system.alphabet_size] * system.alphabet_size))
        except (KeyError, ValueError) as exc:
            raise ScenarioError(f"[measure]: {exc}", _line_of(text, "[measure]")) from None
    tasks = doc["tasks"]
    if not isinstance(tasks, list):
        raise ScenarioError("tasks must be an array of tables ([[tasks]])", _line_of(text, "tasks"))
    for t in tasks:
        if t.get("type") not in TASKS:
            raise ScenarioError(f"unknown task type {t.get('type')!r}; expected one of {', '.join(TASKS)}", _line_of(text, f"{t.get('type')}"))
    return system, A, mu, tasks


def _parse_cocycle(cd, system, text, base_dir):
    line = _line_of(text, "[cocycle]")
    if "file" in cd:
        path = base_dir / cd["file"]
        try:
            A, sys2 = io.load_cocycle(path.read_text())
        except OSError as exc:
            raise ScenarioError(f"cannot read cocycle file: {exc}", _line_of(text, "file")) from None
        return A
    kind = cd.get("kind", "table")
    field = cd.get("field", "complex")
    eta = float(cd.get("eta", 1.0))
    try:
        if kind == "long-range":
            mats = [_matrix(m, "symbols", text) for m in cd["symbols"]]
            return builtin_long_range(mats, _matrix(cd["generator"], "generator", text), cd.get("weights"), system.theta)
        if "constant" in cd:
            M = _matrix(cd["constant"], "constant", text)
            if field == "real":
                M = M.real
            return table_from_function(system, int(cd.get("window", 0)), lambda w: M, field=field, eta=eta)
        entries = {k: _matrix(v, f'"{k}"', text) for k, v in cd["entries"].items()}
        if field == "real":
            entries = {k: v.real for k, v in entries.items()}
        return TableCocycle(entries, int(cd.get("window", 0)), system.alphabet_size, field=field, eta=eta)
    except KeyError as exc:
        raise ScenarioError(f"[cocycle] is missing {exc}", line) from None
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"[cocycle]: {exc}", line) from None


# ---------------------------------------------------------------------------
# tasks


def _homoclinic(t, system):
    p = make_periodic(t.get("p", "0"), system)
    if "q" in t:
        return HomoclinicData(p, parse_point(t["q"], system.alphabet_size), int(t["m"]))
    return make_homoclinic(p, t.get("connector", "1"), system)


def _need_table(A, name):
    if not isinstance(A, TableCocycle):
        raise TaskFailed(f"{name} needs a finite-window table cocycle")


def run_task(t, state, opts):
    """Run one task; returns a dict of results. Raises TaskFailed when an assertion fails."""
    kind = t["type"]
    A, system, mu = state["A"], state["system"], state["mu"]
    out = {}
    tol = float(t.get("tol", opts.tol))
    seed = int(t.get("seed", opts.seed))
    if kind == "certify-bunching":
        expect = t.get("expect", "bunched")
        try:
            c = certify_bunching(A, system)
        except NotFiberBunched as exc:
            out["bunched"] = False
            out["witness"] = exc.witness
            out["value"] = exc.value
            if expect != "not-bunched":
                raise TaskFailed(str(exc)) from None
            return out
        out.update(bunched=True, tau=c.tau, C=c.C, C1=c.C1, C2=c.C2, sup_norm=c.sup_norm, sup_inv_norm=c.sup_inv_norm,
                   exhaustive=c.exhaustive, perturbation_margin=c.perturbation_margin)
        if expect != "bunched":
            raise TaskFailed(f"expected {expect}, got bunched with tau = {c.tau}")
    elif kind == "holonomy":
        cert = certify_bunching(A, system)
        k = {"stable": "s", "unstable": "u"}[t.get("kind", "stable")]
        x = parse_point(t["x"], system.alphabet_size)
        y = parse_point(t["y"], system.alphabet_size)
        r = holonomy(A, cert, k, x, y, tol)
        out.update(value=r.value, error_bound=r.error_bound, terms_used=r.terms_used, exact=r.exact)
        if "identities" in t:
            z = parse_point(t["identities"]["z"], system.alphabet_size)
            rep = holonomy_identities_check(A, cert, x, y, z, int(t["identities"].get("j", 1)), tol, k)
            out.update(composition=rep.composition, inverse=rep.inverse, equivariance=rep.equivariance)
            if not rep.ok:
                raise TaskFailed(f"holonomy identities exceed their bounds: {rep}")
    elif kind == "certify-simple":
        h = _homoclinic(t, system)
        sc = certify_simple(A, system, h, float(t.get("delta_pinch", DELTA_PINCH)), float(t.get("delta_twist", DELTA_TWIST)), tol)
        _cert_results(out, sc)
        _write_certificate(sc, A, system, t, opts)
        if sc.verdict != t.get("expect", "simple"):
            raise TaskFailed(f"verdict {sc.verdict} ({sc.diagnostic}), expected {t.get('expect', 'simple')}")
    elif kind in ("make-simple", "perturb"):
        _need_table(A, kind)
        B, sc, plans = make_simple(A, system, float(t.get("eps", 0.05)), rng_seed=seed, tol=tol)
        _cert_results(out, sc)
        out["plans"] = len(plans)
        out["max_entry_change"] = max((p.size for p in plans), default=0.0)
        for i, p in enumerate(plans):
            out[f"plan_{i}_site"] = p.site
            out[f"plan_{i}_size"] = p.size
        state["A"] = B
        (opts.out_dir / t.get("cocycle_out", "perturbed_cocycle.txt")).write_text(io.dump_cocycle(B, system))
        _write_certificate(sc, B, system, t, opts)
        if not sc.simple:
            raise TaskFailed(f"make-simple ended with verdict {sc.verdict}")
    elif kind == "spectrum":
        _need_table(A, kind)
        n_iter = int(t.get("n_iter", 100_000))
        every = int(t.get("trace_every", max(1, n_iter // 100)))
        est = estimate_spectrum(A, system, _measure(mu, system), n_iter, int(t.get("n_samples", 16)), seed, every,
                                float(t.get("delta_gap", DELTA_GAP)))
        out.update(exponents=est.exponents, std_errors=est.std_errors, blocks=_blocks(est.blocks), simple=est.simple,
                   log_det_expectation=log_det_expectation(A, _measure(mu, system)), seed=seed)
        name = t.get("trace", "spectrum_trace.csv" if not state["traces"] else f"spectrum_trace_{len(state['traces']) + 1}.csv")
        state["traces"].append(name)
        with open(opts.out_dir / name, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iteration", "exponent_index", "running_estimate"])
            for row in est.trace_rows():
                wr.writerow([row[0], row[1], repr(row[2])])
        expect = t.get("expect")
        if expect == "simple" and not est.simple:
            raise TaskFailed(f"spectrum is not simple: blocks {_blocks(est.blocks)}")
        if expect == "non-simple" and est.simple:
            raise TaskFailed("spectrum is simple")
    elif kind == "induce":
        base, R = t.get("base", "0"), int(t.get("R", 8))
        ind = induce(system, base, R, int(t.get("max_words", 200_000)))
        m = _measure(mu, system)
        counts, masses = return_time_distribution(system, ind.base_cylinder, R, m.matrix())
        out.update(words=len(ind.return_words), covered_mass=float(masses.sum()), missing_mass=float(1 - masses.sum()))
        out["return_words"] = " ".join(f"{''.join(map(str, w.word))}:{w.r}" for w in ind.return_words[:64])
        if "expect_words" in t and len(ind.return_words) != int(t["expect_words"]):
            raise TaskFailed(f"{len(ind.return_words)} return words, expected {t['expect_words']}")
    elif kind == "scaling-check":
        _need_table(A, kind)
        rep = check_scaling(A, system, t.get("base", "0"), _measure(mu, system), int(t.get("R", 60)),
                            int(t.get("n_iter", 100_000)), int(t.get("n_samples", 16)), seed)
        out.update(target=rep.target, ratios=np.array(rep.ratios), ratio_errors=np.array(rep.ratio_errors),
                   missing_mass=rep.missing_mass, verdicts_agree=rep.verdicts_agree, ok=rep.ok)
        if not rep.ok:
            raise TaskFailed(f"scaling check failed: ratios {rep.ratios} vs {rep.target}")
    elif kind == "rank-probe":
        _need_table(A, kind)
        sites = [_homoclinic(s, system) for s in t.get("sites", [{"p": "0", "connector": "1"}])]
        rep = submersion_rank_probe(A, system, sites, t.get("directions"), float(t.get("h", 1e-5)), seed, tol)
        out.update(rank=rep.rank, expected=rep.expected, columns=rep.columns, analytic_discrepancy=rep.analytic_discrepancy,
                   window=rep.window, site_words=" ".join(rep.site_words))
        if not rep.ok:
            raise TaskFailed(f"rank {rep.rank} of {rep.expected}, analytic discrepancy {rep.analytic_discrepancy:.3g}")
    return out


def _measure(mu, system):
    return mu if mu is not None else MeasureSpec.uniform(system.alphabet_size)


def _blocks(blocks):
    return " ".join("{" + ",".join(str(i + 1) for i in b) + "}" for b in blocks)


def _cert_results(out, sc):
    out.update(verdict=sc.verdict, p=format_point(sc.p), q=format_point(sc.q), m=sc.m,
               pinching_margin=sc.pinching_margin, twisting_margin=sc.twisting_margin,
               holonomy_error_budget=sc.holonomy_error_budget, period_matrix=sc.period_matrix)
    if sc.psi is not None:
        out["psi"] = sc.psi


def _write_certificate(sc, A, system, t, opts):
    (opts.out_dir / t.get("certificate", "certificate.txt")).write_text(io.dump_certificate(sc))
    if isinstance(A, TableCocycle):
        (opts.out_dir / t.get("cocycle_file", "cocycle.txt")).write_text(io.dump_cocycle(A, system))


def _jsonable(v):
    if isinstance(v, np.ndarray):
        if np.iscomplexobj(v):
            return {"re": v.real.tolist(), "im": v.imag.tolist()}
        return v.tolist()
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def run_scenario(path, opts) -> int:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        system, A, mu, tasks = parse_scenario(text, path.parent)
    except ScenarioError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return 2
    opts.out_dir.mkdir(parents=True, exist_ok=True)
    state = {"A": A, "system": system, "mu": mu, "traces": []}
    lines = [f"# results for {path.name}", f"seed = {opts.seed}", f"tol = {opts.tol!r}"]
    status = 0
    for i, t in enumerate(tasks, 1):
        try:
            out = run_task(t, state, opts)
            ok, msg = True, ""
        except TaskFailed as exc:
            out, ok, msg = {}, False, str(exc)
        except (CocycleLabError, ValueError, KeyError) as exc:
            out, ok, msg = {}, False, f"{type(exc).__name__}: {exc}"
        if not ok:
            status = 1
        lines.append("")
        lines.append(f"[task {i}] {t['type']}")
        lines.append(f"status = {'pass' if ok else 'fail'}")
        if msg:
            lines.append(f"error = {msg}")
        lines += [f"{k} = {io.format_value(v)}" for k, v in out.items()]
        if opts.format == "machine":
            print(json.dumps({"task": i, "type": t["type"], "status": "pass" if ok else "fail", "error": msg,
                              **{k: _jsonable(v) for k, v in out.items()}}))
        else:
            print(f"task {i} {t['type']}: {'PASS' if ok else 'FAIL'}" + (f" ({msg})" if msg else ""))
    (opts.out_dir / "results.txt").write_text("\n".join(lines) + "\n")
    return status


# ---------------------------------------------------------------------------
# verification


def verify_certificate(cert_path, cocycle_path, opts=None) -> int:
    """Recompute a certificate from its witnesses; 0 when every recorded value is reproduced."""
    try:
        rec = io.load_certificate(Path(cert_path).read_text())
        A, system = io.load_cocycle(Path(cocycle_path).read_text())
    except (OSError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        p = parse_point(rec["p"], system.alphabet_size)
        q = parse_point(rec["q"], system.alphabet_size)
        for name, pt in (("p", p), ("q", q)):
            if not system.point_is_admissible(pt):
                raise CocycleLabError(f"witness {name} = {rec[name]} is not admissible for the transition matrix")
        h = HomoclinicData(p, q, rec["m"])
        sc = certify_simple(A, system, h, rec.get("delta_pinch", DELTA_PINCH), rec.get("delta_twist", DELTA_TWIST),
                            rec.get("tol", 1e-9), rec["real_mode"])
    except (CocycleLabError, ValueError) as exc:
        print(f"precondition: {exc}")
        return 1
    fresh = {
        "verdict": sc.verdict,
        "pinching_margin": sc.pinching_margin,
        "twisting_margin": sc.twisting_margin,
        "holonomy_error_budget": sc.holonomy_error_budget,
        "tau": sc.bunching.tau,
        "period_matrix": sc.period_matrix,
        "psi": sc.psi,
    }
    for key in ("verdict", "pinching_margin", "twisting_margin", "holonomy_error_budget", "tau", "period_matrix", "psi"):
        if key not in rec:
            continue
        old, new = rec[key], fresh[key]
        if key == "verdict":
            same = old == new
        elif new is None:
            same = False
        else:
            old, new = np.asarray(old), np.asarray(new)
            same = old.shape == new.shape and bool(np.all(np.abs(old - new) <= 1e-8 * np.maximum(1.0, np.abs(old))))
        if not same:
            print(f"mismatch in {key}: recorded {io.format_value(rec[key])}, recomputed {io.format_value(fresh[key])}")
            return 1
    print(f"certificate verified: verdict {sc.verdict}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="cocycle-lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute a scenario file")
    run.add_argument("scenario")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--tol", type=float, default=1e-9)
    run.add_argument("--out-dir", type=Path, default=Path("."))
    run.add_argument("--format", choices=("text", "machine"), default="text")
    ver = sub.add_parser("verify", help="recompute a simplicity certificate")
    ver.add_argument("certificate")
    ver.add_argument("cocycle")
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    if args.command == "run":
        return run_scenario(args.scenario, args)
    return verify_certificate(args.certificate, args.cocycle)


if __name__ == "__main__":
    sys.exit(main())
