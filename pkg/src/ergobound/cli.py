"""Command-line entry point: ``ergobound bounds|verify|simulate MODEL``.

Every command writes one JSON report (or a flat ``key,value`` CSV with
``--format csv``) that validates against the packaged report schema.
Exit codes: 0 on success, 2 when the model is not strongly ergodic,
1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .chain_bounds import (
    InconclusiveError,
    NotStronglyErgodic,
    RateBounds,
    bd_rate_bounds,
    mc1_bound,
    sd_rate_bounds,
    tree_bounds,
)
from .continuum_bounds import (
    diff_Mr,
    diff_rate_bounds,
    radial_entrance_bound,
    stable_bounds,
    tc_rate_bound,
)
from .model import (
    BirthDeathSpec,
    DiffusionSpec,
    ModelError,
    SingleDeathSpec,
    StableSdeSpec,
    TimeChangedStableSpec,
    TreeSpec,
    parse_model,
    tolerance_from,
)
from .montecarlo import SEED_ENV, DEFAULT_SEED, RngConfig, SimulationError, em_diffusion_hitting, mc_hitting
from .numerics import NumericalError, Tolerance
from .oracle import (
    GeneratorMatrix,
    check_main_lemma,
    hitting_moments,
    kappa_empirical,
    spectral_gap,
    truncate_generator,
    tv_decay,
)

__all__ = [
    "SCHEMA_VERSION",
    "EXIT_OK",
    "EXIT_ERROR",
    "EXIT_NOT_ERGODIC",
    "CliError",
    "Outcome",
    "report_schema",
    "validate_report",
    "parse_times",
    "cmd_bounds",
    "cmd_verify",
    "cmd_simulate",
    "main",
]

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_ERROR, EXIT_NOT_ERGODIC = 0, 1, 2

DEFAULT_TRUNCATION = 200
DEFAULT_MESH = 1e-3
DEFAULT_LENGTH = 4.0
TV_MAX_STATES = 64  # uniformized TV decay is dense; larger chains use a coarse copy
TV_STATES = 32
CHAIN_CAUCHY_TOL = 1e-6
MESH_CAUCHY_TOL = 1e-3
KAPPA_MATCH = 0.01
DIFFUSION_SLACK = 1e-3  # discretized hitting times against the continuum S


class CliError(Exception):
    """A usage or input problem reported with exit code 1."""


class Outcome:
    """A finished report and the exit code it implies."""

    def __init__(self, report: dict, exit_code: int):
        self.report = report
        self.exit_code = exit_code


# --------------------------------------------------------------------------
# report plumbing

def report_schema() -> dict:
    """The published report schema (draft 2020-12)."""
    text = resources.files("ergobound").joinpath("report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_report(report: dict) -> None:
    """Raise ``jsonschema.ValidationError`` unless ``report`` matches the schema."""
    jsonschema.validate(report, report_schema(), cls=jsonschema.Draft202012Validator)


def _plain(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def _verdict(name: str, passed: bool, margin=None, detail: str = "", level: str = "check") -> dict:
    return {"name": name, "passed": bool(passed), "level": level, "margin": margin, "detail": detail}


def _digest(doc: dict) -> str:
    canon = json.dumps({"family": doc.get("family"), "params": doc.get("params")},
                       sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _read_model(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"{path}: cannot read model file ({exc.strerror or exc})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    try:
        spec = parse_model(doc)
    except ModelError as exc:
        raise CliError(f"{path}: {exc}") from exc
    return doc, spec


def _numerics(spec, key, flag):
    if flag is not None:
        return flag
    return (getattr(spec, "numerics", None) or {}).get(key)


def _skeleton(command: str, path, doc: dict, spec, tol: Tolerance) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "status": "ok",
        "model": {"family": doc["family"], "params_digest": _digest(doc), "path": str(path)},
        "bounds": None,
        "verification": None,
        "montecarlo": None,
        "provenance": {
            "tool": "ergobound",
            "version": __version__,
            "seed": None,
            "streams": None,
            "tolerance": {"rel": tol.rel, "abs": tol.abs, "max_terms": tol.max_terms,
                          "max_evals": tol.max_evals},
            "truncation": {},
        },
        "verdicts": [],
    }


def _finish(report: dict, not_ergodic: bool) -> Outcome:
    if not_ergodic:
        report["status"] = "not_strongly_ergodic"
    elif not all(v["passed"] for v in report["verdicts"]):
        report["status"] = "flagged"
    report = _plain(report)
    validate_report(report)
    return Outcome(report, EXIT_NOT_ERGODIC if not_ergodic else EXIT_OK)


# --------------------------------------------------------------------------
# bounds

def _radial_bounds(spec: DiffusionSpec, tol: Tolerance) -> RateBounds:
    radii = [spec.r0 * 2.0 ** k for k in range(4)]
    values = {repr(p): radial_entrance_bound(spec, p, tol) for p in radii if p < spec.D}
    first = values[repr(spec.r0)] if values else 0.0
    return RateBounds(
        0.0, False, 0.0, None, first, f"B({spec.r0!r})", None, None,
        [("M_H", "radial comparison integral int_p^D e^{-C} int_y^D e^{C}")],
        {"M_p_bounds": values},
    )


def compute_bounds(spec, tol: Tolerance) -> RateBounds:
    """Dispatch to the family's bound routine."""
    if isinstance(spec, BirthDeathSpec):
        return bd_rate_bounds(spec, tol)
    if isinstance(spec, SingleDeathSpec):
        return sd_rate_bounds(spec, tol)
    if isinstance(spec, TreeSpec):
        return tree_bounds(spec, tol)
    if isinstance(spec, DiffusionSpec):
        if spec.domain == "radial":
            return _radial_bounds(spec, tol)
        return diff_rate_bounds(spec, tol)
    if isinstance(spec, StableSdeSpec):
        return stable_bounds(spec, tol)
    if isinstance(spec, TimeChangedStableSpec):
        return tc_rate_bound(spec, tol)
    raise CliError(f"no bound routine for {type(spec).__name__}")


def _attach_bounds(report: dict, spec, tol: Tolerance):
    """Fill ``report["bounds"]``; returns the record or None when not strongly ergodic."""
    try:
        rb = compute_bounds(spec, tol)
    except NotStronglyErgodic as exc:
        report["verdicts"].append(_verdict("strong_ergodicity", False, None, str(exc)))
        return None
    report["bounds"] = rb.to_dict()
    report["verdicts"].append(_verdict("strong_ergodicity", True, None, "bound series and integrals converge"))
    if rb.lambda1_upper is not None:
        margin = rb.lambda1_upper - rb.lambda1_lower
        report["verdicts"].append(_verdict("lambda1_interval_ordered", margin >= 0, margin,
                                           "lambda1_lower <= lambda1_upper"))
    return rb


def cmd_bounds(model_path, overrides: dict | None = None) -> Outcome:
    """Bound set for the model in ``model_path``.

    ``overrides`` may carry ``rel`` and ``abs`` tolerance values.
    """
    doc, spec = _read_model(model_path)
    tol = tolerance_from(spec, overrides)
    report = _skeleton("bounds", model_path, doc, spec, tol)
    rb = _attach_bounds(report, spec, tol)
    return _finish(report, rb is None)


# --------------------------------------------------------------------------
# verify

def parse_times(text: str | None):
    """``"0.1,0.5,1"`` or ``"geom:a:b:n"`` to an increasing array (None passes through)."""
    if text is None:
        return None
    text = text.strip()
    try:
        if text.startswith("geom:"):
            parts = text.split(":")
            if len(parts) != 4:
                raise CliError(f"--times: expected geom:a:b:n, got {text!r}")
            a, b, n = float(parts[1]), float(parts[2]), int(parts[3])
            if not (0 < a < b and n >= 1):
                raise CliError("--times: geom grid needs 0 < a < b and n >= 1")
            times = np.geomspace(a, b, n)
        else:
            times = np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError as exc:
        raise CliError(f"--times: cannot parse {text!r} ({exc})") from exc
    if times.size == 0 or np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise CliError("--times: need a nonempty increasing grid of positive times")
    return times


def _generators(spec, N, mesh, length):
    """Base and refined generators with the settings echoed into the report."""
    if isinstance(spec, DiffusionSpec):
        if spec.domain != "half_line":
            raise CliError("verify needs a half-line diffusion; radial comparison data cannot be discretized")
        G = truncate_generator(spec, mesh=mesh, length=length)
        G2 = truncate_generator(spec, mesh=mesh / 2, length=length)
        gen = {"kind": "discretization", "states": G.n, "N": None, "mesh": mesh, "length": length}
        ref = {"states": G2.n, "N": None, "mesh": mesh / 2}
        return G, G2, gen, ref, MESH_CAUCHY_TOL
    if isinstance(spec, (StableSdeSpec, TimeChangedStableSpec)):
        raise CliError(f"family {type(spec).__name__} has no finite surrogate to verify against")
    G = truncate_generator(spec, N)
    G2 = truncate_generator(spec, 2 * N)
    gen = {"kind": "truncation", "states": G.n, "N": int(N), "mesh": None, "length": None}
    ref = {"states": G2.n, "N": int(2 * N), "mesh": None}
    return G, G2, gen, ref, CHAIN_CAUCHY_TOL


def _target(G: GeneratorMatrix, spec) -> list[int]:
    if isinstance(spec, TreeSpec):
        return [G.labels.index(spec.root)]
    return [0]


def _label(G: GeneratorMatrix, k: int) -> str:
    if G.labels is not None:
        return str(G.labels[k])
    x = G.meta.get("x") if G.meta else None
    return repr(float(x[k])) if x is not None else str(k)


def _tv_section(spec, G, times, out_path, verdicts):
    """TV decay, kappa_empirical, mc1 and the first-hitting lemma on a small chain."""
    if G.n > TV_MAX_STATES:
        if isinstance(spec, DiffusionSpec):
            return None, "discretized diffusions are too large for dense uniformization"
        G = truncate_generator(spec, TV_STATES)
        if G.n > TV_MAX_STATES:
            return None, f"smallest truncation still has {G.n} states"
    gap = spectral_gap(G)
    if times is None:
        times = np.geomspace(0.1 / gap, 5.0 / gap, 8)
    curve = tv_decay(G, times)
    kemp = kappa_empirical(G)
    rel = abs(kemp - gap) / gap
    verdicts.append(_verdict("kappa_empirical_equals_gap", rel <= KAPPA_MATCH, KAPPA_MATCH - rel,
                             f"|kappa_empirical - gap|/gap = {rel:.3g} on {G.n} states (limit 1%)"))
    mc1 = None
    try:
        mc1 = mc1_bound(G)
    except ValueError as exc:
        verdicts.append(_verdict("mc1_le_gap", False, None, str(exc)))
    else:
        verdicts.append(_verdict("mc1_le_gap", mc1 <= gap * (1 + 1e-9), gap - mc1,
                                 "sup_x (sup_i E_i tau_x)^-1 <= lambda_1"))
        verdicts.append(_verdict("mc1_le_kappa_empirical", mc1 <= kemp * (1 + KAPPA_MATCH), kemp - mc1,
                                 "sup_x (sup_i E_i tau_x)^-1 <= kappa_empirical (+1%)"))
    H = _target(G, spec)
    lemma_times = times[np.linspace(0, times.size - 1, min(5, times.size)).astype(int)]
    try:
        lemma = check_main_lemma(G, H, lemma_times)
        lemma_out = {"passed": lemma.passed, "violations": lemma.violations,
                     "max_relative_allowance": lemma.max_relative_allowance}
        verdicts.append(_verdict("first_hitting_decomposition", lemma.passed, None,
                                 f"{lemma.violations} violations over {lemma.lhs.size} (state, time) pairs"))
    except ValueError as exc:
        lemma_out = {"passed": False, "violations": -1, "max_relative_allowance": math.inf}
        verdicts.append(_verdict("first_hitting_decomposition", False, None, str(exc)))
    csv_path = None
    if out_path is not None:
        csv_path = str(Path(out_path).with_suffix(".decay.csv"))
        curve.to_csv(csv_path)
    return {
        "states": G.n,
        "normalization": curve.normalization,
        "gap": gap,
        "kappa_empirical": kemp,
        "mc1_bound": mc1,
        "times": curve.times,
        "tv_sup": curve.tv,
        "lemma": lemma_out,
        "decay_csv": csv_path,
    }, None


def cmd_verify(model_path, overrides: dict | None = None, *, truncate=None, mesh=None, length=None,
               times=None, expect_gap=None, out_path=None) -> Outcome:
    """Bounds plus oracle cross-checks, each listed as a verdict."""
    doc, spec = _read_model(model_path)
    tol = tolerance_from(spec, overrides)
    report = _skeleton("verify", model_path, doc, spec, tol)
    rb = _attach_bounds(report, spec, tol)
    N = int(_numerics(spec, "truncation", truncate) or DEFAULT_TRUNCATION)
    h = float(_numerics(spec, "mesh", mesh) or DEFAULT_MESH)
    L = float(_numerics(spec, "length", length) or DEFAULT_LENGTH)
    if N < 2 or h <= 0 or L <= h:
        raise CliError("need --truncate >= 2, --mesh > 0 and --length > mesh")
    G, G2, gen, ref, cauchy_tol = _generators(spec, N, h, L)
    report["provenance"]["truncation"] = {**gen, "refined": ref, "boundary": G.boundary}
    verdicts = report["verdicts"]

    gap, tag = spectral_gap(G, return_tag=True)
    gap2 = spectral_gap(G2)
    step = abs(gap - gap2)
    verdicts.append(_verdict(
        "oracle_gap_cauchy", step < cauchy_tol, cauchy_tol - step,
        f"|gap({gen['N'] or gen['mesh']}) - gap(refined)| = {step:.3g} (limit {cauchy_tol:g})",
        level="check" if step < cauchy_tol else "warning",
    ))
    if rb is not None:
        if rb.lambda1_lower > 0:
            margin = gap * (1 + 1e-9) - rb.lambda1_lower
            verdicts.append(_verdict("lambda1_lower_le_oracle_gap", margin >= 0, margin,
                                     "lambda1_lower <= spectral gap of the finite surrogate"))
        if rb.lambda1_upper is not None:
            margin = rb.lambda1_upper - gap * (1 - 1e-9)
            verdicts.append(_verdict("oracle_gap_le_lambda1_upper", margin >= 0, margin,
                                     "spectral gap of the finite surrogate <= lambda1_upper"))
    if expect_gap is not None:
        verdicts.append(_verdict("oracle_gap_ge_expected", gap >= expect_gap, gap - expect_gap,
                                 f"gap {gap:.6g} against the expected floor {expect_gap:g}"))

    H = _target(G, spec)
    moments = [hitting_moments(G, H, order=n) for n in range(1, 5)]
    maxes = [float(m.max()) for m in moments]
    M = maxes[0]
    worst = max(maxes[n - 1] / (math.factorial(n) * M ** n) for n in range(1, 5)) if M > 0 else 0.0
    verdicts.append(_verdict("moment_factorial_bound", worst <= 1 + 1e-9, 1 - worst,
                             "sup_x E_x tau^n <= n! M^n for n <= 4"))
    if rb is not None and rb.S is not None and isinstance(spec, (BirthDeathSpec, SingleDeathSpec, TreeSpec, DiffusionSpec)):
        slack = DIFFUSION_SLACK if isinstance(spec, DiffusionSpec) else 1e-9
        margin = rb.S * (1 + slack) - M
        verdicts.append(_verdict("oracle_hitting_le_S", margin >= 0, margin,
                                 f"sup_x E_x tau_H on the surrogate <= S (relative slack {slack:g})"))

    tv, skipped = _tv_section(spec, G, times, out_path, verdicts)
    if skipped:
        report["provenance"]["truncation"]["tv_skipped"] = skipped
    report["verification"] = {
        "generator": gen,
        "gap": gap,
        "gap_tag": tag,
        "refinement": {**ref, "gap": gap2, "cauchy_delta": step, "cauchy_tol": cauchy_tol},
        "hitting": {"H": [_label(G, k) for k in H], "max_moments": maxes,
                    "argmax": _label(G, int(np.argmax(moments[0])))},
        "tv": tv,
    }
    return _finish(report, rb is None)


# --------------------------------------------------------------------------
# simulate

def _chain_reference(spec, x0, H, N):
    G = truncate_generator(spec, N)
    labels = [str(l) for l in G.labels] if G.labels is not None else [str(k) for k in range(G.n)]
    try:
        xi = labels.index(str(x0))
        Hi = [labels.index(str(h)) for h in H]
    except ValueError:
        return None
    return float(hitting_moments(G, Hi)[xi]), f"linear solve on a {G.n}-state truncation"


def _parse_hit(text, spec):
    if isinstance(spec, DiffusionSpec):
        try:
            return float(text)
        except ValueError as exc:
            raise CliError(f"--hit: diffusions take a radius r for H = [0, r], got {text!r}") from exc
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise CliError("--hit: empty state list")
    if isinstance(spec, TreeSpec):
        return items
    try:
        return [int(t) for t in items]
    except ValueError as exc:
        raise CliError(f"--hit: chain states are integers, got {text!r}") from exc


def cmd_simulate(model_path, overrides: dict | None = None, *, trials=100_000, seed=None, hit=None,
                 start=None, beta=None, horizon=None, dt=1e-3, truncate=None, mesh=None,
                 length=None) -> Outcome:
    """Monte Carlo hitting-time estimate with bound and solve comparisons."""
    doc, spec = _read_model(model_path)
    tol = tolerance_from(spec, overrides)
    report = _skeleton("simulate", model_path, doc, spec, tol)
    if seed is None:
        raw = os.environ.get(SEED_ENV)
        seed = int(raw) if raw else DEFAULT_SEED
    rng = RngConfig(int(seed))
    report["provenance"]["seed"] = rng.seed
    report["provenance"]["streams"] = rng.streams
    verdicts = report["verdicts"]
    not_ergodic = False

    if isinstance(spec, DiffusionSpec):
        if spec.domain != "half_line":
            raise CliError("only half-line diffusions can be simulated")
        r = _parse_hit(hit if hit is not None else "0.5", spec)
        x0 = float(start) if start is not None else 2.0
        h = float(_numerics(spec, "mesh", mesh) or DEFAULT_MESH)
        L = float(_numerics(spec, "length", length) or max(8.0, 4.0 * x0))
        est = em_diffusion_hitting(spec, x0, r, dt, trials, rng=rng, horizon=horizon or 1e3)
        G = truncate_generator(spec, mesh=h, length=L)
        xs = np.asarray(G.meta["x"])
        H_idx = np.flatnonzero(xs <= r)
        ref_val = float(np.interp(x0, xs, hitting_moments(G, H_idx)))
        reference = (ref_val, f"discretized solve, mesh {h:g} on [0, {L:g}]")
        report["provenance"]["truncation"] = {"mesh": h, "length": L, "dt": dt}
        rich = est.diagnostics["richardson"]
        allowance = 3 * est.std_error + abs(rich["bias_estimate"]) + 3 * rich["bias_std_error"]
        gap = abs(est.mean - ref_val)
        verdicts.append(_verdict("mc_mean_matches_solve", gap <= allowance, allowance - gap,
                                 "|EM mean - solve| <= 3 SE + |Richardson bias| + 3 bias SE"))
        try:
            M_r = diff_Mr(spec, r, tol)
        except NotStronglyErgodic as exc:
            not_ergodic = True
            verdicts.append(_verdict("strong_ergodicity", False, None, str(exc)))
        else:
            margin = M_r - (est.mean - allowance)
            verdicts.append(_verdict("mc_mean_le_M_r", margin >= 0, margin,
                                     "EM mean (less its allowance) <= M_r = sup_x E_x tau_[0,r]"))
        mc = {"method": "euler_maruyama", "x0": repr(x0), "H": f"[0, {r!r}]"}
    elif isinstance(spec, (BirthDeathSpec, SingleDeathSpec, TreeSpec)):
        default_H = spec.root if isinstance(spec, TreeSpec) else "0"
        H = _parse_hit(hit if hit is not None else default_H, spec)
        if start is None:
            x0 = next(n.id for n in spec.nodes if n.parent is not None) if isinstance(spec, TreeSpec) else 1
        else:
            x0 = str(start) if isinstance(spec, TreeSpec) else int(start)
        N = int(_numerics(spec, "truncation", truncate) or DEFAULT_TRUNCATION)
        est = mc_hitting(spec, x0, H, trials, beta=beta, horizon=horizon or 1e6, rng=rng)
        reference = _chain_reference(spec, x0, H, N)
        report["provenance"]["truncation"] = {"N": N}
        if reference is not None:
            gap = abs(est.mean - reference[0])
            verdicts.append(_verdict("mc_mean_matches_solve", gap <= 3 * est.std_error, 3 * est.std_error - gap,
                                     "|MC mean - linear solve| <= 3 SE"))
        try:
            rb = compute_bounds(spec, tol)
        except NotStronglyErgodic as exc:
            not_ergodic = True
            verdicts.append(_verdict("strong_ergodicity", False, None, str(exc)))
        else:
            target = [str(spec.root)] if isinstance(spec, TreeSpec) else ["0"]
            if rb.S is not None and [str(h) for h in H] == target:
                margin = rb.S - (est.mean - 3 * est.std_error)
                verdicts.append(_verdict("mc_mean_le_S", margin >= 0, margin,
                                         "MC mean - 3 SE <= S = sup_x E_x tau_H"))
                if est.exp_moment is not None and 0 < est.exp_moment[0] < 1 / rb.S:
                    b, m, se = est.exp_moment
                    cap = 1.0 / (1.0 - b * rb.S)
                    verdicts.append(_verdict("mc_exp_moment_le_bound", m - 3 * se <= cap, cap - (m - 3 * se),
                                             "E e^{beta tau} - 3 SE <= 1/(1 - beta S)"))
        mc = {"method": "exact_ctmc", "x0": str(x0), "H": "{" + ",".join(str(h) for h in H) + "}"}
    else:
        raise CliError(f"family {doc['family']} is not simulable")

    verdicts.append(_verdict("censoring_below_1pct", not est.flagged, 0.01 * est.trials - est.censored,
                             f"{est.censored} of {est.trials} trajectories censored at the horizon",
                             level="check" if not est.flagged else "warning"))
    mc["estimate"] = est.to_dict()
    mc["reference"] = None if reference is None else {"value": reference[0], "method": reference[1]}
    report["montecarlo"] = mc
    return _finish(report, not_ergodic)


# --------------------------------------------------------------------------
# argument handling

def _emit(report: dict, fmt: str, out_path):
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["key", "value"])
        for key, value in _flatten(report):
            writer.writerow([key, value])
        text = buf.getvalue()
    else:
        text = json.dumps(report, indent=2, sort_keys=False) + "\n"
    if out_path is None:
        sys.stdout.write(text)
    else:
        Path(out_path).write_text(text, encoding="utf-8")


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, "" if obj is None else obj


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ergobound", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ergobound {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("model", help="model document (JSON)")
    common.add_argument("--tol-rel", type=float, help="relative tolerance for series and quadrature")
    common.add_argument("--tol-abs", type=float, help="absolute tolerance for series and quadrature")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    sub.add_parser("bounds", parents=[common], help="closed-form rate bounds")

    v = sub.add_parser("verify", parents=[common], help="bounds plus oracle cross-checks")
    v.add_argument("--truncate", type=int, help=f"chain truncation size (default {DEFAULT_TRUNCATION})")
    v.add_argument("--mesh", type=float, help=f"diffusion mesh width (default {DEFAULT_MESH:g})")
    v.add_argument("--length", type=float, help=f"diffusion interval length (default {DEFAULT_LENGTH:g})")
    v.add_argument("--times", help='TV time grid: "t1,t2,..." or "geom:a:b:n"')
    v.add_argument("--expect-gap", type=float, help="add a verdict that the oracle gap is at least this")

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo hitting times")
    s.add_argument("--trials", type=int, default=100_000)
    s.add_argument("--seed", type=int, help=f"RNG seed (default: ${SEED_ENV} or {DEFAULT_SEED})")
    s.add_argument("--hit", help="target set: comma list of states, or a radius r for diffusions")
    s.add_argument("--start", help="starting state or point")
    s.add_argument("--beta", type=float, help="also estimate E e^{beta tau}")
    s.add_argument("--horizon", type=float, help="censoring horizon")
    s.add_argument("--dt", type=float, default=1e-3, help="Euler-Maruyama step for diffusions")
    s.add_argument("--truncate", type=int, help="truncation of the reference linear solve")
    s.add_argument("--mesh", type=float, help="mesh of the reference diffusion solve")
    s.add_argument("--length", type=float, help="interval length of the reference diffusion solve")
    return p


def main(argv=None) -> int:
    """Run the CLI and return its exit code."""
    args = _parser().parse_args(argv)
    overrides = {"rel": args.tol_rel, "abs": args.tol_abs}
    try:
        if args.command == "bounds":
            outcome = cmd_bounds(args.model, overrides)
        elif args.command == "verify":
            outcome = cmd_verify(args.model, overrides, truncate=args.truncate, mesh=args.mesh,
                                 length=args.length, times=parse_times(args.times),
                                 expect_gap=args.expect_gap, out_path=args.out)
        else:
            outcome = cmd_simulate(args.model, overrides, trials=args.trials, seed=args.seed, hit=args.hit,
                                   start=args.start, beta=args.beta, horizon=args.horizon, dt=args.dt,
                                   truncate=args.truncate, mesh=args.mesh, length=args.length)
        _emit(outcome.report, args.format, args.out)
    except CliError as exc:
        print(f"ergobound: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ModelError, NumericalError, InconclusiveError, SimulationError, ValueError,
            TypeError, OverflowError, OSError) as exc:
        print(f"ergobound: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return outcome.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
