"""Command line scenario runner.

    phinonlocal solve  <config> [--out DIR] [--tol X] [--max-steps N] [--verbose]
    phinonlocal verify <config> ...        # certification only
    phinonlocal sweep  <config> --axis {lambda,theta,mesh} ...

Exit codes: 0 success, 1 configuration error, 2 certification or
hypothesis failure, 3 iteration failure.  All outputs are deterministic
functions of the configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import Scenario, load_scenario
from .errors import (
    CertificationFailure,
    ConfigError,
    DegenerateThreshold,
    HypothesisViolation,
    IterationFailure,
    KSelectionFailure,
    LambdaSearchFailure,
    NewtonDivergence,
    OrderingViolation,
    PhiNonlocalError,
)
from .grid import GridFunction, make_mesh, write_csv
from .monotone import iterate, iterate_unchecked
from .nfunction import zeta_bounds
from .orlicz import luxemburg_norm, modular
from .philap import torsion
from .subsuper import build_pair_concave_convex, build_pair_sublinear, thresholds_concave_convex

__all__ = ["main", "run_scenario", "run_sweep", "EXIT_OK", "EXIT_CONFIG", "EXIT_CERT", "EXIT_ITER"]

log = logging.getLogger("phinonlocal")

EXIT_OK, EXIT_CONFIG, EXIT_CERT, EXIT_ITER = 0, 1, 2, 3
_CERT_ERRORS = (
    CertificationFailure,
    HypothesisViolation,
    KSelectionFailure,
    LambdaSearchFailure,
    OrderingViolation,
    DegenerateThreshold,
)
_ITER_ERRORS = (IterationFailure, NewtonDivergence)
_ENVELOPE_SLACK = 1e-2


# -- output helpers ----------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(data: dict, path) -> None:
    Path(path).write_text(json.dumps(_clean(data), sort_keys=True, indent=2) + "\n")


def write_table(rows: list, columns, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return "x".join(str(x) for x in v)
    return str(v)


def _error_info(exc) -> dict:
    info = {"type": type(exc).__name__, "message": str(exc)}
    for attr in ("node", "margin", "magnitude"):
        val = getattr(exc, attr, None)
        if val is not None:
            info[attr] = val
    return info


def _exit_for(exc) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, _CERT_ERRORS):
        return EXIT_CERT
    if isinstance(exc, _ITER_ERRORS):
        return EXIT_ITER
    return EXIT_CERT


# -- pipeline ----------------------------------------------------------------------


def _mesh_info(mesh) -> dict:
    return {"dim": mesh.dim, "extents": [list(e) for e in mesh.extents], "counts": list(mesh.counts), "h": list(mesh.h)}


def build_pairs(sc: Scenario, spec=None, mesh=None, rep=None):
    """Construct and certify pairs; returns ``(pairs, threshold_report)``."""
    spec = spec or sc.spec
    mesh = mesh or sc.mesh
    if sc.problem_class.startswith("concave_convex"):
        rep = rep or thresholds_concave_convex(spec, mesh, sc.mode, sc.solver)
        pairs = build_pair_concave_convex(spec, mesh, sc.mode, sc.solver, sc.delta, report=rep)
    else:
        rep = None
        pairs = build_pair_sublinear(spec, mesh, sc.solver, sc.delta)
    return (list(pairs) if isinstance(pairs, tuple) else [pairs]), rep


def _suffix(i: int) -> str:
    return "" if i == 0 else f"_{i + 1}"


def run_scenario(sc: Scenario, out: Path | None = None, verify_only: bool = False) -> tuple:
    """Build, certify and (unless ``verify_only``) iterate; returns ``(exit_code, report)``."""
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if sc.problem_class == "torsion_study":
        return _torsion_study(sc, out)
    if sc.problem_class == "norm_study":
        return _norm_study(sc, out)

    report = {
        "name": sc.name,
        "class": sc.problem_class,
        "mode": sc.mode,
        "problem": sc.spec.to_dict(),
        "mesh": _mesh_info(sc.mesh),
        "iteration_settings": {"tol": sc.tol, "max_steps": sc.max_steps, "descending": sc.descending},
        "certified": False,
        "converged": False,
    }
    code = EXIT_OK
    try:
        pairs, rep = build_pairs(sc)
        report["thresholds"] = None if rep is None else rep.to_dict()
        report["pairs"] = [p.to_dict() for p in pairs]
        report["certified"] = all(p.certificate.holds for p in pairs)
        if not verify_only:
            traces = iterate(sc.spec, pairs, sc.tol, sc.max_steps, sc.descending, sc.solver)
            _emit_traces(report, traces, out)
    except HypothesisViolation as exc:
        report["error"] = _error_info(exc)
        code = EXIT_CERT
        if sc.experimental and not verify_only:
            report["experimental"] = _experiment(sc, out)
    except PhiNonlocalError as exc:
        report["error"] = _error_info(exc)
        code = _exit_for(exc)
        traces = getattr(exc, "trace", None)
        if isinstance(traces, list):
            _emit_traces(report, traces, out)
    report["exit_code"] = code
    if out is not None:
        write_json(report, out / "report.json")
    return code, report


def _emit_traces(report, traces, out):
    report["iteration"] = [t.to_dict() for t in traces]
    report["converged"] = all(t.converged for t in traces)
    report["final_residual"] = max(t.final_residual for t in traces)
    if out is None:
        return
    for i, t in enumerate(traces):
        t.write_csv(out / f"trace{_suffix(i)}.csv")
        write_csv(t.solution, out / f"solution{_suffix(i)}.csv")


def _experiment(sc, out):
    """Uncertified fixed-point run from the torsion function at level 1."""
    start = [torsion(eq.op, sc.mesh, 1.0, sc.solver).solution for eq in sc.spec.equations]
    try:
        traces = iterate_unchecked(sc.spec, start, sc.tol, sc.max_steps, sc.solver)
    except PhiNonlocalError as exc:
        return {"certified": False, "error": _error_info(exc)}
    if out is not None:
        for i, t in enumerate(traces):
            t.write_csv(out / f"trace{_suffix(i)}.csv")
            write_csv(t.solution, out / f"solution{_suffix(i)}.csv")
    return {"certified": False, "iteration": [t.to_dict() for t in traces]}


# -- studies -------------------------------------------------------------------------


def _torsion_study(sc, out):
    nf = sc.spec.equations[0].op
    lams = sc.sweeps["lambda"].values
    maxima = [float(np.max(torsion(nf, sc.mesh, float(lam), sc.solver).solution.values)) for lam in lams]
    rows = []
    for i, (lam, mz) in enumerate(zip(lams, maxima)):
        j = max(i, 1)
        slope = None
        if len(lams) > 1:
            slope = math.log(maxima[j] / maxima[j - 1]) / math.log(lams[j] / lams[j - 1])
        rows.append({"lambda": float(lam), "max_z": mz, "fitted_slope": slope})
    lo, hi = 1.0 / (nf.m - 1.0), 1.0 / (nf.l - 1.0)
    slopes = [r["fitted_slope"] for r in rows if r["fitted_slope"] is not None]
    inside = all(lo - _ENVELOPE_SLACK <= s <= hi + _ENVELOPE_SLACK for s in slopes)
    report = {
        "name": sc.name,
        "class": sc.problem_class,
        "operator": nf.to_config(),
        "mesh": _mesh_info(sc.mesh),
        "envelope": [lo, hi],
        "slopes_within_envelope": inside,
        "rows": rows,
        "exit_code": EXIT_OK,
    }
    if out is not None:
        write_table(rows, ("lambda", "max_z", "fitted_slope"), out / "study.csv")
        write_json(report, out / "report.json")
    return EXIT_OK, report


def _norm_study(sc, out):
    eq = sc.spec.equations[0]
    nf, psi = eq.op, eq.norm_f
    rows = []
    for lam in sc.sweeps["lambda"].values:
        z = torsion(nf, sc.mesh, float(lam), sc.solver).solution
        lux = luxemburg_norm(z, psi)
        mod = modular(z, psi)
        z0, z1 = zeta_bounds(psi, lux.norm)
        ok = z0 * (1 - 1e-9) <= mod <= z1 * (1 + 1e-9)
        rows.append(
            {
                "lambda": float(lam),
                "sup_norm": z.sup(),
                "luxemburg_norm": lux.norm,
                "modular": mod,
                "zeta0": z0,
                "zeta1": z1,
                "modular_at_norm": lux.modular_at_norm,
                "sandwich_holds": bool(ok),
            }
        )
    report = {
        "name": sc.name,
        "class": sc.problem_class,
        "norm": psi.to_config(),
        "mesh": _mesh_info(sc.mesh),
        "all_hold": all(r["sandwich_holds"] for r in rows),
        "rows": rows,
        "exit_code": EXIT_OK,
    }
    if out is not None:
        write_table(rows, list(rows[0]), out / "study.csv")
        write_json(report, out / "report.json")
    return EXIT_OK, report


# -- sweeps --------------------------------------------------------------------------

SWEEP_COLUMNS = {
    "lambda": ("lambda", "certified", "min_margin", "threshold", "steps", "converged", "final_residual", "norm_psi", "solution_max", "error"),
    "theta": ("theta", "certified", "M", "psi_at_M", "theta0", "lambda0", "min_margin", "steps", "converged", "final_residual", "solution_max", "error"),
    "mesh": ("level", "counts", "h", "certified", "converged", "steps", "final_residual", "solution_max", "difference", "order", "error"),
}


def _row_for(sc, spec, mesh, K=None):
    row = {"certified": False, "converged": False}
    try:
        rep = None
        if sc.problem_class.startswith("concave_convex"):
            # threshold data goes into the row even when certification fails
            rep = thresholds_concave_convex(spec, mesh, sc.mode, sc.solver, K=K)
            row.update(M=rep.M, psi_at_M=rep.psi_at_M, theta0=rep.theta0, lambda0=rep.lambda0, threshold=rep.threshold)
        pairs, _ = build_pairs(sc, spec, mesh, rep=rep)
        row["certified"] = all(p.certificate.holds for p in pairs)
        row["min_margin"] = min(p.certificate.min_margin for p in pairs)
        traces = iterate(spec, pairs, sc.tol, sc.max_steps, sc.descending, sc.solver)
        row["converged"] = all(t.converged for t in traces)
        row["steps"] = max(t.steps for t in traces)
        row["final_residual"] = max(t.final_residual for t in traces)
        row["norm_psi"] = traces[0].norm_psi[-1]
        row["solution_max"] = max(float(np.max(t.solution.values)) for t in traces)
    except PhiNonlocalError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def run_sweep(sc: Scenario, axis: str, out: Path | None = None) -> list:
    """One row per parameter value; failures are recorded in the row, never raised."""
    if sc.problem_class in ("torsion_study", "norm_study"):
        raise ConfigError(f"class {sc.problem_class} has no sweep; use solve")
    if axis == "mesh":
        rows = _mesh_sweep(sc)
    else:
        rng = sc.sweeps.get(axis)
        if rng is None:
            raise ConfigError(f"missing or empty sweep range sweep.{axis} = [lo, hi, n]")
        if axis == "theta" and not sc.problem_class.startswith("concave_convex"):
            raise ConfigError("a theta sweep needs a concave-convex problem")
        K = None
        if sc.problem_class.startswith("concave_convex"):
            # the torsion constants do not depend on lambda or theta
            K = thresholds_concave_convex(sc.spec, sc.mesh, sc.mode, sc.solver).K
        rows = []
        for val in rng.values:
            spec = sc.spec.with_params(**{"lam" if axis == "lambda" else "theta": float(val)})
            row = _row_for(sc, spec, sc.mesh, K)
            row[axis] = float(val)
            rows.append(row)
            log.info("%s=%g certified=%s", axis, val, row["certified"])
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_table(rows, SWEEP_COLUMNS[axis], out / "sweep.csv")
    return rows


def _mesh_sweep(sc):
    """Nested refinements ``n, 2n-1, 4n-3, ...`` sharing the coarse nodes."""
    rows, prev_max, prev_diff = [], None, None
    counts = list(sc.mesh.counts)
    for level in range(sc.mesh_levels):
        mesh = make_mesh(sc.mesh.dim, sc.mesh.extents, counts)
        row = _row_for(sc, sc.spec, mesh)
        row.update(level=level, counts=list(counts), h=max(mesh.h))
        cur = row.get("solution_max")
        if cur is not None and prev_max is not None:
            row["difference"] = abs(cur - prev_max)
            if prev_diff and row["difference"] > 0:
                row["order"] = math.log2(prev_diff / row["difference"])
            prev_diff = row["difference"]
        prev_max = cur
        rows.append(row)
        counts = [2 * c - 1 for c in counts]
    return rows


# -- entry point -----------------------------------------------------------------------


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="scenario file (TOML)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--tol", type=float, help="override iteration.tol")
    common.add_argument("--max-steps", type=int, help="override iteration.max_steps")
    common.add_argument("--verbose", action="store_true", help="log progress to stderr")
    p = argparse.ArgumentParser(prog="phinonlocal", description="Sub-supersolution solver for nonlocal Phi-Laplacian problems")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="certify a pair and run the monotone iteration")
    sub.add_parser("verify", parents=[common], help="certify a pair only")
    sw = sub.add_parser("sweep", parents=[common], help="sweep lambda, theta or the mesh")
    sw.add_argument("--axis", required=True, choices=("lambda", "theta", "mesh"))
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        sc = load_scenario(args.config)
        if args.tol is not None:
            if not args.tol > 0:
                raise ConfigError("--tol must be positive")
            sc = replace(sc, tol=args.tol)
        if args.max_steps is not None:
            if args.max_steps < 1:
                raise ConfigError("--max-steps must be positive")
            sc = replace(sc, max_steps=args.max_steps)
        out = Path(args.out)
        if args.command == "sweep":
            rows = run_sweep(sc, args.axis, out)
            failed = sum(1 for r in rows if "error" in r)
            print(f"{sc.name}: {len(rows)} rows, {failed} failed -> {out / 'sweep.csv'}")
            return EXIT_OK
        code, report = run_scenario(sc, out, verify_only=args.command == "verify")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    msg = report.get("error", {}).get("message") if isinstance(report.get("error"), dict) else None
    status = "ok" if code == EXIT_OK else f"exit {code}: {msg}"
    print(f"{sc.name}: {status} -> {out / 'report.json'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
