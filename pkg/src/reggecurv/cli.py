"""Command-line surface for the curvature pipeline.

One executable with subcommands: ``validate`` (mesh axioms and
tangential-continuity report), ``curvature`` (assemble the distributional
functional), ``gauss-bonnet`` (closed-surface identity check),
``equiv-check`` (brute-force wedge-trace vs contraction residuals),
``frame-evolve`` (per-cell frame ODE drift report) and ``refine-study``
(totals and defects per refinement level).  Options resolve in the order
command-line flag, then environment variable with the ``REGGE_`` prefix,
then built-in default.  Reports are emitted as canonical JSON (sorted
keys) or CSV with the fixed header ``polytope_id,dim,term,value``; both
are byte-stable across runs on identical input.

Exit status: 0 when all requested checks pass, 2 when a numeric check
exceeds its tolerance, 1 on malformed input.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from .errors import DriftExceeded, IoError, ReggeError
from .functional import (DEFAULT_DEGREE, GaussTestField, assemble,
                         bruteforce_equivalence_check, load_test_field)
from .frames import evolve_frame, linear_metric_path
from .gauss2d import gauss_bonnet_check
from .mesh import euler_characteristic, load_mesh, refine
from .metric import check_positive_definite, check_tt_continuity, load_metric

log = logging.getLogger(__name__)

ENV_PREFIX = "REGGE_"
EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CHECK = 2

CSV_HEADER = ("polytope_id", "dim", "term", "value")


# ===========================================================================
# option resolution: flag > environment > default
# ===========================================================================

_DEFAULTS = {
    "quad_degree": DEFAULT_DEGREE,
    "tol": 1e-8,
    "levels": 3,
    "steps": 100,
    "format": "json",
    "threads": 1,
}

_CASTS = {
    "quad_degree": int,
    "tol": float,
    "levels": int,
    "steps": int,
    "threads": int,
    "format": str,
    "mesh": str,
    "metric": str,
    "phi": str,
    "test_field": str,
    "out": str,
}


def _resolve(args, name):
    """Flag value if given, else REGGE_<NAME> from the environment, else
    the built-in default (None for paths)."""
    val = getattr(args, name, None)
    if val is not None:
        return val
    env = os.environ.get(ENV_PREFIX + name.upper())
    if env is not None:
        try:
            return _CASTS[name](env)
        except ValueError as exc:
            raise IoError("bad value for %s%s: %s"
                          % (ENV_PREFIX, name.upper(), exc)) from exc
    return _DEFAULTS.get(name)


class _Options:
    """Resolved option bag for one invocation."""

    def __init__(self, args):
        for name in _CASTS:
            setattr(self, name, _resolve(args, name))
        if self.format not in ("json", "csv"):
            raise IoError("unknown output format %r" % self.format)
        if self.threads < 1:
            raise IoError("--threads must be at least 1")
        if self.levels < 1:
            raise IoError("--levels must be at least 1")
        if self.steps < 1:
            raise IoError("--steps must be at least 1")


def _require(opts, *names):
    for name in names:
        if getattr(opts, name) is None:
            raise IoError("missing required option --%s"
                          % name.replace("_", "-"))


# ===========================================================================
# report emission
# ===========================================================================

def emit_report(report, rows, opts):
    """Write the JSON report or the per-polytope CSV rows.

    JSON is canonical (sorted keys, fixed float formatting through
    ``repr``); CSV uses the fixed header.  Deterministic accumulation
    upstream makes both byte-stable for identical input.
    """
    if opts.format == "json":
        text = json.dumps(report, sort_keys=True, indent=2,
                          allow_nan=True) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([row[0], row[1], row[2], repr(float(row[3]))])
        text = buf.getvalue()
    if opts.out is None or opts.out == "-":
        sys.stdout.write(text)
    else:
        with open(opts.out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _measure_rows(complex_, measure):
    n = complex_.dim
    rows = []
    for i, v in sorted(measure.cells.items()):
        rows.append((i, n, "cell", v))
    for i, v in sorted(measure.faces.items()):
        rows.append((i, n - 1, "face", v))
    for i, v in sorted(measure.hinges.items()):
        rows.append((i, n - 2, "hinge", v))
    return rows


def _gauss_rows(report):
    rows = []
    for i, v in sorted(report.cells.items()):
        rows.append((i, 2, "cell_integral", v))
    for i, v in sorted(report.interior_faces.items()):
        rows.append((i, 1, "interior_jump", v))
    for i, v in sorted(report.interior_hinges.items()):
        rows.append((i, 0, "interior_defect", v))
    for i, v in sorted(report.boundary_faces.items()):
        rows.append((i, 1, "boundary_geodesic", v))
    for i, v in sorted(report.boundary_hinges.items()):
        rows.append((i, 0, "boundary_turning", v))
    return rows


# ===========================================================================
# subcommands
# ===========================================================================

def _load_inputs(opts, need_metric=True):
    _require(opts, "mesh")
    complex_ = load_mesh(opts.mesh)
    metric = None
    if need_metric:
        _require(opts, "metric")
        metric = load_metric(opts.metric, complex_)
    return complex_, metric


def _cmd_validate(opts):
    complex_, _ = _load_inputs(opts, need_metric=False)
    report = {
        "dim": complex_.dim,
        "n_vertices": len(complex_.vertices),
        "n_cells": len(complex_.cells),
        "n_faces": len(complex_.faces),
        "n_hinges": len(complex_.hinges),
        "n_interior_faces": len(complex_.interior_faces),
        "n_interior_hinges": len(complex_.interior_hinges),
        "euler_characteristic": euler_characteristic(complex_),
    }
    rows = [(c.index, complex_.dim, "cell", 0.0) for c in complex_.cells]
    code = EXIT_OK
    if opts.metric is not None:
        metric = load_metric(opts.metric, complex_)
        worst, per_face = check_tt_continuity(complex_, metric)
        min_eig = check_positive_definite(complex_, metric,
                                          raise_on_fail=False)
        ok = worst <= opts.tol and min_eig > 0.0
        report.update({
            "tt_max_jump": worst,
            "tt_jumps": [{"id": i, "value": v}
                         for i, v in sorted(per_face.items())],
            "min_eigenvalue": min_eig,
            "tolerance": opts.tol,
            "passed": ok,
        })
        rows = [(i, complex_.dim - 1, "tt_jump", v)
                for i, v in sorted(per_face.items())]
        if not ok:
            code = EXIT_CHECK
    emit_report(report, rows, opts)
    return code


def _make_field(opts, complex_):
    if opts.phi is not None and opts.test_field is not None:
        raise IoError("--phi and --test-field are mutually exclusive")
    if opts.phi is not None:
        return GaussTestField(opts.phi, dim=complex_.dim)
    return load_test_field(opts.test_field, complex_)


def _cmd_curvature(opts):
    complex_, metric = _load_inputs(opts)
    field = _make_field(opts, complex_)
    measure = assemble(complex_, metric, field, degree=opts.quad_degree)
    emit_report(measure.to_dict(), _measure_rows(complex_, measure), opts)
    return EXIT_OK


def _cmd_gauss_bonnet(opts):
    complex_, metric = _load_inputs(opts)
    result = gauss_bonnet_check(complex_, metric, degree=opts.quad_degree)
    report = result.to_dict()
    report["tolerance"] = opts.tol
    report["passed"] = result.defect <= opts.tol
    emit_report(report, _gauss_rows(result.report), opts)
    return EXIT_OK if result.defect <= opts.tol else EXIT_CHECK


def _cmd_equiv_check(opts):
    complex_, metric = _load_inputs(opts)
    res = bruteforce_equivalence_check(complex_, metric,
                                       degree=min(opts.quad_degree, 6))
    worst = max(res.values())
    report = dict(res)
    report.update({"max_residual": worst, "tolerance": opts.tol,
                   "passed": worst <= opts.tol})
    rows = [("all", complex_.dim, "%s_residual" % k, v)
            for k, v in sorted(res.items())]
    emit_report(report, rows, opts)
    return EXIT_OK if worst <= opts.tol else EXIT_CHECK


def _cmd_frame_evolve(opts):
    complex_, metric = _load_inputs(opts)
    n = complex_.dim
    cells_out = []
    rows = []
    worst = 0.0
    code = EXIT_OK
    for cell in complex_.cells:
        ref = cell.ref.centroid()[None, :]
        gram = metric.evaluate(complex_, cell.index, ref).g[0]
        path = linear_metric_path(np.eye(n), gram)
        try:
            hom = evolve_frame(path, steps=opts.steps, drift_tol=opts.tol)
            drift = hom.max_drift
            frame = np.asarray(hom.final).tolist()
        except DriftExceeded as exc:
            log.warning("cell %d: %s", cell.index, exc)
            drift = float("inf")
            frame = None
            code = EXIT_CHECK
        worst = max(worst, drift)
        cells_out.append({"id": cell.index, "max_drift": drift,
                          "frame": frame})
        rows.append((cell.index, n, "frame_drift", drift))
    report = {"steps": opts.steps, "drift_tolerance": opts.tol,
              "max_drift": worst, "cells": cells_out,
              "passed": code == EXIT_OK}
    emit_report(report, rows, opts)
    return code


def _cmd_refine_study(opts):
    complex_, _ = _load_inputs(opts, need_metric=False)
    _require(opts, "metric")
    levels_out = []
    rows = []
    for level in range(opts.levels):
        if level > 0:
            complex_ = refine(complex_)
        metric = load_metric(opts.metric, complex_)
        if complex_.dim == 2:
            result = gauss_bonnet_check(complex_, metric,
                                        degree=opts.quad_degree)
            total, defect = result.report.total, result.defect
        else:
            measure = assemble(complex_, metric, degree=opts.quad_degree)
            total, defect = measure.total, abs(measure.total)
        levels_out.append({"level": level, "n_cells": len(complex_.cells),
                           "total": total, "defect": defect})
        rows.append((level, complex_.dim, "total", total))
        rows.append((level, complex_.dim, "defect", defect))
        log.info("level %d: %d cells, total=%.12g, defect=%.3e",
                 level, len(complex_.cells), total, defect)
    emit_report({"levels": levels_out}, rows, opts)
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "curvature": _cmd_curvature,
    "gauss-bonnet": _cmd_gauss_bonnet,
    "equiv-check": _cmd_equiv_check,
    "frame-evolve": _cmd_frame_evolve,
    "refine-study": _cmd_refine_study,
}


# ===========================================================================
# argument parsing and entry point
# ===========================================================================

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="regge",
        description="Distributional curvature of piecewise-smooth metrics "
                    "on polytopal meshes.")
    parser.add_argument("--verbose", "-v", action="count", default=0,
                        help="increase log verbosity (repeatable)")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    for name, help_text in (
            ("validate", "check mesh axioms and metric continuity"),
            ("curvature", "assemble the distributional curvature measure"),
            ("gauss-bonnet", "compare the total pairing against 2 pi chi"),
            ("equiv-check", "brute-force functional equivalence residuals"),
            ("frame-evolve", "per-cell frame ODE drift report"),
            ("refine-study", "totals and defects per refinement level")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--mesh", help="mesh JSON path")
        p.add_argument("--metric", help="metric JSON path")
        p.add_argument("--phi", help="scalar weight for the canonical "
                                     "Gauss test field")
        p.add_argument("--test-field", dest="test_field",
                       help="test field JSON path")
        p.add_argument("--quad-degree", dest="quad_degree", type=int,
                       help="quadrature exactness degree")
        p.add_argument("--tol", type=float, help="numeric check tolerance")
        p.add_argument("--levels", type=int,
                       help="refinement levels for refine-study")
        p.add_argument("--steps", type=int, help="frame ODE step count")
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--format", choices=("json", "csv"),
                       help="report format")
        p.add_argument("--threads", type=int,
                       help="worker count (reduction is deterministic "
                            "regardless)")
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=(logging.WARNING, logging.INFO, logging.DEBUG)[
            min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_INPUT
    try:
        opts = _Options(args)
        return _COMMANDS[args.command](opts)
    except ReggeError as exc:
        sys.stderr.write("error: %s: %s\n" % (type(exc).__name__, exc))
        return EXIT_INPUT
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
