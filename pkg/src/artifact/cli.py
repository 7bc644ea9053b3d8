"""Command line driver: scenario in, CSV/JSONL out.

Exit codes: 0 success, 1 validation error, 2 admissibility breach, 3 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from .dynamics import BreachError
from .geometry import GeometryError
from .laplace import SolverError
from .reflections import ContractionError, ReflectionDomainSolver
from .scenario import ScenarioError, load_scenario

log = logging.getLogger("artifact")

EXIT_OK, EXIT_VALIDATION, EXIT_BREACH, EXIT_SOLVER = 0, 1, 2, 3


def fmt(x):
    return "%.17g" % float(x)


# ---------------------------------------------------------------------------
# CSV schema
# ---------------------------------------------------------------------------

def csv_header(n_bodies, n_vortices, n_circ=None):
    n_circ = n_bodies if n_circ is None else n_circ
    cols = ["t"]
    for k in range(n_bodies):
        cols += [f"body{k}.{c}" for c in ("hx", "hy", "theta", "vx", "vy", "omega")]
    for k in range(n_vortices):
        cols += [f"vortex{k}.x", f"vortex{k}.y"]
    cols.append("energy")
    cols += [f"circ{k}" for k in range(n_circ)]
    cols.append("margin")
    return cols


def record_row(rec, vortices=None):
    """One CSV row; vortex columns are point vortices first, then blobs."""
    row = [rec["t"]]
    for qk, pk in zip(rec["q"], rec["p"]):
        row += list(qk) + list(pk)
    vz = rec["pos"] if vortices is None else np.concatenate([vortices, rec["pos"]])
    for z in vz:
        row += [z.real, z.imag]
    row.append(rec["energy"])
    row += list(rec["circ"])
    row.append(rec["margin"])
    return [fmt(x) for x in row]


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def full_csv(path, records):
    if not records:
        write_csv(path, ["t"], [])
        return
    r0 = records[0]
    write_csv(path, csv_header(len(r0["q"]), len(r0["pos"])), [record_row(r) for r in records])


def limit_csv(path, records):
    if not records:
        write_csv(path, ["t"], [])
        return
    r0 = records[0]
    nv = len(r0["h"]) + len(r0["pos"])
    write_csv(path, csv_header(len(r0["q"]), nv), [record_row(r, r["h"]) for r in records])


def long_format(src, dst):
    """Wide run CSV to long format (t, series, value) for plotting tools."""
    with open(src, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = []
        for r in rd:
            for name, v in zip(header[1:], r[1:]):
                rows.append([r[0], name, v])
    write_csv(dst, ["t", "series", "value"], rows)
    return len(rows)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _solver_factory(args, scn):
    kind = args.solver or scn.numerics["solver"]
    if kind == "direct":
        return None
    tol = args.tol if args.tol is not None else scn.numerics["reflection_tol"]
    return lambda cfg: ReflectionDomainSolver(cfg, tol)


def _prefix(args, scn):
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, scn.outputs["prefix"])


def cmd_run_full(args, scn):
    from . import dynamics
    tr = dynamics.run(scn.full_state(), scn.numerics["dt"], scn.numerics["t_end"],
                      solver=_solver_factory(args, scn), stride=scn.outputs["stride"],
                      keep_states=False)
    path = _prefix(args, scn) + ".full.csv"
    full_csv(path, tr.records)
    print(path)
    if tr.reason != "completed":
        log.error(tr.reason)
        return EXIT_BREACH
    return EXIT_OK


def cmd_run_limit(args, scn):
    from . import limitsys
    tr = limitsys.run(scn.limit_state(), scn.numerics["dt"], scn.numerics["t_end"],
                      stride=scn.outputs["stride"], keep_states=False)
    path = _prefix(args, scn) + ".limit.csv"
    limit_csv(path, tr.records)
    print(path)
    if tr.reason != "completed":
        log.error(tr.reason)
        return EXIT_BREACH
    return EXIT_OK


def cmd_sweep(args, scn):
    from .harness import convergence_sweep, write_jsonl
    eps = scn.sweep.get("epsilons", [0.1, 0.05, 0.025])
    pre = _prefix(args, scn)
    stride = scn.outputs["stride"]

    def save(e, tr, rec):
        full_csv(f"{pre}.eps{e:g}.csv", tr.records[::stride])

    rows = convergence_sweep(scn, eps, solver=_solver_factory(args, scn), observer=save,
                             threads=args.threads)
    write_jsonl(pre + ".sweep.jsonl", rows)
    print(pre + ".sweep.jsonl")
    return EXIT_BREACH if any(r["breach"] for r in rows) else EXIT_OK


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


def cmd_check_estimates(args, scn):
    from .harness import DEFAULT_EPS, estimate_checks, write_jsonl
    shape = None
    if scn is not None:
        small = [b for b in scn.bodies if b.family != "i"]
        if small:
            shape = small[0].shape
    rep = estimate_checks(shape, scn.sweep.get("epsilons", DEFAULT_EPS) if scn else DEFAULT_EPS)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "estimates.jsonl")
    write_jsonl(path, [dict(check=k, **_jsonable(v)) for k, v in rep.items()])
    for k, v in rep.items():
        print(f"{'PASS' if v['passed'] else 'FAIL'} {k}")
    return EXIT_OK


def cmd_emit_plots(args, scn):
    os.makedirs(args.out_dir, exist_ok=True)
    for src in args.inputs:
        base = os.path.splitext(os.path.basename(src))[0]
        dst = os.path.join(args.out_dir, base + ".long.csv")
        long_format(src, dst)
        print(dst)
    return EXIT_OK


COMMANDS = {"run-full": cmd_run_full, "run-limit": cmd_run_limit, "sweep": cmd_sweep,
            "check-estimates": cmd_check_estimates, "emit-plots": cmd_emit_plots}


def build_parser():
    ap = argparse.ArgumentParser(prog="artifact", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--scenario", required=name not in ("check-estimates", "emit-plots"))
        sp.add_argument("--out-dir", default=".")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--solver", choices=("direct", "reflections"))
        sp.add_argument("--tol", type=float)
        if name == "emit-plots":
            sp.add_argument("inputs", nargs="+", help="run CSV files")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        scn = load_scenario(args.scenario) if args.scenario else None
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return COMMANDS[args.command](args, scn)
    except (ScenarioError, GeometryError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except BreachError as e:
        print(f"breach: {e}", file=sys.stderr)
        return EXIT_BREACH
    except (ContractionError, SolverError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
