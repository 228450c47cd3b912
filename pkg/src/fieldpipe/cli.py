"""Command line interface.

    fieldpipe run <pipeline.xml>        execute a pipeline
    fieldpipe validate <pipeline.xml>   validate only, touch nothing
    fieldpipe strip-mesh <in> <out>     geometry-only copy of a container
    fieldpipe info <container>          summary report (+ CSV/figures)

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time

import numpy as np

from .container import ContainerError, ContainerReader, strip_mesh
from .engine import FilterRuntimeError, PipelineError, load_pipeline
from .ensight import EnsightError
from .mesh import MeshError

log = logging.getLogger("fieldpipe")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

_VALIDATION_ERRORS = (PipelineError, ContainerError, EnsightError, MeshError)


def _setup_logging(verbose: bool, quiet: bool):
    level = logging.WARNING if quiet else (
        logging.DEBUG if verbose else logging.INFO)
    logging.basicConfig(
        level=level, stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _cmd_run(args) -> int:
    t0 = time.monotonic()
    try:
        pipeline = load_pipeline(args.pipeline, threads=args.threads,
                                 dry_run=args.validate_only)
    except _VALIDATION_ERRORS as e:
        log.error("%s", e)
        return EXIT_VALIDATION
    if args.validate_only:
        print(f"{args.pipeline}: valid "
              f"({len(pipeline.schedule)} steps scheduled)")
        return EXIT_OK
    try:
        pipeline.execute()
    except (FilterRuntimeError, OSError) + _VALIDATION_ERRORS as e:
        log.error("%s", e)
        return EXIT_RUNTIME
    print(f"completed {len(pipeline.schedule)} steps in "
          f"{time.monotonic() - t0:.2f} s")
    return EXIT_OK


def _cmd_validate(args) -> int:
    # Loading in dry-run mode resolves input files, the schedule, and all
    # static quantity metadata, but never creates output containers.
    try:
        pipeline = load_pipeline(args.pipeline, dry_run=True)
    except _VALIDATION_ERRORS as e:
        log.error("%s", e)
        return EXIT_VALIDATION
    print(f"{args.pipeline}: valid ({len(pipeline.schedule)} steps "
          f"scheduled, {len(pipeline.doc.filters)} pipeline nodes)")
    return EXIT_OK


def _cmd_strip_mesh(args) -> int:
    try:
        strip_mesh(args.input, args.output)
    except _VALIDATION_ERRORS as e:
        log.error("%s", e)
        return EXIT_VALIDATION
    print(f"wrote geometry-only container {args.output}")
    return EXIT_OK


def _cmd_info(args) -> int:
    try:
        reader = ContainerReader(args.container)
    except _VALIDATION_ERRORS as e:
        log.error("%s", e)
        return EXIT_VALIDATION
    mesh = reader.mesh
    man = reader.manifest
    print(f"container: {args.container}")
    print(f"analysis:  {man.analysis}")
    print(f"nodes:     {len(mesh.nodes)}")
    print(f"steps:     {len(man.steps)}", end="")
    if man.steps:
        print(f"  (values {man.steps[0][1]:g} .. {man.steps[-1][1]:g})")
    else:
        print()
    print("regions:")
    for name in sorted(mesh.regions):
        blocks = ", ".join(f"{b.num_elements} {b.etype.value}"
                           for b in mesh.regions[name])
        print(f"  {name}: {blocks or 'empty'}")

    rows = []
    for q in man.quantities:
        lo, hi = np.inf, -np.inf
        for idx, _val in man.steps_for(q.name):
            step = reader.read_step(q.name, idx)
            for arr in step.values.values():
                mag = np.abs(arr) if q.value_kind == "COMPLEX" else arr
                if mag.size:
                    lo = min(lo, float(mag.min()))
                    hi = max(hi, float(mag.max()))
        nsteps = len(man.steps_for(q.name))
        rows.append((q.name, q.defined_on, q.components, nsteps, lo, hi))
        print(f"quantity {q.name}: {q.defined_on}, {q.components} comp, "
              f"{nsteps} steps, range [{lo:g}, {hi:g}]")

    if args.report_dir:
        _write_report(args.report_dir, reader, rows)
        print(f"report written to {args.report_dir}")
    return EXIT_OK


def _write_report(report_dir: str, reader: ContainerReader, rows):
    """Delimited summary plus one time-trace figure per quantity."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(report_dir, exist_ok=True)
    with open(os.path.join(report_dir, "quantities.csv"), "w",
              newline="") as f:
        w = csv.writer(f)
        w.writerow(["name", "defined_on", "components", "steps",
                    "min", "max"])
        w.writerows(rows)
    man = reader.manifest
    for q in man.quantities:
        steps = man.steps_for(q.name)
        if not steps:
            continue
        times, lo, hi, mean = [], [], [], []
        for idx, val in steps:
            step = reader.read_step(q.name, idx)
            stacked = np.vstack(list(step.values.values()))
            mag = (np.abs(stacked) if q.value_kind == "COMPLEX"
                   else stacked)
            times.append(val)
            lo.append(float(mag.min()))
            hi.append(float(mag.max()))
            mean.append(float(mag.mean()))
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.plot(times, mean, label="mean", color="C0")
        ax.fill_between(times, lo, hi, alpha=0.25, color="C0",
                        label="min..max")
        ax.set_xlabel("step value")
        ax.set_ylabel(q.name)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        fig.savefig(os.path.join(report_dir, f"{q.name}.png"), dpi=120)
        plt.close(fig)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fieldpipe",
        description="filter pipelines for unstructured CFD field data",
    )
    ap.add_argument("--verbose", action="store_true",
                    help="debug-level logging")
    ap.add_argument("--quiet", action="store_true",
                    help="warnings and errors only")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a pipeline document")
    run.add_argument("pipeline", help="pipeline XML file")
    run.add_argument("--threads", type=int, default=None,
                     help="worker thread budget (results are identical "
                          "for any value)")
    run.add_argument("--validate-only", action="store_true",
                     help="stop after validation")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="validate a pipeline document")
    val.add_argument("pipeline", help="pipeline XML file")
    val.set_defaults(func=_cmd_validate)

    strip = sub.add_parser("strip-mesh",
                           help="copy a container without field data")
    strip.add_argument("input", help="source container directory")
    strip.add_argument("output", help="destination container directory")
    strip.set_defaults(func=_cmd_strip_mesh)

    info = sub.add_parser("info", help="summarize a container")
    info.add_argument("container", help="container directory")
    info.add_argument("--report-dir", default=None,
                      help="also write quantities.csv and per-quantity "
                           "figures to this directory")
    info.set_defaults(func=_cmd_info)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose, args.quiet)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
