"""Command-line driver: run trajectories or ensembles from a config file.

Output rows are ``t dtdid`` followed by one tab-separated group of
space-separated averages per displayed element (frees in declaration order,
then interactions in wiring order). Ensembles append the standard errors of
every group after the means. Numbers use 10 significant digits; header and
oracle lines start with ``#``.

Exit codes: 0 success, 2 config syntax, 3 construction or validation,
4 numerical fault.
"""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional, TextIO

import numpy as np

from .config import build_system, parse_config, trajectory_params
from .errors import ConfigSyntaxError, ConstructionError, NumericalError
from .mcwf import run_ensemble, run_trajectory
from . import kernels

EXIT_OK = 0
EXIT_SYNTAX = 2
EXIT_CONSTRUCTION = 3
EXIT_NUMERICAL = 4


def fmt(x: float) -> str:
    return "%.10g" % x


def format_row(row, widths, se_row=None) -> str:
    """``t dtdid<TAB>group<TAB>group...`` (then the error groups, if any)."""
    parts = [fmt(row[0]) + " " + fmt(row[1])]
    for source in (row, se_row) if se_row is not None else (row,):
        pos = 2
        for w in widths:
            parts.append(" ".join(fmt(v) for v in source[pos : pos + w]))
            pos += w
    return "\t".join(parts)


def header_lines(composite, params, ntraj, seed) -> List[str]:
    lines = ["# qtraj Monte Carlo wave-function run"]
    lines += [f"# {text}" for text in composite.describe()]
    lines.append(
        f"# trajectory seed={seed} eps={params.eps:g} dplimit={params.dplimit:g} "
        f"tend={params.t_end:g} dt_display={params.display_dt:g} ntraj={ntraj} "
        f"backend={composite.backend.NAME}"
    )
    cols = ["1:t", "2:dtdid"]
    n = 3
    groups = list(composite.labels)
    if ntraj > 1:
        groups += [(f"se {name}", labels) for name, labels in composite.labels]
    for name, labels in groups:
        cols.append(f"| {name}:")
        for lab in labels:
            cols.append(f"{n}:{lab}")
            n += 1
    lines.append("# columns " + " ".join(cols))
    return lines


def _colmax(a) -> List[str]:
    out = []
    for col in np.asarray(a).T:
        col = col[np.isfinite(col)]
        out.append(fmt(col.max()) if col.size else "nan")
    return out


def write_dump(path: str, t: float, dims, amps: np.ndarray):
    with open(path, "w") as fh:
        fh.write("# dims " + " ".join(str(d) for d in dims) + "\n")
        fh.write(f"# t {fmt(t)}\n")
        for a in amps:
            fh.write(f"{a.real:.17g} {a.imag:.17g}\n")


def _parse_times(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated times, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qtraj", description="Monte Carlo wave-function trajectories from a system config."
    )
    parser.add_argument("--config", required=True, help="system config file")
    parser.add_argument("--output", help="output file (default: stdout)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--ntraj", type=int, help="number of trajectories (ensemble if > 1)")
    parser.add_argument(
        "--oracle", action="store_true",
        help="also integrate the master equation and print '# oracle' comparison lines",
    )
    parser.add_argument(
        "--dump-state", type=_parse_times, default=None, metavar="T[,T...]",
        help="write the full state vector at these times to sidecar files",
    )
    parser.add_argument(
        "--backend", choices=kernels.available_backends(), help="kernel backend (default: fastest)"
    )
    return parser


def run(args, out: TextIO, err: TextIO) -> int:
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"qtraj: cannot read config: {exc}", file=err)
        return EXIT_SYNTAX
    try:
        cfg = parse_config(text)
        params, ntraj = trajectory_params(cfg, args.seed, args.dump_state)
        if args.ntraj is not None:
            ntraj = args.ntraj
    except ConfigSyntaxError as exc:
        print(f"qtraj: {args.config}: {exc}", file=err)
        return EXIT_SYNTAX
    except ConstructionError as exc:
        print(f"qtraj: {exc}", file=err)
        return EXIT_CONSTRUCTION
    try:
        composite, psi0 = build_system(cfg, backend=args.backend)
        if ntraj < 1:
            raise ConstructionError(f"ntraj must be at least 1, got {ntraj}")
        model = None
        if args.oracle:
            from .oracle import assemble_dense

            model = assemble_dense(composite)
        composite.highest_frequency()
    except ConfigSyntaxError as exc:
        print(f"qtraj: {args.config}: {exc}", file=err)
        return EXIT_SYNTAX
    except ConstructionError as exc:
        print(f"qtraj: {exc}", file=err)
        return EXIT_CONSTRUCTION

    widths = composite.group_widths
    try:
        if ntraj == 1:
            result = run_trajectory(composite, psi0, params)
            rows, se = result.rows, None
            dumps = result.dumps
        else:
            ens = run_ensemble(composite, psi0, params, ntraj)
            rows, se = ens.mean, ens.stderr
            # state dumps come from the first trajectory of the ensemble
            dumps = run_trajectory(composite, psi0, params).dumps if params.dump_times else []
    except NumericalError as exc:
        print(f"qtraj: numerical fault: {exc}", file=err)
        return EXIT_NUMERICAL

    for line in header_lines(composite, params, ntraj, params.seed):
        out.write(line + "\n")
    for i, row in enumerate(rows):
        out.write(format_row(row, widths, None if se is None else se[i]) + "\n")

    for i, (t, amps) in enumerate(dumps):
        path = f"{args.output}.dump{i}" if args.output else f"qtraj_state_{i}.dat"
        write_dump(path, t, composite.dims, amps)
        out.write(f"# dump t={fmt(t)} file={path}\n")

    if model is not None:
        from .oracle import integrate_master

        master = integrate_master(composite, psi0, times=rows[:, 0], eps=1e-9, model=model)
        out.write("# oracle master-equation averages at the same times\n")
        for row in master.rows:
            out.write("# oracle " + format_row(row, widths) + "\n")
        diff = np.abs(rows[:, 2:] - master.rows[:, 2:])
        out.write("# oracle max|sim-oracle| " + " ".join(_colmax(diff)) + "\n")
        if se is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.where(se[:, 2:] > 0, diff / se[:, 2:], np.nan)
            out.write("# oracle max|sim-oracle|/se " + " ".join(_colmax(z)) + "\n")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.output:
        with open(args.output, "w") as out:
            return run(args, out, sys.stderr)
    return run(args, sys.stdout, sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
