"""Command-line interface.

Four subcommands:

``simulate``
    Run a replication study on a built-in design and write the
    bias/variance/MSE table (optionally per-round estimates and binned
    densities).
``estimate``
    Fit requested estimators to a CSV dataset and write coefficients,
    standard errors and bias diagnostics.
``bias``
    Report bias coefficients and the leverage diagnostic for a dataset or
    design without fitting anything.
``oracle-check``
    Compare the closed-form leave-one-out jackknife against its
    brute-force oracle on random instances.

Exit codes: 0 success; 1 usage or configuration error; 2 data error
(unreadable or malformed input file); 3 numerical failure affecting every
requested estimator. The ``CMATRIX_IV_WORKERS`` environment variable sets
the default worker-thread count for ``simulate``.
"""
from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .bias import DEFAULT_TOL, bias_coefficient, is_approximately_unbiased
from .design import (
    DEFAULT_BA_THRESHOLD,
    DesignData,
    leverage_report,
    partial_out,
    project,
    stack,
)
from .errors import DataFileError, DesignError, OracleInfeasibleError
from .estimators import (
    NAMED_ESTIMATORS,
    estimate,
    jive1_loo_oracle,
    resolve_named,
)
from .io import (
    ColumnManifest,
    load_csv,
    write_density_csv,
    write_estimates_csv,
    write_summary_csv,
    write_summary_json,
    write_table_csv,
)
from .simulate import (
    GroupHet,
    Homoskedastic,
    Outlier,
    PRESETS,
    default_estimators,
    density_export,
    generate,
    preset,
    round_rng,
    run,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

WORKERS_ENV = "CMATRIX_IV_WORKERS"


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(value, 1)


def _split_names(raw: str) -> list[str]:
    return [piece for chunk in raw.split(",") for piece in chunk.split()
            if piece]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="cmatrix-iv",
        description=(
            "Instrumental-variable estimation with the unified C-matrix "
            "estimator family, plus a seeded Monte Carlo harness."
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser(
        "simulate",
        help="replicate a built-in design and summarize estimators",
    )
    sim.add_argument(
        "--design",
        required=True,
        help=(
            "preset name "
            f"({', '.join(sorted(PRESETS))}) or a base name "
            "(homoskedastic, grouphet, outlier) refined by --setup/--n"
        ),
    )
    sim.add_argument("--setup", type=int, choices=(1, 2), default=None,
                     help="setup number for homoskedastic/grouphet")
    sim.add_argument("--n", type=int, default=None,
                     help="sample size for the outlier design")
    sim.add_argument("--flip-assignment", action="store_true",
                     help="swap which group type gets the '+' covariance")
    sim.add_argument("--include-intercept", action="store_true",
                     help="add an intercept control to the outlier design")
    sim.add_argument("--estimators", default=None,
                     help="comma-separated names (default: design's set)")
    sim.add_argument("--rounds", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--workers", type=int, default=None,
                     help=f"thread count (default ${WORKERS_ENV} or 1)")
    sim.add_argument("--keep-estimates", action="store_true",
                     help="retain per-round estimates in memory")
    sim.add_argument("--out", default=None,
                     help="summary file (default: print table)")
    sim.add_argument("--format", choices=("csv", "json"), default="csv")
    sim.add_argument("--estimates-out", default=None,
                     help="per-round estimates CSV")
    sim.add_argument("--density-out", default=None,
                     help="binned density CSV")
    sim.add_argument("--bins", type=int, default=50)
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser(
        "estimate", help="fit estimators to a CSV dataset"
    )
    _add_manifest_args(est)
    est.add_argument("--estimators", default=None,
                     help="comma-separated names (default: all named)")
    est.add_argument("--sigma2-divisor", choices=("n", "n-l"), default="n")
    est.add_argument("--out", default=None,
                     help="results CSV (default: print table)")
    est.set_defaults(func=cmd_estimate)

    bia = sub.add_parser(
        "bias",
        help="bias coefficients and leverage diagnostics, no fitting",
    )
    group = bia.add_mutually_exclusive_group(required=True)
    group.add_argument("--design", default=None,
                       help="built-in design preset to probe")
    group.add_argument("--data", default=None, help="dataset CSV")
    _add_manifest_args(bia, require_data=False)
    bia.add_argument("--estimators", default=None)
    bia.add_argument("--seed", type=int, default=0,
                     help="seed for the probe draw when using --design")
    bia.add_argument("--threshold", type=float,
                     default=DEFAULT_BA_THRESHOLD,
                     help="leverage margin flag threshold")
    bia.add_argument("--out", default=None)
    bia.set_defaults(func=cmd_bias)

    orc = sub.add_parser(
        "oracle-check",
        help="closed-form jackknife vs leave-one-out oracle",
    )
    orc.add_argument("--instances", type=int, default=100)
    orc.add_argument("--n", type=int, default=40,
                     help="rows per instance (guarded at 200)")
    orc.add_argument("--k", type=int, default=5,
                     help="instrument columns per instance")
    orc.add_argument("--seed", type=int, default=0)
    orc.set_defaults(func=cmd_oracle_check)
    return parser


def _add_manifest_args(parser, require_data: bool = True):
    if require_data:
        parser.add_argument("--data", required=True, help="dataset CSV")
    parser.add_argument("--outcome", default=None)
    parser.add_argument("--endogenous", default=None,
                        help="comma-separated column names")
    parser.add_argument("--instruments", default=None,
                        help="comma-separated column names")
    parser.add_argument("--controls", default=None,
                        help="comma-separated column names (optional)")
    parser.add_argument("--add-intercept", action="store_true")


def _manifest_from_args(parser, args) -> ColumnManifest:
    if not args.outcome or not args.endogenous or not args.instruments:
        parser.error(
            "--outcome, --endogenous and --instruments are required with "
            "--data"
        )
    try:
        return ColumnManifest(
            outcome=args.outcome,
            endogenous=tuple(_split_names(args.endogenous)),
            instruments=tuple(_split_names(args.instruments)),
            controls=tuple(_split_names(args.controls or "")),
            add_intercept=args.add_intercept,
        )
    except DataFileError as exc:
        parser.error(str(exc))


def _resolve_design(parser, args):
    name = args.design
    if name in PRESETS:
        design = preset(name)
        if isinstance(design, GroupHet) and args.flip_assignment:
            design = GroupHet(setup=design.setup, flip_assignment=True)
        elif isinstance(design, Outlier) and args.include_intercept:
            design = Outlier(n=design.n, include_intercept=True)
        return design
    try:
        if name == "homoskedastic":
            return preset(f"homoskedastic-{args.setup or 1}")
        if name == "grouphet":
            return GroupHet(
                setup=args.setup or 1,
                flip_assignment=args.flip_assignment,
            )
        if name == "outlier":
            return Outlier(
                n=args.n if args.n is not None else 101,
                include_intercept=args.include_intercept,
            )
    except DesignError as exc:
        parser.error(str(exc))
    parser.error(
        f"unknown design {name!r}; presets: {', '.join(sorted(PRESETS))}; "
        f"base names: homoskedastic, grouphet, outlier"
    )


def _print_table(header, rows):
    widths = [len(h) for h in header]
    text_rows = []
    for row in rows:
        cells = []
        for value in row:
            if isinstance(value, float):
                cells.append("NaN" if math.isnan(value) else f"{value:.6g}")
            else:
                cells.append(str(value))
        text_rows.append(cells)
        widths = [max(w, len(c)) for w, c in zip(widths, cells)]
    line = "  ".join(h.ljust(w) for h, w in zip(header, widths))
    print(line)
    print("-" * len(line))
    for cells in text_rows:
        print("  ".join(c.ljust(w) for c, w in zip(cells, widths)))


def cmd_simulate(parser, args) -> int:
    design = _resolve_design(parser, args)
    if args.rounds < 1:
        parser.error(f"--rounds must be >= 1, got {args.rounds}")
    if args.seed < 0:
        parser.error(f"--seed must be >= 0, got {args.seed}")
    if args.bins < 1:
        parser.error(f"--bins must be >= 1, got {args.bins}")
    workers = args.workers if args.workers is not None else _default_workers()
    if workers < 1:
        parser.error(f"--workers must be >= 1, got {workers}")
    if args.estimators:
        names = _split_names(args.estimators)
    else:
        names = list(default_estimators(design))
    keep = bool(
        args.keep_estimates or args.estimates_out or args.density_out
    )
    try:
        summary = run(
            design,
            names,
            rounds=args.rounds,
            base_seed=args.seed,
            keep_estimates=keep,
            workers=workers,
        )
    except (ValueError, DesignError) as exc:
        parser.error(str(exc))

    for note in summary.notes:
        print(f"note: {note}", file=sys.stderr)
    if args.out:
        if args.format == "json":
            write_summary_json(args.out, summary)
        else:
            write_summary_csv(args.out, summary)
        print(f"wrote summary to {args.out}", file=sys.stderr)
    else:
        _print_table(
            ["estimator", "bias", "variance", "mse", "failures"],
            [
                [
                    label,
                    summary.stats[label].bias,
                    summary.stats[label].variance,
                    summary.stats[label].mse,
                    summary.stats[label].failures,
                ]
                for label in summary.labels
            ],
        )
    if args.estimates_out:
        write_estimates_csv(args.estimates_out, summary)
        print(f"wrote estimates to {args.estimates_out}", file=sys.stderr)
    if args.density_out:
        write_density_csv(args.density_out, density_export(summary, args.bins))
        print(f"wrote densities to {args.density_out}", file=sys.stderr)

    all_failed = all(
        summary.stats[label].failures == summary.rounds
        for label in summary.labels
    )
    return EXIT_NUMERICAL if all_failed else EXIT_OK


def _estimator_request(args) -> list[str]:
    if args.estimators:
        return _split_names(args.estimators)
    return list(NAMED_ESTIMATORS)


def cmd_estimate(parser, args) -> int:
    manifest = _manifest_from_args(parser, args)
    loaded = load_csv(args.data, manifest)
    if loaded.dropped_rows:
        print(
            f"note: dropped {len(loaded.dropped_rows)} rows with "
            f"non-numeric or non-finite cells: "
            f"{list(loaded.dropped_rows)[:20]}",
            file=sys.stderr,
        )
    data = loaded.data
    stacked = stack(data)
    names = _estimator_request(args)

    l_max = stacked.l
    header = (
        ["estimator", "status", "bias_coefficient", "ba_flag", "note"]
        + [f"coef_{i + 1}" for i in range(l_max)]
        + [f"se_{i + 1}" for i in range(l_max)]
    )
    rows = []
    failures = 0
    raw_report = None
    for name in names:
        note = ""
        try:
            spec = resolve_named(
                name, data.n, stacked.k, stacked.l, data.l1
            )
            note = spec.note or ""
            result = estimate(spec, data, sigma2_divisor=args.sigma2_divisor)
            if spec.partialled:
                dec = project(partial_out(data).z_t)
                l_eff = data.l1
            else:
                dec = project(stacked.z)
                l_eff = stacked.l
            coef = bias_coefficient(
                spec.family, dec.leverages, data.n, l_eff, rank=dec.rank
            )
            report = leverage_report(dec)
            if not spec.partialled:
                raw_report = report
            pad = l_max - result.beta_hat.shape[0]
            rows.append(
                [spec.label, "ok", coef.value, report.ba_flag, note]
                + list(result.beta_hat) + [""] * pad
                + list(result.se) + [""] * pad
            )
        except (ArithmeticError, DesignError, ValueError) as exc:
            failures += 1
            rows.append(
                [name, f"failed: {exc}", "", "", note]
                + [""] * (2 * l_max)
            )
    if raw_report is not None:
        print(
            f"leverage: max {raw_report.max_leverage:.6f} at row "
            f"{raw_report.max_index} (margin {raw_report.margin:.6f}, "
            f"flagged={raw_report.ba_flag})",
            file=sys.stderr,
        )
    if args.out:
        write_table_csv(args.out, header, rows)
        print(f"wrote estimates to {args.out}", file=sys.stderr)
    else:
        _print_table(header, rows)
    return EXIT_NUMERICAL if failures == len(names) else EXIT_OK


def cmd_bias(parser, args) -> int:
    if args.data:
        manifest = _manifest_from_args(parser, args)
        data = load_csv(args.data, manifest).data
    else:
        if args.design not in PRESETS:
            parser.error(
                f"unknown design {args.design!r}; presets: "
                f"{', '.join(sorted(PRESETS))}"
            )
        if args.seed < 0:
            parser.error(f"--seed must be >= 0, got {args.seed}")
        data = generate(preset(args.design), round_rng(args.seed, 0)).data
    stacked = stack(data)
    names = _estimator_request(args)

    raw_dec = project(stacked.z)
    part_dec = None
    header = [
        "estimator", "bias_coefficient", "trace_c", "l_effective",
        "approximately_unbiased", "max_leverage", "max_leverage_row",
        "ba_flag", "note",
    ]
    rows = []
    for name in names:
        try:
            spec = resolve_named(name, data.n, stacked.k, stacked.l, data.l1)
            if spec.partialled:
                if part_dec is None:
                    part_dec = project(partial_out(data).z_t)
                dec, l_eff = part_dec, data.l1
            else:
                dec, l_eff = raw_dec, stacked.l
            coef = bias_coefficient(
                spec.family, dec.leverages, data.n, l_eff, rank=dec.rank
            )
            report = leverage_report(dec, threshold=args.threshold)
            rows.append([
                spec.label,
                coef.value,
                coef.trace_c,
                coef.l_effective,
                is_approximately_unbiased(coef, DEFAULT_TOL),
                report.max_leverage,
                report.max_index,
                report.ba_flag,
                spec.note or "",
            ])
        except (ArithmeticError, DesignError, ValueError) as exc:
            rows.append([name, "", "", "", "", "", "", "",
                         f"failed: {exc}"])
    if args.out:
        write_table_csv(args.out, header, rows)
        print(f"wrote bias table to {args.out}", file=sys.stderr)
    else:
        _print_table(header, rows)
    return EXIT_OK


def cmd_oracle_check(parser, args) -> int:
    if args.n > 200:
        parser.error(
            f"--n is guarded at 200 (the oracle solves n separate "
            f"least-squares problems), got {args.n}"
        )
    if args.n < 10:
        parser.error(f"--n must be >= 10, got {args.n}")
    if args.k < 1 or args.k >= args.n - 2:
        parser.error(f"--k must be in [1, n-3], got {args.k}")
    if args.instances < 1:
        parser.error(f"--instances must be >= 1, got {args.instances}")
    if args.seed < 0:
        parser.error(f"--seed must be >= 0, got {args.seed}")

    worst = 0.0
    infeasible = 0
    for i in range(args.instances):
        rng = round_rng(args.seed, i)
        z = rng.standard_normal((args.n, args.k))
        x = 0.5 * z.sum(axis=1)[:, None] + rng.standard_normal((args.n, 1))
        y = 0.3 * x[:, 0] + rng.standard_normal(args.n)
        data = DesignData(y=y, x_star=x, w=None, z_star=z)
        spec = resolve_named("JIVE1", args.n, args.k, 1, 1)
        closed = estimate(spec, data).beta_hat
        try:
            loo = jive1_loo_oracle(data)
        except OracleInfeasibleError as exc:
            infeasible += 1
            print(f"instance {i}: {exc}", file=sys.stderr)
            continue
        scale = max(float(np.max(np.abs(loo))), 1e-12)
        worst = max(worst, float(np.max(np.abs(closed - loo))) / scale)
    checked = args.instances - infeasible
    print(
        f"checked {checked} instances (n={args.n}, k={args.k}): "
        f"max relative discrepancy {worst:.3e}"
        + (f"; {infeasible} infeasible" if infeasible else "")
    )
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(parser, args)
    except DataFileError as exc:
        print(f"cmatrix-iv: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ArithmeticError as exc:
        print(f"cmatrix-iv: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DesignError as exc:
        print(f"cmatrix-iv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
