"""Command-line front end: one subcommand per experiment.

Every subcommand resolves its configuration (file, flag overrides, or a
replayed manifest), runs deterministically from the manifest's master seed,
and emits plot-ready CSV tables plus a machine-readable summary.

Exit codes: 0 success, 1 validation error, 2 runtime failure, 3 a report's
acceptance check failed.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import experiments as xp
from .config import (
    Config,
    ConfigError,
    ResultBundle,
    RunManifest,
    Table,
    emit,
    output_dir,
    parse_config,
)
from .core import ExchangeTopology
from .dip import DipResult, dip_pvalue, dip_statistic
from .rng import RngStream
from .stats import DistributionSummary, Ecdf

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_CHECK_FAILED = 3

_SUBCOMMANDS = (
    "simulate",
    "trajectory",
    "scan",
    "sigmoid-scan",
    "transition",
    "binary-compare",
    "zipf-laplace",
    "dip",
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad usage; bad usage is a validation
    # error here, so raise instead and let main() map it to exit code 1.
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="kinexch", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI config file; omitted fields use defaults")
        p.add_argument("--replay", help="manifest.json from a previous run; reproduces it bit-exactly")
        p.add_argument("--out", help="output directory (overrides KINEXCH_OUT and config)")
        p.add_argument("--seed", type=int, help="master seed (shorthand for --set run.seed=...)")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override one resolved config field",
        )
        if name == "dip":
            p.add_argument("data", help="text file with one value per line")
    return parser


def _resolve(args) -> tuple[Config, RunManifest]:
    if args.replay:
        if args.config or args.overrides or args.seed is not None:
            raise ConfigError("--replay reproduces the manifest exactly; drop --config/--set/--seed")
        manifest = RunManifest.from_json(Path(args.replay).read_text(encoding="utf-8"))
        if manifest.subcommand != args.subcommand:
            raise ConfigError(
                f"manifest records subcommand {manifest.subcommand!r}, not {args.subcommand!r}"
            )
        return manifest.config(), manifest
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected SECTION.KEY=VALUE")
        dotted, value = item.split("=", 1)
        overrides[dotted.strip()] = value
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    config = parse_config(args.config, overrides)
    return config, RunManifest.for_run(config, args.subcommand)


def _histogram_rows(edges: np.ndarray, mass: np.ndarray, prefix: tuple = ()) -> list[tuple]:
    return [prefix + (float(lo), float(hi), float(m)) for lo, hi, m in zip(edges[:-1], edges[1:], mass)]


def _dip_row(d: DipResult) -> tuple:
    return (
        d.dip,
        d.p_value,
        d.null_reps,
        d.verdicts[0.01],
        d.verdicts[0.05],
        d.verdicts[0.10],
    )

_DIP_COLS = ("dip", "p_value", "null_reps", "verdict_1pct", "verdict_5pct", "verdict_10pct")


def _summary_stats(s: DistributionSummary) -> dict:
    return {
        "mean": s.mean,
        "variance": s.variance,
        "skewness": s.skewness,
        "excess_kurtosis": s.excess_kurtosis,
        "n": s.ecdf.n,
    }


def _cmd_simulate(config: Config) -> tuple[list[Table], dict, int]:
    root = RngStream(config.seed)
    n = config.n_agents
    rule_kind = config.get("rule", "kind")
    quenched = xp.quenched_vector(root, n) if rule_kind == "quenched_exp_saturating" else None
    rule = config.rule(quenched_c1=quenched)
    result, summary, dres = xp.run_single(
        rule, config.topology(), n, config.protocol(), root, int(config.get("dip", "null_reps"))
    )
    pooled_sorted = summary.ecdf.sorted_values
    tables = [
        Table("histogram", ("w_low", "w_high", "mass"), _histogram_rows(summary.bin_edges, summary.bin_mass)),
        Table(
            "lambda_histogram",
            ("retention_low", "retention_high", "mass"),
            _histogram_rows(summary.lambda_bin_edges, summary.lambda_bin_mass),
        ),
        Table(
            "ecdf",
            ("w", "cumulative_probability"),
            [(float(v), (i + 1) / pooled_sorted.size) for i, v in enumerate(pooled_sorted)],
        ),
        Table("dip", ("n",) + _DIP_COLS, [(pooled_sorted.size,) + _dip_row(dres)]),
    ]
    info = {
        "pooled": _summary_stats(summary),
        "dip": {"dip": dres.dip, "p_value": dres.p_value, "verdicts": dres.verdicts},
        "renormalizations": result.renormalizations,
    }
    return tables, info, EXIT_OK


def _cmd_trajectory(config: Config) -> tuple[list[Table], dict, int]:
    if config.get("rule", "kind") != "exp_saturating":
        raise ConfigError("trajectory: rule.kind must be exp_saturating")
    root = RngStream(config.seed)
    traj = xp.run_tracked_trajectory(
        c1=float(config.get("rule", "c1")),
        c2=float(config.get("rule", "c2")),
        topo=config.topology(),
        n_agents=config.n_agents,
        sweeps=int(config.get("trajectory", "sweeps")),
        tracked=int(config.get("trajectory", "tracked")),
        rng=root,
    )
    rho = float(spearmanr(traj.w, traj.retention).statistic)
    tables = [
        Table(
            "trajectory",
            ("t_sweeps", "agent_id", "w", "retention_rate"),
            [(int(t), traj.tracked_agent, float(w), float(lam)) for t, w, lam in zip(traj.t, traj.w, traj.retention)],
        ),
        Table(
            "final_histogram",
            ("w_low", "w_high", "mass"),
            _histogram_rows(traj.final_summary.bin_edges, traj.final_summary.bin_mass),
        ),
    ]
    info = {
        "tracked_agent": traj.tracked_agent,
        "sweeps": int(traj.t[-1]),
        "rank_correlation_w_retention": rho,
        "time_average_w": float(traj.w.mean()),
        "final_population": _summary_stats(traj.final_summary),
    }
    return tables, info, EXIT_OK


def _diagram_tables(diagram: xp.PhaseDiagram) -> tuple[Table, dict]:
    rows = []
    counts = {level: 0 for level in (0.01, 0.05, 0.10)}
    failures = 0
    for cell in diagram.cells:
        if cell.result is None:
            failures += 1
            rows.append((cell.c1, cell.c2, float("nan"), float("nan"), 0, "error", "error", "error", cell.error))
            continue
        for level in counts:
            counts[level] += int(cell.result.is_bimodal(level))
        rows.append((cell.c1, cell.c2) + _dip_row(cell.result) + ("",))
    table = Table("dip_table", ("c1", "c2") + _DIP_COLS + ("error",), rows)
    info = {
        "cells": len(diagram.cells),
        "cell_failures": failures,
        "bimodal_cells": {str(level): count for level, count in counts.items()},
    }
    return table, info


def _cmd_scan(config: Config) -> tuple[list[Table], dict, int]:
    grid = xp.ScanGrid(
        c1_values=tuple(config.get("scan", "c1_values")),
        c2_values=tuple(config.get("scan", "c2_values")),
        rule_kind="exp_saturating",
        topology=config.topology(),
        n_agents=config.n_agents,
        protocol=config.protocol(),
        replicas_per_cell=int(config.get("scan", "replicas")),
    )
    diagram = xp.run_phase_scan(grid, RngStream(config.seed), int(config.get("dip", "null_reps")))
    table, info = _diagram_tables(diagram)
    return [table], info, EXIT_OK


def _cmd_sigmoid_scan(config: Config) -> tuple[list[Table], dict, int]:
    grid = xp.ScanGrid(
        c1_values=tuple(config.get("scan", "sigmoid_c1_values")),
        c2_values=tuple(config.get("scan", "sigmoid_c2_values")),
        rule_kind="sigmoid",
        topology=config.topology(),
        n_agents=config.n_agents,
        protocol=config.protocol(),
        replicas_per_cell=int(config.get("scan", "replicas")),
    )
    result = xp.run_sigmoid_scan(
        grid,
        RngStream(config.seed),
        int(config.get("dip", "null_reps")),
        row_c1=float(config.get("scan", "sigmoid_row_c1")),
    )
    table, info = _diagram_tables(result.diagram)
    row_rows = []
    hist_rows = []
    for cell in result.row_summaries:
        row_rows.append((cell.c2,) + _dip_row(cell.dip_result) + (cell.summary.mean, cell.summary.variance))
        hist_rows.extend(_histogram_rows(cell.summary.bin_edges, cell.summary.bin_mass, prefix=(cell.c2,)))
    tables = [
        table,
        Table("row_summary", ("c2",) + _DIP_COLS + ("mean", "variance"), row_rows),
        Table("row_histograms", ("c2", "w_low", "w_high", "mass"), hist_rows),
    ]
    info["row_c1"] = result.row_c1
    return tables, info, EXIT_OK


def _topology_from_name(name: str, nary_n: int) -> ExchangeTopology:
    if name == "binary":
        return ExchangeTopology.binary()
    if name == "global":
        return ExchangeTopology.global_()
    return ExchangeTopology.nary(nary_n)


def _cmd_transition(config: Config) -> tuple[list[Table], dict, int]:
    topo = _topology_from_name(str(config.get("transition", "topology")), int(config.get("topology", "n")))
    sweep = xp.run_transition(
        c2_list=tuple(config.get("transition", "c2_values")),
        topo=topo,
        n_agents=config.n_agents,
        protocol=config.protocol(),
        rng=RngStream(config.seed),
        null_reps=int(config.get("dip", "null_reps")),
    )
    rows = []
    hist_rows = []
    for cell in sweep.cells:
        tail = cell.tail_fit
        hill = cell.hill_fit
        rows.append(
            (cell.c2,)
            + _dip_row(cell.dip_result)
            + (
                cell.ks_exponential,
                cell.antimode if cell.antimode is not None else float("nan"),
                tail.xmin if tail else float("nan"),
                tail.exponent if tail else float("nan"),
                tail.stderr if tail else float("nan"),
                tail.n_tail if tail else 0,
                hill.exponent if hill else float("nan"),
                hill.stderr if hill else float("nan"),
            )
        )
        hist_rows.extend(_histogram_rows(cell.summary.bin_edges, cell.summary.bin_mass, prefix=(cell.c2,)))
    tables = [
        Table(
            "transition",
            ("c2",)
            + _DIP_COLS
            + (
                "ks_exponential",
                "antimode",
                "tail_xmin",
                "tail_exponent",
                "tail_stderr",
                "tail_n",
                "hill_exponent",
                "hill_stderr",
            ),
            rows,
        ),
        Table("transition_histograms", ("c2", "w_low", "w_high", "mass"), hist_rows),
    ]
    info = {
        "c2_values": list(sweep.c2_values),
        "quenched_stream": {"seed": sweep.quenched_seed, "stream_id": sweep.quenched_stream_id},
    }
    return tables, info, EXIT_OK


def _cmd_binary_compare(config: Config) -> tuple[list[Table], dict, int]:
    comparison = xp.run_binary_replication(
        c1=float(config.get("rule", "c1")),
        c2_list=tuple(config.get("compare", "c2_values")),
        n_agents=config.n_agents,
        protocol=config.protocol(),
        rng=RngStream(config.seed),
        null_reps=int(config.get("dip", "null_reps")),
        conv_window=int(config.get("compare", "window")),
        conv_threshold=float(config.get("compare", "threshold")),
        conv_max_sweeps=int(config.get("compare", "max_sweeps")),
    )
    rows = [
        (
            cell.c2,
            cell.dip_binary.dip,
            cell.dip_binary.p_value,
            cell.dip_binary.verdicts[0.05],
            cell.dip_global.dip,
            cell.dip_global.p_value,
            cell.dip_global.verdicts[0.05],
            cell.verdicts_agree_5pct,
            cell.ks_binary_vs_global,
            cell.convergence_binary,
            cell.convergence_global,
        )
        for cell in comparison.cells
    ]
    table = Table(
        "comparison",
        (
            "c2",
            "dip_binary",
            "p_binary",
            "verdict_5pct_binary",
            "dip_global",
            "p_global",
            "verdict_5pct_global",
            "agree_5pct",
            "ks_binary_vs_global",
            "convergence_sweeps_binary",
            "convergence_sweeps_global",
        ),
        rows,
    )
    info = {
        "c1": comparison.c1,
        "all_agree_5pct": all(c.verdicts_agree_5pct for c in comparison.cells),
        "global_always_faster": all(c.convergence_global < c.convergence_binary for c in comparison.cells),
    }
    return [table], info, EXIT_OK


def _cmd_zipf_laplace(config: Config) -> tuple[list[Table], dict, int]:
    report = xp.run_zipf_laplace(
        n_agents=config.n_agents,
        protocol=config.protocol(),
        rng=RngStream(config.seed),
        growth_pairs=int(config.get("zipf", "growth_pairs")),
    )
    tables = [
        Table(
            "checks",
            ("check", "value", "target", "tolerance", "passed"),
            [(c.name, c.value, c.target, c.tolerance, c.passed) for c in report.checks],
        ),
        Table(
            "m_ccdf",
            ("m", "ccdf"),
            [(float(x), float(y)) for x, y in zip(report.m_ccdf_x, report.m_ccdf_y)],
        ),
        Table(
            "growth_histogram",
            ("g_low", "g_high", "mass"),
            _histogram_rows(report.growth_summary.bin_edges, report.growth_summary.bin_mass),
        ),
    ]
    info = {
        "all_passed": report.all_passed,
        "checks": {c.name: {"value": c.value, "target": c.target, "tolerance": c.tolerance, "passed": c.passed}
                   for c in report.checks},
        "tail_fit": {
            "exponent": report.tail_fit.exponent,
            "stderr": report.tail_fit.stderr,
            "xmin": report.tail_fit.xmin,
            "n_tail": report.tail_fit.n_tail,
        },
    }
    return tables, info, EXIT_OK if report.all_passed else EXIT_CHECK_FAILED


def _cmd_dip(config: Config, data_path: str) -> tuple[list[Table], dict, int]:
    try:
        values = np.loadtxt(data_path, dtype=np.float64, ndmin=1)
    except OSError as exc:
        raise ConfigError(f"dip data file: {exc}") from None
    if values.ndim != 1:
        raise ConfigError("dip data file must hold a single column of values")
    ecdf = Ecdf.from_values(values)
    result = dip_pvalue(
        dip_statistic(ecdf), ecdf.n, RngStream(config.seed), int(config.get("dip", "null_reps"))
    )
    digest = hashlib.sha256(Path(data_path).read_bytes()).hexdigest()
    table = Table("dip", ("n",) + _DIP_COLS, [(ecdf.n,) + _dip_row(result)])
    info = {
        "n": ecdf.n,
        "dip": result.dip,
        "p_value": result.p_value,
        "null_reps": result.null_reps,
        "verdicts": result.verdicts,
        "data_file": str(data_path),
        "data_sha256": digest,
    }
    print(f"n = {ecdf.n}")
    print(f"dip = {result.dip:.10g}")
    print(f"p_value = {result.p_value:.10g}  (null_reps = {result.null_reps})")
    for level in sorted(result.verdicts):
        print(f"verdict at {level:.0%}: {result.verdicts[level]}")
    return [table], info, EXIT_OK


def _dispatch(args) -> int:
    config, manifest = _resolve(args)
    if args.subcommand == "dip":
        tables, info, code = _cmd_dip(config, args.data)
        if not args.out:
            return code  # standalone mode prints only; --out also writes a bundle
    else:
        handler = {
            "simulate": _cmd_simulate,
            "trajectory": _cmd_trajectory,
            "scan": _cmd_scan,
            "sigmoid-scan": _cmd_sigmoid_scan,
            "transition": _cmd_transition,
            "binary-compare": _cmd_binary_compare,
            "zipf-laplace": _cmd_zipf_laplace,
        }[args.subcommand]
        tables, info, code = handler(config)
    out = output_dir(config, args.out)
    written = emit(ResultBundle(manifest=manifest, tables=tables, summary=info), out)
    print(f"{args.subcommand}: wrote {len(written)} files to {out}")
    return code


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
