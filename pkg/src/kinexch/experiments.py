"""Scenario runners: steady-state summaries, phase scans, and limit checks.

Each runner consumes an explicit parameter set plus one RngStream and is
fully deterministic given them. Randomness is split positionally (per cell,
per replica) so any single cell can be re-run in isolation and reproduce
its published result bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ExchangeTopology,
    RetentionRule,
    RunResult,
    growth_series,
    initial_state,
    run,
    sweep,
    to_multiplicative,
)
from .dip import BIMODAL, DEFAULT_NULL_REPS, UNIMODAL, DipResult, dip_pvalue, dip_statistic
from .rng import RngStream
from .stats import (
    DistributionSummary,
    Ecdf,
    TailFit,
    exponential,
    ks_distance,
    ks_two_sample,
    laplace,
    log_histogram_antimode,
    select_xmin,
    summarize,
    tail_exponent,
)

SIGNIFICANCE_LEVELS = (0.01, 0.05, 0.10)

# Child-stream ids; positional, so deleting and re-running any experiment or
# cell reproduces exactly the same draws.
_SIM_ID = 1
_NULL_ID = 2
_QUENCHED_ID = 3
_SCAN_ID = 4
_TRACK_ID = 5
_GLOBAL_RUN_ID = 10
_BINARY_RUN_ID = 11
_GLOBAL_CONV_ID = 12
_BINARY_CONV_ID = 13
_GROWTH_ID = 14

# Pinned report tolerances for the homogeneous lambda=0 limit checks.
KS_EXPONENTIAL_TOL = 0.03
ZIPF_EXPONENT_TARGET = -2.0
ZIPF_EXPONENT_TOL = 0.15
GROWTH_VARIANCE_TARGET = 2.0
GROWTH_VARIANCE_TOL = 0.2
GROWTH_KURTOSIS_TARGET = 3.0
GROWTH_KURTOSIS_TOL = 0.5
KS_LAPLACE_TOL = 0.05


@dataclass(frozen=True)
class Protocol:
    """Steady-state sampling protocol: relax, then spaced snapshots."""

    relax_sweeps: int = 1000
    sample_count: int = 100
    sample_gap: int = 10

    def __post_init__(self) -> None:
        if self.relax_sweeps < 0 or self.sample_count < 1 or self.sample_gap < 1:
            raise ValueError("invalid protocol: need relax >= 0, samples >= 1, gap >= 1")


def _rule_for(kind: str, c1: float, c2: float, mean_w: float = 1.0) -> RetentionRule:
    if kind == "exp_saturating":
        return RetentionRule.exp_saturating(c1, c2)
    if kind == "sigmoid":
        return RetentionRule.sigmoid(c1, c2, mean_w=mean_w)
    raise ValueError(f"scans support exp_saturating or sigmoid rules, got {kind!r}")


def _pooled_lambda(rule: RetentionRule, result: RunResult) -> np.ndarray:
    count, n = result.snapshots.shape
    idx = np.tile(np.arange(n), count)
    return rule.evaluate(result.pooled, idx)


def steady_state(
    rule: RetentionRule,
    topo: ExchangeTopology,
    n_agents: int,
    protocol: Protocol,
    rng: RngStream,
    **run_kwargs,
) -> RunResult:
    """One steady-state run from the standard delta initial condition."""
    return run(
        initial_state(n_agents),
        rule,
        topo,
        rng,
        relax_sweeps=protocol.relax_sweeps,
        sample_count=protocol.sample_count,
        sample_gap=protocol.sample_gap,
        **run_kwargs,
    )


def quenched_vector(rng: RngStream, n_agents: int) -> np.ndarray:
    """The run's frozen per-agent c1 draw (uniform on [0,1))."""
    return rng.split(_QUENCHED_ID).uniform(n_agents)


def run_single(
    rule: RetentionRule,
    topo: ExchangeTopology,
    n_agents: int,
    protocol: Protocol,
    rng: RngStream,
    null_reps: int = DEFAULT_NULL_REPS,
) -> tuple[RunResult, DistributionSummary, DipResult]:
    """One steady state plus its pooled summary and dip verdicts."""
    result = steady_state(rule, topo, n_agents, protocol, rng.split(_SIM_ID))
    pooled = result.pooled
    summary = summarize(pooled, lambda_values=_pooled_lambda(rule, result))
    dres = dip_pvalue(dip_statistic(Ecdf.from_values(pooled)), pooled.size, rng.split(_NULL_ID), null_reps)
    return result, summary, dres


# ---------------------------------------------------------------------------
# Bimodality emergence and tracked trajectory
# ---------------------------------------------------------------------------


@dataclass
class EmergenceCell:
    c2: float
    summary: DistributionSummary
    dip_result: DipResult


def run_bimodality_emergence(
    c1: float,
    c2_list,
    topo: ExchangeTopology,
    n_agents: int,
    protocol: Protocol,
    rng: RngStream,
    null_reps: int = DEFAULT_NULL_REPS,
    rule_kind: str = "exp_saturating",
) -> list[EmergenceCell]:
    """Steady-state summaries (with retention-rate histograms) along a c2 list."""
    null_rng = rng.split(_NULL_ID)
    cells = []
    for j, c2 in enumerate(c2_list):
        rule = _rule_for(rule_kind, c1, c2)
        result = steady_state(rule, topo, n_agents, protocol, rng.split(_SIM_ID).split(j))
        pooled = result.pooled
        summary = summarize(pooled, lambda_values=_pooled_lambda(rule, result))
        dres = dip_pvalue(dip_statistic(Ecdf.from_values(pooled)), pooled.size, null_rng, null_reps)
        cells.append(EmergenceCell(c2=float(c2), summary=summary, dip_result=dres))
    return cells


@dataclass
class TrajectoryResult:
    t: np.ndarray
    w: np.ndarray
    retention: np.ndarray
    tracked_agent: int
    final_summary: DistributionSummary


def run_tracked_trajectory(
    c1: float = 0.95,
    c2: float = 3.0,
    topo: ExchangeTopology = ExchangeTopology.global_(),
    n_agents: int = 1000,
    sweeps: int = 10_000,
    tracked: int = 0,
    rng: RngStream = RngStream(0),
) -> TrajectoryResult:
    """Per-sweep (t, w, lambda) series of one firm plus the final population."""
    if not 0 <= tracked < n_agents:
        raise ValueError(f"tracked agent {tracked} out of range")
    rule = RetentionRule.exp_saturating(c1, c2)
    result = run(
        initial_state(n_agents),
        rule,
        topo,
        rng.split(_TRACK_ID),
        relax_sweeps=0,
        sample_count=sweeps,
        sample_gap=1,
        tracked_agents=(tracked,),
    )
    return TrajectoryResult(
        t=result.tracked_t,
        w=result.tracked_w[:, 0],
        retention=result.tracked_lambda[:, 0],
        tracked_agent=tracked,
        final_summary=summarize(result.final_state.w),
    )


# ---------------------------------------------------------------------------
# Phase scans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScanGrid:
    """A (c1, c2) grid with protocol and verdict settings."""

    c1_values: tuple[float, ...]
    c2_values: tuple[float, ...]
    rule_kind: str = "exp_saturating"
    topology: ExchangeTopology = ExchangeTopology.global_()
    n_agents: int = 1000
    protocol: Protocol = Protocol()
    significance_levels: tuple[float, ...] = SIGNIFICANCE_LEVELS
    replicas_per_cell: int = 3

    def __post_init__(self) -> None:
        if not self.c1_values or not self.c2_values:
            raise ValueError("scan grid must not be empty")
        if list(self.c1_values) != sorted(self.c1_values) or list(self.c2_values) != sorted(self.c2_values):
            raise ValueError("grid values must be ascending")
        if self.replicas_per_cell < 1:
            raise ValueError("replicas_per_cell must be >= 1")
        if self.rule_kind == "sigmoid" and max(self.c1_values) >= 0.5:
            raise ValueError("sigmoid rule requires every c1 < 1/2")
        _rule_for(self.rule_kind, self.c1_values[0], max(self.c2_values[0], 1e-9))


@dataclass
class PhaseCell:
    c1: float
    c2: float
    row: int
    col: int
    result: DipResult | None
    replica_dips: tuple[float, ...] = ()
    replica_p_values: tuple[float, ...] = ()
    error: str | None = None


@dataclass
class PhaseDiagram:
    grid: ScanGrid
    seed: int
    stream_id: int
    cells: list[PhaseCell]

    def cell(self, row: int, col: int) -> PhaseCell:
        return self.cells[row * len(self.grid.c2_values) + col]


def scan_cell_stream(rng: RngStream, row: int, col: int, replica: int) -> RngStream:
    """The positional stream of one scan replica (exposed for re-runs)."""
    return rng.split(_SCAN_ID).split(row).split(col).split(replica)


def _aggregate_replicas(dips, pvals, null_reps, levels) -> DipResult:
    # Median p-value; with an odd replica count the per-level majority
    # verdict equals the median verdict.
    p = float(np.median(pvals))
    verdicts = {level: (BIMODAL if p < level else UNIMODAL) for level in levels}
    return DipResult(dip=float(np.median(dips)), p_value=p, null_reps=null_reps, verdicts=verdicts)


def run_phase_scan(grid: ScanGrid, rng: RngStream, null_reps: int = DEFAULT_NULL_REPS) -> PhaseDiagram:
    """Dip verdicts over the whole (c1, c2) grid, replicated per cell."""
    null_rng = rng.split(_NULL_ID)
    cells: list[PhaseCell] = []
    for i, c1 in enumerate(grid.c1_values):
        for j, c2 in enumerate(grid.c2_values):
            try:
                dips, pvals = [], []
                for r in range(grid.replicas_per_cell):
                    rule = _rule_for(grid.rule_kind, c1, c2)
                    result = steady_state(
                        rule, grid.topology, grid.n_agents, grid.protocol, scan_cell_stream(rng, i, j, r)
                    )
                    pooled = result.pooled
                    dres = dip_pvalue(dip_statistic(Ecdf.from_values(pooled)), pooled.size, null_rng, null_reps)
                    dips.append(dres.dip)
                    pvals.append(dres.p_value)
                agg = _aggregate_replicas(dips, pvals, null_reps, grid.significance_levels)
                cells.append(
                    PhaseCell(c1, c2, i, j, agg, replica_dips=tuple(dips), replica_p_values=tuple(pvals))
                )
            except Exception as exc:  # record and continue with the rest of the scan
                cells.append(PhaseCell(c1, c2, i, j, None, error=f"{type(exc).__name__}: {exc}"))
    return PhaseDiagram(grid=grid, seed=rng.seed, stream_id=rng.stream_id, cells=cells)


@dataclass
class SigmoidScanResult:
    diagram: PhaseDiagram
    row_c1: float
    row_summaries: list[EmergenceCell]


def run_sigmoid_scan(
    grid: ScanGrid,
    rng: RngStream,
    null_reps: int = DEFAULT_NULL_REPS,
    row_c1: float | None = None,
) -> SigmoidScanResult:
    """Phase scan for the sigmoidal rule plus summaries along one c1 row."""
    if grid.rule_kind != "sigmoid":
        raise ValueError("run_sigmoid_scan needs a sigmoid grid")
    diagram = run_phase_scan(grid, rng, null_reps)
    if row_c1 is None:
        row_c1 = grid.c1_values[len(grid.c1_values) // 2]
    if row_c1 not in grid.c1_values:
        raise ValueError(f"row_c1={row_c1} is not a grid row")
    row_summaries = run_bimodality_emergence(
        row_c1,
        grid.c2_values,
        grid.topology,
        grid.n_agents,
        grid.protocol,
        rng,
        null_reps=null_reps,
        rule_kind="sigmoid",
    )
    return SigmoidScanResult(diagram=diagram, row_c1=float(row_c1), row_summaries=row_summaries)


# ---------------------------------------------------------------------------
# Quenched-heterogeneity transition
# ---------------------------------------------------------------------------

DEFAULT_TRANSITION_C2 = (0.0, 1.0, 10.0, 20.0, 30.0, 40.0, 50.0)


@dataclass
class TransitionCell:
    c2: float
    summary: DistributionSummary
    dip_result: DipResult
    ks_exponential: float
    tail_fit: TailFit | None
    hill_fit: TailFit | None
    antimode: float | None


@dataclass
class TransitionSweep:
    c2_values: tuple[float, ...]
    cells: list[TransitionCell]
    quenched_seed: int
    quenched_stream_id: int
    quenched_c1: np.ndarray


def run_transition(
    c2_list=DEFAULT_TRANSITION_C2,
    topo: ExchangeTopology = ExchangeTopology.binary(),
    n_agents: int = 1000,
    protocol: Protocol = Protocol(),
    rng: RngStream = RngStream(0),
    null_reps: int = DEFAULT_NULL_REPS,
) -> TransitionSweep:
    """Exponential-to-power-law transition under quenched per-agent c1.

    One uniform c1 vector is drawn and reused across every c2 so the sweep
    isolates the c2 effect. Tail cutoffs are chosen by Pareto-KS selection;
    when a cell's dip verdict is bimodal at 5%, cutoff candidates start above
    the sample's antimode (the power law describes the upper mode's tail).
    """
    qrng = rng.split(_QUENCHED_ID)
    quenched_c1 = qrng.uniform(n_agents)
    null_rng = rng.split(_NULL_ID)
    cells = []
    for j, c2 in enumerate(c2_list):
        rule = RetentionRule.quenched(quenched_c1, float(c2))
        result = steady_state(rule, topo, n_agents, protocol, rng.split(_SIM_ID).split(j))
        pooled = result.pooled
        summary = summarize(pooled, lambda_values=_pooled_lambda(rule, result))
        dres = dip_pvalue(dip_statistic(Ecdf.from_values(pooled)), pooled.size, null_rng, null_reps)
        ks_exp = ks_distance(summary.ecdf, exponential(1.0))
        floor = log_histogram_antimode(pooled) if dres.is_bimodal(0.05) else None
        tail = hill = None
        try:
            xmin = select_xmin(pooled, floor_value=floor)
            tail = tail_exponent(pooled, xmin)
            hill = tail_exponent(pooled, xmin, method="mle-hill")
        except ValueError:
            pass  # e.g. a degenerate tail; the cell still reports dip and KS
        cells.append(
            TransitionCell(
                c2=float(c2),
                summary=summary,
                dip_result=dres,
                ks_exponential=ks_exp,
                tail_fit=tail,
                hill_fit=hill,
                antimode=floor,
            )
        )
    return TransitionSweep(
        c2_values=tuple(float(c) for c in c2_list),
        cells=cells,
        quenched_seed=qrng.seed,
        quenched_stream_id=qrng.stream_id,
        quenched_c1=quenched_c1,
    )


# ---------------------------------------------------------------------------
# Binary-vs-global replication
# ---------------------------------------------------------------------------


def convergence_sweeps(
    rule: RetentionRule,
    topo: ExchangeTopology,
    n_agents: int,
    rng: RngStream,
    window: int = 20,
    threshold: float = 0.01,
    max_sweeps: int = 4000,
) -> tuple[int, bool]:
    """First sweep where two consecutive pooled windows agree in KS.

    Returns (sweep index, converged flag); the flag is False when the cap
    is hit first.
    """
    state = initial_state(n_agents)
    history: list[np.ndarray] = []
    for t in range(1, max_sweeps + 1):
        state = sweep(state, rule, topo, rng)
        history.append(state.w)
        if len(history) >= 2 * window:
            older = np.concatenate(history[-2 * window : -window])
            newer = np.concatenate(history[-window:])
            if ks_two_sample(older, newer) < threshold:
                return t, True
            history.pop(0)
    return max_sweeps, False


@dataclass
class BinaryComparisonCell:
    c2: float
    dip_binary: DipResult
    dip_global: DipResult
    verdicts_agree_5pct: bool
    ks_binary_vs_global: float
    convergence_binary: int
    convergence_global: int


@dataclass
class BinaryComparison:
    c1: float
    cells: list[BinaryComparisonCell]


def run_binary_replication(
    c1: float = 0.95,
    c2_list=(1.0, 3.0, 10.0),
    n_agents: int = 1000,
    protocol: Protocol = Protocol(),
    rng: RngStream = RngStream(0),
    null_reps: int = DEFAULT_NULL_REPS,
    conv_window: int = 20,
    conv_threshold: float = 0.01,
    conv_max_sweeps: int = 4000,
) -> BinaryComparison:
    """Side-by-side binary vs whole-system runs at shared rule parameters."""
    null_rng = rng.split(_NULL_ID)
    cells = []
    for j, c2 in enumerate(c2_list):
        rule = RetentionRule.exp_saturating(c1, float(c2))
        res_g = steady_state(rule, ExchangeTopology.global_(), n_agents, protocol, rng.split(_GLOBAL_RUN_ID).split(j))
        res_b = steady_state(rule, ExchangeTopology.binary(), n_agents, protocol, rng.split(_BINARY_RUN_ID).split(j))
        pg, pb = res_g.pooled, res_b.pooled
        dip_g = dip_pvalue(dip_statistic(Ecdf.from_values(pg)), pg.size, null_rng, null_reps)
        dip_b = dip_pvalue(dip_statistic(Ecdf.from_values(pb)), pb.size, null_rng, null_reps)
        conv_g, _ = convergence_sweeps(
            rule, ExchangeTopology.global_(), n_agents, rng.split(_GLOBAL_CONV_ID).split(j),
            conv_window, conv_threshold, conv_max_sweeps,
        )
        conv_b, _ = convergence_sweeps(
            rule, ExchangeTopology.binary(), n_agents, rng.split(_BINARY_CONV_ID).split(j),
            conv_window, conv_threshold, conv_max_sweeps,
        )
        cells.append(
            BinaryComparisonCell(
                c2=float(c2),
                dip_binary=dip_b,
                dip_global=dip_g,
                verdicts_agree_5pct=dip_b.is_bimodal(0.05) == dip_g.is_bimodal(0.05),
                ks_binary_vs_global=ks_two_sample(pb, pg),
                convergence_binary=conv_b,
                convergence_global=conv_g,
            )
        )
    return BinaryComparison(c1=float(c1), cells=cells)


# ---------------------------------------------------------------------------
# Zipf / Laplace limit report
# ---------------------------------------------------------------------------


@dataclass
class LimitCheck:
    name: str
    value: float
    target: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return abs(self.value - self.target) <= self.tolerance


@dataclass
class ZipfLaplaceReport:
    checks: list[LimitCheck]
    tail_fit: TailFit
    growth_pairs: int
    m_ccdf_x: np.ndarray
    m_ccdf_y: np.ndarray
    growth_summary: DistributionSummary

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)


def run_zipf_laplace(
    n_agents: int = 1000,
    protocol: Protocol = Protocol(),
    rng: RngStream = RngStream(0),
    growth_pairs: int = 500,
) -> ZipfLaplaceReport:
    """The three homogeneous-limit checks: exponential sizes, Zipf measure,
    Laplace growth. Runs the fully homogeneous system (retention zero,
    whole-system exchange)."""
    rule = RetentionRule.constant(0.0)
    topo = ExchangeTopology.global_()

    result = steady_state(rule, topo, n_agents, protocol, rng.split(_SIM_ID))
    pooled = result.pooled
    ks_exp = ks_distance(Ecdf.from_values(pooled), exponential(1.0))

    m = to_multiplicative(pooled)
    tail = tail_exponent(m, xmin=1.0)

    growth_run = run(
        initial_state(n_agents),
        rule,
        topo,
        rng.split(_GROWTH_ID),
        relax_sweeps=protocol.relax_sweeps,
        sample_count=growth_pairs + 1,
        sample_gap=1,
    )
    g = growth_series(growth_run.snapshots)
    var = float(g.var())
    centered = g - g.mean()
    exkurt = float((centered**4).mean() / var**2 - 3.0)
    ks_lap = ks_distance(Ecdf.from_values(g), laplace(0.0, 1.0))

    checks = [
        LimitCheck("ks_exponential", ks_exp, 0.0, KS_EXPONENTIAL_TOL),
        LimitCheck("zipf_exponent", tail.exponent, ZIPF_EXPONENT_TARGET, ZIPF_EXPONENT_TOL),
        LimitCheck("growth_variance", var, GROWTH_VARIANCE_TARGET, GROWTH_VARIANCE_TOL),
        LimitCheck("growth_excess_kurtosis", exkurt, GROWTH_KURTOSIS_TARGET, GROWTH_KURTOSIS_TOL),
        LimitCheck("ks_laplace", ks_lap, 0.0, KS_LAPLACE_TOL),
    ]
    m_sorted = np.sort(m)
    ccdf_x = np.geomspace(1.0, m_sorted[-1], 128)
    ccdf_y = (m_sorted.size - np.searchsorted(m_sorted, ccdf_x, side="left")) / m_sorted.size
    return ZipfLaplaceReport(
        checks=checks,
        tail_fit=tail,
        growth_pairs=growth_pairs,
        m_ccdf_x=ccdf_x,
        m_ccdf_y=ccdf_y,
        growth_summary=summarize(g),
    )
