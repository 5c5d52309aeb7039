"""Kinetic exchange simulations with size-dependent retention rates.

Simulation engine plus the analysis toolkit used to study bimodal size
distributions: Hartigan dip verdicts, power-law tail fits, and the
homogeneous-limit (exponential / Zipf / Laplace) checks.
"""

__version__ = "0.1.0"

from .core import (
    ExchangeTopology,
    FirmVector,
    RetentionRule,
    StepRecord,
    eval_retention,
    exchange_step,
    growth_series,
    initial_state,
    run,
    sweep,
    to_multiplicative,
)
from .dip import DipResult, dip_pvalue, dip_statistic, null_dip_table
from .experiments import (
    PhaseDiagram,
    Protocol,
    ScanGrid,
    TransitionSweep,
    run_binary_replication,
    run_bimodality_emergence,
    run_phase_scan,
    run_sigmoid_scan,
    run_tracked_trajectory,
    run_transition,
    run_zipf_laplace,
)
from .rng import RngStream, SimplexSample, sample_simplex, sample_simplex_batch, split_stream
from .stats import (
    DistributionSummary,
    Ecdf,
    TailFit,
    exponential,
    ks_distance,
    ks_two_sample,
    laplace,
    lognormal,
    meanfield_diagnostic,
    select_xmin,
    summarize,
    tail_exponent,
    uniform_ref,
)

__all__ = [name for name in dir() if not name.startswith("_")]
