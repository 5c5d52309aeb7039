"""Exchange dynamics: agent state, retention rules, and redistribution steps.

The system is an array of N non-negative sizes w_i with conserved total.
Each interaction picks a participant group, lets every member keep a
size-dependent fraction lambda(w) of its current holding, and splits the
released pool back across the group with fresh simplex fractions. Retention
families:

* ``constant``            -- lambda(w) = c1
* ``exp_saturating``      -- lambda(w) = c1 * (1 - exp(-c2 * w))
* ``sigmoid``             -- lambda(w) = c1 + (1 - 2*c1) * logistic((w - mean_w) / c2)
* ``quenched_exp_saturating`` -- exp_saturating with per-agent c1 frozen for the run
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .rng import RngStream, SimplexSample, sample_simplex, sample_simplex_batch

logger = logging.getLogger("kinexch")

CONSTANT = "constant"
EXP_SATURATING = "exp_saturating"
SIGMOID = "sigmoid"
QUENCHED_EXP_SATURATING = "quenched_exp_saturating"
RULE_KINDS = (CONSTANT, EXP_SATURATING, SIGMOID, QUENCHED_EXP_SATURATING)

# Total mass only drifts by accumulated rounding; a whole-run drift beyond
# this triggers a logged rescale back to the initial total.
RENORM_THRESHOLD = 1e-9


@dataclass(frozen=True)
class RetentionRule:
    """Tagged retention-rate family mapping size w to lambda in [0, 1]."""

    kind: str
    c1: float = 0.0
    c2: float = 0.0
    mean_w: float = 1.0
    quenched_c1: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown retention rule kind: {self.kind!r}")
        if self.kind == CONSTANT and not 0.0 <= self.c1 <= 1.0:
            raise ValueError(f"constant rule needs c1 in [0, 1], got {self.c1}")
        if self.kind == EXP_SATURATING:
            if not 0.0 <= self.c1 <= 1.0:
                raise ValueError(f"exp_saturating rule needs c1 in [0, 1], got {self.c1}")
            if self.c2 < 0.0:
                raise ValueError(f"exp_saturating rule needs c2 >= 0, got {self.c2}")
        if self.kind == SIGMOID:
            if not 0.0 <= self.c1 < 0.5:
                raise ValueError(f"sigmoid rule needs c1 in [0, 1/2), got {self.c1}")
            if self.c2 <= 0.0:
                raise ValueError(f"sigmoid rule needs c2 > 0, got {self.c2}")
        if self.kind == QUENCHED_EXP_SATURATING:
            if self.quenched_c1 is None:
                raise ValueError("quenched rule needs a quenched_c1 vector")
            q = np.asarray(self.quenched_c1, dtype=np.float64)
            if q.ndim != 1 or q.size == 0:
                raise ValueError("quenched_c1 must be a non-empty 1-d vector")
            if np.any(q < 0.0) or np.any(q > 1.0):
                raise ValueError("quenched_c1 entries must lie in [0, 1]")
            if self.c2 < 0.0:
                raise ValueError(f"quenched rule needs c2 >= 0, got {self.c2}")
            object.__setattr__(self, "quenched_c1", q)

    @classmethod
    def constant(cls, c1: float) -> "RetentionRule":
        return cls(kind=CONSTANT, c1=float(c1))

    @classmethod
    def exp_saturating(cls, c1: float, c2: float) -> "RetentionRule":
        return cls(kind=EXP_SATURATING, c1=float(c1), c2=float(c2))

    @classmethod
    def sigmoid(cls, c1: float, c2: float, mean_w: float = 1.0) -> "RetentionRule":
        return cls(kind=SIGMOID, c1=float(c1), c2=float(c2), mean_w=float(mean_w))

    @classmethod
    def quenched(cls, quenched_c1, c2: float) -> "RetentionRule":
        return cls(kind=QUENCHED_EXP_SATURATING, c2=float(c2), quenched_c1=quenched_c1)

    def evaluate(self, w, agent_indices=None):
        """lambda(w) for scalar or vector w (and matching agent indices)."""
        w_arr = np.asarray(w, dtype=np.float64)
        if np.any(np.isnan(w_arr)) or np.any(w_arr < 0.0):
            raise ValueError("retention rate undefined for NaN or negative sizes")
        if self.kind == CONSTANT:
            lam = np.full_like(w_arr, self.c1)
        elif self.kind == EXP_SATURATING:
            lam = self.c1 * -np.expm1(-self.c2 * w_arr)
        elif self.kind == SIGMOID:
            lam = self.c1 + (1.0 - 2.0 * self.c1) * expit((w_arr - self.mean_w) / self.c2)
        else:
            if agent_indices is None:
                agent_indices = np.arange(w_arr.size)
            c1 = self.quenched_c1[np.asarray(agent_indices)]
            lam = c1 * -np.expm1(-self.c2 * w_arr)
        return lam if w_arr.ndim else float(lam)


def eval_retention(rule: RetentionRule, w: float, agent_index: int = 0) -> float:
    """Retention rate of one agent at size w."""
    if rule.kind == QUENCHED_EXP_SATURATING:
        return float(rule.evaluate(np.asarray([w]), np.asarray([agent_index]))[0])
    return float(rule.evaluate(float(w)))


BINARY = "binary"
NARY = "nary"
GLOBAL = "global"


@dataclass(frozen=True)
class ExchangeTopology:
    """Interaction group selector: binary, n-ary subgroups, or whole system."""

    kind: str
    n: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in (BINARY, NARY, GLOBAL):
            raise ValueError(f"unknown topology kind: {self.kind!r}")
        if self.kind == NARY:
            if self.n is None or self.n < 2:
                raise ValueError("n-ary topology needs a group size n >= 2")

    @classmethod
    def binary(cls) -> "ExchangeTopology":
        return cls(kind=BINARY)

    @classmethod
    def nary(cls, n: int) -> "ExchangeTopology":
        return cls(kind=NARY, n=int(n))

    @classmethod
    def global_(cls) -> "ExchangeTopology":
        return cls(kind=GLOBAL)

    def group_size(self, n_agents: int) -> int:
        if self.kind == GLOBAL:
            return n_agents
        size = 2 if self.kind == BINARY else int(self.n)
        if size > n_agents:
            raise ValueError(f"group size {size} exceeds system size {n_agents}")
        return size


@dataclass
class FirmVector:
    """System state: N sizes (workers or wealth) plus the sweep counter."""

    w: np.ndarray
    t: int = 0

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 1 or self.w.size == 0:
            raise ValueError("state must be a non-empty 1-d size vector")
        if np.any(np.isnan(self.w)) or np.any(self.w < 0.0):
            raise ValueError("sizes must be non-negative and not NaN")

    @property
    def n_agents(self) -> int:
        return self.w.size

    @property
    def total(self) -> float:
        return float(self.w.sum())


def initial_state(n_agents: int, kind: str = "delta", rng: RngStream | None = None) -> FirmVector:
    """Start-of-run state with total mass n_agents (mean size 1).

    ``delta`` puts every agent at w=1; ``uniform`` spreads random uniform
    sizes rescaled to the same total (used for init-independence checks).
    """
    if n_agents < 1:
        raise ValueError("n_agents must be >= 1")
    if kind == "delta":
        return FirmVector(np.ones(n_agents))
    if kind == "uniform":
        if rng is None:
            raise ValueError("uniform init needs an RngStream")
        u = rng.generator.random(n_agents)
        return FirmVector(u * (n_agents / u.sum()))
    raise ValueError(f"unknown init kind: {kind!r}")


@dataclass
class StepRecord:
    """What one exchange did: who took part, the released pool, the split."""

    participants: np.ndarray
    pool: float
    epsilon: SimplexSample


def _group_update(w_group: np.ndarray, lam_group: np.ndarray, eps: np.ndarray) -> tuple[np.ndarray, float]:
    retained = lam_group * w_group
    pool = float((w_group - retained).sum())
    return retained + eps * pool, pool


def exchange_step(
    state: FirmVector,
    rule: RetentionRule,
    topo: ExchangeTopology,
    rng: RngStream,
) -> tuple[FirmVector, StepRecord]:
    """One group interaction; non-participants untouched, total conserved.

    The sweep counter is owned by :func:`sweep` and is not advanced here.
    """
    n_agents = state.n_agents
    size = topo.group_size(n_agents)
    if size == n_agents:
        participants = np.arange(n_agents)
    else:
        participants = rng.generator.permutation(n_agents)[:size]
    lam = rule.evaluate(state.w[participants], participants)
    eps = sample_simplex(rng, size)
    updated, pool = _group_update(state.w[participants], lam, eps.epsilon)
    if not np.all(np.isfinite(updated)):
        raise OverflowError("exchange step produced a non-finite size")
    new_w = state.w.copy()
    new_w[participants] = updated
    return FirmVector(new_w, state.t), StepRecord(participants, pool, eps)


def sweep(
    state: FirmVector,
    rule: RetentionRule,
    topo: ExchangeTopology,
    rng: RngStream,
) -> FirmVector:
    """One time period: every agent participates (in expectation) once.

    Global topology does a single whole-system redistribution; n-ary
    topologies chunk a fresh random permutation into ceil(N/n) disjoint
    groups, so each agent interacts exactly once per sweep.
    """
    n_agents = state.n_agents
    size = topo.group_size(n_agents)
    w = state.w
    lam = rule.evaluate(w)
    retained = lam * w
    released = w - retained

    if size == n_agents:
        eps = sample_simplex_batch(rng, n_agents, 1)[0]
        new_w = retained + eps * released.sum()
    else:
        perm = rng.generator.permutation(n_agents)
        n_full = n_agents // size
        new_w = np.empty_like(w)
        main = perm[: n_full * size].reshape(n_full, size)
        eps = sample_simplex_batch(rng, size, n_full)
        pools = released[main].sum(axis=1)
        new_w[main] = retained[main] + eps * pools[:, None]
        rest = perm[n_full * size :]
        if rest.size == 1:
            new_w[rest] = w[rest]  # singleton remainder keeps everything
        elif rest.size > 1:
            eps_rest = sample_simplex_batch(rng, rest.size, 1)[0]
            new_w[rest] = retained[rest] + eps_rest * released[rest].sum()

    if not np.all(np.isfinite(new_w)):
        raise OverflowError("sweep produced a non-finite size")
    return FirmVector(new_w, state.t + 1)


@dataclass
class RunResult:
    """Steady-state samples plus optional trajectories and per-agent means."""

    snapshots: np.ndarray  # (sample_count, N), one recorded state per row
    final_state: FirmVector
    tracked_agents: tuple[int, ...] = ()
    tracked_t: np.ndarray | None = None
    tracked_w: np.ndarray | None = None  # (len(tracked_t), len(tracked_agents))
    tracked_lambda: np.ndarray | None = None
    agent_mean_w: np.ndarray | None = None
    agent_mean_lambda: np.ndarray | None = None
    renormalizations: int = 0

    @property
    def pooled(self) -> np.ndarray:
        """All recorded sizes flattened into one sample."""
        return self.snapshots.ravel()


def run(
    init: FirmVector,
    rule: RetentionRule,
    topo: ExchangeTopology,
    rng: RngStream,
    relax_sweeps: int = 1000,
    sample_count: int = 100,
    sample_gap: int = 10,
    tracked_agents: tuple[int, ...] = (),
    collect_agent_means: bool = False,
) -> RunResult:
    """Relax, then record the full state every ``sample_gap`` sweeps.

    Total mass is monitored each sweep; if rounding drift ever exceeds
    ``RENORM_THRESHOLD`` relative, the state is rescaled back to the initial
    total and the event is counted and logged.
    """
    if relax_sweeps < 0:
        raise ValueError("relax_sweeps must be >= 0")
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    if sample_gap < 1:
        raise ValueError("sample_gap must be >= 1")
    for idx in tracked_agents:
        if not 0 <= idx < init.n_agents:
            raise ValueError(f"tracked agent {idx} out of range")

    state = FirmVector(init.w.copy(), init.t)
    total0 = state.total
    renorms = 0

    track = len(tracked_agents) > 0
    tracked_idx = np.asarray(tracked_agents, dtype=np.intp)
    total_sweeps = relax_sweeps + sample_count * sample_gap
    if track:
        tracked_t = np.empty(total_sweeps + 1, dtype=np.int64)
        tracked_w = np.empty((total_sweeps + 1, tracked_idx.size))
        tracked_lam = np.empty_like(tracked_w)

    def record_tracked(pos: int) -> None:
        tracked_t[pos] = state.t
        tracked_w[pos] = state.w[tracked_idx]
        tracked_lam[pos] = rule.evaluate(state.w[tracked_idx], tracked_idx)

    def advance() -> None:
        nonlocal state, renorms
        state = sweep(state, rule, topo, rng)
        if total0 > 0.0:
            drift = abs(state.total - total0) / total0
            if drift > RENORM_THRESHOLD:
                state.w *= total0 / state.total
                renorms += 1
                logger.warning("renormalized total mass at t=%d (drift %.3e)", state.t, drift)
        if track:
            record_tracked(state.t - init.t)

    if track:
        record_tracked(0)
    for _ in range(relax_sweeps):
        advance()

    snapshots = np.empty((sample_count, state.n_agents))
    mean_w = np.zeros(state.n_agents) if collect_agent_means else None
    mean_lam = np.zeros(state.n_agents) if collect_agent_means else None
    for k in range(sample_count):
        for _ in range(sample_gap):
            advance()
        snapshots[k] = state.w
        if collect_agent_means:
            mean_w += state.w
            mean_lam += rule.evaluate(state.w)
    if collect_agent_means:
        mean_w /= sample_count
        mean_lam /= sample_count

    return RunResult(
        snapshots=snapshots,
        final_state=state,
        tracked_agents=tuple(tracked_agents),
        tracked_t=tracked_t if track else None,
        tracked_w=tracked_w if track else None,
        tracked_lambda=tracked_lam if track else None,
        agent_mean_w=mean_w,
        agent_mean_lambda=mean_lam,
        renormalizations=renorms,
    )


# exp(w) overflows float64 just above this size.
_EXP_OVERFLOW_W = 709.0


def to_multiplicative(w_values) -> np.ndarray:
    """Re-measure sizes multiplicatively: m = exp(w) elementwise.

    Under this transform the additive invariant sum(w) becomes the
    multiplicative invariant prod(m).
    """
    w = np.asarray(w_values, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        bad = int(np.flatnonzero(~np.isfinite(w))[0])
        raise ValueError(f"non-finite size at index {bad}")
    if np.any(w > _EXP_OVERFLOW_W):
        bad = int(np.flatnonzero(w > _EXP_OVERFLOW_W)[0])
        raise OverflowError(f"exp overflow for w[{bad}]={w[bad]:.6g}")
    return np.exp(w)


def growth_series(snapshots) -> np.ndarray:
    """Log growth rates between consecutive snapshots, pooled over agents.

    In multiplicative mode g(t+1) = log(m(t+1)/m(t)) = w(t+1) - w(t), so the
    rates are computed directly on the additive sizes.
    """
    if isinstance(snapshots, np.ndarray):
        arr = snapshots
    else:
        rows = [s.w if isinstance(s, FirmVector) else np.asarray(s) for s in snapshots]
        sizes = {r.shape for r in rows}
        if len(sizes) > 1:
            raise ValueError("snapshots disagree on system size")
        arr = np.vstack(rows)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError("need at least two snapshots of equal size")
    return np.diff(arr, axis=0).ravel()
