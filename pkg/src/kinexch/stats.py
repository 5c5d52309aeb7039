"""Distribution analysis for pooled steady-state samples.

ECDF container, Kolmogorov-Smirnov distances against named reference laws,
power-law tail estimation (CCDF regression with a Hill-type cross-check),
histogram/moment summaries, and the retention-decile diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps


@dataclass
class Ecdf:
    """An empirical CDF: ascending sample values with right-continuous steps."""

    sorted_values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.sorted_values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("ECDF needs a non-empty 1-d sample")
        if np.any(np.isnan(v)):
            raise ValueError("ECDF sample contains NaN")
        if np.any(np.diff(v) < 0.0):
            raise ValueError("ECDF values must be sorted ascending")
        self.sorted_values = v

    @property
    def n(self) -> int:
        return self.sorted_values.size

    @classmethod
    def from_values(cls, values) -> "Ecdf":
        return cls(np.sort(np.asarray(values, dtype=np.float64)))


@dataclass(frozen=True)
class ReferenceCdf:
    """A named continuous CDF usable as a goodness-of-fit reference."""

    name: str
    params: tuple
    dist: object  # frozen scipy distribution

    def cdf(self, x) -> np.ndarray:
        return self.dist.cdf(x)


def exponential(mean: float) -> ReferenceCdf:
    if not np.isfinite(mean) or mean <= 0.0:
        raise ValueError(f"exponential mean must be positive, got {mean}")
    return ReferenceCdf("exponential", (mean,), sps.expon(scale=mean))


def laplace(loc: float, scale: float) -> ReferenceCdf:
    if not np.isfinite(loc) or not np.isfinite(scale) or scale <= 0.0:
        raise ValueError(f"laplace needs finite loc and scale > 0, got ({loc}, {scale})")
    return ReferenceCdf("laplace", (loc, scale), sps.laplace(loc=loc, scale=scale))


def uniform_ref(a: float, b: float) -> ReferenceCdf:
    if not np.isfinite(a) or not np.isfinite(b) or b <= a:
        raise ValueError(f"uniform needs finite a < b, got ({a}, {b})")
    return ReferenceCdf("uniform", (a, b), sps.uniform(loc=a, scale=b - a))


def lognormal(mu: float, sigma: float) -> ReferenceCdf:
    if not np.isfinite(mu) or not np.isfinite(sigma) or sigma <= 0.0:
        raise ValueError(f"lognormal needs finite mu and sigma > 0, got ({mu}, {sigma})")
    return ReferenceCdf("lognormal", (mu, sigma), sps.lognorm(s=sigma, scale=np.exp(mu)))


def ks_distance(sample: Ecdf, reference: ReferenceCdf) -> float:
    """Sup-norm distance between the ECDF and a reference CDF."""
    c = reference.cdf(sample.sorted_values)
    steps = np.arange(1, sample.n + 1) / sample.n
    return float(max((steps - c).max(), (c - steps + 1.0 / sample.n).max()))


def ks_two_sample(a: np.ndarray, b: np.ndarray) -> float:
    """Sup-norm distance between two empirical CDFs."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    allv = np.concatenate([a, b])
    fa = np.searchsorted(a, allv, side="right") / a.size
    fb = np.searchsorted(b, allv, side="right") / b.size
    return float(np.abs(fa - fb).max())


CCDF_REGRESSION = "ccdf-regression"
MLE_HILL = "mle-hill"


class InsufficientTailError(ValueError):
    """Too few samples above the cutoff for a tail fit."""

    def __init__(self, n_tail: int, required: int):
        super().__init__(f"only {n_tail} tail samples above xmin, need >= {required}")
        self.n_tail = n_tail
        self.required = required


@dataclass(frozen=True)
class TailFit:
    """Fitted probability-density power-law exponent (e.g. -2 for Zipf)."""

    exponent: float
    xmin: float
    stderr: float
    method: str
    n_tail: int


# Number of log-spaced abscissae for the CCDF regression. Evaluating the
# exact ECCDF on a sparse grid keeps the fit free of histogram binning bias
# while giving residuals that are informative about the fit quality.
_CCDF_GRID_POINTS = 64
# Grid points backed by fewer than this many tail samples are dropped from
# the regression: the extreme order statistics carry enormous leverage in
# log space and are the first to feel finite-size truncation.
_MIN_GRID_COUNT = 30
# The regression window also stops at the tail's 99th percentile for the
# same reason (conserved-total simulations truncate the extreme tail).
_UPPER_TRIM = 0.01
# Contiguous grid batches used for the slope's standard error; the spread
# of local slopes is honest about correlated ECDF noise, unlike the iid
# OLS formula.
_SLOPE_BATCHES = 8


def tail_exponent(values, xmin: float, method: str = CCDF_REGRESSION, min_tail: int = 100) -> TailFit:
    """Estimate the pdf power-law exponent of the upper tail (samples >= xmin).

    ``ccdf-regression`` (primary) fits log CCDF against log x on a log-spaced
    grid; the pdf exponent is the CCDF slope minus one. ``mle-hill`` is the
    Pareto maximum-likelihood cross-check.
    """
    if not np.isfinite(xmin) or xmin <= 0.0:
        raise ValueError(f"xmin must be positive and finite, got {xmin}")
    v = np.asarray(values, dtype=np.float64)
    tail = np.sort(v[v >= xmin])
    if tail.size < min_tail:
        raise InsufficientTailError(tail.size, min_tail)

    if method == MLE_HILL:
        logs = np.log(tail / xmin)
        total = logs.sum()
        if total <= 0.0:
            raise ValueError("tail has no spread above xmin; Hill estimate undefined")
        alpha_ccdf = tail.size / total
        stderr = alpha_ccdf / np.sqrt(tail.size)
        return TailFit(-(1.0 + alpha_ccdf), float(xmin), float(stderr), MLE_HILL, tail.size)

    if method != CCDF_REGRESSION:
        raise ValueError(f"unknown tail-fit method: {method!r}")

    hi = tail[int(np.floor((1.0 - _UPPER_TRIM) * (tail.size - 1)))]
    if hi <= xmin:
        hi = tail[-1]
    grid = np.geomspace(xmin, hi, min(_CCDF_GRID_POINTS, tail.size))
    counts = tail.size - np.searchsorted(tail, grid, side="left")
    keep = counts >= min(_MIN_GRID_COUNT, tail.size)
    x = np.log(grid[keep])
    y = np.log(counts[keep] / tail.size)
    x, idx = np.unique(x, return_index=True)
    y = y[idx]
    if x.size < 3:
        raise ValueError("tail has too little spread for a CCDF regression")
    slope = _ols_slope(x, y)
    stderr = _batched_slope_stderr(x, y)
    return TailFit(float(slope - 1.0), float(xmin), float(stderr), CCDF_REGRESSION, tail.size)


def _ols_slope(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    return float((xc * y).sum() / (xc * xc).sum())


def _batched_slope_stderr(x: np.ndarray, y: np.ndarray) -> float:
    n_batches = min(_SLOPE_BATCHES, x.size // 3)
    if n_batches < 2:
        # too few points for batching; fall back to the iid OLS formula
        xc = x - x.mean()
        slope = _ols_slope(x, y)
        resid = y - y.mean() - slope * xc
        s2 = (resid * resid).sum() / max(x.size - 2, 1)
        return float(np.sqrt(s2 / (xc * xc).sum()))
    slopes = [_ols_slope(xb, yb) for xb, yb in zip(np.array_split(x, n_batches), np.array_split(y, n_batches))]
    return float(np.std(slopes, ddof=1) / np.sqrt(n_batches))


@dataclass
class DistributionSummary:
    """Pooled histogram, ECDF, moments, and the optional retention histogram."""

    ecdf: Ecdf
    bin_edges: np.ndarray
    bin_mass: np.ndarray
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    lambda_bin_edges: np.ndarray | None = None
    lambda_bin_mass: np.ndarray | None = None


def _histogram(values: np.ndarray, bins: int, log_bins: bool) -> tuple[np.ndarray, np.ndarray]:
    if log_bins:
        pos = values[values > 0.0]
        if pos.size == 0:
            raise ValueError("log-spaced bins need at least one positive value")
        lo, hi = pos.min(), pos.max()
        if lo == hi:
            hi = lo * (1.0 + 1e-9)
        edges = np.geomspace(lo, hi, bins + 1)
        counts, edges = np.histogram(pos, bins=edges)
    else:
        counts, edges = np.histogram(values, bins=bins)
    total = counts.sum()
    mass = counts / total if total > 0 else counts.astype(np.float64)
    return edges, mass


def summarize(values, lambda_values=None, bins: int = 50, log_bins: bool = False) -> DistributionSummary:
    """Histogram (equal-width by default, log-spaced on request) plus moments."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("summarize needs at least one value")
    edges, mass = _histogram(v, bins, log_bins)
    mean = float(v.mean())
    var = float(v.var())
    if var > 0.0:
        centered = v - mean
        skew = float((centered**3).mean() / var**1.5)
        exkurt = float((centered**4).mean() / var**2 - 3.0)
    else:
        skew = 0.0
        exkurt = 0.0
    lam_edges = lam_mass = None
    if lambda_values is not None:
        lam = np.asarray(lambda_values, dtype=np.float64).ravel()
        lam_edges, lam_mass = _histogram(lam, bins, False)
    return DistributionSummary(
        ecdf=Ecdf.from_values(v),
        bin_edges=edges,
        bin_mass=mass,
        mean=mean,
        variance=var,
        skewness=skew,
        excess_kurtosis=exkurt,
        lambda_bin_edges=lam_edges,
        lambda_bin_mass=lam_mass,
    )


def select_xmin(
    values,
    floor_value: float | None = None,
    quantile_range: tuple[float, float] = (0.5, 0.99),
    n_candidates: int = 25,
    min_tail: int = 100,
    min_tail_fraction: float = 0.02,
) -> float:
    """Pick a power-law cutoff by minimizing the KS distance to a fitted Pareto.

    Candidate cutoffs are sample quantiles; candidates keeping less than
    ``min_tail_fraction`` of the sample are skipped (tiny tails fit anything,
    including the finite-size cutoff). ``floor_value`` restricts candidates
    to start above a known feature, e.g. the antimode of a bimodal sample.
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    floor_n = max(min_tail, int(min_tail_fraction * v.size))
    best_ks = np.inf
    best: float | None = None
    for q in np.linspace(*quantile_range, n_candidates):
        xmin = float(np.quantile(v, q))
        if xmin <= 0.0 or (floor_value is not None and xmin < floor_value):
            continue
        tail = v[v >= xmin]
        if tail.size < floor_n:
            continue
        total = np.log(tail / xmin).sum()
        if total <= 0.0:
            continue
        alpha = tail.size / total
        cdf = 1.0 - (xmin / tail) ** alpha
        steps = np.arange(1, tail.size + 1) / tail.size
        ks = max((steps - cdf).max(), (cdf - steps + 1.0 / tail.size).max())
        if ks < best_ks:
            best_ks, best = ks, xmin
    if best is None and floor_value is not None and floor_value > 0.0:
        if v[v >= floor_value].size >= min_tail:
            return float(floor_value)
    if best is None:
        raise ValueError("no admissible power-law cutoff found")
    return best


def log_histogram_antimode(values, bins: int = 64) -> float | None:
    """Trough between the two dominant peaks of a log-binned histogram.

    Returns None when the sample does not show two separated peaks: the
    trough must fall below 0.7 times the smaller peak and the smaller peak
    must rise above histogram noise (otherwise tail noise in a unimodal
    sample would masquerade as a second mode).
    """
    v = np.asarray(values, dtype=np.float64)
    pos = v[v > 0.0]
    if pos.size < 10 or pos.min() == pos.max():
        return None
    edges = np.geomspace(pos.min(), pos.max(), bins + 1)
    counts, _ = np.histogram(pos, bins=edges)
    smooth = np.convolve(counts, np.ones(3) / 3.0, mode="same")
    peaks = [i for i in range(1, bins - 1) if smooth[i] > smooth[i - 1] and smooth[i] >= smooth[i + 1]]
    if len(peaks) < 2:
        return None
    peaks.sort(key=lambda i: -smooth[i])
    lo, hi = sorted(peaks[:2])
    if hi - lo < 2:
        return None
    minor_height = min(smooth[lo], smooth[hi])
    if minor_height < 0.01 * max(smooth[lo], smooth[hi]):
        return None
    trough = lo + 1 + int(np.argmin(smooth[lo + 1 : hi]))
    if smooth[trough] >= 0.7 * minor_height:
        return None
    return float(np.sqrt(edges[trough] * edges[trough + 1]))


@dataclass
class MeanfieldTable:
    """Per-retention-decile diagnostic for the quenched (fixed-c1) regime.

    Two candidate mean-field constants are tabulated per decile of the
    time-averaged retention rate: lambda*<w> and (1-lambda)*<w>. The table
    reports both and which is flatter across deciles; it asserts neither.
    """

    decile_lambda: np.ndarray
    decile_w: np.ndarray
    lambda_times_w: np.ndarray
    one_minus_lambda_times_w: np.ndarray
    cv_lambda_times_w: float
    cv_one_minus_lambda_times_w: float
    flatter: str  # "lambda*w" or "(1-lambda)*w"


def _cv(x: np.ndarray) -> float:
    m = x.mean()
    return float(x.std() / abs(m)) if m != 0.0 else float("inf")


def meanfield_diagnostic(lambda_means, w_means, deciles: int = 10) -> MeanfieldTable:
    """Bin agents by time-averaged retention and tabulate both candidates."""
    lam = np.asarray(lambda_means, dtype=np.float64)
    wbar = np.asarray(w_means, dtype=np.float64)
    if lam.shape != wbar.shape or lam.ndim != 1:
        raise ValueError("lambda_means and w_means must be matching 1-d vectors")
    if np.unique(lam).size < deciles:
        raise ValueError(f"need at least {deciles} distinct retention values, got {np.unique(lam).size}")
    order = np.argsort(lam, kind="stable")
    groups = np.array_split(order, deciles)
    dl = np.array([lam[g].mean() for g in groups])
    dw = np.array([wbar[g].mean() for g in groups])
    a = dl * dw
    b = (1.0 - dl) * dw
    cv_a, cv_b = _cv(a), _cv(b)
    return MeanfieldTable(
        decile_lambda=dl,
        decile_w=dw,
        lambda_times_w=a,
        one_minus_lambda_times_w=b,
        cv_lambda_times_w=cv_a,
        cv_one_minus_lambda_times_w=cv_b,
        flatter="lambda*w" if cv_a <= cv_b else "(1-lambda)*w",
    )
