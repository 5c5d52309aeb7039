"""Brute-force dip reference: direct minimization over unimodal CDFs.

Independent of the production algorithm: for every admissible mode location
(at a sample value, or strictly inside a gap between sample values) the
closest unimodal CDF is found by linear programming over its values at the
sample points. A unimodal CDF is convex left of its mode and concave right
of it; it is continuous everywhere except for an optional jump at the mode.

Only the CDF values at the unique sample points enter the sup-distance to
the ECDF, so piecewise-linear candidates with knots at the sample points
are fully general. Minimizing the sup distance is then a small LP per mode
choice; the dip is the minimum over all mode choices.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

_LP_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


def _solve(n_vars: int, a_ub: list, b_ub: list) -> float:
    cost = np.zeros(n_vars)
    cost[-1] = 1.0  # minimize d, the last variable
    bounds = [(0.0, 1.0)] * n_vars
    res = linprog(cost, A_ub=np.array(a_ub), b_ub=np.array(b_ub), bounds=bounds,
                  method="highs", options=_LP_OPTIONS)
    if not res.success:
        raise RuntimeError(f"reference dip LP failed: {res.message}")
    return float(res.fun)


def _convexity_rows(point_vars: list[int], xs: np.ndarray, n_vars: int, concave: bool) -> list[np.ndarray]:
    """Slope-monotonicity constraints for a chain of (x, value-variable) knots."""
    rows = []
    for i in range(len(point_vars) - 2):
        dx01 = xs[i + 1] - xs[i]
        dx12 = xs[i + 2] - xs[i + 1]
        # convex: (p1-p0)*dx12 <= (p2-p1)*dx01 ; concave: reversed
        row = np.zeros(n_vars)
        row[point_vars[i]] = -dx12
        row[point_vars[i + 1]] = dx12 + dx01
        row[point_vars[i + 2]] = -dx01
        rows.append(-row if concave else row)
    return rows


def _abs_rows(var: int, target: float, n_vars: int) -> tuple[list[np.ndarray], list[float]]:
    """|z_var - target| <= d encoded as two inequality rows."""
    r1 = np.zeros(n_vars)
    r1[var] = 1.0
    r1[-1] = -1.0
    r2 = np.zeros(n_vars)
    r2[var] = -1.0
    r2[-1] = -1.0
    return [r1, r2], [target, -target]


def _mode_at_value_lp(v: np.ndarray, c: np.ndarray, mode: int) -> float:
    """Closest unimodal CDF with mode (and optional atom) at v[mode]."""
    k = v.size
    n_vars = k + 2  # g_0..g_{k-1}, a (left limit at the mode), d
    a_var = k
    a_ub: list[np.ndarray] = []
    b_ub: list[float] = []

    def add(row, rhs=0.0):
        a_ub.append(row)
        b_ub.append(rhs)

    for i in range(k - 1):  # monotone values
        row = np.zeros(n_vars)
        row[i] = 1.0
        row[i + 1] = -1.0
        add(row)
    row = np.zeros(n_vars)  # a <= g_mode
    row[a_var] = 1.0
    row[mode] = -1.0
    add(row)
    if mode > 0:  # g_{mode-1} <= a
        row = np.zeros(n_vars)
        row[mode - 1] = 1.0
        row[a_var] = -1.0
        add(row)

    left_vars = list(range(mode)) + [a_var]
    for r in _convexity_rows(left_vars, v[: mode + 1], n_vars, concave=False):
        add(r)
    right_vars = list(range(mode, k))
    for r in _convexity_rows(right_vars, v[mode:], n_vars, concave=True):
        add(r)

    for i in range(k):
        rows, rhs = _abs_rows(i, c[i + 1], n_vars)  # value vs F(v_i)
        for r, b in zip(rows, rhs):
            add(r, b)
        if i != mode:  # left limit vs F(v_i-) at continuity points
            rows, rhs = _abs_rows(i, c[i], n_vars)
            for r, b in zip(rows, rhs):
                add(r, b)
    rows, rhs = _abs_rows(a_var, c[mode], n_vars)  # left limit at the mode
    for r, b in zip(rows, rhs):
        add(r, b)

    return _solve(n_vars, a_ub, b_ub)


def _mode_in_gap_lp(v: np.ndarray, c: np.ndarray, gap: int, chord_side: str | None) -> float:
    """Closest unimodal CDF whose mode lies strictly inside (v[gap], v[gap+1]).

    Slopes keep increasing up to the mode and decreasing after it, so the
    gap segment's chord must still dominate the smaller of its neighbour
    slopes; ``chord_side`` selects which neighbour ("left"/"right", None
    when the gap touches the boundary and no neighbour constrains it).
    """
    k = v.size
    n_vars = k + 1  # g_0..g_{k-1}, d
    a_ub: list[np.ndarray] = []
    b_ub: list[float] = []

    def add(row, rhs=0.0):
        a_ub.append(row)
        b_ub.append(rhs)

    for i in range(k - 1):
        row = np.zeros(n_vars)
        row[i] = 1.0
        row[i + 1] = -1.0
        add(row)

    # Convex up to v[gap], concave from v[gap+1]; the gap segment holds the
    # mode (possibly an atom).
    for r in _convexity_rows(list(range(gap + 1)), v[: gap + 1], n_vars, concave=False):
        add(r)
    for r in _convexity_rows(list(range(gap + 1, k)), v[gap + 1 :], n_vars, concave=True):
        add(r)
    if chord_side == "left":  # gap chord >= slope of the segment before it
        for r in _convexity_rows([gap - 1, gap, gap + 1], v[gap - 1 : gap + 2], n_vars, concave=False):
            add(r)
    elif chord_side == "right":  # gap chord >= slope of the segment after it
        for r in _convexity_rows([gap, gap + 1, gap + 2], v[gap : gap + 3], n_vars, concave=True):
            add(r)

    for i in range(k):
        for target in (c[i + 1], c[i]):  # value and left limit (all continuous)
            rows, rhs = _abs_rows(i, target, n_vars)
            for r, b in zip(rows, rhs):
                add(r, b)

    return _solve(n_vars, a_ub, b_ub)


def dip_bruteforce(values) -> float:
    """Exhaustive reference dip of a sample (any order, ties allowed)."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    if n == 1:
        return 0.25  # convention: maximally uninformative
    v, counts = np.unique(x, return_counts=True)
    if v.size == 1:
        return 1.0 / (2.0 * n)
    c = np.concatenate([[0.0], np.cumsum(counts) / n])  # c[i] = F(v_{i-1}-), c[i+1] = F(v_{i-1})
    best = min(_mode_at_value_lp(v, c, m) for m in range(v.size))
    for g in range(v.size - 1):
        if 1 <= g and g + 2 <= v.size - 1:
            # interior gap: the chord must beat one of its two neighbours
            best = min(best, _mode_in_gap_lp(v, c, g, "left"), _mode_in_gap_lp(v, c, g, "right"))
        else:
            best = min(best, _mode_in_gap_lp(v, c, g, None))
    return max(best, 1.0 / (2.0 * n))
