import mpmath
import numpy as np
import pytest
from scipy.stats import spearmanr

from kinexch.core import (
    ExchangeTopology,
    FirmVector,
    RetentionRule,
    eval_retention,
    exchange_step,
    growth_series,
    initial_state,
    run,
    sweep,
    to_multiplicative,
)
from kinexch.rng import RngStream
from kinexch.stats import Ecdf, exponential, ks_distance, ks_two_sample


# --- retention rules -------------------------------------------------------


def test_exp_saturating_is_zero_at_origin():
    rule = RetentionRule.exp_saturating(0.7, 12.0)
    assert eval_retention(rule, 0.0) == 0.0


def test_sigmoid_is_half_at_the_mean():
    for c1 in (0.0, 0.2, 0.49):
        rule = RetentionRule.sigmoid(c1, 3.0, mean_w=1.0)
        assert eval_retention(rule, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_exp_saturating_closed_form_value():
    # oracle: arbitrary-precision evaluation of c1*(1 - exp(-c2*w))
    mpmath.mp.dps = 50
    expected = float(mpmath.mpf("0.95") * (1 - mpmath.e ** (-mpmath.mpf(3))))
    rule = RetentionRule.exp_saturating(0.95, 3.0)
    assert eval_retention(rule, 1.0) == pytest.approx(expected, abs=1e-15)


def test_retention_rejects_bad_sizes():
    rule = RetentionRule.exp_saturating(0.5, 1.0)
    with pytest.raises(ValueError):
        eval_retention(rule, -0.1)
    with pytest.raises(ValueError):
        eval_retention(rule, float("nan"))


def test_rule_parameter_validation():
    with pytest.raises(ValueError):
        RetentionRule.constant(1.5)
    with pytest.raises(ValueError):
        RetentionRule.exp_saturating(0.5, -1.0)
    with pytest.raises(ValueError):
        RetentionRule.sigmoid(0.5, 1.0)  # needs c1 < 1/2
    with pytest.raises(ValueError):
        RetentionRule.sigmoid(0.3, 0.0)
    with pytest.raises(ValueError):
        RetentionRule.quenched([0.2, 1.3], 1.0)
    with pytest.raises(ValueError):
        RetentionRule(kind="nope")


def test_quenched_uses_per_agent_coefficient():
    rule = RetentionRule.quenched([0.0, 1.0], c2=5.0)
    assert eval_retention(rule, 2.0, agent_index=0) == 0.0
    assert eval_retention(rule, 2.0, agent_index=1) == pytest.approx(1 - np.exp(-10.0))


@pytest.mark.parametrize(
    "rule",
    [RetentionRule.exp_saturating(0.8, 2.5), RetentionRule.sigmoid(0.2, 0.7, mean_w=1.0)],
)
def test_monotone_retention(rule):
    w = np.linspace(0.0, 8.0, 400)
    lam = rule.evaluate(w)
    assert np.all(np.diff(lam) >= 0.0)
    assert np.all((lam >= 0.0) & (lam <= 1.0))


def test_sigmoid_limits():
    nearly_cc = RetentionRule.sigmoid(0.3, 1e6, mean_w=1.0)
    w = np.linspace(0.0, 5.0, 50)
    assert np.allclose(nearly_cc.evaluate(w), 0.5, atol=1e-6)
    two_level = RetentionRule.sigmoid(0.3, 1e-6, mean_w=1.0)
    assert np.allclose(two_level.evaluate(np.array([0.0, 0.5, 0.99])), 0.3, atol=1e-9)
    assert np.allclose(two_level.evaluate(np.array([1.01, 2.0, 9.0])), 0.7, atol=1e-9)


def test_exp_saturating_cc_limit_pointwise():
    # enormous c2 makes the rule indistinguishable from a constant for w >= 0.01
    fast = RetentionRule.exp_saturating(0.4, 1e6)
    const = RetentionRule.constant(0.4)
    w = np.geomspace(0.01, 50.0, 100)
    assert np.abs(fast.evaluate(w) - const.evaluate(w)).max() < 1e-6 * 0.4


# --- single exchange steps -------------------------------------------------


def test_full_retention_step_is_identity():
    state = FirmVector(np.array([0.5, 2.0, 1.5, 0.0]))
    new, record = exchange_step(state, RetentionRule.constant(1.0), ExchangeTopology.global_(), RngStream(1))
    assert np.array_equal(new.w, state.w)
    assert record.pool == 0.0


def test_zero_retention_global_step_redistributes_everything():
    state = FirmVector(np.full(8, 2.0))
    new, record = exchange_step(state, RetentionRule.constant(0.0), ExchangeTopology.global_(), RngStream(5))
    assert np.allclose(new.w, record.epsilon.epsilon * state.total, rtol=0, atol=1e-14)


def test_step_output_matches_update_formula():
    # each participant's new size is retained part plus its share of the pool
    state = FirmVector(RngStream(3).uniform(40) * 3)
    rule = RetentionRule.exp_saturating(0.9, 2.0)
    new, rec = exchange_step(state, rule, ExchangeTopology.nary(5), RngStream(8))
    lam = rule.evaluate(state.w[rec.participants], rec.participants)
    expected = lam * state.w[rec.participants] + rec.epsilon.epsilon * rec.pool
    assert np.allclose(new.w[rec.participants], expected, rtol=0, atol=0)
    untouched = np.setdiff1d(np.arange(40), rec.participants)
    assert np.array_equal(new.w[untouched], state.w[untouched])
    # the pool is permutation-invariant within the group
    assert rec.pool == pytest.approx(((1 - lam) * state.w[rec.participants]).sum(), rel=1e-12)


def test_step_conservation_across_rules_and_topologies():
    rng = RngStream(11)
    rules = [
        RetentionRule.constant(0.3),
        RetentionRule.exp_saturating(0.95, 3.0),
        RetentionRule.sigmoid(0.2, 0.5, mean_w=1.0),
        RetentionRule.quenched(RngStream(12).uniform(200), 10.0),
    ]
    topos = [ExchangeTopology.binary(), ExchangeTopology.nary(7), ExchangeTopology.global_()]
    state = FirmVector(RngStream(13).uniform(200) * 2)
    total = state.total
    for rule in rules:
        for topo in topos:
            new, _ = exchange_step(state, rule, topo, rng)
            assert abs(new.total - total) / total <= 1e-12
            assert np.all(new.w >= 0.0)


def test_group_size_validation():
    state = FirmVector(np.ones(4))
    with pytest.raises(ValueError):
        exchange_step(state, RetentionRule.constant(0.5), ExchangeTopology.nary(5), RngStream(0))
    with pytest.raises(ValueError):
        ExchangeTopology.nary(1)


def test_zero_total_state_is_a_fixed_point():
    state = FirmVector(np.zeros(6))
    new, rec = exchange_step(state, RetentionRule.constant(0.2), ExchangeTopology.global_(), RngStream(2))
    assert np.array_equal(new.w, state.w)
    assert rec.pool == 0.0


# --- sweeps ----------------------------------------------------------------


def test_sweep_advances_time_by_one():
    state = FirmVector(np.ones(100), t=4)
    out = sweep(state, RetentionRule.constant(0.5), ExchangeTopology.global_(), RngStream(0))
    assert out.t == 5


def test_sweep_conserves_for_odd_system_with_remainder_group():
    state = FirmVector(RngStream(4).uniform(101) + 0.1)
    out = sweep(state, RetentionRule.exp_saturating(0.9, 1.0), ExchangeTopology.binary(), RngStream(5))
    assert abs(out.total - state.total) / state.total <= 1e-12
    assert np.all(out.w >= 0.0)


def test_identity_rule_sweep_everywhere():
    state = FirmVector(RngStream(6).uniform(50) * 5)
    out = sweep(state, RetentionRule.constant(1.0), ExchangeTopology.binary(), RngStream(7))
    assert np.array_equal(out.w, state.w)


def test_binary_sweep_pairs_agents_disjointly():
    # with zero retention each disjoint pair redistributes exactly its own
    # mass, so some perfect matching must preserve all pair sums
    state = FirmVector(np.array([1.0, 2.0, 4.0, 8.0]))
    out = sweep(state, RetentionRule.constant(0.0), ExchangeTopology.binary(), RngStream(8))
    matchings = [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))]
    preserved = [
        all(abs(out.w[list(p)].sum() - state.w[list(p)].sum()) < 1e-12 for p in pairs)
        for pairs in matchings
    ]
    assert any(preserved)


def test_cc_limit_per_step_outputs_match():
    # same stream, same state: the saturated rule's step output equals the
    # constant rule's step output for sizes away from zero
    state = FirmVector(RngStream(9).uniform(100) + 0.01)
    fast, _ = exchange_step(state, RetentionRule.exp_saturating(0.4, 1e6), ExchangeTopology.binary(), RngStream(10))
    const, _ = exchange_step(state, RetentionRule.constant(0.4), ExchangeTopology.binary(), RngStream(10))
    assert np.abs(fast.w - const.w).max() <= 1e-6 * np.abs(const.w).max()


def test_binary_zero_retention_reaches_exponential_state():
    # classical binary zero-retention limit: exponential steady state
    res = run(
        initial_state(1000),
        RetentionRule.constant(0.0),
        ExchangeTopology.binary(),
        RngStream(21),
        relax_sweeps=1000,
        sample_count=100,
        sample_gap=10,
    )
    assert ks_distance(Ecdf.from_values(res.pooled), exponential(1.0)) < 0.03


def test_cc_limit_at_distribution_level():
    # gigantic c2 with binary trading reproduces the constant-retention model
    proto = dict(relax_sweeps=1000, sample_count=100, sample_gap=10)
    res_fast = run(
        initial_state(1000), RetentionRule.exp_saturating(0.4, 1e6), ExchangeTopology.binary(), RngStream(31), **proto
    )
    res_const = run(
        initial_state(1000), RetentionRule.constant(0.4), ExchangeTopology.binary(), RngStream(32), **proto
    )
    assert ks_two_sample(res_fast.pooled, res_const.pooled) < 0.02


def test_initial_condition_independence():
    proto = dict(relax_sweeps=1000, sample_count=100, sample_gap=10)
    rule = RetentionRule.exp_saturating(0.95, 3.0)
    res_delta = run(initial_state(1000), rule, ExchangeTopology.global_(), RngStream(41), **proto)
    res_uniform = run(
        initial_state(1000, kind="uniform", rng=RngStream(42)), rule, ExchangeTopology.global_(), RngStream(43), **proto
    )
    assert ks_two_sample(res_delta.pooled, res_uniform.pooled) < 0.02


# --- run protocol ----------------------------------------------------------


def test_run_pooled_size_matches_protocol():
    res = run(
        initial_state(1000),
        RetentionRule.exp_saturating(0.95, 3.0),
        ExchangeTopology.global_(),
        RngStream(51),
        relax_sweeps=1000,
        sample_count=100,
        sample_gap=10,
    )
    assert res.pooled.shape == (100_000,)
    assert res.final_state.t == 2000


def test_identity_dynamics_returns_initial_distribution():
    init = FirmVector(RngStream(61).uniform(64) * 2)
    res = run(init, RetentionRule.constant(1.0), ExchangeTopology.global_(), RngStream(62),
              relax_sweeps=0, sample_count=1, sample_gap=1)
    assert np.array_equal(np.sort(res.pooled), np.sort(init.w))


def test_tracked_retention_co_moves_with_size():
    res = run(
        initial_state(500),
        RetentionRule.exp_saturating(0.95, 3.0),
        ExchangeTopology.global_(),
        RngStream(71),
        relax_sweeps=0,
        sample_count=2000,
        sample_gap=1,
        tracked_agents=(3,),
    )
    w = res.tracked_w[:, 0]
    lam = res.tracked_lambda[:, 0]
    rule = RetentionRule.exp_saturating(0.95, 3.0)
    assert np.allclose(lam, rule.evaluate(w), rtol=0, atol=0)
    assert spearmanr(w, lam).statistic > 0.99


def test_run_validation():
    init = initial_state(10)
    rule = RetentionRule.constant(0.5)
    topo = ExchangeTopology.global_()
    with pytest.raises(ValueError):
        run(init, rule, topo, RngStream(0), relax_sweeps=-1)
    with pytest.raises(ValueError):
        run(init, rule, topo, RngStream(0), sample_count=0)
    with pytest.raises(ValueError):
        run(init, rule, topo, RngStream(0), sample_gap=0)
    with pytest.raises(ValueError):
        run(init, rule, topo, RngStream(0), tracked_agents=(10,))


def test_drift_triggers_logged_renormalization(monkeypatch):
    import kinexch.core as core

    real_sweep = core.sweep

    def drifting_sweep(state, rule, topo, rng):
        out = real_sweep(state, rule, topo, rng)
        out.w = out.w * (1.0 + 5e-9)  # inject drift beyond the threshold
        return out

    monkeypatch.setattr(core, "sweep", drifting_sweep)
    res = core.run(
        initial_state(50), RetentionRule.constant(0.5), ExchangeTopology.global_(), RngStream(81),
        relax_sweeps=5, sample_count=2, sample_gap=1,
    )
    assert res.renormalizations == 7
    assert abs(res.final_state.total - 50.0) / 50.0 < 1e-8


# --- transforms ------------------------------------------------------------


def test_multiplicative_transform_exact_values():
    assert to_multiplicative([0.0])[0] == 1.0
    assert np.allclose(to_multiplicative([0.0, np.log(2), np.log(4)]), [1.0, 2.0, 4.0], rtol=0, atol=0)


def test_multiplicative_overflow_names_offending_index():
    with pytest.raises(OverflowError, match=r"w\[2\]"):
        to_multiplicative([1.0, 2.0, 800.0])
    with pytest.raises(ValueError, match=r"index 1"):
        to_multiplicative([1.0, float("inf")])


def test_growth_series_basics():
    snaps = np.vstack([np.ones(5), np.ones(5)])
    assert np.array_equal(growth_series(snaps), np.zeros(5))
    with pytest.raises(ValueError):
        growth_series(np.ones((1, 5)))
    with pytest.raises(ValueError):
        growth_series([FirmVector(np.ones(3)), FirmVector(np.ones(4))])
    states = [FirmVector(np.array([1.0, 2.0])), FirmVector(np.array([2.5, 0.5]))]
    assert np.allclose(growth_series(states), [1.5, -1.5])


def test_initial_state_kinds():
    delta = initial_state(7)
    assert np.array_equal(delta.w, np.ones(7))
    uni = initial_state(100, kind="uniform", rng=RngStream(9))
    assert uni.total == pytest.approx(100.0, rel=1e-12)
    with pytest.raises(ValueError):
        initial_state(3, kind="nope")
    with pytest.raises(ValueError):
        initial_state(0)
