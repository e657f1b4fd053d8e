import dataclasses

import numpy as np
import pytest

from ccwsurv import dgp, toy
from ccwsurv.cloning import AT_VISIT, clone_dataset
from ccwsurv.core import Strategy, SubjectRecord, VisitGrid, Cohort
from ccwsurv.estimators import (EstimationError, ResidualLifeModel, StepSurvival, TransitionModel,
                                aipcw_contrast, aipcw_transform, complete_histories,
                                fit_transition_models, follows_strategy, gformula_baseline,
                                gformula_filtered, gformula_timedep, ipcw_km, ipcw_km_contrast,
                                km_cloned, naive_arms, naive_filtered, q_residual, rmst,
                                weighted_km)
from ccwsurv.glm import PiecewiseExpHazard
from ccwsurv.panel import expand_visits, refine_at_times
from ccwsurv.weights import WeightConfig, WeightTrajectory, estimate_weights


def km_oracle(times, events):
    """Textbook product-limit estimator on sorted distinct event times."""
    times, events = np.asarray(times, float), np.asarray(events, int)
    out_t, out_s, s = [], [], 1.0
    for t in np.unique(times[events == 1]):
        d = np.sum((times == t) & (events == 1))
        n = np.sum(times >= t)
        s *= 1 - d / n
        out_t.append(t)
        out_s.append(s)
    return np.array(out_t), np.array(out_s)


def test_weighted_km_toy_steps():
    s = weighted_km([0, 0, 0], [1.5, 2.0, 2.0], [1, 0, 0], 1.0)
    assert float(s(1.5)) == pytest.approx(2 / 3)
    assert rmst(s, 3.0) == 2.5
    s1 = weighted_km([0, 0, 0], [2.0, 2.5, 3.0], [0, 1, 0], [1.0, 1.818, 1.25])
    assert float(s1(2.5)) == pytest.approx(1 - 1.818 / 3.068, abs=1e-12)
    assert float(s1(2.5)) == pytest.approx(0.407, abs=5e-4)


def test_weighted_km_unit_weights_matches_oracle(rng):
    t = np.round(rng.exponential(2, 40), 1) + 0.1
    e = rng.integers(0, 2, 40)
    s = weighted_km(np.zeros(40), t, e, 1.0)
    ot, os_ = km_oracle(t, e)
    np.testing.assert_allclose(s.times, ot)
    np.testing.assert_allclose(s.surv, os_)


def test_weighted_km_edge_cases():
    s = weighted_km([0, 0], [1.0, 2.0], [0, 0], 1.0)
    assert s.times.size == 0 and float(s(5)) == 1.0 and rmst(s, 4) == 4.0
    with pytest.raises(ValueError):
        weighted_km([0], [1.0], [1], [0.0])
    # left-truncated rows: a row starting at the event time is not at risk
    s = weighted_km([0, 1.0], [1.0, 2.0], [1, 0], 1.0)
    assert float(s(1.0)) == 0.0
    with pytest.raises(ValueError):
        rmst(s, 0)


def test_empty_risk_set_is_an_error():
    with pytest.raises(EstimationError):
        weighted_km([1.0], [1.0], [1], 1.0)


def test_step_survival_validation_and_frame():
    with pytest.raises(ValueError):
        StepSurvival(np.array([2.0, 1.0]), np.array([0.5, 0.4]))
    with pytest.raises(ValueError):
        StepSurvival(np.array([1.0]), np.array([0.5, 0.4]))
    df = StepSurvival(np.array([1.0]), np.array([0.5])).to_frame()
    assert list(df.S) == [1.0, 0.5]


def test_ipcw_km_equals_refined_weighted_km(small_baseline):
    """Exact event-time weights: same result as splitting rows at every event time."""
    c = clone_dataset(small_baseline, [Strategy(5, 4), Strategy(3, 4)], AT_VISIT)
    p = expand_visits(c.for_arm(3))
    traj, _ = estimate_weights(p, WeightConfig())
    fast = ipcw_km(traj)
    r = refine_at_times(p, np.unique(p.t_stop[p.y == 1]))
    # each fragment inherits the weight path of the unrefined row it came from
    key = {(int(c), int(j)): i for i, (c, j) in enumerate(zip(p.clone, p.j))}
    row_of = np.array([key[(int(c), int(j))] for c, j in zip(r.clone, r.j)])
    w = np.exp(traj.log_w_start[row_of] + traj.rate[row_of] * (r.t_stop - p.t_start[row_of]))
    slow = weighted_km(r.t_start, r.t_stop, r.y, w)
    np.testing.assert_allclose(fast.times, slow.times)
    np.testing.assert_allclose(fast.surv, slow.surv, rtol=1e-12)


def test_ipcw_without_censoring_equals_km():
    p = dataclasses.replace(dgp.preset("baseline-s1"), beta=0.0)
    cohort = dgp.simulate(p, 800, 4)
    adher = follows_strategy(cohort, 5)
    sub = cohort.subset(adher)
    est = ipcw_km_contrast(sub, 5, 3, WeightConfig())
    km = km_cloned(sub, 5, 3)
    ref = weighted_km(np.zeros(sub.n), sub.time, sub.event, 1.0)
    assert est.rmst_d1 == pytest.approx(ref.rmst(10.0), rel=1e-12)
    assert km.rmst_d1 == pytest.approx(ref.rmst(10.0), rel=1e-12)


def test_toy_contrast_with_supplied_weights():
    km = toy.km_example()
    assert km["rmst0"] == 2.5
    assert km["rmst1"] == pytest.approx(2.7035, abs=1e-3)
    assert km["contrast"] == pytest.approx(0.2035, abs=1e-3)


def test_contrast_is_bounded(small_baseline):
    for est in (ipcw_km_contrast(small_baseline, 5, 3), km_cloned(small_baseline, 5, 3),
                naive_filtered(small_baseline, 5, 3)):
        assert -10 <= est.theta <= 10
        assert 0 <= est.rmst_d0 <= 10 and 0 <= est.rmst_d1 <= 10


def test_estimators_reject_unknown_strategy(small_baseline):
    c = clone_dataset(small_baseline, [Strategy(5, 4), Strategy(3, 4)])
    with pytest.raises(ValueError):
        ipcw_km_contrast(c, 5, 2)


def test_gformula_without_covariates_is_marginal_pwexp(small_baseline):
    est = gformula_baseline(small_baseline, 5, 3, names=())
    c = clone_dataset(small_baseline, [Strategy(5, 4), Strategy(3, 4)], AT_VISIT)
    for d, val in ((5, est.rmst_d1), (3, est.rmst_d0)):
        p = expand_visits(c.for_arm(d))
        ev = np.bincount(p.j - 1, weights=p.y, minlength=5)
        ex = np.bincount(p.j - 1, weights=p.length, minlength=5)
        rates = (ev / ex)[None, :]
        hz = PiecewiseExpHazard(small_baseline.grid.bounds, np.log(rates[0]), np.zeros(0))
        assert val == pytest.approx(hz.rmst(np.empty((1, 0)), 10.0)[0], rel=1e-7)


def test_gformula_families(small_baseline):
    a = gformula_baseline(small_baseline, 5, 3, "pwexp")
    b = gformula_baseline(small_baseline, 5, 3, "weibull")
    assert abs(a.theta - b.theta) < 2
    with pytest.raises(ValueError):
        gformula_baseline(small_baseline, 5, 3, "cox")


def test_transition_models_recover_mechanism():
    p = dgp.preset("timedep-s2")
    cohort = dgp.simulate(p, 20_000, 3)
    m = fit_transition_models(cohort, {"X3": (("X3_prev", "A_prev"), "gaussian"),
                                       "X4": (("X4_prev",), "gaussian")})
    np.testing.assert_allclose(m["X3"].coef, [p.x3_intercept, p.x3_prev, p.x3_aprev], atol=0.02)
    np.testing.assert_allclose(m["X4"].coef, [p.x4_intercept, p.x4_prev], atol=0.02)
    assert m["X3"].sigma == pytest.approx(p.x3_sigma, rel=0.05)
    with pytest.raises(ValueError):
        fit_transition_models(cohort, {"X3": (("X3_prev",), "poisson")})


def test_toy_imputation_by_hand():
    imp = toy.imputation_example()
    # arm g0, clone 1a: 0.3 + 0.6 * 1.8 + 0.2 * 1
    assert imp[toy.G0.d]["completed"][0, 2, 0] == pytest.approx(1.58)
    # X4 at visit 2 is predicted from the visit-1 values (1.8, 1)
    lin = -0.8 + 0.7 * 1.8 + 0.9 * 1
    assert lin == pytest.approx(1.36)
    assert imp[toy.G0.d]["p_x4"][0] == pytest.approx(1 / (1 + np.exp(-lin)))
    # fully observed adherent clone 3b is untouched
    arm1 = imp[toy.G1.d]
    np.testing.assert_array_equal(arm1["completed"][2], toy.cohort().time_varying[2])


def test_transition_draws_are_seeded():
    m = TransitionModel("X3", ("X3_prev",), np.array([0.0, 1.0]), "gaussian", 0.5)
    inp = {"X3_prev": np.zeros(5)}
    a = m.draw(inp, np.random.default_rng(1))
    b = m.draw(inp, np.random.default_rng(1))
    np.testing.assert_array_equal(a, b)
    mb = TransitionModel("X4", ("X4_prev",), np.array([0.0, 1.0]), "binomial")
    assert set(np.unique(mb.plug_in({"X4_prev": np.array([-1.0, 1.0])}))) == {0.0, 1.0}


def test_gformula_timedep_runs_and_draws_agree(small_timedep):
    plug = gformula_timedep(small_timedep, 3, 5)
    drawn = gformula_timedep(small_timedep, 3, 5, draws=5, seed=2)
    assert abs(plug.theta - drawn.theta) < 0.5
    with pytest.raises(ValueError):
        gformula_timedep(dgp.simulate(dgp.preset("baseline-s1"), 100, 1), 3, 5)


def test_complete_histories_keep_compatible_values(small_timedep):
    c = clone_dataset(small_timedep, [Strategy(3, 4)], AT_VISIT)
    models = fit_transition_models(small_timedep, {"X3": (("X3_prev", "A_prev"), "gaussian"),
                                                   "X4": (("X4_prev",), "gaussian")})
    tv = complete_histories(c, models)
    assert np.all(np.isfinite(tv))
    obs = small_timedep.time_varying[c.subject]
    adherent = c.deviation_visit < 0
    att = small_timedep.attended[c.subject]
    np.testing.assert_array_equal(tv[adherent][att[adherent]], obs[adherent][att[adherent]])


def test_q_residual_examples():
    hz = PiecewiseExpHazard(np.array([0.0, 10.0]), np.log([0.5]), np.zeros(0))
    assert q_residual(hz, 2.0, np.empty((1, 0)), 10.0)[0] == pytest.approx(3.9634, abs=1e-4)
    model = ResidualLifeModel(np.array([[0.5]]), np.array([0.0, 10.0]), 10.0)
    assert q_residual(model, 10.0)[0] == 10.0
    with pytest.raises(ValueError):
        q_residual(model, 11.0)


def test_aipcw_reduces_to_restricted_time_without_censoring():
    p = dataclasses.replace(dgp.preset("baseline-s1"), beta=0.0)
    cohort = dgp.simulate(p, 500, 6)
    sub = cohort.subset(follows_strategy(cohort, 5))
    c = clone_dataset(sub, [Strategy(5, 4)], AT_VISIT)
    panel = expand_visits(c)
    traj = WeightTrajectory.build(panel)
    Q = ResidualLifeModel(np.full((c.n, 5), 0.1), sub.grid.bounds, 10.0)
    np.testing.assert_allclose(aipcw_transform(panel, traj, Q, 10.0), np.minimum(sub.time, 10))


def test_aipcw_pseudo_outcome_unbiased_single_interval(rng):
    """Constant censoring and event hazards on one interval: mean T_DR equals the RMST."""
    grid = VisitGrid((0.0,), 4.0)
    n = 40_000
    T = rng.exponential(1 / 0.3, n)
    C = rng.exponential(1 / 0.2, n)
    time = np.minimum(np.minimum(T, C), 4.0)
    ev = (T <= np.minimum(C, 4.0)).astype(np.int8)
    cohort = Cohort(grid, np.arange(n), np.zeros((n, 0)), (), np.ones((n, 1), np.int8), time, ev)
    c = clone_dataset(cohort, [Strategy(1, 0)], AT_VISIT)
    panel = expand_visits(c)
    traj = WeightTrajectory.build(panel, rate=np.full(panel.n_rows, 0.2))
    truth = (1 - np.exp(-0.3 * 4)) / 0.3
    for rates in (np.full((n, 1), 0.3), np.full((n, 1), 1.5)):  # right and wrong Q
        t_dr = aipcw_transform(panel, traj, ResidualLifeModel(rates, grid.bounds, 4.0), 4.0)
        assert t_dr.mean() == pytest.approx(truth, abs=4 * t_dr.std() / np.sqrt(n))


def test_aipcw_contrast_options(small_baseline):
    p = dgp.preset("baseline-s1")
    for q in ("pwexp", "true", "tau"):
        est = aipcw_contrast(small_baseline, 5, 3, q_model=q, params=p)
        assert np.isfinite(est.theta)
    with pytest.raises(ValueError):
        aipcw_contrast(small_baseline, 5, 3, q_model="cox")


def _cohort(rows, K=2, tau=3.0):
    grid = VisitGrid.integers(K, tau)
    recs = [SubjectRecord(i, {"X1": 0.0}, a, t, e) for i, (a, t, e) in enumerate(rows)]
    return Cohort.from_records(recs, grid)


def test_naive_arm_rules():
    c = _cohort([((1, 1, 1), 3.0, 0), ((1, 0, 0), 3.0, 1), ((1,), 0.5, 1), ((1, 1, 0), 2.5, 1)])
    a1, a0 = naive_arms(c, 3, 1, "prefix")
    assert list(a1) == [True, False, True, False] and list(a0) == [False, True, True, False]
    b1, b0 = naive_arms(c, 3, 1, "shorter")
    assert list(b1) == [True, False, False, False] and list(b0) == [False, True, True, False]
    est = naive_filtered(c, 3, 1)
    assert est.rmst_d1 == pytest.approx((3.0 + 0.5) / 2)
    with pytest.raises(ValueError):
        naive_arms(c, 3, 1, "exact")
    with pytest.raises(EstimationError):
        naive_filtered(c.subset([0]), 3, 1)


def test_naive_immortal_time_bias_sign():
    """Null effect, no censoring: continuing longer requires surviving longer."""
    p = dataclasses.replace(dgp.preset("baseline-s1"), alphaA=0.0, beta=0.0, alphaX1=0.0,
                            alphaX2=0.0, alphaX3=0.0, gammaX1=0.0, gammaX2=0.0)
    cohort = dgp.simulate(p, 20_000, 8)
    assert dgp.oracle_contrast(p, 5, 3, n_mc=20_000) == pytest.approx(0.0, abs=1e-12)
    assert naive_filtered(cohort, 5, 3, rule="shorter").theta > 0.5


def test_gformula_filtered_without_confounding_matches_naive():
    p = dataclasses.replace(dgp.preset("baseline-s1"), alphaA=0.0, beta=0.0, alphaX1=0.0,
                            alphaX2=0.0, alphaX3=0.0, gammaX1=0.0, gammaX2=0.0)
    cohort = dgp.simulate(p, 20_000, 9)
    g = gformula_filtered(cohort, 5, 3, names=())
    n = naive_filtered(cohort, 5, 3)
    assert g.rmst_d1 == pytest.approx(n.rmst_d1, abs=0.1)
    assert g.rmst_d0 == pytest.approx(n.rmst_d0, abs=0.1)
