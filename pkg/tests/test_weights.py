import numpy as np
import pytest
from scipy.special import expit

from ccwsurv import dgp, toy
from ccwsurv.cloning import AT_VISIT, clone_dataset
from ccwsurv.core import Strategy
from ccwsurv.glm import PiecewiseExpHazard
from ccwsurv.panel import expand_visits
from ccwsurv.weights import (PooledLogit, WeightConfig, WeightTrajectory, artificial_weights,
                             combine_weights, estimate_weights, fit_artificial_model,
                             fit_pooled_logit, natural_weights, oracle_weights, weights_to_csv)


def test_toy_probabilities_by_hand():
    """Independent recomputation of the short-arm censoring probabilities."""
    b = np.array(toy.ART_COEF)
    rows = [  # (interval-2 dummy, X1, X2, X3, X4) per clone and interval
        [(0, 0, 1, 2.0, 0), (1, 0, 1, 1.8, 1)],
        [(0, 1, 0, 1.0, 1), (1, 1, 0, 1.4, 1)],
        [(0, 0, 0, 0.5, 0), (1, 0, 0, 0.7, 1)],
    ]
    p = np.array([[expit(b @ np.r_[1, r]) for r in clone] for clone in rows])
    tab = toy.artificial_table()
    np.testing.assert_allclose(tab["p"], p.ravel(), atol=1e-12)
    np.testing.assert_allclose(tab["G_t2"], 1 - p[:, 0], atol=1e-12)
    np.testing.assert_allclose(tab["p"], [0.214, 0.686, 0.354, 0.698, 0.063, 0.406], atol=1e-3)


def _traj(rate, p_end, lengths=(1.0, 1.0, 2.0)):
    c = clone_dataset(toy.cohort().subset([2]), [toy.G1])
    p = expand_visits(c)
    assert p.n_rows == 3
    return WeightTrajectory.build(p, p_end=p_end, rate=rate)


def test_trajectory_closed_form():
    t = _traj(rate=[0.1, 0.2, 0.0], p_end=[0.5, 0.0, 0.2])
    np.testing.assert_allclose(t.weight_at_start(), [1.0, 2 * np.exp(0.1), 2 * np.exp(0.3)])
    np.testing.assert_allclose(t.weight(np.array([0.5, 1.5, 2.5])),
                               [np.exp(0.05), 2 * np.exp(0.2), 2 * np.exp(0.3)])
    assert t.clone_weight(0.0)[0] == 1.0
    assert np.isnan(t.clone_weight(3.5)[0])
    with pytest.raises(ValueError):
        _traj(rate=[0, 0, 0], p_end=[1.0, 0, 0])
    with pytest.raises(ValueError):
        _traj(rate=[-1, 0, 0], p_end=[0, 0, 0])


def test_truncation_caps_weights():
    t = _traj(rate=[1.0, 1.0, 1.0], p_end=[0.9, 0.9, 0.0]).truncated(5.0)
    grid = np.linspace(0.01, 3, 50)
    w = np.array([t.clone_weight(u)[0] for u in grid])
    assert np.all(w <= 5.0 + 1e-9) and np.all(np.diff(w) >= -1e-12)


def test_combine_weights():
    a = _traj(rate=[0, 0, 0], p_end=[0.5, 0, 0])
    n = WeightTrajectory.build(a.panel, rate=[0.1, 0.1, 0.1])
    both = combine_weights(a, n)
    np.testing.assert_allclose(both.weight(a.panel.t_stop),
                               a.weight(a.panel.t_stop) * n.weight(a.panel.t_stop))
    np.testing.assert_allclose(combine_weights(2.0, np.array([1.5, 3])), [3.0, 6.0])
    other = WeightTrajectory.build(expand_visits(clone_dataset(toy.cohort(), [toy.G0])))
    with pytest.raises(ValueError):
        combine_weights(a, other)


def test_natural_weights_exponentiate_cumulative_hazard():
    c = clone_dataset(toy.cohort(), [toy.G1])
    p = expand_visits(c)
    m = PiecewiseExpHazard(toy.GRID.bounds, np.log([0.1, 0.2, 0.3]), np.zeros(0))
    t = natural_weights(p, m, names=())
    last = p.clone == 2
    np.testing.assert_allclose(t.weight_at_stop()[last], np.exp([0.1, 0.3, 0.6]))


def test_pooled_logit_zero_levels_and_split():
    j = np.array([1, 1, 2, 2, 2, 3])
    X = np.array([[0.0], [1.0], [0.0], [1.0], [2.0], [1.0]])
    y = np.array([0, 0, 1, 0, 1, 0])
    m = fit_pooled_logit(j, X, y, ("x",))
    assert m.levels == (2,) and set(m.zero_levels) == {1, 3}
    assert np.all(m.predict(np.array([1, 3]), X[:2]) == 0)
    none = fit_pooled_logit(j, X, np.zeros(6), ("x",))
    assert none.fit is None and np.all(none.predict(j, X) == 0)
    pm = PooledLogit.from_coef([0.0, 1.0, -1.0], (1,), ("x",))
    pm = PooledLogit(pm.fit, (1,), (), ("x",), split=True)
    np.testing.assert_allclose(pm.predict(np.array([1, 1]), np.array([[1.0], [1.0]]),
                                          prescribed=np.array([1, 0])),
                               [expit(1.0), expit(-1.0)])


def test_adherent_data_gives_unit_weights():
    cohort = dgp.simulate(dgp.preset("baseline-s1"), 400, 2)
    keep = np.all((cohort.treatment == 1) | (cohort.treatment == -1), axis=1)
    sub = cohort.subset(keep)
    p = expand_visits(clone_dataset(sub, [Strategy(5, 4)], AT_VISIT))
    traj, _ = estimate_weights(p, WeightConfig(mode="artificial_only"))
    np.testing.assert_array_equal(traj.weight_at_stop(), 1.0)


def test_weight_config_validation():
    with pytest.raises(ValueError):
        WeightConfig(mode="stabilized")


@pytest.mark.parametrize("mode", WeightConfig.MODES)
def test_modes_produce_valid_trajectories(mode, small_baseline):
    c = clone_dataset(small_baseline, [Strategy(5, 4), Strategy(3, 4)], AT_VISIT)
    p = expand_visits(c.for_arm(3))
    cfg = WeightConfig(mode=mode, params=dgp.preset("baseline-s1"))
    traj, info = estimate_weights(p, cfg)
    w0 = traj.clone_weight(0.0)
    assert np.all(w0 == 1.0)
    assert np.all(np.isfinite(traj.weight_at_stop())) and np.all(traj.weight_at_stop() >= 1)


def test_decision_rows_follow_convention(small_baseline):
    c = clone_dataset(small_baseline, [Strategy(3, 4)], AT_VISIT)
    p = expand_visits(c)
    # an artificially censored row always carries the decision at its end visit
    assert np.all(p.decision[p.art == 1] == p.j[p.art == 1])
    m = fit_artificial_model(p, ("X1", "X2", "X3"))
    assert m.fit is not None and m.fit.converged
    t = artificial_weights(p, m, mask=p.decision >= 0)
    assert np.all(t.p_end[p.decision < 0] == 0)


def test_oracle_weights_use_true_mechanism(small_timedep):
    params = dgp.preset("timedep-s1")
    c = clone_dataset(small_timedep, [Strategy(3, 4)], AT_VISIT)
    p = expand_visits(c)
    t = oracle_weights(p, params)
    assert np.all(t.rate > 0) and np.all(t.p_end[p.decision < 1] == 0)
    with pytest.raises(TypeError):
        oracle_weights(p, None)


def test_weights_csv(tmp_path):
    t = _traj(rate=[0.1, 0.0, 0.0], p_end=[0.5, 0.0, 0.0])
    path = tmp_path / "w.csv"
    weights_to_csv(t, path)
    header = path.read_text().splitlines()[0].split(",")
    assert {"weight_start", "weight_stop", "p_censor_end", "censor_rate"} <= set(header)
