import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from ccwsurv import toy
from ccwsurv.cloning import AT_VISIT, END_OF_INTERVAL, clone_dataset
from ccwsurv.core import Cohort, Strategy, SubjectRecord, VisitGrid
from ccwsurv.estimators import rmst, weighted_km
from ccwsurv.panel import expand_visits, refine_at_times
from ccwsurv.weights import WeightTrajectory

SETTINGS = settings(max_examples=60, derandomize=True, deadline=None)

times = st.lists(st.tuples(st.integers(1, 40), st.booleans(),
                           st.floats(0.1, 10, allow_nan=False)), min_size=1, max_size=25)


@SETTINGS
@given(times, st.floats(0.01, 100))
def test_weighted_km_scale_invariance(rows, c):
    t = np.array([r[0] / 4 for r in rows])
    e = np.array([r[1] for r in rows])
    w = np.array([r[2] for r in rows])
    a = weighted_km(np.zeros(t.size), t, e, w)
    b = weighted_km(np.zeros(t.size), t, e, w * c)
    np.testing.assert_allclose(a.surv, b.surv, rtol=1e-10, atol=1e-14)


@SETTINGS
@given(times, st.floats(0.5, 12))
def test_km_is_monotone_and_rmst_bounded(rows, tau):
    t = np.array([r[0] / 4 for r in rows])
    e = np.array([r[1] for r in rows])
    w = np.array([r[2] for r in rows])
    s = weighted_km(np.zeros(t.size), t, e, w)
    assert np.all(np.diff(np.r_[1.0, s.surv]) <= 1e-15)
    assert np.all((s.surv >= -1e-15) & (s.surv <= 1))
    assert -1e-12 <= rmst(s, tau) <= tau + 1e-12


subject = st.tuples(st.lists(st.integers(0, 1), min_size=2, max_size=2),
                    st.floats(0.05, 3.0), st.booleans())


def _cohort(subjects):
    recs = [SubjectRecord(i, {"X1": float(i)}, (1, *a), t, int(e))
            for i, (a, t, e) in enumerate(subjects)]
    return Cohort.from_records(recs, toy.GRID)


@SETTINGS
@given(st.lists(subject, min_size=1, max_size=8), st.sampled_from([AT_VISIT, END_OF_INTERVAL]),
       st.lists(st.floats(0.01, 2.99), max_size=6))
def test_panel_partition_round_trip(subjects, conv, cuts):
    c = clone_dataset(_cohort(subjects), [Strategy(1, 2), Strategy(3, 2)], conv)
    p = expand_visits(c)
    r = refine_at_times(p, cuts)
    for panel in (p, r):
        # rows tile each clone's follow-up exactly once
        total = np.bincount(panel.clone, panel.length, minlength=c.n)
        np.testing.assert_allclose(total, np.minimum(c.time, 3.0), atol=1e-12)
        assert np.all(panel.length > 0)
    assert r.y.sum() == c.event.sum() == p.y.sum()
    assert r.art.sum() == p.art.sum() == np.sum(c.kind == 3)


@SETTINGS
@given(st.lists(st.tuples(st.floats(0, 0.95), st.floats(0, 3)), min_size=3, max_size=3))
def test_weights_start_at_one_and_never_decrease(params):
    c = clone_dataset(toy.cohort().subset([2]), [toy.G1])
    panel = expand_visits(c)
    traj = WeightTrajectory.build(panel, p_end=[p for p, _ in params],
                                  rate=[r for _, r in params])
    grid = np.linspace(0, 3, 61)
    w = np.array([traj.clone_weight(u)[0] for u in grid])
    assert w[0] == 1.0
    assert np.all(np.diff(w) >= -1e-12)
