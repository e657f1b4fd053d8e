import math

import numpy as np
import pytest

from ccwsurv import dgp, toy
from ccwsurv.cloning import (AT_VISIT, END_OF_INTERVAL, artificial_censor_time, clone_dataset,
                             support_diagnostics)
from ccwsurv.core import Strategy, SubjectRecord
from ccwsurv.panel import expand_visits, refine_at_times


def _by_label(clones):
    out = {}
    for rec in clones.records():
        tag = "a" if rec.strategy == toy.G0 else "b"
        out[f"{rec.subject_id}{tag}"] = rec
    return out


def test_artificial_censor_time_examples():
    s = SubjectRecord(2, {}, (1, 1, 0), 2.5, 1)
    assert artificial_censor_time(s, toy.G0, toy.GRID, END_OF_INTERVAL) == 2.0
    assert artificial_censor_time(s, toy.G0, toy.GRID, AT_VISIT) == 1.0
    assert artificial_censor_time(s, Strategy(2, 2), toy.GRID, AT_VISIT) == math.inf
    with pytest.raises(ValueError):
        artificial_censor_time(s, toy.G0, toy.GRID, "midpoint")


def test_deviation_only_assessed_at_attended_visits():
    # leaves at 0.9 before visit 1; the recorded treatment never deviates
    s = SubjectRecord(1, {}, (1,), 0.9, 0)
    assert artificial_censor_time(s, toy.G0, toy.GRID, AT_VISIT) == math.inf


def test_toy_clones_end_of_interval():
    c = _by_label(clone_dataset(toy.cohort(), [toy.G0, toy.G1], END_OF_INTERVAL))
    expected = {
        "1a": (1.5, 1, "event"), "1b": (1.5, 1, "event"),
        "2a": (2.0, 0, "artificial"), "2b": (2.5, 1, "event"),
        "3a": (2.0, 0, "artificial"), "3b": (3.0, 0, "administrative"),
    }
    for label, (t, e, kind) in expected.items():
        assert (c[label].time, c[label].event, c[label].kind) == (t, e, kind), label
    assert c["1b"].G == 2.0 and c["2b"].G == 3.0 and math.isinf(c["1a"].G)


def test_toy_clones_at_visit():
    c = _by_label(clone_dataset(toy.cohort(), [toy.G0, toy.G1], AT_VISIT))
    expected = {"1a": (1.5, 1, 0), "1b": (1.0, 0, 1), "2a": (1.0, 0, 1),
                "2b": (2.0, 0, 1), "3a": (1.0, 0, 1), "3b": (3.0, 0, 0)}
    for label, (t, e, art) in expected.items():
        rec = c[label]
        assert (rec.time, rec.event, int(rec.kind == "artificial")) == (t, e, art), label


def test_clone_counts_and_singleton():
    cohort = dgp.simulate(dgp.preset("baseline-s1"), 250, 3)
    both = clone_dataset(cohort, [Strategy(5, 4), Strategy(3, 4)])
    assert both.n == 500
    one = clone_dataset(cohort, [Strategy(5, 4)])
    assert one.n == 250
    kept = one.kind != 3
    np.testing.assert_array_equal(one.time[kept], cohort.time[kept])
    with pytest.raises(ValueError):
        clone_dataset(cohort, [Strategy(3, 4), Strategy(3, 4)])
    with pytest.raises(ValueError):
        clone_dataset(cohort, [Strategy(2, 3)])


def test_clone_invariants(small_baseline):
    for conv in (AT_VISIT, END_OF_INTERVAL):
        c = clone_dataset(small_baseline, [Strategy(5, 4), Strategy(3, 4)], conv)
        T = small_baseline.time[c.subject]
        np.testing.assert_array_equal(c.time, np.minimum(T, c.G))
        ev = small_baseline.event[c.subject]
        np.testing.assert_array_equal(c.event, ev * (T <= c.G))


def test_support_diagnostics_toy():
    c = clone_dataset(toy.cohort(), [toy.G0, toy.G1])
    tab = support_diagnostics(c)
    arm0 = tab[tab.arm == toy.G0.d]
    assert list(arm0.at_risk[:2]) == [3, 3]
    assert list(arm0.artificial) == [0, 2, 0]
    assert tab.low_support.all()
    assert not support_diagnostics(c, floor=1).low_support.iloc[0]
    assert support_diagnostics(c.select(np.zeros(c.n, bool))).empty


def test_support_single_event_clone():
    c = clone_dataset(toy.cohort().subset([0]), [toy.G0])
    tab = support_diagnostics(c)
    # event at 1.5: at risk in intervals 1 and 2, gone from 3
    assert list(tab.at_risk) == [1, 1, 0]


def test_expand_visits_toy_short_arm():
    c = clone_dataset(toy.cohort(), [toy.G0, toy.G1]).for_arm(toy.G0.d)
    p = expand_visits(c)
    df = p.to_frame()
    assert list(df.j) == [1, 2, 1, 2, 1, 2]
    assert list(df.t_stop) == [1.0, 1.5, 1.0, 2.0, 1.0, 2.0]
    assert list(df.y) == [0, 1, 0, 0, 0, 0]
    assert list(df.art_censor) == [0, 0, 0, 1, 0, 1]
    # covariates come from the visit opening each interval
    assert list(df.X3) == [2.0, 1.8, 1.0, 1.4, 0.5, 0.7]


def test_expand_rejects_zero_follow_up(toy_cohort):
    c = clone_dataset(toy_cohort, [toy.G0])
    bad = c.select(np.ones(c.n, bool))
    object.__setattr__(bad, "time", np.zeros(bad.n))
    with pytest.raises(ValueError):
        expand_visits(bad)


def _reconstruct(p):
    """Per clone: (start, stop, events, art, nat) after merging contiguous rows."""
    out = {}
    for c in np.unique(p.clone):
        sel = p.clone == c
        assert np.all(p.t_start[sel][1:] == p.t_stop[sel][:-1])
        out[int(c)] = (p.t_start[sel][0], p.t_stop[sel][-1], int(p.y[sel].sum()),
                       int(p.art[sel].sum()), int(p.k_nat[sel].sum()))
    return out


def test_refine_round_trip(small_timedep):
    c = clone_dataset(small_timedep, [Strategy(3, 4), Strategy(5, 4)], AT_VISIT)
    p = expand_visits(c)
    cuts = np.unique(c.time[c.event == 1])
    r = refine_at_times(p, cuts)
    assert r.n_rows > p.n_rows
    assert _reconstruct(r) == _reconstruct(p)
    # indicator mass unchanged and held by tail fragments only
    assert r.y.sum() == p.y.sum()
    np.testing.assert_allclose(np.bincount(r.clone, r.length), np.bincount(p.clone, p.length))
    assert refine_at_times(p, []).n_rows == p.n_rows


def test_panel_rows_and_csv(tmp_path):
    c = clone_dataset(toy.cohort(), [toy.G0, toy.G1])
    p = expand_visits(c)
    rows = p.rows()
    assert rows[1].y == 1 and rows[1].covariates["X3"] == 1.8
    path = tmp_path / "panel.csv"
    p.to_csv(path, weight=np.ones(p.n_rows))
    text = path.read_text().splitlines()
    assert text[0].endswith("weight") and len(text) == p.n_rows + 1
