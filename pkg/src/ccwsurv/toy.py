"""Three-subject worked example used for hand-checkable reproductions."""

from __future__ import annotations

import numpy as np

from ccwsurv.cloning import AT_VISIT, END_OF_INTERVAL, clone_dataset
from ccwsurv.core import Cohort, Strategy, SubjectRecord, VisitGrid
from ccwsurv.estimators import (StepSurvival, TransitionModel, complete_histories, rmst,
                                weighted_km)
from ccwsurv.panel import expand_visits
from ccwsurv.weights import PooledLogit, artificial_weights

GRID = VisitGrid((0.0, 1.0, 2.0), tau=3.0)
G0 = Strategy(1, 2)  # (1, 0, 0)
G1 = Strategy(3, 2)  # (1, 1, 1)

#: artificial-censoring model for the short arm: intercept, 1{interval 2}, X1, X2, X3, X4
ART_COEF = (-3.0, 1.2, 0.8, 0.5, 0.6, 1.0)

#: per-arm transition models (intercept, X3_prev, X4_prev)
TRANSITIONS = {
    G0.d: {"X3": ((0.3, 0.6, 0.2), "gaussian"), "X4": ((-0.8, 0.7, 0.9), "binomial")},
    G1.d: {"X3": ((0.2, 0.5, 0.3), "gaussian"), "X4": ((-0.6, 0.6, 0.8), "binomial")},
}


def records() -> list[SubjectRecord]:
    return [
        SubjectRecord(1, {"X1": 0.0, "X2": 1.0}, (1, 0), 1.5, 1,
                      {"X3": (2.0, 1.8), "X4": (0.0, 1.0)}),
        SubjectRecord(2, {"X1": 1.0, "X2": 0.0}, (1, 1, 0), 2.5, 1,
                      {"X3": (1.0, 1.4, 1.1), "X4": (1.0, 1.0, 0.0)}),
        SubjectRecord(3, {"X1": 0.0, "X2": 0.0}, (1, 1, 1), 3.0, 0,
                      {"X3": (0.5, 0.7, 0.8), "X4": (0.0, 1.0, 1.0)}),
    ]


def cohort() -> Cohort:
    return Cohort.from_records(records(), GRID)


def artificial_table():
    """Censoring probabilities, stay products and weights for the short arm."""
    clones = clone_dataset(cohort(), [G0, G1], END_OF_INTERVAL).for_arm(G0.d)
    panel = expand_visits(clones)
    model = PooledLogit.from_coef(ART_COEF, levels=(1, 2), names=("X1", "X2", "X3", "X4"))
    traj = artificial_weights(panel, model)
    second = panel.j == 2
    return {
        "p": traj.p_end,
        "G_t2": 1.0 / traj.weight_at_start()[second],
        "w_t2": traj.weight_at_start()[second],
    }


def km_example():
    """Weighted KM in both arms with the weights stated for the worked example."""
    short = weighted_km([0, 0, 0], [1.5, 2.0, 2.0], [1, 0, 0], [1.0, 1.0, 1.0])
    # long arm: clone 1b leaves at 2, 2b (event at 2.5) and 3b carry weights 1/0.55, 1/0.8
    long_ = weighted_km([0, 0, 0], [2.0, 2.5, 3.0], [0, 1, 0],
                        [1.0, round(1 / 0.55, 3), 1 / 0.80])
    r0, r1 = rmst(short, GRID.tau), rmst(long_, GRID.tau)
    return {"S0": short, "S1": long_, "rmst0": r0, "rmst1": r1, "contrast": r1 - r0}


def imputation_example():
    """Plug-in completion of the second-visit covariates in each arm."""
    clones = clone_dataset(cohort(), [G0, G1], AT_VISIT)
    out = {}
    for s in (G0, G1):
        arm = clones.for_arm(s.d)
        models = {
            t: TransitionModel(t, ("X3_prev", "X4_prev"), np.asarray(c), fam)
            for t, (c, fam) in TRANSITIONS[s.d].items()
        }
        completed = complete_histories(arm, models)
        x3 = completed[:, 1, 0]
        x4 = completed[:, 1, 1]
        p4 = models["X4"].mean({"X3_prev": x3, "X4_prev": x4})
        out[s.d] = {"clones": arm, "completed": completed, "p_x4": p4}
    return out


def summary_lines() -> list[str]:
    art = artificial_table()
    km = km_example()
    imp = imputation_example()
    f = lambda v: ", ".join(f"{x:.3f}" for x in v)  # noqa: E731
    s1: StepSurvival = km["S1"]
    x3 = np.r_[imp[G0.d]["completed"][:, 2, 0], imp[G1.d]["completed"][0, 2, 0]]
    p4 = np.r_[imp[G0.d]["p_x4"], imp[G1.d]["p_x4"][0]]
    return [
        f"artificial censoring probabilities: {f(art['p'])}",
        f"stay products at t=2: {f(art['G_t2'])}",
        f"weights at t=2: {f(art['w_t2'])}",
        f"RMST short arm: {km['rmst0']:.4f}",
        f"S long arm at 2.5: {float(s1(2.5)):.4f}",
        f"RMST long arm: {km['rmst1']:.4f}",
        f"RMST contrast: {km['contrast']:.4f}",
        f"imputed X3 at visit 2: {f(x3)}",
        f"P(X4=1) at visit 2: {f(p4)}",
    ]
