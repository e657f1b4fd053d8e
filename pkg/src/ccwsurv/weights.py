"""Inverse-probability-of-censoring weight trajectories on person-period panels.

A clone's weight ``W(t) = 1 / P(uncensored through t | history)`` is described
row by row. Inside row ``r`` (covering ``(t_start, t_stop]``) the log-weight
grows linearly at the continuous censoring hazard ``rate[r]``. At the end of a
row the clone may be censored with probability ``p_end[r]`` (an artificial
censoring decision, or any censoring in the single pooled-logistic variant);
surviving that raises the log-weight by ``-log(1 - p_end[r])`` for the next row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from ccwsurv.glm import (DesignMatrix, FittedGlm, PiecewiseExpHazard, fit_logistic,
                         fit_piecewise_exponential)
from ccwsurv.panel import Panel


@dataclass(frozen=True, eq=False)
class WeightTrajectory:
    panel: Panel
    p_end: np.ndarray
    rate: np.ndarray
    log_w_start: np.ndarray

    @classmethod
    def build(cls, panel: Panel, p_end=None, rate=None) -> "WeightTrajectory":
        n = panel.n_rows
        p_end = np.zeros(n) if p_end is None else np.asarray(p_end, dtype=float)
        rate = np.zeros(n) if rate is None else np.asarray(rate, dtype=float)
        if np.any((p_end < 0) | (p_end >= 1)):
            raise ValueError("censoring probabilities must lie in [0, 1)")
        if np.any(rate < 0):
            raise ValueError("censoring hazards must be non-negative")
        inc = rate * panel.length - np.log1p(-p_end)
        # cumulative over earlier rows of the same clone (rows are contiguous)
        csum = np.cumsum(inc)
        clone_start = np.r_[True, panel.clone[1:] != panel.clone[:-1]]
        offset = np.maximum.accumulate(np.where(clone_start, np.arange(n), 0))
        before = csum - inc
        base = before - before[offset]
        return cls(panel, p_end, rate, base)

    @property
    def stay(self) -> np.ndarray:
        return 1.0 - self.p_end

    def log_weight(self, t, rows=None) -> np.ndarray:
        """Log-weight at time ``t`` inside ``rows`` (all rows when omitted)."""
        rows = slice(None) if rows is None else rows
        dt = np.asarray(t, dtype=float) - self.panel.t_start[rows]
        return self.log_w_start[rows] + self.rate[rows] * dt

    def weight(self, t, rows=None) -> np.ndarray:
        return np.exp(self.log_weight(t, rows))

    def weight_at_stop(self) -> np.ndarray:
        return self.weight(self.panel.t_stop)

    def weight_at_start(self) -> np.ndarray:
        return np.exp(self.log_w_start)

    def clone_weight(self, t: float) -> np.ndarray:
        """Weight of every clone at ``t`` (NaN for clones no longer followed)."""
        out = np.full(self.panel.clones.n, np.nan)
        inside = (self.panel.t_start < t) & (t <= self.panel.t_stop)
        if t == 0:
            inside = self.panel.t_start == 0
        out[self.panel.clone[inside]] = self.weight(t, inside)
        return out

    def truncated(self, cap: float) -> "WeightTrajectory":
        """Copy with each row's start weight and growth capped at ``cap``."""
        log_cap = np.log(cap)
        base = np.minimum(self.log_w_start, log_cap)
        room = np.maximum(log_cap - base, 0)
        rate = np.minimum(self.rate, room / np.maximum(self.panel.length, 1e-300))
        return WeightTrajectory(self.panel, self.p_end, rate, base)


def combine_weights(art, nat):
    """Product of artificial and natural weights.

    Scalars and arrays are multiplied; two trajectories on the same panel
    are merged into one whose log-weight is the sum.
    """
    if isinstance(art, WeightTrajectory) and isinstance(nat, WeightTrajectory):
        if art.panel is not nat.panel:
            raise ValueError("trajectories must share a panel")
        p = 1 - (1 - art.p_end) * (1 - nat.p_end)
        return WeightTrajectory(art.panel, p, art.rate + nat.rate,
                                art.log_w_start + nat.log_w_start)
    return np.asarray(art, dtype=float) * np.asarray(nat, dtype=float)


# ---------------------------------------------------------------------------
# pooled logistic model for a per-row jump


@dataclass(frozen=True)
class PooledLogit:
    """Logistic model ``intercept + interval dummies + covariates``.

    ``levels`` are the interval indices with a free intercept (the first one
    is the reference); ``zero_levels`` have probability fixed at 0 because no
    censoring was observed there. ``split`` gives separate covariate slopes for
    decisions where the strategy prescribes continuing versus stopping.
    """

    fit: FittedGlm | None
    levels: tuple[int, ...]
    zero_levels: tuple[int, ...]
    names: tuple[str, ...]
    split: bool = False

    def features(self, j: np.ndarray, X: np.ndarray, prescribed=None) -> np.ndarray:
        cols = [np.ones(len(j))]
        cols += [(j == lev).astype(float) for lev in self.levels[1:]]
        if self.split:
            on = np.asarray(prescribed, dtype=float)[:, None]
            return np.column_stack(cols + [X * on, X * (1 - on)])
        return np.column_stack(cols + [X])

    def predict(self, j: np.ndarray, X: np.ndarray, prescribed=None) -> np.ndarray:
        j = np.asarray(j)
        p = np.zeros(len(j))
        known = np.isin(j, self.levels)
        if self.fit is not None and np.any(known):
            pr = None if prescribed is None else np.asarray(prescribed)[known]
            p[known] = expit(self.features(j[known], X[known], pr) @ self.fit.coef)
        return p

    @classmethod
    def from_coef(cls, coef: Sequence[float], levels: Sequence[int],
                  names: Sequence[str]) -> "PooledLogit":
        coef = np.asarray(coef, dtype=float)
        fit = FittedGlm(coef, "logistic", True, 0.0, 0, float("nan"))
        return cls(fit, tuple(levels), (), tuple(names))


def fit_pooled_logit(j, X, y, names, prescribed=None, split=False) -> PooledLogit:
    j = np.asarray(j)
    y = np.asarray(y, dtype=float)
    present = np.unique(j)
    has_event = np.array([y[j == lev].sum() > 0 for lev in present], dtype=bool)
    levels = tuple(int(v) for v in present[has_event])
    zero = tuple(int(v) for v in present[~has_event])
    if not levels:
        return PooledLogit(None, (), zero, tuple(names), split)
    use = np.isin(j, levels)
    model = PooledLogit(None, levels, zero, tuple(names), split)
    pr = None if prescribed is None else np.asarray(prescribed)[use]
    F = model.features(j[use], X[use], pr)
    fit = fit_logistic(DesignMatrix(F, y[use]))
    return PooledLogit(fit, levels, zero, tuple(names), split)


# ---------------------------------------------------------------------------
# the three building blocks


def decision_rows(panel: Panel) -> np.ndarray:
    return panel.decision >= 0


def prescribed_at_decision(panel: Panel) -> np.ndarray:
    d = panel.clones.d[panel.clone]
    return (np.maximum(panel.decision, 0) < d).astype(int)


def artificial_weights(panel: Panel, model: PooledLogit, names: Sequence[str] | None = None,
                       mask=None) -> WeightTrajectory:
    """Stay-probability products for artificial censoring.

    ``mask`` selects the rows carrying a censoring decision; by default every
    row does. Covariates are read at the row's decision visit when the panel
    defines one, else at its opening visit.
    """
    names = model.names if names is None else tuple(names)
    mask = np.ones(panel.n_rows, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    X = _decision_covariates(panel, names)
    p = np.zeros(panel.n_rows)
    if np.any(mask):
        pr = prescribed_at_decision(panel)[mask] if model.split else None
        p[mask] = model.predict(panel.j[mask], X[mask], pr)
    return WeightTrajectory.build(panel, p_end=p)


def _decision_covariates(panel: Panel, names) -> np.ndarray:
    visit = np.where(panel.decision >= 0, panel.decision, panel.j - 1)
    return panel.clones.cohort.covariates_at(panel.subject, visit, names)


def fit_artificial_model(panel: Panel, names: Sequence[str], split: bool = False) -> PooledLogit:
    m = decision_rows(panel)
    X = _decision_covariates(panel, names)
    pr = prescribed_at_decision(panel)[m] if split else None
    return fit_pooled_logit(panel.j[m], X[m], panel.art[m], names, pr, split)


def natural_weights(panel: Panel, model: PiecewiseExpHazard,
                    names: Sequence[str] | None = None) -> WeightTrajectory:
    """Continuous weights ``exp(Λ_nat(t))`` from a piecewise-exponential hazard."""
    names = model.names if names is None else tuple(names)
    X = panel.covariates(names)
    rates = model.rates(X)
    rate = rates[np.arange(panel.n_rows), panel.j - 1]
    return WeightTrajectory.build(panel, rate=rate)


def fit_natural_model(panel: Panel, names: Sequence[str]) -> PiecewiseExpHazard:
    X = panel.covariates(names)
    return fit_piecewise_exponential(panel.j, panel.length, panel.k_nat, X,
                                     panel.clones.cohort.grid.bounds, names)


# ---------------------------------------------------------------------------
# configured estimation of a whole arm


@dataclass(frozen=True)
class WeightConfig:
    """Censoring-model specification for IPCW.

    ``mode`` is one of ``separate`` (logistic artificial + piecewise-exponential
    natural), ``artificial_only``, ``single_logit`` and ``single_pwexp`` (one
    model for any censoring), ``none`` (unit weights), ``oracle`` (true
    mechanism; requires ``params``).

    ``split_slopes`` lets the artificial-censoring logit use separate covariate
    slopes for continue and stop decisions. Deviating from "continue" means
    stopping and vice versa, so a treatment model's covariate effects enter
    the two deviation probabilities with opposite signs.
    """

    mode: str = "separate"
    art_names: tuple[str, ...] | None = None
    nat_names: tuple[str, ...] | None = None
    split_slopes: bool = True
    decision_only: bool = True
    cap: float | None = None
    params: object = None

    MODES = ("separate", "artificial_only", "single_logit", "single_pwexp", "none", "oracle")

    def __post_init__(self):
        if self.mode not in self.MODES:
            raise ValueError(f"unknown weight mode {self.mode!r}")


def estimate_weights(panel: Panel, config: WeightConfig) -> tuple[WeightTrajectory, dict]:
    """Fit the configured censoring models on one arm's panel and build weights."""
    names = panel.clones.cohort.covariate_names
    art_names = names if config.art_names is None else config.art_names
    nat_names = names if config.nat_names is None else config.nat_names
    info: dict = {}
    if config.mode == "none":
        traj = WeightTrajectory.build(panel)
    elif config.mode == "oracle":
        traj = oracle_weights(panel, config.params)
    elif config.mode in ("separate", "artificial_only"):
        am = fit_artificial_model(panel, art_names, config.split_slopes)
        mask = decision_rows(panel) if config.decision_only else None
        traj = artificial_weights(panel, am, art_names, mask)
        info["art_converged"] = am.fit is None or am.fit.converged
        if config.mode == "separate":
            nm = fit_natural_model(panel, nat_names)
            traj = combine_weights(traj, natural_weights(panel, nm, nat_names))
            info["nat_converged"] = nm.converged
            info["nat_flags"] = nm.flags
    elif config.mode == "single_logit":
        X = panel.covariates(art_names)
        y = (panel.art | panel.k_nat).astype(float)
        model = fit_pooled_logit(panel.j, X, y, art_names)
        traj = WeightTrajectory.build(panel, p_end=model.predict(panel.j, X))
        info["converged"] = model.fit is None or model.fit.converged
    else:  # single_pwexp
        X = panel.covariates(nat_names)
        y = (panel.art | panel.k_nat).astype(float)
        hm = fit_piecewise_exponential(panel.j, panel.length, y, X,
                                       panel.clones.cohort.grid.bounds, nat_names)
        rate = hm.rates(X)[np.arange(panel.n_rows), panel.j - 1]
        traj = WeightTrajectory.build(panel, rate=rate)
        info["converged"] = hm.converged
    if config.cap is not None:
        traj = traj.truncated(config.cap)
    return traj, info


def oracle_weights(panel: Panel, params) -> WeightTrajectory:
    """Weights from the simulator's true treatment and censoring mechanisms."""
    from ccwsurv import dgp

    cohort = panel.clones.cohort
    s = panel.subject
    d = panel.clones.d[panel.clone]
    dec = panel.decision
    has = dec >= 0
    k = np.maximum(dec, 1)
    prescribed = (k < d).astype(int)
    prev_prescribed = (k - 1 < d).astype(int)
    row_visit = panel.j - 1
    A_row = cohort.treatment[s, row_visit]
    if isinstance(params, dgp.BaselineDgpParams):
        Xb = cohort.baseline[s]
        p_treat = dgp.baseline_treatment_prob(params, Xb, prev_prescribed, k)
        lam = dgp.baseline_censoring_hazard(params, Xb, A_row, row_visit)
    elif isinstance(params, dgp.TimedepDgpParams):
        X1, X2 = cohort.baseline[s, 0], cohort.baseline[s, 1]
        X3k = cohort.covariates_at(s, np.where(has, k, 0), ("X3",))[:, 0]
        p_treat = dgp.timedep_treatment_prob(
            params, np.column_stack([X1, X2, X3k]), prev_prescribed, k)
        X4r = cohort.covariates_at(s, row_visit, ("X4",))[:, 0]
        lam = dgp.timedep_censoring_hazard(params, np.column_stack([X1, X2, X4r]), A_row,
                                           row_visit)
    else:
        raise TypeError("oracle weights need simulator parameters")
    p_dev = np.where(prescribed == 1, 1 - p_treat, p_treat)
    p_end = np.where(has & (dec >= 1), p_dev, 0.0)
    return WeightTrajectory.build(panel, p_end=p_end, rate=lam)


def weights_to_csv(traj: WeightTrajectory, path) -> None:
    traj.panel.to_csv(path, weight_start=traj.weight_at_start(),
                      weight_stop=traj.weight_at_stop(), p_censor_end=traj.p_end,
                      censor_rate=traj.rate)


__all__ = ["WeightTrajectory", "WeightConfig", "PooledLogit", "artificial_weights",
           "natural_weights", "combine_weights", "estimate_weights", "oracle_weights",
           "fit_artificial_model", "fit_natural_model", "fit_pooled_logit", "weights_to_csv"]
