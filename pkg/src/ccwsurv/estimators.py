"""RMST estimators for contrasts between two static duration strategies.

Every estimator returns a :class:`~ccwsurv.core.ContrastEstimate` in years;
``theta_report`` converts to months.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from ccwsurv.cloning import (ADMIN, ARTIFICIAL, AT_VISIT, EVENT, NATURAL, CloneSet,
                             clone_dataset)
from ccwsurv.core import Cohort, ContrastEstimate, Strategy
from ccwsurv.glm import (DesignMatrix, PiecewiseExpHazard, fit_logistic, fit_pwexp_outcome,
                         fit_weibull_outcome, pw_q_residual, pw_rmst)
from ccwsurv.panel import Panel, expand_visits
from ccwsurv.weights import WeightConfig, WeightTrajectory, estimate_weights


class EstimationError(RuntimeError):
    """Raised when an estimator cannot produce a value (e.g. empty risk set)."""


# ---------------------------------------------------------------------------
# step functions


@dataclass(frozen=True)
class StepSurvival:
    """Right-continuous survival step function with ``S(0) = 1``."""

    times: np.ndarray
    surv: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.surv, dtype=float)
        if t.shape != s.shape:
            raise ValueError("times and survival values differ in length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("jump times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "surv", s)

    def __call__(self, t) -> np.ndarray:
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        return np.concatenate([[1.0], self.surv])[idx]

    def rmst(self, tau: float) -> float:
        return rmst(self, tau)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": np.r_[0.0, self.times], "S": np.r_[1.0, self.surv]})


def rmst(curve: StepSurvival, tau: float) -> float:
    """Exact ``∫_0^tau S(t) dt`` of a step function."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    keep = curve.times < tau
    knots = np.r_[0.0, curve.times[keep], tau]
    values = np.r_[1.0, curve.surv[keep]]
    return float(np.sum(values * np.diff(knots)))


def _product_limit(times, d, Y) -> StepSurvival:
    if np.any(Y <= 0):
        bad = times[np.argmax(Y <= 0)]
        raise EstimationError(f"empty weighted risk set at event time {bad:g}")
    return StepSurvival(times, np.cumprod(1.0 - d / Y))


def weighted_km(t_start, t_stop, event, weight) -> StepSurvival:
    """Weighted product-limit estimator over (possibly left-truncated) rows.

    At each distinct event time ``t``, deaths are the summed weights of event
    rows stopping at ``t`` and the risk set is the summed weights of rows with
    ``t_start < t <= t_stop``. ``weight`` is each row's weight at its stop time.
    """
    t0 = np.asarray(t_start, dtype=float)
    t1 = np.asarray(t_stop, dtype=float)
    ev = np.asarray(event).astype(bool)
    w = np.broadcast_to(np.asarray(weight, dtype=float), t1.shape)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if not np.any(ev):
        return StepSurvival(np.empty(0), np.empty(0))
    u, inv = np.unique(t1[ev], return_inverse=True)
    d = np.bincount(inv, weights=w[ev], minlength=u.size)
    Y = _risk_sum(u, t0, t1, w)
    return _product_limit(u, d, Y)


def _risk_sum(u, t0, t1, w) -> np.ndarray:
    """``sum_r w_r 1{t0_r < u <= t1_r}`` for every ``u``."""
    o1 = np.argsort(t1)
    c1 = np.r_[np.cumsum(w[o1][::-1])[::-1], 0.0]
    stop_ge = c1[np.searchsorted(t1[o1], u, side="left")]
    o0 = np.argsort(t0)
    c0 = np.r_[np.cumsum(w[o0][::-1])[::-1], 0.0]
    start_ge = c0[np.searchsorted(t0[o0], u, side="left")]
    return stop_ge - start_ge


def ipcw_km(traj: WeightTrajectory, chunk: int = 2_000_000) -> StepSurvival:
    """Weighted KM with each clone's weight evaluated exactly at every event time.

    Equivalent to refining the panel at the event times and calling
    :func:`weighted_km` with weights at the fragment ends.
    """
    p = traj.panel
    ev = p.y == 1
    if not np.any(ev):
        return StepSurvival(np.empty(0), np.empty(0))
    u, inv = np.unique(p.t_stop[ev], return_inverse=True)
    d = np.bincount(inv, weights=traj.weight(p.t_stop[ev], ev), minlength=u.size)
    Y = np.zeros(u.size)
    flat = traj.rate == 0
    if np.any(flat):
        Y += _risk_sum(u, p.t_start[flat], p.t_stop[flat], traj.weight_at_start()[flat])
    if not np.all(flat):
        bounds = p.clones.cohort.grid.bounds
        u_int = np.clip(np.searchsorted(bounds, u, side="left"), 1, len(bounds) - 1)
        for j in np.unique(u_int):
            # rows of interval j are the only ones that can cover its event times
            rows = np.flatnonzero(~flat & (p.j == j))
            if rows.size == 0:
                continue
            ui = np.flatnonzero(u_int == j)
            lo, hi = p.t_start[rows], p.t_stop[rows]
            a, r = traj.log_w_start[rows], traj.rate[rows]
            step = max(1, chunk // rows.size)
            for s in range(0, ui.size, step):
                sel = ui[s:s + step]
                uu = u[sel, None]
                m = (lo[None, :] < uu) & (uu <= hi[None, :])
                logw = np.where(m, a[None, :] + r[None, :] * (uu - lo[None, :]), -np.inf)
                Y[sel] += np.sum(np.exp(logw), axis=1)
    return _product_limit(u, d, Y)


# ---------------------------------------------------------------------------
# cloning helpers


def _clones(data, d1: int, d0: int, convention: str) -> CloneSet:
    if isinstance(data, CloneSet):
        if {d1, d0} - {s.d for s in data.strategies}:
            raise ValueError("clone set lacks one of the requested strategies")
        return data
    K = data.grid.K
    return clone_dataset(data, [Strategy(d1, K), Strategy(d0, K)], convention)


def _tau(clones: CloneSet, tau) -> float:
    return clones.cohort.grid.tau if tau is None else float(tau)


@dataclass(frozen=True)
class ArmFit:
    d: int
    panel: Panel
    weights: WeightTrajectory
    curve: StepSurvival
    rmst: float


def ipcw_arm(clones: CloneSet, d: int, config: WeightConfig, tau: float) -> ArmFit:
    panel = expand_visits(clones.for_arm(d))
    traj, info = estimate_weights(panel, config)
    curve = ipcw_km(traj)
    return ArmFit(d, panel, traj, curve, rmst(curve, tau))


def ipcw_km_contrast(data, d1: int, d0: int, config: WeightConfig | None = None,
                     tau: float | None = None, convention: str = AT_VISIT,
                     label: str = "ipcw") -> ContrastEstimate:
    """IPCW Kaplan-Meier RMST contrast after cloning and artificial censoring."""
    config = WeightConfig() if config is None else config
    clones = _clones(data, d1, d0, convention)
    tau = _tau(clones, tau)
    arms = [ipcw_arm(clones, d, config, tau) for d in (d1, d0)]
    return ContrastEstimate(arms[0].rmst, arms[1].rmst, label, d1, d0,
                            info={"curves": (arms[0].curve, arms[1].curve),
                                  "max_weight": max(float(np.max(a.weights.weight_at_stop(), initial=1))
                                                    for a in arms)})


def km_cloned(data, d1: int, d0: int, tau: float | None = None,
              convention: str = AT_VISIT) -> ContrastEstimate:
    """Unweighted KM on the cloned, artificially censored data."""
    return ipcw_km_contrast(data, d1, d0, WeightConfig(mode="none"), tau, convention,
                            label="km_cloned")


# ---------------------------------------------------------------------------
# G-formula


def gformula_baseline(data, d1: int, d0: int, family: str = "pwexp",
                      names: Sequence[str] | None = None, tau: float | None = None,
                      convention: str = AT_VISIT) -> ContrastEstimate:
    """Outcome-regression standardisation with baseline covariates.

    A survival model is fitted per arm on the cloned data and its predicted
    RMST is averaged over every subject's covariates.
    """
    clones = _clones(data, d1, d0, convention)
    cohort = clones.cohort
    tau = _tau(clones, tau)
    names = cohort.baseline_names if names is None else tuple(names)
    X_all = cohort.covariates_at(np.arange(cohort.n), np.zeros(cohort.n, int), names)
    out, flags = [], {}
    for d in (d1, d0):
        arm = clones.for_arm(d)
        if family == "pwexp":
            model = fit_pwexp_outcome(expand_visits(arm), names, at_baseline=True)
            flags[d] = (model.converged, model.flags)
            out.append(float(np.mean(model.rmst(X_all, tau))))
        elif family == "weibull":
            Xc = cohort.covariates_at(arm.subject, np.zeros(arm.n, int), names)
            model = fit_weibull_outcome(np.minimum(arm.time, tau), arm.event, Xc, names)
            flags[d] = (model.converged, ())
            out.append(float(np.mean(model.rmst(X_all, tau))))
        else:
            raise ValueError(f"unknown outcome family {family!r}")
    return ContrastEstimate(out[0], out[1], f"gformula_{family}", d1, d0, info={"fit": flags})


@dataclass(frozen=True)
class TransitionModel:
    """One-step model for a time-varying covariate.

    ``predictors`` name earlier-visit quantities: ``"<cov>_prev"`` for the
    previous value of a time-varying covariate, ``"A_prev"`` for previous
    treatment, or a baseline covariate name. ``family`` is ``gaussian``
    (plug-in mean, residual sd ``sigma``) or ``binomial`` (plug-in threshold 0.5).
    """

    target: str
    predictors: tuple[str, ...]
    coef: np.ndarray
    family: str = "gaussian"
    sigma: float = 0.0

    def linear_predictor(self, inputs: dict[str, np.ndarray]) -> np.ndarray:
        cols = [np.ones_like(next(iter(inputs.values())))] + [inputs[p] for p in self.predictors]
        return np.column_stack(cols) @ self.coef

    def mean(self, inputs) -> np.ndarray:
        eta = self.linear_predictor(inputs)
        return 1 / (1 + np.exp(-eta)) if self.family == "binomial" else eta

    def plug_in(self, inputs) -> np.ndarray:
        m = self.mean(inputs)
        return (m >= 0.5).astype(float) if self.family == "binomial" else m

    def draw(self, inputs, rng: np.random.Generator) -> np.ndarray:
        m = self.mean(inputs)
        if self.family == "binomial":
            return (rng.random(m.shape) < m).astype(float)
        return m + self.sigma * rng.standard_normal(m.shape)


def _transition_inputs(cohort: Cohort, subj, k, values, treat, predictors):
    """Inputs for predicting visit ``k + 1`` from visit ``k``."""
    out = {}
    for p in predictors:
        if p == "A_prev":
            out[p] = treat.astype(float)
        elif p.endswith("_prev"):
            out[p] = values[:, cohort.tv_names.index(p[:-5])]
        else:
            out[p] = cohort.baseline[subj, cohort.baseline_names.index(p)]
    return out


def fit_transition_models(cohort: Cohort, specs: dict[str, tuple[tuple[str, ...], str]]
                          ) -> dict[str, TransitionModel]:
    """Pool all observed visit-to-visit transitions and fit each covariate model."""
    att = cohort.attended
    K = cohort.grid.K
    models = {}
    for target, (predictors, family) in specs.items():
        q = cohort.tv_names.index(target)
        Xs, ys = [], []
        for k in range(K):
            m = att[:, k + 1]
            subj = np.flatnonzero(m)
            vals = cohort.time_varying[subj, k, :]
            inp = _transition_inputs(cohort, subj, k, vals, cohort.treatment[subj, k], predictors)
            Xs.append(np.column_stack([np.ones(subj.size)] + [inp[p] for p in predictors]))
            ys.append(cohort.time_varying[subj, k + 1, q])
        X, y = np.vstack(Xs), np.concatenate(ys)
        ok = np.all(np.isfinite(X), axis=1) & np.isfinite(y)
        X, y = X[ok], y[ok]
        if family == "gaussian":
            coef, *_ = np.linalg.lstsq(X, y, rcond=None)
            resid = y - X @ coef
            sigma = float(np.sqrt(resid @ resid / max(len(y) - X.shape[1], 1)))
        elif family == "binomial":
            coef = fit_logistic(DesignMatrix(X, y)).coef
            sigma = 0.0
        else:
            raise ValueError(f"unknown family {family!r}")
        models[target] = TransitionModel(target, tuple(predictors), coef, family, sigma)
    return models


def complete_histories(clones: CloneSet, models: dict[str, TransitionModel],
                       rng: np.random.Generator | None = None) -> np.ndarray:
    """Time-varying covariates of every clone with post-deviation values imputed.

    Values are kept up to the clone's last strategy-compatible attended visit
    (the deviation visit itself is measured before the decision); later values
    are predicted forward under the assigned strategy, by plug-in when ``rng``
    is None or by simulation otherwise. Returns shape ``(n_clones, K + 1, q)``.
    """
    cohort = clones.cohort
    K = cohort.grid.K
    tv = cohort.time_varying[clones.subject].copy()
    nv = cohort.n_visits[clones.subject]
    last_obs = np.where(clones.deviation_visit >= 0,
                        np.minimum(clones.deviation_visit, nv - 1), nv - 1)
    strat = np.stack([s.as_array() for s in clones.strategies])[clones.arm]
    for k in range(K):
        need = last_obs < k + 1
        if not np.any(need):
            continue
        idx = np.flatnonzero(need)
        for target, model in models.items():
            inp = _transition_inputs(cohort, clones.subject[idx], k, tv[idx, k, :],
                                     strat[idx, k], model.predictors)
            val = model.plug_in(inp) if rng is None else model.draw(inp, rng)
            tv[idx, k + 1, cohort.tv_names.index(target)] = val
    return tv


def gformula_timedep(data, d1: int, d0: int, tau: float | None = None,
                     transitions: dict | None = None, outcome_names: Sequence[str] | None = None,
                     draws: int = 0, seed: int = 0, convention: str = AT_VISIT
                     ) -> ContrastEstimate:
    """Parametric g-computation with time-varying covariates.

    Steps: pooled transition models on observed data, a piecewise-exponential
    outcome model per arm, completion of each clone's covariate history under
    its strategy, and averaging of the predicted RMST. ``draws = 0`` uses the
    deterministic plug-in completion; ``draws = M`` averages over M simulated
    completions.
    """
    clones = _clones(data, d1, d0, convention)
    cohort = clones.cohort
    if not cohort.tv_names:
        raise ValueError("time-varying g-formula needs time-varying covariates")
    tau = _tau(clones, tau)
    if transitions is None:
        transitions = {"X3": (("X3_prev", "A_prev"), "gaussian"), "X4": (("X4_prev",), "gaussian")}
    models = fit_transition_models(cohort, transitions)
    names = cohort.covariate_names if outcome_names is None else tuple(outcome_names)
    K1 = cohort.grid.n_intervals
    out = []
    for d in (d1, d0):
        arm = clones.for_arm(d)
        hz = fit_pwexp_outcome(expand_visits(arm), names)
        reps = [None] if draws == 0 else [np.random.default_rng([seed, d, m]) for m in range(draws)]
        vals = []
        for rng in reps:
            tv = complete_histories(arm, models, rng)
            X = np.stack([_path_covariates(cohort, arm.subject, tv, k, names) for k in range(K1)],
                         axis=1)
            vals.append(np.mean(pw_rmst(hz.rates(X), cohort.grid.bounds, tau)))
        out.append(float(np.mean(vals)))
    return ContrastEstimate(out[0], out[1], "gformula_timedep", d1, d0,
                            info={"transitions": models})


def _path_covariates(cohort: Cohort, subj, tv, k, names) -> np.ndarray:
    cols = []
    for n in names:
        if n in cohort.baseline_names:
            cols.append(cohort.baseline[subj, cohort.baseline_names.index(n)])
        else:
            cols.append(tv[:, k, cohort.tv_names.index(n)])
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# AIPCW


@dataclass(frozen=True)
class ResidualLifeModel:
    """``Q(t|x) = t + ∫_t^tau S(u|x) du / S(t|x)`` for piecewise-constant hazards."""

    rates: np.ndarray
    bounds: np.ndarray
    tau: float

    def __call__(self, t, rows=None) -> np.ndarray:
        r = self.rates if rows is None else self.rates[rows]
        return pw_q_residual(r, self.bounds, t, self.tau)


def q_residual(model: ResidualLifeModel | PiecewiseExpHazard, t, x=None, tau=None):
    """Expected restricted lifetime given survival to ``t``."""
    if isinstance(model, PiecewiseExpHazard):
        model = ResidualLifeModel(model.rates(np.atleast_2d(x)), model.bounds,
                                  model.bounds[-1] if tau is None else tau)
    if np.any(np.asarray(t) > model.tau):
        raise ValueError("t must not exceed tau")
    return model(t)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def aipcw_transform(panel: Panel, traj: WeightTrajectory, Q: ResidualLifeModel,
                    tau: float) -> np.ndarray:
    """Doubly robust pseudo-outcome for each clone of one arm.

    ``Δ*·Y/K(Y-) + (1 - Δ*)·Q(C)/K(C) - ∫_0^{Y∧C} Q(u)/K(u) dΛ_C(u)``, where
    ``K = 1/W`` and the compensator has a continuous part (rate) and point
    masses at row ends where a jump probability applies. ``Q`` is indexed by
    clone position within the arm's clone set.
    """
    clones = panel.clones
    bounds = clones.cohort.grid.bounds
    r = np.arange(panel.n_rows)
    c = panel.clone
    s, e = panel.t_start, panel.t_stop
    lw, rate, p = traj.log_w_start, traj.rate, traj.p_end
    # continuous part: Gauss-Legendre on each row
    half = (e - s) / 2
    nodes = (s + half)[:, None] + half[:, None] * _GL_X[None, :]
    cont = np.zeros(panel.n_rows)
    pos = rate > 0
    if np.any(pos):
        rr = np.repeat(r[pos], _GL_X.size)
        qv = Q(nodes[pos].ravel(), c[rr]).reshape(-1, _GL_X.size)
        wv = np.exp(lw[pos][:, None] + rate[pos][:, None] * (nodes[pos] - s[pos][:, None]))
        cont[pos] = rate[pos] * half[pos] * np.sum(_GL_W[None, :] * qv * wv, axis=1)
    w_end = np.exp(lw + rate * (e - s))  # W(e-)
    reached = np.isclose(e, bounds[panel.j]) & (e < tau)
    last = np.r_[c[1:] != c[:-1], True]
    kind = clones.kind[c]
    jump = reached & (p > 0)
    q_end = np.zeros(panel.n_rows)
    need_q = jump | (last & ((kind == NATURAL) | (kind == ARTIFICIAL)))
    if np.any(need_q):
        q_end[need_q] = Q(e[need_q], c[need_q])
    comp = cont + np.where(jump, q_end * p * w_end / (1 - p), 0.0)
    obs = np.zeros(panel.n_rows)
    ev_or_admin = last & ((kind == EVENT) | (kind == ADMIN))
    obs[ev_or_admin] = np.minimum(e[ev_or_admin], tau) * w_end[ev_or_admin]
    nat = last & (kind == NATURAL)
    obs[nat] = q_end[nat] * w_end[nat]
    art = last & (kind == ARTIFICIAL)
    obs[art] = q_end[art] * w_end[art] / (1 - np.where(jump[art], p[art], 0.0))
    return np.bincount(c, weights=obs - comp, minlength=clones.n)


def aipcw_contrast(data, d1: int, d0: int, config: WeightConfig | None = None,
                   q_model: str = "pwexp", names: Sequence[str] | None = None,
                   params=None, tau: float | None = None,
                   convention: str = AT_VISIT) -> ContrastEstimate:
    """Augmented IPCW RMST contrast for the baseline-confounding setting.

    ``q_model``: ``pwexp`` (fitted outcome model), ``true`` (simulator hazards,
    needs ``params``) or ``tau`` (the deliberately wrong ``Q ≡ tau``).
    """
    from ccwsurv import dgp

    config = WeightConfig() if config is None else config
    clones = _clones(data, d1, d0, convention)
    cohort = clones.cohort
    tau = _tau(clones, tau)
    bounds = cohort.grid.bounds
    names = cohort.baseline_names if names is None else tuple(names)
    out, dropped = [], 0
    for d in (d1, d0):
        arm = clones.for_arm(d)
        panel = expand_visits(arm)
        traj, _ = estimate_weights(panel, config)
        X = cohort.covariates_at(arm.subject, np.zeros(arm.n, int), names)
        if q_model == "pwexp":
            rates = fit_pwexp_outcome(panel, names, at_baseline=True).rates(X)
        elif q_model == "true":
            rates = dgp.baseline_event_rates(params, cohort.baseline[arm.subject],
                                             Strategy(d, cohort.grid.K))
        elif q_model == "tau":
            rates = np.zeros((arm.n, cohort.grid.n_intervals))
        else:
            raise ValueError(f"unknown q_model {q_model!r}")
        Q = ResidualLifeModel(rates, bounds, tau)
        if q_model == "tau":
            Q = _ConstantQ(tau)
        t_dr = aipcw_transform(panel, traj, Q, tau)
        ok = np.isfinite(t_dr)
        dropped += int(np.sum(~ok))
        out.append(float(np.mean(t_dr[ok])))
    return ContrastEstimate(out[0], out[1], "aipcw", d1, d0, info={"excluded": dropped})


@dataclass(frozen=True)
class _ConstantQ:
    tau: float

    def __call__(self, t, rows=None):
        return np.full(np.shape(t), self.tau, dtype=float)


# ---------------------------------------------------------------------------
# comparators without cloning


def follows_strategy(cohort: Cohort, d: int) -> np.ndarray:
    """Subjects whose attended treatment history is compatible with ``g_d``."""
    g = Strategy(d, cohort.grid.K).as_array()
    att = cohort.attended
    return np.all(~att | (cohort.treatment == g[None, :]), axis=1)


def naive_arms(cohort: Cohort, d1: int, d0: int, rule: str = "prefix"):
    """Arm membership masks for the naive comparators.

    ``prefix``: every subject compatible with a strategy joins that arm, so
    subjects who leave follow-up before the strategies diverge sit in both.
    ``shorter``: such ambiguous subjects go only to the shorter strategy.
    """
    a1, a0 = follows_strategy(cohort, d1), follows_strategy(cohort, d0)
    if rule == "prefix":
        return a1, a0
    if rule == "shorter":
        both = a1 & a0
        if d1 < d0:
            return a1, a0 & ~both
        return a1 & ~both, a0
    raise ValueError(f"unknown naive rule {rule!r}")


def naive_filtered(cohort: Cohort, d1: int, d0: int, tau: float | None = None,
                   rule: str = "prefix") -> ContrastEstimate:
    """Difference in mean observed restricted follow-up among strategy followers."""
    tau = cohort.grid.tau if tau is None else tau
    a1, a0 = naive_arms(cohort, d1, d0, rule)
    if not a1.any() or not a0.any():
        raise EstimationError("a naive arm is empty")
    y = np.minimum(cohort.time, tau)
    return ContrastEstimate(float(y[a1].mean()), float(y[a0].mean()), "naive", d1, d0,
                            info={"n1": int(a1.sum()), "n0": int(a0.sum())})


def gformula_filtered(cohort: Cohort, d1: int, d0: int, tau: float | None = None,
                      names: Sequence[str] | None = None, rule: str = "prefix"
                      ) -> ContrastEstimate:
    """Outcome regression fitted on strategy followers only, standardised over everyone.

    Covariates enter at their visit-0 values.
    """
    tau = cohort.grid.tau if tau is None else tau
    names = cohort.covariate_names if names is None else tuple(names)
    X_all = cohort.covariates_at(np.arange(cohort.n), np.zeros(cohort.n, int), names)
    out = []
    for d, mask in zip((d1, d0), naive_arms(cohort, d1, d0, rule)):
        if not mask.any():
            raise EstimationError("a filtered arm is empty")
        sub = cohort.subset(mask)
        clones = clone_dataset(sub, [Strategy(d, cohort.grid.K)], AT_VISIT)
        model = fit_pwexp_outcome(expand_visits(clones), names, at_baseline=True)
        out.append(float(np.mean(model.rmst(X_all, tau))))
    return ContrastEstimate(out[0], out[1], "gformula_filtered", d1, d0)
