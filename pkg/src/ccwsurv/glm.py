"""Nuisance-model fitting: logistic and Poisson GLMs, and parametric survival models.

All maximum-likelihood fits share one damped Newton routine (:func:`_maximize`),
which for canonical-link GLMs is exactly IRLS. Step-halving guarantees the
deviance never increases, and a tiny ridge is added to the Hessian when it is
numerically singular.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, gammainc, gammaln

SCORE_TOL = 1e-8
REL_DEV_TOL = 1e-10
MAX_ITER = 100
RIDGE = 1e-8
DIVERGENCE = 50.0


@dataclass(frozen=True)
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray
    offset: np.ndarray | None = None
    weights: np.ndarray | None = None
    names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if X.shape[0] != np.size(self.y) and X.shape[1] == np.size(self.y):
            X = X.T
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError("X and y have different numbers of rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("design contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        for name in ("offset", "weights"):
            v = getattr(self, name)
            if v is not None:
                v = np.broadcast_to(np.asarray(v, dtype=float), y.shape).copy()
                if not np.all(np.isfinite(v)):
                    raise ValueError(f"{name} must be finite")
                object.__setattr__(self, name, v)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"x{i}" for i in range(X.shape[1])))

    @property
    def w(self) -> np.ndarray:
        return np.ones_like(self.y) if self.weights is None else self.weights

    @property
    def off(self) -> np.ndarray:
        return np.zeros_like(self.y) if self.offset is None else self.offset


@dataclass(frozen=True)
class FittedGlm:
    coef: np.ndarray
    family: str
    converged: bool
    grad_norm: float
    n_iter: int
    loglik: float
    names: tuple[str, ...] = ()
    message: str = ""

    def linear_predictor(self, X, offset=None) -> np.ndarray:
        eta = np.asarray(X, dtype=float) @ self.coef
        return eta if offset is None else eta + offset

    def predict(self, X, offset=None) -> np.ndarray:
        eta = self.linear_predictor(X, offset)
        return expit(eta) if self.family == "logistic" else np.exp(eta)


@dataclass
class _Result:
    beta: np.ndarray
    ll: float
    grad: np.ndarray
    converged: bool
    n_iter: int
    message: str


def _maximize(fgh: Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]],
              beta0: np.ndarray, guard: float | None = DIVERGENCE) -> _Result:
    """Damped Newton ascent on a concave log-likelihood."""
    beta = np.asarray(beta0, dtype=float).copy()
    ll, g, H = fgh(beta)
    for it in range(1, MAX_ITER + 1):
        if np.max(np.abs(g), initial=0.0) <= SCORE_TOL:
            return _Result(beta, ll, g, True, it - 1, "score")
        info = -H
        try:
            step = np.linalg.solve(info, g)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step = np.linalg.solve(info + RIDGE * np.eye(len(beta)), g)
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new, g_new, H_new = fgh(cand)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * abs(ll):
                break
            t /= 2
            if t < 1e-10:
                return _Result(beta, ll, g, False, it, "step-halving failed")
        rel = abs(ll_new - ll) / (abs(ll_new) + 0.1)
        score_old = np.max(np.abs(g), initial=0.0)
        beta, ll, g, H = cand, ll_new, g_new, H_new
        score = np.max(np.abs(g), initial=0.0)
        if guard is not None and np.max(np.abs(beta)) > guard:
            return _Result(beta, ll, g, False, it, "divergence: |coefficient| > %g" % guard)
        if score <= SCORE_TOL:
            return _Result(beta, ll, g, True, it, "score")
        # a flat deviance only ends the search once Newton stops shrinking the
        # score, i.e. when floating-point noise dominates
        if rel <= REL_DEV_TOL and score > 0.5 * score_old:
            return _Result(beta, ll, g, True, it, "deviance")
    return _Result(beta, ll, g, False, MAX_ITER, "iteration limit")


def logistic_loglik(beta, design: DesignMatrix):
    X, y, w = design.X, design.y, design.w
    eta = X @ beta + design.off
    mu = expit(eta)
    # log(1 + e^eta) computed stably
    ll = float(np.sum(w * (y * eta - np.logaddexp(0.0, eta))))
    g = X.T @ (w * (y - mu))
    H = -(X.T * (w * mu * (1 - mu))) @ X
    return ll, g, H


def poisson_loglik(beta, design: DesignMatrix):
    X, y, w = design.X, design.y, design.w
    eta = X @ beta + design.off
    mu = np.exp(eta)
    ll = float(np.sum(w * (y * eta - mu)))
    g = X.T @ (w * (y - mu))
    H = -(X.T * (w * mu)) @ X
    return ll, g, H


def _fit(design: DesignMatrix, family: str, fgh) -> FittedGlm:
    if design.X.shape[0] == 0:
        raise ValueError("cannot fit a model to zero rows")
    r = _maximize(lambda b: fgh(b, design), np.zeros(design.X.shape[1]))
    return FittedGlm(r.beta, family, r.converged, float(np.max(np.abs(r.grad), initial=0.0)),
                     r.n_iter, r.ll, design.names, r.message)


def fit_logistic(design: DesignMatrix) -> FittedGlm:
    """Maximum-likelihood logistic regression fitted by IRLS."""
    if np.any((design.y != 0) & (design.y != 1)):
        raise ValueError("logistic response must be 0/1")
    return _fit(design, "logistic", logistic_loglik)


def fit_poisson_offset(design: DesignMatrix) -> FittedGlm:
    """Poisson regression with log link and (optional) offset, fitted by IRLS."""
    if np.any(design.y < 0):
        raise ValueError("Poisson response must be non-negative")
    return _fit(design, "poisson", poisson_loglik)


def predict_logit(fit_or_coef, features) -> np.ndarray:
    """Inverse logit of ``features @ coef``; ``fit_or_coef`` may be a fit or a vector."""
    coef = fit_or_coef.coef if isinstance(fit_or_coef, FittedGlm) else fit_or_coef
    return expit(np.asarray(features, dtype=float) @ np.asarray(coef, dtype=float))


# ---------------------------------------------------------------------------
# piecewise-exponential hazards

@dataclass(frozen=True)
class PiecewiseExpHazard:
    """Hazard ``exp(alpha_j + x'theta)`` constant on intervals ``(b_{j-1}, b_j]``.

    ``alpha_j = -inf`` encodes a zero hazard. Covariates may be fixed per
    subject (shape ``(n, p)``) or given per interval (shape ``(n, J, p)``).
    """

    bounds: np.ndarray
    alpha: np.ndarray
    theta: np.ndarray
    names: tuple[str, ...] = ()
    converged: bool = True
    flags: tuple[str, ...] = ()
    fit: FittedGlm | None = field(default=None, compare=False, repr=False)

    @property
    def n_intervals(self) -> int:
        return len(self.alpha)

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.bounds)

    def rates(self, X) -> np.ndarray:
        """Hazard per subject and interval, shape ``(n, J)``."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim == 2:
            lin = (X @ self.theta)[:, None] if self.theta.size else np.zeros((X.shape[0], 1))
        else:
            lin = X @ self.theta if self.theta.size else np.zeros(X.shape[:2])
        with np.errstate(over="ignore"):
            return np.exp(self.alpha[None, :] + lin)

    def cumhaz(self, t, X) -> np.ndarray:
        rates = self.rates(X)
        return _pw_cumhaz(rates, self.bounds, np.broadcast_to(np.asarray(t, float), rates.shape[:1]))

    def survival(self, t, X) -> np.ndarray:
        return np.exp(-self.cumhaz(t, X))

    def rmst(self, X, tau: float | None = None) -> np.ndarray:
        rates = self.rates(X)
        return pw_rmst(rates, self.bounds, self.bounds[-1] if tau is None else tau)


def _pw_cumhaz(rates: np.ndarray, bounds: np.ndarray, t: np.ndarray) -> np.ndarray:
    lo, hi = bounds[:-1], bounds[1:]
    overlap = np.clip(t[:, None], lo[None, :], hi[None, :]) - lo[None, :]
    # the last interval extends beyond tau with the same rate
    extra = np.maximum(t - hi[-1], 0.0)
    return np.sum(rates * overlap, axis=1) + rates[:, -1] * extra


def _seg_integral(S0: np.ndarray, lam: np.ndarray, length: np.ndarray) -> np.ndarray:
    """∫_0^L S0·exp(-lam·u) du, stable for small lam."""
    x = lam * length
    small = x < 1e-8
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(small, length * (1 - x / 2), -np.expm1(-x) / np.where(small, 1, lam))
    return S0 * val


def pw_rmst(rates: np.ndarray, bounds: np.ndarray, tau: float) -> np.ndarray:
    """Closed-form ``∫_0^tau S(t) dt`` under piecewise-constant hazards."""
    lo = bounds[:-1]
    hi = np.minimum(bounds[1:], tau)
    L = np.maximum(hi - lo, 0.0)
    H = np.cumsum(rates * L, axis=1)
    S_start = np.exp(-np.concatenate([np.zeros((rates.shape[0], 1)), H[:, :-1]], axis=1))
    return np.sum(_seg_integral(S_start, rates, L[None, :]), axis=1)


def pw_q_residual(rates: np.ndarray, bounds: np.ndarray, t, tau: float) -> np.ndarray:
    """``Q(t) = t + ∫_t^tau S(u) du / S(t)`` under piecewise-constant hazards.

    ``rates`` has shape ``(n, J)``; ``t`` is broadcast to ``n``.
    """
    t = np.broadcast_to(np.minimum(np.asarray(t, dtype=float), tau), rates.shape[:1])
    lo = np.maximum(bounds[:-1][None, :], t[:, None])
    hi = np.minimum(bounds[1:], tau)[None, :]
    L = np.maximum(hi - lo, 0.0)
    H = np.cumsum(rates * L, axis=1)
    S_rel = np.exp(-np.concatenate([np.zeros((rates.shape[0], 1)), H[:, :-1]], axis=1))
    return t + np.sum(_seg_integral(S_rel, rates, L), axis=1)


def interval_dummies(j: np.ndarray, n_intervals: int) -> np.ndarray:
    D = np.zeros((len(j), n_intervals))
    D[np.arange(len(j)), np.asarray(j) - 1] = 1.0
    return D


def fit_piecewise_exponential(j: np.ndarray, exposure: np.ndarray, y: np.ndarray,
                              X: np.ndarray | None, bounds: np.ndarray,
                              names: Sequence[str] = (), weights=None) -> PiecewiseExpHazard:
    """Poisson fit of ``y ~ interval + X`` with offset ``log(exposure)``.

    Intervals with exposure but no events get a zero hazard (the MLE boundary)
    and their rows are left out of the Newton step; intervals with no exposure
    inherit the nearest earlier interval's intercept. Both cases are flagged.
    """
    J = len(bounds) - 1
    j = np.asarray(j)
    y = np.asarray(y, dtype=float)
    exposure = np.asarray(exposure, dtype=float)
    X = np.empty((len(j), 0)) if X is None else np.asarray(X, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    keep_exp = exposure > 0
    ev = np.bincount(j[keep_exp] - 1, weights=(w * y)[keep_exp], minlength=J)
    expo = np.bincount(j - 1, weights=w * exposure, minlength=J)
    flags = []
    free = ev > 0
    use = keep_exp & free[j - 1]
    alpha = np.full(J, -np.inf)
    theta = np.zeros(X.shape[1])
    fit = None
    converged = True
    if np.any(use):
        cols = np.flatnonzero(free)
        D = interval_dummies(j[use], J)[:, cols]
        design = DesignMatrix(np.hstack([D, X[use]]), y[use], np.log(exposure[use]), w[use],
                              tuple(f"interval{c + 1}" for c in cols) + tuple(names))
        # start from the covariate-free MLE to speed convergence
        beta0 = np.concatenate([np.log(ev[cols] / expo[cols]), np.zeros(X.shape[1])])
        r = _maximize(lambda b: poisson_loglik(b, design), beta0, guard=None)
        fit = FittedGlm(r.beta, "poisson", r.converged,
                        float(np.max(np.abs(r.grad), initial=0.0)), r.n_iter, r.ll,
                        design.names, r.message)
        converged = r.converged
        alpha[cols] = r.beta[: len(cols)]
        theta = r.beta[len(cols):]
        if np.max(np.abs(theta), initial=0.0) > DIVERGENCE:
            converged = False
            flags.append("divergent covariate coefficient")
    for c in range(J):
        if expo[c] <= 0:
            prev = alpha[c - 1] if c > 0 else -np.inf
            alpha[c] = prev
            flags.append(f"interval {c + 1}: no exposure, hazard carried forward")
        elif ev[c] == 0:
            flags.append(f"interval {c + 1}: no events, hazard set to 0")
    return PiecewiseExpHazard(np.asarray(bounds, dtype=float), alpha, theta, tuple(names),
                              converged, tuple(flags), fit)


def fit_pwexp_outcome(panel, names: Sequence[str] | None = None,
                      indicator: str = "y", at_baseline: bool = False) -> PiecewiseExpHazard:
    """Piecewise-exponential outcome (or censoring) model on a person-period panel.

    ``indicator`` selects the response column (``"y"``, ``"k_nat"`` or ``"art"``).
    With ``at_baseline`` every row uses the visit-0 covariate values.
    """
    names = panel.clones.cohort.covariate_names if names is None else tuple(names)
    if at_baseline:
        X = panel.clones.cohort.covariates_at(panel.subject, np.zeros(panel.n_rows, int), names)
    else:
        X = panel.covariates(names)
    return fit_piecewise_exponential(panel.j, panel.length, getattr(panel, indicator), X,
                                     panel.clones.cohort.grid.bounds, names)


# ---------------------------------------------------------------------------
# Weibull proportional hazards

@dataclass(frozen=True)
class WeibullPH:
    """``λ(t|x) = λ0 p t^{p-1} exp(x'θ)``."""

    log_lambda0: float
    shape: float
    theta: np.ndarray
    names: tuple[str, ...] = ()
    converged: bool = True
    grad_norm: float = 0.0

    def _scale(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lin = X @ self.theta if self.theta.size else np.zeros(X.shape[0])
        return np.exp(self.log_lambda0 + lin)

    def cumhaz(self, t, X) -> np.ndarray:
        return self._scale(X) * np.asarray(t, dtype=float) ** self.shape

    def survival(self, t, X) -> np.ndarray:
        return np.exp(-self.cumhaz(t, X))

    def rmst(self, X, tau: float) -> np.ndarray:
        c = self._scale(X)
        p = self.shape
        a = 1.0 / p
        # ∫_0^tau exp(-c t^p) dt = c^{-1/p} Γ(1/p) P(1/p, c tau^p) / p
        return np.exp(-a * np.log(c) + gammaln(a)) * gammainc(a, c * tau ** p) / p


def weibull_loglik(params, t, d, X, w, fix_shape=False):
    a = params[0]
    s = 0.0 if fix_shape else params[1]
    th = params[1:] if fix_shape else params[2:]
    p = np.exp(s)
    logt = np.log(np.maximum(t, 1e-300))
    lin = X @ th if th.size else np.zeros_like(t)
    Hc = np.exp(a + lin + p * logt)
    ll = float(np.sum(w * (d * (a + s + (p - 1) * logt + lin) - Hc)))
    wH = w * Hc
    g_a = np.sum(w * d) - np.sum(wH)
    g_th = X.T @ (w * d) - X.T @ wH
    plt = p * logt
    H_aa = -np.sum(wH)
    H_ath = -(X.T @ wH)
    H_thth = -(X.T * wH) @ X
    if fix_shape:
        g = np.concatenate([[g_a], g_th])
        H = np.block([[np.array([[H_aa]]), H_ath[None, :]], [H_ath[:, None], H_thth]])
        return ll, g, H
    g_s = np.sum(w * d * (1 + plt)) - np.sum(wH * plt)
    H_as = -np.sum(wH * plt)
    H_sth = -(X.T @ (wH * plt))
    H_ss = np.sum(w * d * plt) - np.sum(wH * (plt + plt ** 2))
    g = np.concatenate([[g_a, g_s], g_th])
    top = np.array([[H_aa, H_as], [H_as, H_ss]])
    H = np.block([[top, np.vstack([H_ath, H_sth])],
                  [np.column_stack([H_ath, H_sth]), H_thth]])
    return ll, g, H


def fit_weibull_outcome(times, events, covariates=None, names: Sequence[str] = (),
                        weights=None, fix_shape: bool = False) -> WeibullPH:
    """Weibull proportional-hazards MLE by damped Newton."""
    t = np.asarray(times, dtype=float)
    d = np.asarray(events, dtype=float)
    X = np.empty((t.size, 0)) if covariates is None else np.asarray(covariates, dtype=float)
    w = np.ones_like(t) if weights is None else np.asarray(weights, dtype=float)
    if np.sum(d > 0) < (1 if fix_shape else 2):
        raise ValueError("Weibull fit needs at least two events")
    a0 = np.log(np.sum(w * d) / np.sum(w * t))
    start = np.concatenate([[a0], np.zeros(X.shape[1] + (0 if fix_shape else 1))])
    r = _maximize(lambda b: weibull_loglik(b, t, d, X, w, fix_shape), start, guard=None)
    shape = 1.0 if fix_shape else float(np.exp(r.beta[1]))
    theta = r.beta[1:] if fix_shape else r.beta[2:]
    return WeibullPH(float(r.beta[0]), shape, np.asarray(theta), tuple(names), r.converged,
                     float(np.max(np.abs(r.grad), initial=0.0)))
