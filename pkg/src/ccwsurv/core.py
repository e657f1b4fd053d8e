"""Shared domain types: strategies, visit grids, subjects and contrasts.

Two views of the same data are provided. :class:`SubjectRecord` is the
readable per-individual form used for small hand-built datasets; :class:`Cohort`
holds the same fields as column arrays so that simulation and estimation scale
to tens of thousands of individuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

#: Placeholder stored in ``Cohort.treatment`` for visits that were not attended.
NO_VISIT = -1


@dataclass(frozen=True)
class Strategy:
    """Static duration strategy: treat at visits ``k < d``, stop afterwards."""

    d: int
    K: int

    def __post_init__(self):
        if self.K < 0:
            raise ValueError(f"K must be >= 0, got {self.K}")
        if not 1 <= self.d <= self.K + 1:
            raise ValueError(f"duration d={self.d} outside 1..{self.K + 1}")

    def indicator(self, k: int) -> int:
        if not 0 <= k <= self.K:
            raise ValueError(f"visit index {k} outside 0..{self.K}")
        return 1 if k < self.d else 0

    @property
    def path(self) -> tuple[int, ...]:
        return tuple(self.indicator(k) for k in range(self.K + 1))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.path, dtype=np.int8)

    @property
    def label(self) -> str:
        return f"g{self.d}"


def strategy_indicator(s: Strategy, k: int) -> int:
    """Treatment prescribed by ``s`` at visit ``k`` (1 = treat)."""
    return s.indicator(k)


@dataclass(frozen=True)
class VisitGrid:
    """Scheduled visit times ``v_0 = 0 < ... < v_K`` and horizon ``tau``.

    Follow-up is partitioned into ``K + 1`` intervals ``(v_{j-1}, v_j]`` for
    ``j = 1..K`` plus the tail ``(v_K, tau]``; interval ``j`` carries the
    treatment and covariates recorded at visit ``j - 1``.
    """

    times: tuple[float, ...]
    tau: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size == 0 or t[0] != 0.0:
            raise ValueError("visit grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("visit times must be strictly increasing")
        if not t[-1] < self.tau:
            raise ValueError("last visit must precede the horizon tau")
        object.__setattr__(self, "times", tuple(float(v) for v in t))
        object.__setattr__(self, "tau", float(self.tau))

    @classmethod
    def integers(cls, K: int, tau: float) -> "VisitGrid":
        return cls(tuple(float(k) for k in range(K + 1)), tau)

    @property
    def K(self) -> int:
        return len(self.times) - 1

    @property
    def n_intervals(self) -> int:
        return len(self.times)

    @property
    def bounds(self) -> np.ndarray:
        """Interval boundaries ``(v_0, ..., v_K, tau)``."""
        return np.append(np.asarray(self.times), self.tau)

    def interval_of(self, t) -> np.ndarray:
        """1-based index ``j`` of the interval ``(b_{j-1}, b_j]`` containing ``t``.

        ``t = 0`` maps to interval 1.
        """
        j = np.searchsorted(self.bounds, np.asarray(t, dtype=float), side="left")
        return np.clip(j, 1, self.n_intervals)

    def visits_before(self, t) -> np.ndarray:
        """Number of visits strictly before ``t`` (visit 0 always counts)."""
        n = np.searchsorted(np.asarray(self.times), np.asarray(t, dtype=float), side="left")
        return np.maximum(n, 1)


@dataclass(frozen=True)
class SubjectRecord:
    """One individual's observed data.

    ``treatment`` and each series in ``time_varying`` list the values at the
    attended visits only (visits strictly before ``time``); ``None`` inside a
    covariate series marks a value that was not recorded.
    """

    id: int
    baseline: Mapping[str, float]
    treatment: tuple[int, ...]
    time: float
    event: int
    time_varying: Mapping[str, tuple] = field(default_factory=dict)
    latent_time: float | None = None
    latent_censor: float | None = None

    def __post_init__(self):
        if not self.treatment or self.treatment[0] != 1:
            raise ValueError(f"subject {self.id}: treatment must start with A_0 = 1")
        if self.time < 0:
            raise ValueError(f"subject {self.id}: negative follow-up time")
        if self.event not in (0, 1):
            raise ValueError(f"subject {self.id}: event must be 0 or 1")
        object.__setattr__(self, "treatment", tuple(int(a) for a in self.treatment))


def observed_duration(subject: SubjectRecord) -> int:
    """Index of the last attended visit at which treatment was received."""
    a = subject.treatment
    return max(k for k, ak in enumerate(a) if ak == 1)


@dataclass(frozen=True)
class ContrastEstimate:
    """RMST under two strategies and their difference, in years.

    ``scale`` converts to the reporting unit (12 gives months).
    """

    rmst_d1: float
    rmst_d0: float
    estimator: str
    d1: int
    d0: int
    scale: float = 12.0
    info: Mapping[str, object] = field(default_factory=dict, compare=False)

    @property
    def theta(self) -> float:
        return self.rmst_d1 - self.rmst_d0

    @property
    def theta_report(self) -> float:
        return self.scale * self.theta


@dataclass(frozen=True, eq=False)
class Cohort:
    """Column-oriented collection of subjects sharing one visit grid.

    Arrays are indexed by subject along axis 0. ``treatment[i, k]`` is
    ``NO_VISIT`` and ``time_varying[i, k, :]`` is NaN for visits subject ``i``
    did not attend; :attr:`attended` is the authoritative mask.
    """

    grid: VisitGrid
    ids: np.ndarray
    baseline: np.ndarray
    baseline_names: tuple[str, ...]
    treatment: np.ndarray
    time: np.ndarray
    event: np.ndarray
    time_varying: np.ndarray | None = None
    tv_names: tuple[str, ...] = ()
    latent_time: np.ndarray | None = None
    latent_censor: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.ids)
        K1 = self.grid.n_intervals
        if self.baseline.shape != (n, len(self.baseline_names)):
            raise ValueError("baseline matrix does not match names")
        if self.treatment.shape != (n, K1):
            raise ValueError("treatment matrix must be (n, K + 1)")
        if self.time_varying is None:
            object.__setattr__(self, "time_varying", np.empty((n, K1, 0)))
        if self.time_varying.shape != (n, K1, len(self.tv_names)):
            raise ValueError("time-varying array must be (n, K + 1, q)")
        if n and np.any(self.treatment[:, 0] != 1):
            raise ValueError("every subject must have A_0 = 1")

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def n_visits(self) -> np.ndarray:
        return self.grid.visits_before(self.time)

    @property
    def attended(self) -> np.ndarray:
        return np.arange(self.grid.n_intervals)[None, :] < self.n_visits[:, None]

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return self.baseline_names + self.tv_names

    def covariates_at(self, subject: np.ndarray, visit: np.ndarray,
                      names: Sequence[str] | None = None) -> np.ndarray:
        """Covariate matrix for (subject, visit) pairs, baseline and time-varying."""
        names = self.covariate_names if names is None else tuple(names)
        subject = np.asarray(subject, dtype=np.intp)
        visit = np.asarray(visit, dtype=np.intp)
        cols = []
        for name in names:
            if name in self.baseline_names:
                cols.append(self.baseline[subject, self.baseline_names.index(name)])
            elif name in self.tv_names:
                cols.append(self.time_varying[subject, visit, self.tv_names.index(name)])
            else:
                raise KeyError(f"unknown covariate {name!r}")
        return np.column_stack(cols) if cols else np.empty((subject.size, 0))

    def subset(self, mask) -> "Cohort":
        idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask)
        opt = lambda a: None if a is None else a[idx]  # noqa: E731
        return Cohort(
            grid=self.grid, ids=self.ids[idx], baseline=self.baseline[idx],
            baseline_names=self.baseline_names, treatment=self.treatment[idx],
            time=self.time[idx], event=self.event[idx],
            time_varying=self.time_varying[idx], tv_names=self.tv_names,
            latent_time=opt(self.latent_time), latent_censor=opt(self.latent_censor),
        )

    @classmethod
    def from_records(cls, records: Iterable[SubjectRecord], grid: VisitGrid) -> "Cohort":
        records = list(records)
        K1 = grid.n_intervals
        bnames = tuple(records[0].baseline) if records else ()
        tnames = tuple(records[0].time_varying) if records else ()
        n = len(records)
        base = np.array([[r.baseline[b] for b in bnames] for r in records], dtype=float)
        base = base.reshape(n, len(bnames))
        trt = np.full((n, K1), NO_VISIT, dtype=np.int8)
        tv = np.full((n, K1, len(tnames)), np.nan)
        nv = grid.visits_before([r.time for r in records]) if n else []
        for i, r in enumerate(records):
            m = int(nv[i])
            if len(r.treatment) < m:
                raise ValueError(f"subject {r.id}: treatment missing for attended visits")
            trt[i, :m] = r.treatment[:m]
            for q, name in enumerate(tnames):
                series = r.time_varying[name]
                for k in range(min(m, len(series))):
                    if series[k] is not None:
                        tv[i, k, q] = series[k]
        latent_t = [r.latent_time for r in records]
        latent_c = [r.latent_censor for r in records]
        return cls(
            grid=grid,
            ids=np.array([r.id for r in records]),
            baseline=base,
            baseline_names=bnames,
            treatment=trt,
            time=np.array([r.time for r in records], dtype=float),
            event=np.array([r.event for r in records], dtype=np.int8),
            time_varying=tv,
            tv_names=tnames,
            latent_time=None if None in latent_t else np.array(latent_t, dtype=float),
            latent_censor=None if None in latent_c else np.array(latent_c, dtype=float),
        )

    def record(self, i: int) -> SubjectRecord:
        m = int(self.n_visits[i])
        tv = {
            name: tuple(None if math.isnan(v) else float(v)
                        for v in self.time_varying[i, :m, q])
            for q, name in enumerate(self.tv_names)
        }
        return SubjectRecord(
            id=int(self.ids[i]),
            baseline={b: float(self.baseline[i, p]) for p, b in enumerate(self.baseline_names)},
            treatment=tuple(int(a) for a in self.treatment[i, :m]),
            time=float(self.time[i]),
            event=int(self.event[i]),
            time_varying=tv,
            latent_time=None if self.latent_time is None else float(self.latent_time[i]),
            latent_censor=None if self.latent_censor is None else float(self.latent_censor[i]),
        )

    def records(self) -> list[SubjectRecord]:
        return [self.record(i) for i in range(self.n)]

    def to_frame(self):
        """One row per subject; per-visit columns are suffixed ``_k`` and blank if absent."""
        import pandas as pd

        cols = {"id": self.ids}
        for p, b in enumerate(self.baseline_names):
            cols[b] = self.baseline[:, p]
        att = self.attended
        for k in range(self.grid.n_intervals):
            cols[f"A_{k}"] = pd.array(np.where(att[:, k], self.treatment[:, k], 0), dtype="Int64")
            cols[f"A_{k}"][~att[:, k]] = pd.NA
            for q, name in enumerate(self.tv_names):
                cols[f"{name}_{k}"] = self.time_varying[:, k, q]
        cols["time"] = self.time
        cols["event"] = self.event
        return pd.DataFrame(cols)
