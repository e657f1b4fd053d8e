"""Cloning of subjects into strategy arms and artificial censoring at deviation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from ccwsurv.core import Cohort, Strategy, SubjectRecord, VisitGrid

AT_VISIT = "at_visit"
END_OF_INTERVAL = "end_of_interval"
CONVENTIONS = (AT_VISIT, END_OF_INTERVAL)

# outcome codes for a clone's end of follow-up
EVENT, ADMIN, NATURAL, ARTIFICIAL = 0, 1, 2, 3
KIND_NAMES = {EVENT: "event", ADMIN: "administrative", NATURAL: "natural",
              ARTIFICIAL: "artificial"}


def _check_convention(convention: str):
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}, got {convention!r}")


def artificial_censor_time(subject: SubjectRecord, strategy: Strategy, grid: VisitGrid,
                           convention: str = END_OF_INTERVAL) -> float:
    """Time at which the clone of ``subject`` assigned to ``strategy`` is censored.

    Only attended visits are checked. ``at_visit`` censors at the first
    deviating visit; ``end_of_interval`` lets the deviating treatment run to
    the next visit (or ``tau`` after the last one). Returns ``inf`` when no
    deviation is observed.
    """
    _check_convention(convention)
    n_att = int(grid.visits_before(subject.time))
    bounds = grid.bounds
    for k in range(1, min(n_att, len(subject.treatment), grid.n_intervals)):
        if subject.treatment[k] != strategy.indicator(k):
            return float(bounds[k] if convention == AT_VISIT else bounds[k + 1])
    return math.inf


@dataclass(frozen=True)
class CloneRecord:
    subject_id: int
    strategy: Strategy
    G: float
    time: float
    event: int
    kind: str

    @property
    def natural_before_G(self) -> bool:
        return self.kind == "natural"


@dataclass(frozen=True, eq=False)
class CloneSet:
    """Column arrays describing every (subject, strategy) clone.

    ``subject`` indexes rows of ``cohort``; ``arm`` indexes ``strategies``.
    """

    cohort: Cohort
    strategies: tuple[Strategy, ...]
    convention: str
    subject: np.ndarray
    arm: np.ndarray
    G: np.ndarray
    time: np.ndarray
    event: np.ndarray
    kind: np.ndarray
    deviation_visit: np.ndarray

    @property
    def n(self) -> int:
        return len(self.subject)

    @property
    def d(self) -> np.ndarray:
        return np.array([s.d for s in self.strategies])[self.arm]

    def arm_of(self, d: int) -> int:
        for a, s in enumerate(self.strategies):
            if s.d == d:
                return a
        raise KeyError(f"no arm with duration {d}")

    def select(self, mask) -> "CloneSet":
        idx = np.flatnonzero(mask)
        return CloneSet(self.cohort, self.strategies, self.convention,
                        self.subject[idx], self.arm[idx], self.G[idx], self.time[idx],
                        self.event[idx], self.kind[idx], self.deviation_visit[idx])

    def for_arm(self, d: int) -> "CloneSet":
        return self.select(self.arm == self.arm_of(d))

    def records(self) -> list[CloneRecord]:
        return [
            CloneRecord(int(self.cohort.ids[s]), self.strategies[a], float(g), float(t),
                        int(e), KIND_NAMES[int(k)])
            for s, a, g, t, e, k in zip(self.subject, self.arm, self.G, self.time,
                                        self.event, self.kind)
        ]


def clone_dataset(cohort: Cohort, strategies: Sequence[Strategy],
                  convention: str = END_OF_INTERVAL) -> CloneSet:
    """Copy every subject once per strategy and censor each copy at deviation."""
    _check_convention(convention)
    strategies = tuple(strategies)
    if len({s.d for s in strategies}) != len(strategies):
        raise ValueError("strategies must be distinct")
    grid = cohort.grid
    bounds = grid.bounds
    K1 = grid.n_intervals
    attended = cohort.attended
    visits = np.arange(K1)
    parts = []
    for a, s in enumerate(strategies):
        if s.K != grid.K:
            raise ValueError(f"strategy {s.label} has K={s.K}, grid has K={grid.K}")
        dev = attended & (cohort.treatment != s.as_array()[None, :]) & (visits[None, :] >= 1)
        has_dev = dev.any(axis=1)
        first = np.where(has_dev, dev.argmax(axis=1), -1)
        if convention == AT_VISIT:
            G = np.where(has_dev, bounds[np.maximum(first, 0)], np.inf)
        else:
            G = np.where(has_dev, bounds[np.minimum(first + 1, K1)], np.inf)
        parts.append((np.full(cohort.n, a), G, first))
    arm = np.concatenate([p[0] for p in parts])
    G = np.concatenate([p[1] for p in parts])
    dev_visit = np.concatenate([p[2] for p in parts])
    subject = np.tile(np.arange(cohort.n), len(strategies))
    T = cohort.time[subject]
    ev = cohort.event[subject]
    artificial = G < T
    time = np.minimum(T, G)
    event = (ev == 1) & ~artificial
    kind = np.where(event, EVENT,
                    np.where(artificial, ARTIFICIAL,
                             np.where(T < grid.tau, NATURAL, ADMIN)))
    return CloneSet(cohort, strategies, convention, subject, arm, G, time,
                    event.astype(np.int8), kind.astype(np.int8), dev_visit)


def support_diagnostics(clones: CloneSet, grid: VisitGrid | None = None,
                        floor: int = 5) -> pd.DataFrame:
    """At-risk and censoring counts per arm and visit interval.

    A clone is at risk in interval ``j`` if its follow-up extends past the
    interval's start. ``low_support`` flags at-risk counts below ``floor``.
    """
    cols = ["arm", "interval", "t_start", "t_stop", "at_risk", "events", "artificial",
            "natural", "low_support"]
    if clones.n == 0:
        return pd.DataFrame(columns=cols)
    grid = clones.cohort.grid if grid is None else grid
    b = grid.bounds
    rows = []
    for a, s in enumerate(clones.strategies):
        sel = clones.arm == a
        t, kind = clones.time[sel], clones.kind[sel]
        j_end = grid.interval_of(t)
        for j in range(1, grid.n_intervals + 1):
            at_risk = int(np.sum(t > b[j - 1]))
            here = j_end == j
            rows.append((s.d, j, b[j - 1], b[j], at_risk,
                         int(np.sum(here & (kind == EVENT))),
                         int(np.sum(here & (kind == ARTIFICIAL))),
                         int(np.sum(here & (kind == NATURAL))),
                         at_risk < floor))
    return pd.DataFrame(rows, columns=cols)
