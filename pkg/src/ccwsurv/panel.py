"""Person-period expansion of clone follow-up.

Each clone's follow-up ``[0, min(T_d, tau)]`` is split at visit times into
rows ``(t_start, t_stop]``. Row ``j`` carries the covariates recorded at visit
``j - 1``. Outcome indicators sit on the clone's last row only.

Every row also records the treatment decision it is exposed to, if any, in
``decision``: the visit whose treatment choice can artificially censor the
clone at the row's end. Under ``at_visit`` that is the visit closing the row
(and only if the clone reached it); under ``end_of_interval`` it is the visit
opening the row. Rows with no decision hold -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from ccwsurv.cloning import ARTIFICIAL, AT_VISIT, EVENT, NATURAL, CloneSet


@dataclass(frozen=True)
class PersonPeriodRow:
    clone: int
    subject_id: int
    arm: int
    j: int
    t_start: float
    t_stop: float
    covariates: dict
    y: int
    k_nat: int
    art_censor: int


@dataclass(frozen=True, eq=False)
class Panel:
    clones: CloneSet
    clone: np.ndarray
    j: np.ndarray
    t_start: np.ndarray
    t_stop: np.ndarray
    y: np.ndarray
    k_nat: np.ndarray
    art: np.ndarray
    decision: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.clone)

    @property
    def subject(self) -> np.ndarray:
        return self.clones.subject[self.clone]

    @property
    def arm(self) -> np.ndarray:
        return self.clones.arm[self.clone]

    @property
    def length(self) -> np.ndarray:
        return self.t_stop - self.t_start

    def covariates(self, names=None) -> np.ndarray:
        """Covariate snapshot at each row's opening visit."""
        return self.clones.cohort.covariates_at(self.subject, self.j - 1, names)

    def decision_covariates(self, names=None) -> np.ndarray:
        """Covariates at each row's decision visit (NaN rows where there is none)."""
        v = np.where(self.decision >= 0, self.decision, 0)
        X = self.clones.cohort.covariates_at(self.subject, v, names)
        X[self.decision < 0] = np.nan
        return X

    def select(self, mask) -> "Panel":
        idx = np.flatnonzero(mask)
        return Panel(self.clones, self.clone[idx], self.j[idx], self.t_start[idx],
                     self.t_stop[idx], self.y[idx], self.k_nat[idx], self.art[idx],
                     self.decision[idx])

    def for_arm(self, d: int) -> "Panel":
        return self.select(self.arm == self.clones.arm_of(d))

    def rows(self) -> list[PersonPeriodRow]:
        cohort = self.clones.cohort
        names = cohort.covariate_names
        X = self.covariates()
        return [
            PersonPeriodRow(int(c), int(cohort.ids[s]), int(self.clones.strategies[a].d),
                            int(j), float(t0), float(t1), dict(zip(names, map(float, x))),
                            int(y), int(kn), int(ar))
            for c, s, a, j, t0, t1, x, y, kn, ar in zip(
                self.clone, self.subject, self.arm, self.j, self.t_start, self.t_stop,
                X, self.y, self.k_nat, self.art)
        ]

    def to_frame(self) -> pd.DataFrame:
        cohort = self.clones.cohort
        df = pd.DataFrame({
            "clone_id": self.clone,
            "subject_id": cohort.ids[self.subject],
            "arm": np.array([s.d for s in self.clones.strategies])[self.arm],
            "j": self.j,
            "t_start": self.t_start,
            "t_stop": self.t_stop,
        })
        for name, col in zip(cohort.covariate_names, self.covariates().T):
            df[name] = col
        df["y"] = self.y
        df["k_nat"] = self.k_nat
        df["art_censor"] = self.art
        return df

    def to_csv(self, path, **extra_columns) -> None:
        df = self.to_frame()
        for k, v in extra_columns.items():
            df[k] = v
        df.to_csv(path, index=False)


def expand_visits(clones: CloneSet) -> Panel:
    """Split each clone's follow-up at the visit grid."""
    grid = clones.cohort.grid
    b = grid.bounds
    K = grid.K
    end = np.minimum(clones.time, grid.tau)
    if np.any(end <= 0):
        raise ValueError("clones with zero follow-up cannot be expanded")
    m = grid.interval_of(end)
    clone = np.repeat(np.arange(clones.n), m)
    first = np.cumsum(m) - m
    j = np.arange(clone.size) - np.repeat(first, m) + 1
    t_start = b[j - 1]
    t_stop = np.minimum(b[j], end[clone])
    last = j == m[clone]
    kind = clones.kind[clone]
    y = (last & (kind == EVENT)).astype(np.int8)
    k_nat = (last & (kind == NATURAL)).astype(np.int8)
    art = (last & (kind == ARTIFICIAL)).astype(np.int8)
    if clones.convention == AT_VISIT:
        reached = ~last | (art == 1)
        decision = np.where(reached & (j <= K), j, -1)
    else:
        decision = np.where(j >= 2, j - 1, -1)
    return Panel(clones, clone, j, t_start, t_stop, y, k_nat, art, decision)


def refine_at_times(panel: Panel, cut_times) -> Panel:
    """Split rows further at ``cut_times`` lying strictly inside them.

    Fragments keep their original interval index and decision visit; outcome
    indicators and the decision stay with the last fragment of each row.
    """
    cuts = np.unique(np.asarray(cut_times, dtype=float))
    if cuts.size and not np.all(np.isfinite(cuts)):
        raise ValueError("cut times must be finite")
    lo = np.searchsorted(cuts, panel.t_start, side="right")
    hi = np.searchsorted(cuts, panel.t_stop, side="left")
    reps = np.maximum(hi - lo, 0) + 1
    src = np.repeat(np.arange(panel.n_rows), reps)
    pos = np.arange(src.size) - np.repeat(np.cumsum(reps) - reps, reps)
    tail = pos == reps[src] - 1
    padded = np.append(cuts, np.nan)  # keeps the gather in range for unsplit rows
    idx = lo[src] + pos
    start = np.where(pos == 0, panel.t_start[src], padded[np.maximum(idx - 1, 0)])
    stop = np.where(tail, panel.t_stop[src], padded[np.minimum(idx, cuts.size)])
    keep = lambda a: np.where(tail, a[src], 0).astype(a.dtype)  # noqa: E731
    decision = np.where(tail, panel.decision[src], -1)
    return Panel(panel.clones, panel.clone[src], panel.j[src], start, stop,
                 keep(panel.y), keep(panel.k_nat), keep(panel.art), decision)
