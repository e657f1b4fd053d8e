"""Monte Carlo replication: simulate, estimate, summarise against the oracle truth."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ccwsurv import dgp
from ccwsurv.cloning import AT_VISIT, clone_dataset
from ccwsurv.core import ContrastEstimate, Strategy
from ccwsurv.estimators import (aipcw_contrast, gformula_baseline, gformula_filtered,
                                gformula_timedep, ipcw_km_contrast, km_cloned, naive_filtered)
from ccwsurv.weights import WeightConfig


# ---------------------------------------------------------------------------
# estimator registry

def _baseline_names(cohort):
    return cohort.baseline_names


def _run_estimator(name: str, cohort, clones, params, d1, d0, opts: dict) -> ContrastEstimate:
    wc = lambda **kw: WeightConfig(**{**kw, **opts.get("weights", {})})  # noqa: E731
    if name == "naive":
        return naive_filtered(cohort, d1, d0, rule=opts.get("rule", "prefix"))
    if name == "gformula_filtered":
        return gformula_filtered(cohort, d1, d0, rule=opts.get("rule", "prefix"))
    if name == "km_cloned":
        return km_cloned(clones, d1, d0)
    if name == "ipcw_a_logit":
        return ipcw_km_contrast(clones, d1, d0, wc(mode="artificial_only"))
    if name == "ipcw_an_logit":
        return ipcw_km_contrast(clones, d1, d0, wc(mode="single_logit"))
    if name == "ipcw_an_pwexp":
        return ipcw_km_contrast(clones, d1, d0, wc(mode="single_pwexp"))
    if name == "ipcw_a_logit_n_pwexp":
        return ipcw_km_contrast(clones, d1, d0, wc(mode="separate"))
    if name == "ipcw_static":
        b = _baseline_names(cohort)
        return ipcw_km_contrast(clones, d1, d0, wc(mode="separate", art_names=b, nat_names=b))
    if name == "ipcw_oracle":
        return ipcw_km_contrast(clones, d1, d0, WeightConfig(mode="oracle", params=params))
    if name == "gformula_pwexp":
        return gformula_baseline(clones, d1, d0, "pwexp")
    if name == "gformula_weibull":
        return gformula_baseline(clones, d1, d0, "weibull")
    if name == "gformula_timedep":
        return gformula_timedep(clones, d1, d0, draws=int(opts.get("draws", 0)),
                                seed=int(opts.get("seed", 0)))
    if name == "aipcw":
        return aipcw_contrast(clones, d1, d0, wc(mode=opts.get("weight_mode", "separate")),
                              q_model=opts.get("q_model", "pwexp"), params=params)
    raise KeyError(f"unknown estimator {name!r}")


ESTIMATORS = ("naive", "gformula_filtered", "km_cloned", "ipcw_a_logit", "ipcw_an_logit",
              "ipcw_an_pwexp", "ipcw_a_logit_n_pwexp", "ipcw_static", "ipcw_oracle",
              "gformula_pwexp", "gformula_weibull", "gformula_timedep", "aipcw")

BASELINE_SET = ("naive", "gformula_filtered", "km_cloned", "ipcw_a_logit", "gformula_pwexp",
                "gformula_weibull", "ipcw_a_logit_n_pwexp", "ipcw_an_logit", "ipcw_an_pwexp")
TIMEDEP_SET = ("naive", "gformula_filtered", "km_cloned", "ipcw_a_logit", "gformula_timedep",
               "ipcw_a_logit_n_pwexp", "ipcw_static", "ipcw_an_logit", "ipcw_an_pwexp")


@dataclass(frozen=True)
class EstimatorSpec:
    name: str
    label: str | None = None
    options: dict = field(default_factory=dict)

    @property
    def key(self) -> str:
        return self.label or self.name

    @classmethod
    def parse(cls, obj) -> "EstimatorSpec":
        if isinstance(obj, str):
            return cls(obj)
        if isinstance(obj, EstimatorSpec):
            return obj
        return cls(obj["name"], obj.get("label"), dict(obj.get("options", {})))


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Check:
    """Tolerance on a metric of one estimator, used by ``--check``."""

    estimator: str
    metric: str = "bias"
    min: float = -math.inf
    max: float = math.inf
    n: int | None = None

    def value(self, row: "MetricsRow") -> float:
        if self.metric == "abs_bias":
            return abs(row.bias)
        return float(getattr(row, self.metric))

    def holds(self, row: "MetricsRow") -> bool:
        v = self.value(row)
        return math.isfinite(v) and self.min <= v <= self.max


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    sizes: tuple[int, ...] = (500, 1000, 2000, 4000, 8000)
    replicates: int = 50
    estimators: tuple[EstimatorSpec, ...] = ()
    d1: int | None = None
    d0: int | None = None
    seed: int = 2024
    scale: float = 12.0
    convention: str = AT_VISIT
    oracle_n_mc: int = 2_000_000
    out: str | None = None
    threads: int = 1
    checks: tuple[Check, ...] = ()

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        params = dgp.preset(self.scenario)
        timedep = isinstance(params, dgp.TimedepDgpParams)
        if self.d1 is None:
            object.__setattr__(self, "d1", 3 if timedep else 5)
        if self.d0 is None:
            object.__setattr__(self, "d0", 5 if timedep else 3)
        Strategy(self.d1, params.K), Strategy(self.d0, params.K)
        ests = self.estimators or (TIMEDEP_SET if timedep else BASELINE_SET)
        object.__setattr__(self, "estimators", tuple(EstimatorSpec.parse(e) for e in ests))
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        object.__setattr__(self, "checks", tuple(c if isinstance(c, Check) else Check(**c)
                                                 for c in self.checks))

    @property
    def params(self):
        return dgp.preset(self.scenario)

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        obj = dict(obj)
        if "sizes" in obj:
            obj["sizes"] = tuple(obj["sizes"])
        if "estimators" in obj:
            obj["estimators"] = tuple(obj["estimators"])
        if "checks" in obj:
            obj["checks"] = tuple(obj["checks"])
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimators"] = [asdict(e) for e in self.estimators]
        return d


def replicate_seed(master: int, scenario: str, n: int, rep: int) -> int:
    """Seed for one simulated dataset; independent of the estimator list."""
    tag = int.from_bytes(hashlib.sha256(scenario.encode()).digest()[:8], "little")
    ss = np.random.SeedSequence([int(master), tag, int(n), int(rep)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class MetricsRow:
    estimator: str
    n: int
    truth: float
    mean: float
    ese: float
    bias: float
    mse: float
    rmse: float
    n_ok: int = 0
    failures: int = 0
    ese_defined: bool = True


def compute_metrics(estimates: Sequence[float], truth: float, estimator: str = "",
                    n: int = 0, failures: int = 0) -> MetricsRow:
    """Mean, empirical SE, bias, MSE and RMSE of Monte Carlo estimates."""
    x = np.asarray(list(estimates), dtype=float)
    if x.size == 0:
        raise ValueError("need at least one estimate")
    mean = float(x.mean())
    ese = float(x.std(ddof=1)) if x.size > 1 else 0.0
    bias = mean - truth
    mse = float(np.mean((x - truth) ** 2))
    return MetricsRow(estimator, n, truth, mean, ese, bias, mse, math.sqrt(mse), int(x.size),
                      failures, x.size > 1)


# ---------------------------------------------------------------------------
# running


@dataclass(frozen=True)
class RawRow:
    scenario: str
    n: int
    replicate: int
    estimator: str
    theta_months: float
    status: str


def run_replicate(config: RunConfig, n: int, rep: int) -> list[RawRow]:
    params = config.params
    cohort = dgp.simulate(params, n, replicate_seed(config.seed, config.scenario, n, rep))
    K = params.K
    clones = clone_dataset(cohort, [Strategy(config.d1, K), Strategy(config.d0, K)],
                           config.convention)
    rows = []
    for spec in config.estimators:
        try:
            est = _run_estimator(spec.name, cohort, clones, params, config.d1, config.d0,
                                 spec.options)
            val = config.scale * est.theta
            status = "ok" if math.isfinite(val) else "nonfinite"
        except Exception as exc:  # recorded, run continues
            val, status = float("nan"), f"error: {type(exc).__name__}: {exc}"
        rows.append(RawRow(config.scenario, n, rep, spec.key, val, status))
    return rows


def _job(args):
    config, n, rep = args
    return run_replicate(config, n, rep)


@dataclass
class RunResult:
    truth: float
    raw: list[RawRow]
    metrics: list[MetricsRow]
    elapsed: float
    failed_checks: list[str] = field(default_factory=list)

    def metric(self, estimator: str, n: int | None = None) -> MetricsRow:
        for m in self.metrics:
            if m.estimator == estimator and (n is None or m.n == n):
                return m
        raise KeyError(estimator)


def truth_months(config: RunConfig) -> float:
    return config.scale * dgp.oracle_contrast(config.params, config.d1, config.d0,
                                              n_mc=config.oracle_n_mc)


def run_monte_carlo(config: RunConfig, progress: Callable[[str], None] | None = None
                    ) -> RunResult:
    """Run every (size, replicate) cell, summarise, write CSVs when ``out`` is set."""
    t0 = time.time()
    truth = truth_months(config)
    jobs = [(config, n, r) for n in config.sizes for r in range(config.replicates)]
    raw: list[RawRow] = []
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            for rows in pool.map(_job, jobs):
                raw.extend(rows)
    else:
        for i, job in enumerate(jobs):
            raw.extend(_job(job))
            if progress:
                progress(f"replicate {i + 1}/{len(jobs)} done")
    raw.sort(key=lambda r: (r.n, r.replicate, [e.key for e in config.estimators].index(r.estimator)))
    metrics = []
    for n in config.sizes:
        for spec in config.estimators:
            cell = [r for r in raw if r.n == n and r.estimator == spec.key]
            ok = [r.theta_months for r in cell if r.status == "ok"]
            fails = len(cell) - len(ok)
            if ok:
                metrics.append(compute_metrics(ok, truth, spec.key, n, fails))
            else:
                nan = float("nan")
                metrics.append(MetricsRow(spec.key, n, truth, nan, nan, nan, nan, nan, 0,
                                          fails, False))
    result = RunResult(truth, raw, metrics, time.time() - t0)
    result.failed_checks = evaluate_checks(config, result)
    if config.out:
        write_outputs(config, result)
    return result


def evaluate_checks(config: RunConfig, result: RunResult) -> list[str]:
    failed = []
    for c in config.checks:
        for m in result.metrics:
            if m.estimator == c.estimator and (c.n is None or m.n == c.n):
                if not c.holds(m):
                    failed.append(f"{c.estimator} n={m.n}: {c.metric}={c.value(m):.2f} "
                                  f"outside [{c.min}, {c.max}]")
    return failed


def write_outputs(config: RunConfig, result: RunResult) -> None:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "raw.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "n", "replicate", "estimator", "theta_months", "status"])
        for r in result.raw:
            w.writerow([r.scenario, r.n, r.replicate, r.estimator, repr(r.theta_months), r.status])
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        cols = ["estimator", "n", "truth", "mean", "ese", "bias", "mse", "rmse", "n_ok",
                "failures", "ese_defined"]
        w.writerow(["scenario"] + cols)
        for m in result.metrics:
            w.writerow([config.scenario] + [getattr(m, c) for c in cols])


def format_metrics(result: RunResult) -> str:
    lines = [f"truth (months): {result.truth:.2f}",
             f"{'estimator':28s} {'n':>6s} {'mean':>8s} {'ese':>7s} {'bias':>8s} {'rmse':>8s} fail"]
    for m in result.metrics:
        lines.append(f"{m.estimator:28s} {m.n:6d} {m.mean:8.2f} {m.ese:7.2f} {m.bias:8.2f} "
                     f"{m.rmse:8.2f} {m.failures:4d}")
    return "\n".join(lines)


__all__ = ["RunConfig", "MetricsRow", "RawRow", "RunResult", "Check", "EstimatorSpec",
           "compute_metrics", "run_monte_carlo", "run_replicate", "replicate_seed",
           "truth_months", "format_metrics", "ESTIMATORS"]
