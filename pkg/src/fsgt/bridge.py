"""External-performance scaling exponents and schedule-partial correlations.

The external side is a per-step log-log slope of a performance metric
(perplexity or mean accuracy) across model scales, with a small positive
floor applied before taking logs. Associations with internal transport
observables are reported as plain Pearson r with a two-sided t-test p-value;
checkpoints along a trajectory are autocorrelated, so the p-values are
descriptive association statistics, not independent-sample tests. The
schedule-partial variant residualizes both variables on the reconstructed
learning-rate schedule (with intercept) before correlating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import stdtr

from .errors import ConfigError, DataError
from .scaling import loglog_fit

DEFAULT_METRIC_FLOOR = 1e-6

#: residual-variance ratio below which residualization is considered to have
#: absorbed the whole signal
DEGENERATE_RESIDUAL_RATIO = 1e-15

METRIC_KINDS = ("perplexity", "mean_accuracy")
SCHEDULE_KINDS = ("linear_warmup_linear", "linear_warmup_cosine")


@dataclass(frozen=True)
class MetricEntry:
    model_id: str
    n: int
    step: int
    value: float


@dataclass(frozen=True)
class ExternalMetricSeries:
    family: str
    metric_kind: str
    entries: tuple[MetricEntry, ...]
    floor: float = DEFAULT_METRIC_FLOOR

    def __post_init__(self) -> None:
        if self.metric_kind not in METRIC_KINDS:
            raise ConfigError(f"unknown metric_kind {self.metric_kind!r}")
        if not self.floor > 0:
            raise ConfigError("floor must be positive")
        for e in self.entries:
            if not math.isfinite(e.value):
                raise DataError(
                    f"non-finite metric value for {e.model_id} step {e.step}"
                )

    def steps(self) -> list[int]:
        return sorted({e.step for e in self.entries})

    def at_step(self, step: int) -> list[MetricEntry]:
        return sorted(
            (e for e in self.entries if e.step == step), key=lambda e: e.n
        )


@dataclass(frozen=True)
class LrSchedule:
    kind: str
    eta_max: float
    eta_min: float
    t_warm: int
    t_total: int

    def __post_init__(self) -> None:
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if not 0 <= self.eta_min <= self.eta_max:
            raise ConfigError("need 0 <= eta_min <= eta_max")
        if not 0 < self.t_warm < self.t_total:
            raise ConfigError("need 0 < t_warm < t_total")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "eta_max": self.eta_max,
            "eta_min": self.eta_min,
            "t_warm": self.t_warm,
            "t_total": self.t_total,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "LrSchedule":
        return cls(
            kind=str(raw["kind"]),
            eta_max=float(raw["eta_max"]),
            eta_min=float(raw["eta_min"]),
            t_warm=int(raw["t_warm"]),
            t_total=int(raw["t_total"]),
        )


@dataclass(frozen=True)
class PearsonResult:
    r: float
    p: float
    n: int
    degenerate: bool = False


@dataclass(frozen=True)
class PartialResult:
    r: float
    n: int
    degenerate: bool = False


def reconstruct_lr(schedule: LrSchedule, t: int | float) -> float:
    """Learning rate eta(t): linear warmup to eta_max at t_warm, then linear
    or half-cosine decay to eta_min at t_total."""
    if not 0 <= t <= schedule.t_total:
        raise DataError(
            f"t={t} outside schedule range [0, {schedule.t_total}]"
        )
    if t <= schedule.t_warm:
        return schedule.eta_max * t / schedule.t_warm
    frac = (t - schedule.t_warm) / (schedule.t_total - schedule.t_warm)
    if schedule.kind == "linear_warmup_linear":
        return schedule.eta_max + (schedule.eta_min - schedule.eta_max) * frac
    return schedule.eta_min + 0.5 * (schedule.eta_max - schedule.eta_min) * (
        1.0 + math.cos(math.pi * frac)
    )


def fit_external_exponent(
    series: ExternalMetricSeries,
    step: int,
    eval_line: tuple[str, ...] | None = None,
) -> tuple[float, float] | None:
    """Log-log slope of the metric vs scale at one step, or None when fewer
    than three scales are available (the step is skipped, not extrapolated).

    Values are floored at ``series.floor`` before the log."""
    entries = series.at_step(step)
    if eval_line is not None:
        entries = [e for e in entries if e.model_id in eval_line]
    if len(entries) < 3:
        return None
    ns = [e.n for e in entries]
    if len(set(ns)) != len(ns):
        raise DataError(f"duplicate scales in metric table at step {step}")
    ys = [max(e.value, series.floor) for e in entries]
    slope, _, r2 = loglog_fit(ns, ys)
    return slope, r2


def pearson(x, y) -> PearsonResult:
    """Sample Pearson r with a two-sided t-test p (n-2 dof).

    Zero variance in either argument flags the result degenerate with r
    reported as 0 and p as 1.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size:
        raise DataError("x and y length mismatch")
    n = int(x.size)
    if n < 3:
        raise DataError(f"pearson needs n >= 3, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        return PearsonResult(r=0.0, p=1.0, n=n, degenerate=True)
    r = float(np.dot(dx, dy) / math.sqrt(sxx * syy))
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        p = float(np.finfo(np.float64).tiny)
    else:
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
        p = 2.0 * float(stdtr(n - 2, -abs(t)))
        p = min(1.0, max(p, float(np.finfo(np.float64).tiny)))
    return PearsonResult(r=r, p=p, n=n)


def _residualize(v: np.ndarray, eta: np.ndarray) -> np.ndarray:
    design = np.column_stack([np.ones_like(eta), eta])
    coef, *_ = np.linalg.lstsq(design, v, rcond=None)
    return v - design @ coef


def lr_partial_pearson(x, y, eta) -> PartialResult:
    """Pearson r after OLS-residualizing both variables on eta(t).

    If residualization removes (almost) all variance of either variable the
    result is flagged degenerate and r reported as 0.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    if not (x.size == y.size == eta.size):
        raise DataError("x, y, eta length mismatch")
    n = int(x.size)
    if n < 4:
        raise DataError(f"lr-partial pearson needs n >= 4, got {n}")

    rx = _residualize(x, eta)
    ry = _residualize(y, eta)
    for orig, resid in ((x, rx), (y, ry)):
        var0 = float(np.var(orig))
        if var0 == 0.0 or float(np.var(resid)) < DEGENERATE_RESIDUAL_RATIO * var0:
            return PartialResult(r=0.0, n=n, degenerate=True)
    num = float(np.dot(rx - rx.mean(), ry - ry.mean()))
    den = math.sqrt(
        float(np.dot(rx - rx.mean(), rx - rx.mean()))
        * float(np.dot(ry - ry.mean(), ry - ry.mean()))
    )
    if den == 0.0:
        return PartialResult(r=0.0, n=n, degenerate=True)
    r = max(-1.0, min(1.0, num / den))
    return PartialResult(r=r, n=n)
