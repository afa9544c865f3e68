"""Cross-scale log-log fits and regime summaries.

At each training step the probe yields (s_max, n_steps) per model scale N.
Four channels are fit by ordinary least squares in log10-log10 space over
the identical scale set: size (slope D), duration (slope z), absolute
transport s_max/n_steps (slope beta) and intensive transport
s_max/(N*n_steps) (slope delta). Because the channel logs are linear
combinations of the same per-scale logs, the closure beta = D - z and
delta = beta - 1 holds to rounding error and is enforced.

Steps with fewer than three clean scales are skipped, never extrapolated;
degenerate records (zero cascade, or ceiling-limited at the step cap) are
dropped before fitting and excluded from every summary. Rolling medians are
display-only smoothing and feed no summary statistic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .cascade import CascadeResult
from .snapshots import SnapshotManifest

CLOSURE_TOL = 1e-9

SKIP_TOO_FEW_SCALES = "too_few_scales"
SKIP_COMMON_GRID = "degenerate_scale_on_common_grid"


@dataclass(frozen=True)
class TransportRecord:
    family: str
    model_id: str
    variant: str
    step: int
    n_elements: int
    tau: float
    s_max: int
    n_steps: int
    ceiling_limited: bool
    zero_cascade: bool
    v_abs: float | None
    v_rel: float | None

    @property
    def degenerate(self) -> bool:
        return self.zero_cascade or self.ceiling_limited

    @classmethod
    def from_cascade(
        cls, manifest: SnapshotManifest, variant: str, result: CascadeResult
    ) -> "TransportRecord":
        return cls(
            family=manifest.family,
            model_id=manifest.model_id,
            variant=variant,
            step=manifest.step,
            n_elements=manifest.n_elements,
            tau=result.tau,
            s_max=result.s_max,
            n_steps=result.n_steps,
            ceiling_limited=result.ceiling_limited,
            zero_cascade=result.zero_cascade,
            v_abs=result.v_abs,
            v_rel=result.v_rel,
        )

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "model_id": self.model_id,
            "variant": self.variant,
            "step": self.step,
            "n_elements": self.n_elements,
            "tau": self.tau,
            "s_max": self.s_max,
            "n_steps": self.n_steps,
            "ceiling_limited": self.ceiling_limited,
            "zero_cascade": self.zero_cascade,
            "v_abs": self.v_abs,
            "v_rel": self.v_rel,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TransportRecord":
        return cls(
            family=str(raw["family"]),
            model_id=str(raw["model_id"]),
            variant=str(raw["variant"]),
            step=int(raw["step"]),
            n_elements=int(raw["n_elements"]),
            tau=float(raw["tau"]),
            s_max=int(raw["s_max"]),
            n_steps=int(raw["n_steps"]),
            ceiling_limited=bool(raw["ceiling_limited"]),
            zero_cascade=bool(raw["zero_cascade"]),
            v_abs=None if raw["v_abs"] is None else float(raw["v_abs"]),
            v_rel=None if raw["v_rel"] is None else float(raw["v_rel"]),
        )


@dataclass(frozen=True)
class StepScalingFit:
    step: int
    scales_used: tuple[int, ...]
    n_scales: int
    d: float
    c: float
    z: float
    c_z: float
    beta: float
    c_beta: float
    delta: float
    c_delta: float
    r2_d: float
    r2_z: float
    r2_beta: float
    r2_delta: float

    def __post_init__(self) -> None:
        if self.n_scales < 3:
            raise DataError("fit with fewer than 3 scales")
        if abs(self.beta - (self.d - self.z)) > CLOSURE_TOL:
            raise DataError(
                f"closure violated at step {self.step}: "
                f"beta={self.beta} vs D-z={self.d - self.z}"
            )
        if abs(self.delta - (self.beta - 1.0)) > CLOSURE_TOL:
            raise DataError(
                f"closure violated at step {self.step}: "
                f"delta={self.delta} vs beta-1={self.beta - 1.0}"
            )

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "scales_used": list(self.scales_used),
            "n_scales": self.n_scales,
            "d": self.d,
            "c": self.c,
            "z": self.z,
            "c_z": self.c_z,
            "beta": self.beta,
            "c_beta": self.c_beta,
            "delta": self.delta,
            "c_delta": self.c_delta,
            "r2_d": self.r2_d,
            "r2_z": self.r2_z,
            "r2_beta": self.r2_beta,
            "r2_delta": self.r2_delta,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "StepScalingFit":
        return cls(
            step=int(raw["step"]),
            scales_used=tuple(int(s) for s in raw["scales_used"]),
            n_scales=int(raw["n_scales"]),
            d=float(raw["d"]),
            c=float(raw["c"]),
            z=float(raw["z"]),
            c_z=float(raw["c_z"]),
            beta=float(raw["beta"]),
            c_beta=float(raw["c_beta"]),
            delta=float(raw["delta"]),
            c_delta=float(raw["c_delta"]),
            r2_d=float(raw["r2_d"]),
            r2_z=float(raw["r2_z"]),
            r2_beta=float(raw["r2_beta"]),
            r2_delta=float(raw["r2_delta"]),
        )


@dataclass(frozen=True)
class StepSkip:
    step: int
    reason: str


@dataclass(frozen=True)
class ExponentStat:
    mean: float
    std: float
    n: int


@dataclass(frozen=True)
class WindowSummary:
    window: tuple[int, int]
    empty: bool
    n_fits: int
    d: ExponentStat | None
    z: ExponentStat | None
    beta: ExponentStat | None
    delta: ExponentStat | None
    vrel_model_means: dict[str, float]
    vrel_model_counts: dict[str, int]
    vrel_cv: float | None
    n_records: int


@dataclass(frozen=True)
class TertileSummary:
    window: tuple[int, int]
    # (label, mean, std, n); mean/std are None for an empty tertile
    tertiles: tuple[tuple[str, float | None, float | None, int], ...]


def loglog_fit(xs, ys) -> tuple[float, float, float]:
    """OLS of log10(ys) on log10(xs); returns (slope, intercept, r2).

    Needs at least three strictly positive points. A constant-y channel
    fits slope 0 with r2 defined as 1 (zero residuals on zero variance).
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size != ys.size:
        raise DataError("xs and ys length mismatch")
    if xs.size < 3:
        raise DataError(f"need at least 3 scales, got {xs.size}")
    if (xs <= 0).any() or (ys <= 0).any():
        raise DataError("log-log fit requires strictly positive inputs")
    return _ols(np.log10(xs), np.log10(ys))


def _ols(lx: np.ndarray, ly: np.ndarray) -> tuple[float, float, float]:
    dx = lx - lx.mean()
    sxx = float(np.dot(dx, dx))
    if sxx == 0.0:
        raise DataError("zero variance in fit abscissa")
    slope = float(np.dot(dx, ly - ly.mean()) / sxx)
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    ss_res = float(np.dot(resid, resid))
    dy = ly - ly.mean()
    ss_tot = float(np.dot(dy, dy))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return slope, intercept, r2


def fit_step(
    records: list[TransportRecord],
    require_all_scales: bool = False,
) -> StepScalingFit | StepSkip:
    """Fit all four transport channels for one (family, variant, step).

    Degenerate records are dropped first; with ``require_all_scales`` any
    degenerate scale skips the whole step (common-grid rule). Fewer than
    three surviving scales also skips. All channels share one scale set.
    """
    if not records:
        raise DataError("no records for step")
    steps = {r.step for r in records}
    variants = {r.variant for r in records}
    if len(steps) != 1 or len(variants) != 1:
        raise DataError("records mix steps or variants")
    step = records[0].step
    scales = [r.n_elements for r in records]
    if len(set(scales)) != len(scales):
        raise DataError(f"duplicate scales at step {step}: {sorted(scales)}")

    clean = [r for r in records if not r.degenerate]
    if require_all_scales and len(clean) != len(records):
        return StepSkip(step=step, reason=SKIP_COMMON_GRID)
    if len(clean) < 3:
        return StepSkip(step=step, reason=SKIP_TOO_FEW_SCALES)

    clean.sort(key=lambda r: r.n_elements)
    n_arr = np.array([r.n_elements for r in clean], dtype=np.float64)
    s_arr = np.array([r.s_max for r in clean], dtype=np.float64)
    t_arr = np.array([r.n_steps for r in clean], dtype=np.float64)

    lx = np.log10(n_arr)
    ls = np.log10(s_arr)
    lt = np.log10(t_arr)
    # Channel logs derive from the same per-scale logs so the closure
    # beta = D - z, delta = beta - 1 is tight.
    d, c, r2_d = _ols(lx, ls)
    z, c_z, r2_z = _ols(lx, lt)
    beta, c_beta, r2_beta = _ols(lx, ls - lt)
    delta, c_delta, r2_delta = _ols(lx, ls - lt - lx)

    return StepScalingFit(
        step=step,
        scales_used=tuple(int(n) for n in n_arr),
        n_scales=len(clean),
        d=d,
        c=c,
        z=z,
        c_z=c_z,
        beta=beta,
        c_beta=c_beta,
        delta=delta,
        c_delta=c_delta,
        r2_d=r2_d,
        r2_z=r2_z,
        r2_beta=r2_beta,
        r2_delta=r2_delta,
    )


def _stat(values: list[float]) -> ExponentStat:
    arr = np.asarray(values, dtype=np.float64)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return ExponentStat(mean=float(arr.mean()), std=std, n=int(arr.size))


def window_summary(
    fits: list[StepScalingFit],
    records: list[TransportRecord],
    window: tuple[int, int],
) -> WindowSummary:
    """Stable-window regime statistics.

    Exponent means/sample-stds come from the unsmoothed per-step fits inside
    the window; per-model v_rel plateau means come from non-degenerate
    in-window records; the cross-model CV is sample-std over mean of those
    plateau means. Single-sample stds are reported as 0.
    """
    lo, hi = window
    if lo >= hi:
        raise DataError(f"window lo must be < hi, got [{lo}, {hi}]")
    in_fits = [f for f in fits if lo <= f.step <= hi]
    in_records = [
        r for r in records if lo <= r.step <= hi and not r.degenerate
    ]

    by_model: dict[str, list[float]] = {}
    for r in in_records:
        if r.v_rel is not None:
            by_model.setdefault(r.model_id, []).append(r.v_rel)
    vrel_means = {m: float(np.mean(v)) for m, v in sorted(by_model.items())}
    vrel_counts = {m: len(v) for m, v in sorted(by_model.items())}
    vrel_cv = None
    if len(vrel_means) >= 2:
        arr = np.array(list(vrel_means.values()))
        mean = float(arr.mean())
        if mean != 0.0:
            vrel_cv = float(np.std(arr, ddof=1) / mean)

    if not in_fits:
        return WindowSummary(
            window=(lo, hi),
            empty=True,
            n_fits=0,
            d=None,
            z=None,
            beta=None,
            delta=None,
            vrel_model_means=vrel_means,
            vrel_model_counts=vrel_counts,
            vrel_cv=vrel_cv,
            n_records=len(in_records),
        )

    return WindowSummary(
        window=(lo, hi),
        empty=False,
        n_fits=len(in_fits),
        d=_stat([f.d for f in in_fits]),
        z=_stat([f.z for f in in_fits]),
        beta=_stat([f.beta for f in in_fits]),
        delta=_stat([f.delta for f in in_fits]),
        vrel_model_means=vrel_means,
        vrel_model_counts=vrel_counts,
        vrel_cv=vrel_cv,
        n_records=len(in_records),
    )


def rolling_median(
    series: list[tuple[int, float]], window_len: int = 11
) -> list[tuple[int, float]]:
    """Centered rolling median with shrinking windows at the edges.

    Display-only smoothing: regime summaries never consume this output.
    """
    if window_len < 1 or window_len % 2 == 0:
        raise ValueError(f"window_len must be odd and >= 1, got {window_len}")
    if not series:
        raise ValueError("empty series")
    ordered = sorted(series, key=lambda p: p[0])
    steps = [p[0] for p in ordered]
    vals = np.array([p[1] for p in ordered], dtype=np.float64)
    half = window_len // 2
    out = []
    for i in range(len(ordered)):
        lo = max(0, i - half)
        hi = min(len(ordered), i + half + 1)
        out.append((steps[i], float(np.median(vals[lo:hi]))))
    return out


def _tertile_sizes(n: int) -> tuple[int, int, int]:
    base, rem = divmod(n, 3)
    # leftover steps go to the earlier tertiles
    return (base + (1 if rem > 0 else 0), base + (1 if rem > 1 else 0), base)


def tertile_deltas(
    fits_real: list[StepScalingFit],
    fits_null: list[StepScalingFit],
    window: tuple[int, int],
) -> TertileSummary:
    """Early/mid/late means of the per-step duration-exponent offset
    z_real - z_null on the steps both variants fit inside the window."""
    lo, hi = window
    null_by_step = {f.step: f for f in fits_null}
    pairs = [
        (f.step, f.z - null_by_step[f.step].z)
        for f in sorted(fits_real, key=lambda f: f.step)
        if lo <= f.step <= hi and f.step in null_by_step
    ]
    if not pairs:
        raise DataError("no common steps between real and null fits in window")
    sizes = _tertile_sizes(len(pairs))
    labels = ("early", "mid", "late")
    tertiles = []
    start = 0
    for label, size in zip(labels, sizes):
        chunk = [dz for _, dz in pairs[start : start + size]]
        start += size
        if chunk:
            stat = _stat(chunk)
            tertiles.append((label, stat.mean, stat.std, stat.n))
        else:
            tertiles.append((label, None, None, 0))
    return TertileSummary(window=(lo, hi), tertiles=tuple(tertiles))
