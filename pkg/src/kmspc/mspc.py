"""Control-chart statistics, control limits and the correct-monitoring-rate loss."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special, stats
from scipy.linalg import cho_factor, cho_solve

from .decomposition import KpcaModel, PcaModel
from .errors import NumericalError, ValidationError
from .kernels import center_test, centered_self_kernel, kernel_values, self_kernel

WARNING_ALPHA = 0.05
ALARM_ALPHA = 0.01


class LimitMethod(enum.Enum):
    # T2 from mean + 2/3 std, SPEx from the scaled chi-square approximation
    GAUSSIAN = "gaussian"
    # T2 from the F distribution at 95%/99%, SPEx as above
    F = "f"
    # mean + 2/3 std for both statistics
    MOMENTS = "moments"


# Statistics -----------------------------------------------------------------------

def t2_statistic(T_cal, T_eval=None) -> np.ndarray:
    """Hotelling T2 of ``T_eval`` rows, normalized by the calibration scores.

    ``T2_i = t_i' (T'T)^-1 t_i / (n - 1)`` with ``T`` the n x H calibration
    scores; omitting ``T_eval`` evaluates the calibration rows themselves.
    """
    T_cal = np.atleast_2d(np.asarray(T_cal, dtype=np.float64))
    T_eval = T_cal if T_eval is None else np.atleast_2d(np.asarray(T_eval, dtype=np.float64))
    n, H = T_cal.shape
    if H < 1:
        raise ValidationError("T2 needs at least one component")
    if T_eval.shape[1] != H:
        raise ValidationError(f"score widths differ: {T_eval.shape[1]} vs {H}")
    try:
        factor = cho_factor(T_cal.T @ T_cal, lower=True)
    except np.linalg.LinAlgError:
        raise NumericalError("score covariance is singular") from None
    S = cho_solve(factor, T_eval.T)
    return np.einsum("ij,ji->i", T_eval, S) / (n - 1)


def spex_linear(model: PcaModel, X_eval) -> np.ndarray:
    """Squared residual norm of each row after projection onto the loadings."""
    X_eval = np.asarray(X_eval, dtype=np.float64)
    if X_eval.ndim != 2 or X_eval.shape[1] != model.d:
        raise ValidationError(f"expected {model.d} variables, got array of shape {X_eval.shape}")
    E = model.residuals(X_eval)
    return np.einsum("ij,ij->i", E, E)


def _kernel_scores_and_spex(model: KpcaModel, X_eval) -> tuple[np.ndarray, np.ndarray]:
    X_eval = np.asarray(X_eval, dtype=np.float64)
    if X_eval.ndim != 2 or X_eval.shape[1] != model.d:
        raise ValidationError(f"expected {model.d} variables, got array of shape {X_eval.shape}")
    K = kernel_values(X_eval, model.X_train, model.config)
    scores = center_test(K, model.train_stats).K @ model.alpha
    kxx = centered_self_kernel(self_kernel(X_eval, model.config), K, model.train_stats)
    spex = kxx - np.einsum("ij,ij->i", scores, scores)
    return scores, np.maximum(spex, 0.0)


def spex_kernel(model: KpcaModel, X_eval) -> np.ndarray:
    """Feature-space reconstruction error ``k~(x,x) - sum_h t_h^2``, clipped at 0."""
    return _kernel_scores_and_spex(model, X_eval)[1]


def evaluate(model: PcaModel | KpcaModel, X_eval) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scores, T2 and SPEx of ``X_eval`` under a fitted model."""
    if isinstance(model, KpcaModel):
        scores, spex = _kernel_scores_and_spex(model, X_eval)
    else:
        scores = model.project(X_eval)
        spex = spex_linear(model, X_eval)
    return scores, t2_statistic(model.scores, scores), spex


def calibration_statistics(model: PcaModel | KpcaModel) -> tuple[np.ndarray, np.ndarray]:
    """T2 and SPEx of the model's own training rows."""
    _, t2, spex = evaluate(model, model.X_train)
    return t2, spex


# Limits -------------------------------------------------------------------------------

def limits_gaussian(stat_cal) -> tuple[float, float]:
    """Warning and alarm limits ``mean + 2 std`` and ``mean + 3 std``."""
    x = np.asarray(stat_cal, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValidationError("need at least two calibration values")
    mu = float(x.mean())
    sd = float(x.std(ddof=1))
    if not sd > 0:
        raise ValidationError("calibration statistic has zero variance")
    return mu + 2.0 * sd, mu + 3.0 * sd


def limits_f(n: int, h: int, alpha: float = ALARM_ALPHA) -> float:
    """T2 limit ``h(n-1)/(n-h) F(h, n-h)`` at upper tail probability ``alpha``."""
    if not (1 <= h and n - h >= 2):
        raise ValidationError(f"invalid degrees of freedom for n={n}, h={h}")
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    return h * (n - 1) / (n - h) * float(stats.f.isf(alpha, h, n - h))


def chi2_isf(alpha: float, dof: float, tol: float = 1e-10) -> float:
    """Upper-``alpha`` quantile of a chi-square with real ``dof``, by bisection."""
    if not 0 < alpha < 1 or not dof > 0:
        raise ValidationError("chi-square quantile needs 0 < alpha < 1 and dof > 0")
    target = 1.0 - alpha
    cdf = lambda x: special.gammainc(0.5 * dof, 0.5 * x)
    lo, hi = 0.0, max(1.0, dof)
    while cdf(hi) < target:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def limits_chi2(spex_cal, alpha: float = ALARM_ALPHA) -> float:
    """Scaled chi-square limit ``(v / 2m) chi2_l`` with ``l = 2 m^2 / v``."""
    x = np.asarray(spex_cal, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValidationError("need at least two calibration values")
    mu = float(x.mean())
    var = float(x.var(ddof=1))
    if not (mu > 0 and var > 0):
        raise ValidationError("SPEx calibration needs positive mean and variance")
    dof = 2.0 * mu * mu / var
    return var / (2.0 * mu) * chi2_isf(alpha, dof)


@dataclass(frozen=True)
class ChartLimits:
    t2_warning: float
    t2_alarm: float
    t2_flim: float
    spex_warning: float
    spex_limit: float
    t2_method: str
    spex_method: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, doc: dict) -> "ChartLimits":
        return cls(**doc)


def compute_limits(t2_cal, spex_cal, n: int, H: int,
                   method: LimitMethod | str = LimitMethod.GAUSSIAN) -> ChartLimits:
    method = LimitMethod(method)
    flim = limits_f(n, H, ALARM_ALPHA) if n - H >= 2 else math.inf
    if method is LimitMethod.F:
        t2_w, t2_a = limits_f(n, H, WARNING_ALPHA), flim
        t2_tag = "f"
    else:
        t2_w, t2_a = limits_gaussian(t2_cal)
        t2_tag = "gaussian"
    if method is LimitMethod.MOMENTS:
        sp_w, sp_a = limits_gaussian(spex_cal)
        sp_tag = "gaussian"
    else:
        sp_w, sp_a = limits_chi2(spex_cal, WARNING_ALPHA), limits_chi2(spex_cal, ALARM_ALPHA)
        sp_tag = "chi2"
    return ChartLimits(t2_w, t2_a, flim, sp_w, sp_a, t2_tag, sp_tag)


def calibrate_limits(model: PcaModel | KpcaModel,
                     method: LimitMethod | str = LimitMethod.GAUSSIAN) -> ChartLimits:
    t2, spex = calibration_statistics(model)
    return compute_limits(t2, spex, model.n, model.H, method)


# Charts ---------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ControlChart:
    t2: np.ndarray
    spex: np.ndarray
    limits: ChartLimits
    fault_onset: int | None = None

    def __post_init__(self):
        if self.t2.shape != self.spex.shape:
            raise ValidationError("T2 and SPEx traces differ in length")
        if not (np.all(np.isfinite(self.t2)) and np.all(np.isfinite(self.spex))):
            raise NumericalError("chart statistics are not finite")

    @property
    def m(self) -> int:
        return self.t2.shape[0]

    def alarms(self, statistic: str = "combined") -> np.ndarray:
        t2 = self.t2 > self.limits.t2_alarm
        spex = self.spex > self.limits.spex_limit
        if statistic == "t2":
            return t2
        if statistic == "spex":
            return spex
        if statistic == "combined":
            return t2 | spex
        raise ValidationError(f"unknown statistic {statistic!r}")


def build_chart(model: PcaModel | KpcaModel, X_eval,
                limit_method: LimitMethod | str = LimitMethod.GAUSSIAN,
                onset: int | None = None, limits: ChartLimits | None = None) -> ControlChart:
    """Project ``X_eval`` and assemble T2/SPEx traces with calibration limits."""
    if limits is None:
        limits = calibrate_limits(model, limit_method)
    _, t2, spex = evaluate(model, X_eval)
    if onset is not None and not 1 <= onset <= len(t2) + 1:
        raise ValidationError(f"onset {onset} outside 1..{len(t2) + 1}")
    return ControlChart(t2, spex, limits, onset)


# Correct monitoring rate -----------------------------------------------------------------

@dataclass(frozen=True)
class Cmr:
    eta_normal: float
    eta_faulty: float | None
    loss: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class CmrReport:
    t2: Cmr
    spex: Cmr
    combined: Cmr
    onset: int
    note: str = ""

    def to_dict(self) -> dict:
        return {"t2": self.t2.to_dict(), "spex": self.spex.to_dict(),
                "combined": self.combined.to_dict(), "onset": self.onset, "note": self.note}


def cmr_from_alarms(alarms: np.ndarray, onset: int, allow_no_fault: bool = False) -> Cmr:
    """``1 - (eta_n + eta_f) / 2`` for a boolean alarm trace.

    ``onset`` is the 1-based index of the first faulty sample. With
    ``allow_no_fault`` an onset past the end scores only the normal part.
    """
    alarms = np.asarray(alarms, dtype=bool)
    m = alarms.shape[0]
    pre, post = alarms[:onset - 1], alarms[onset - 1:]
    if onset < 1 or pre.size == 0:
        raise ValidationError("no normal samples before the onset")
    eta_n = float(np.mean(~pre))
    if post.size == 0:
        if not (allow_no_fault and onset == m + 1):
            raise ValidationError("no faulty samples after the onset")
        return Cmr(eta_n, None, 1.0 - (eta_n + 1.0) / 2.0)
    eta_f = float(np.mean(post))
    return Cmr(eta_n, eta_f, 1.0 - (eta_n + eta_f) / 2.0)


def cmr_loss(chart: ControlChart, onset: int | None = None,
             allow_no_fault: bool = False) -> CmrReport:
    onset = chart.fault_onset if onset is None else onset
    if onset is None:
        raise ValidationError("an onset is required to score a chart")
    parts = {s: cmr_from_alarms(chart.alarms(s), onset, allow_no_fault)
             for s in ("t2", "spex", "combined")}
    note = ""
    if onset == chart.m + 1:
        note = "no faulty samples: the faulty-detection term is excluded"
    return CmrReport(parts["t2"], parts["spex"], parts["combined"], onset, note)


def detection_delay(alarms: np.ndarray, onset: int) -> int | None:
    """Samples from the onset to the first alarm at or after it (None: never)."""
    hits = np.flatnonzero(np.asarray(alarms, dtype=bool)[onset - 1:])
    return int(hits[0]) if hits.size else None


def write_chart_csv(chart: ControlChart, path) -> None:
    lim = chart.limits
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_index", "t2", "spex", "t2_warning", "t2_alarm", "spex_limit",
                    "onset_flag"])
        for i in range(chart.m):
            faulty = chart.fault_onset is not None and i + 1 >= chart.fault_onset
            w.writerow([i + 1, repr(float(chart.t2[i])), repr(float(chart.spex[i])),
                        repr(lim.t2_warning), repr(lim.t2_alarm), repr(lim.spex_limit),
                        int(faulty)])
