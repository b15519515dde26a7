"""Summary statistics, normality and autocorrelation diagnostics.

Annualization multiplies both the mean and the standard deviation of
monthly returns by 12 (and by 100 for percent); minima and maxima are
reported as raw monthly percents.  Skewness and excess kurtosis use the
population (1/T) central-moment estimators, the Jarque-Bera statistic its
classical ``T/6 (S^2 + K^2/4)`` form, and Q(12) is the Ljung-Box
statistic on levels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateSeriesError, DomainError, ShapeError, ValidationError

MIN_OBS = 8


def _central_moments(series: np.ndarray) -> tuple[float, float, float, float]:
    mean = series.mean()
    dev = series - mean
    m2 = float(np.mean(dev**2))
    m3 = float(np.mean(dev**3))
    m4 = float(np.mean(dev**4))
    return float(mean), m2, m3, m4


def skewness(series: np.ndarray) -> float:
    """Population skewness ``m3 / m2^(3/2)``."""
    _, m2, m3, _ = _central_moments(np.asarray(series, dtype=float))
    if m2 == 0.0:
        raise DegenerateSeriesError("constant series has undefined skewness")
    return m3 / m2**1.5


def excess_kurtosis(series: np.ndarray) -> float:
    """Population kurtosis centered on 3."""
    _, m2, _, m4 = _central_moments(np.asarray(series, dtype=float))
    if m2 == 0.0:
        raise DegenerateSeriesError("constant series has undefined kurtosis")
    return m4 / m2**2 - 3.0


def jarque_bera(series: np.ndarray) -> float:
    """``T/6 (S^2 + K^2/4)``; zero exactly when S = K = 0."""
    series = np.asarray(series, dtype=float)
    s = skewness(series)
    k = excess_kurtosis(series)
    return series.shape[0] / 6.0 * (s**2 + k**2 / 4.0)


def acf(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags ``1..max_lag`` (biased estimator)."""
    series = np.asarray(series, dtype=float)
    t_len = series.shape[0]
    if max_lag >= t_len / 2:
        raise ShapeError("max_lag must be below T/2")
    dev = series - series.mean()
    denom = float(dev @ dev)
    if denom == 0.0:
        raise DegenerateSeriesError("constant series has no autocorrelation")
    return np.array(
        [float(dev[k:] @ dev[:-k]) / denom for k in range(1, max_lag + 1)]
    )


def ljung_box(series: np.ndarray, lags: int = 12) -> float:
    """Ljung-Box statistic ``T(T+2) sum rho_k^2 / (T-k)``.

    For very short series the sum runs over the available lags only.
    """
    series = np.asarray(series, dtype=float)
    t_len = series.shape[0]
    lags = min(lags, (t_len - 1) // 2)
    rho = acf(series, lags)
    k = np.arange(1, lags + 1)
    return float(t_len * (t_len + 2) * np.sum(rho**2 / (t_len - k)))


@dataclass(frozen=True)
class SummaryStats:
    """Annualized summary moments of one monthly return series."""

    mean_annual: float
    min_monthly: float
    max_monthly: float
    min_date: str
    max_date: str
    std_annual: float
    skewness: float
    excess_kurtosis: float
    jarque_bera: float
    q12: float


def summarize(series: np.ndarray, dates: Sequence[str] | None = None) -> SummaryStats:
    """Summary statistics of a monthly decimal return series."""
    series = np.asarray(series, dtype=float)
    if series.ndim != 1 or series.shape[0] < MIN_OBS:
        raise ValidationError(f"need a 1-D series with at least {MIN_OBS} points")
    t_len = series.shape[0]
    if dates is None:
        dates = [str(i) for i in range(t_len)]
    if len(dates) != t_len:
        raise ShapeError("dates length must match the series")
    if np.ptp(series) == 0.0:
        raise DegenerateSeriesError(
            "constant series: skewness and kurtosis are undefined"
        )
    i_min = int(series.argmin())
    i_max = int(series.argmax())
    return SummaryStats(
        mean_annual=float(series.mean() * 12.0 * 100.0),
        min_monthly=float(series[i_min] * 100.0),
        max_monthly=float(series[i_max] * 100.0),
        min_date=str(dates[i_min]),
        max_date=str(dates[i_max]),
        std_annual=float(series.std(ddof=1) * 12.0 * 100.0),
        skewness=skewness(series),
        excess_kurtosis=excess_kurtosis(series),
        jarque_bera=jarque_bera(series),
        q12=ljung_box(series, 12),
    )


@dataclass(frozen=True)
class AutocorrResult:
    """Per-lag correlations with the two-sided 5% significance band."""

    lags: np.ndarray
    values: np.ndarray
    band: float


def autocorrelations(
    series: np.ndarray,
    max_lag: int,
    squared: bool = False,
    include_zero: bool = False,
) -> AutocorrResult:
    """Autocorrelations of a series or of its squares, with the 5% band."""
    series = np.asarray(series, dtype=float)
    if squared:
        series = series**2
    t_len = series.shape[0]
    values = acf(series, max_lag)
    lags = np.arange(1, max_lag + 1)
    if include_zero:
        lags = np.concatenate([[0], lags])
        values = np.concatenate([[1.0], values])
    return AutocorrResult(lags=lags, values=values, band=1.96 / np.sqrt(t_len))


@dataclass(frozen=True)
class CrossCorrelations:
    """Correlations of squared series at leads and lags."""

    lags: np.ndarray
    values: np.ndarray
    band: float


def cross_correlations_squared(
    series_a: np.ndarray, series_b: np.ndarray, max_lag: int = 6
) -> CrossCorrelations:
    """``corr(a_t^2, b_{t-k}^2)`` for ``k`` in ``-max_lag..max_lag``."""
    a = np.asarray(series_a, dtype=float) ** 2
    b = np.asarray(series_b, dtype=float) ** 2
    if a.shape != b.shape:
        raise ShapeError("series must have equal lengths")
    t_len = a.shape[0]
    if max_lag >= t_len - 1:
        raise ShapeError("max_lag too large for the series length")
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise DegenerateSeriesError("squared series has zero variance")
    values = []
    for k in range(-max_lag, max_lag + 1):
        if k >= 0:
            x, y = a[k:], b[: t_len - k]
        else:
            x, y = a[: t_len + k], b[-k:]
        if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
            raise DegenerateSeriesError("degenerate overlap in cross-correlation")
        values.append(float(np.corrcoef(x, y)[0, 1]))
    return CrossCorrelations(
        lags=np.arange(-max_lag, max_lag + 1),
        values=np.asarray(values),
        band=1.96 / np.sqrt(t_len),
    )


def unconditional_correlations(panel) -> np.ndarray:
    """Sample correlation matrix of panel columns (symmetric, unit diagonal)."""
    values = getattr(panel, "values", panel)
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] < 3:
        raise ShapeError("need a T x N matrix with T >= 3")
    stds = values.std(axis=0)
    if np.any(stds == 0.0):
        col = int(np.argmax(stds == 0.0))
        names = getattr(panel, "asset_names", None)
        label = names[col] if names else str(col)
        raise DomainError(f"constant column {label!r} has no correlation")
    corr = np.corrcoef(values.T)
    corr = np.clip(corr, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return 0.5 * (corr + corr.T)
