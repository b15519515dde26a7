"""Robust inference: sandwich covariance, Wald and LR tests, diagnostics.

Standard errors follow the quasi-maximum-likelihood sandwich
``V = A^{-1} B A^{-1} / T`` with ``B`` the average outer product of
per-period scores and ``A`` minus the average Hessian, so they stay valid
when the conditional normality assumption fails.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .descriptive import (
    excess_kurtosis,
    jarque_bera,
    ljung_box,
    skewness,
)
from .errors import (
    ConfigurationError,
    DegenerateSeriesError,
    DomainError,
    EstimationError,
    ShapeError,
)
from .estimation import EstimationResult
from .likelihood import PreparedModel, indicator_masks, total_gradient
from .utils import thread_count

HESSIAN_STEP = 1e-4


@dataclass(frozen=True)
class SandwichCovariance:
    """QML parameter covariance with its building blocks."""

    V: np.ndarray
    A_inv: np.ndarray
    B: np.ndarray
    hessian_step: float
    pseudo_inverse: bool = False

    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(self.V), 0.0))


@dataclass(frozen=True)
class TestResult:
    """Asymptotic chi-square test outcome."""

    statistic: float
    df: int
    p_value: float
    hypothesis: str


def sandwich_covariance(
    result: EstimationResult,
    prep: PreparedModel,
    step: float = HESSIAN_STEP,
) -> SandwichCovariance:
    """QML sandwich covariance at a converged optimum.

    The Hessian block uses K+1 gradient evaluations (one-sided differences
    of the summed scores, step ``max(step, step * |theta_k|)``) and is
    symmetrized; a singular Hessian falls back to the pseudo-inverse with
    a flag.  All evaluations freeze the indicator regimes at the optimum,
    so the differenced objective is the smooth branch the QML asymptotics
    refer to.
    """
    if not result.converged:
        raise EstimationError("sandwich covariance requires a converged result")
    theta = result.theta_hat
    scores = result.scores
    t_len, k = scores.shape
    b_mat = scores.T @ scores / t_len

    masks = indicator_masks(theta, prep)[:2]
    g0 = total_gradient(theta, prep, indicators=masks)
    steps = np.maximum(step, step * np.abs(theta))

    def column(idx: int) -> np.ndarray:
        shifted = theta.copy()
        shifted[idx] += steps[idx]
        return (total_gradient(shifted, prep, indicators=masks) - g0) / steps[idx]

    workers = thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cols = list(pool.map(column, range(k)))
    else:
        cols = [column(i) for i in range(k)]
    hess = np.column_stack(cols)
    hess = 0.5 * (hess + hess.T)

    a_mat = -hess / t_len
    pseudo = False
    try:
        a_inv = np.linalg.solve(a_mat, np.eye(k))
    except np.linalg.LinAlgError:
        a_inv = np.linalg.pinv(a_mat)
        pseudo = True
    v = a_inv @ b_mat @ a_inv / t_len
    v = 0.5 * (v + v.T)
    return SandwichCovariance(
        V=v, A_inv=a_inv, B=b_mat, hessian_step=step, pseudo_inverse=pseudo
    )


def _restriction_matrix(selection, k: int) -> np.ndarray:
    sel = np.asarray(selection)
    if sel.ndim == 1:
        idx = sel.astype(int)
        if idx.size == 0:
            raise ShapeError("empty restriction")
        r_mat = np.zeros((idx.size, k))
        r_mat[np.arange(idx.size), idx] = 1.0
        return r_mat
    if sel.ndim == 2:
        if sel.shape[1] != k:
            raise ShapeError(f"restriction matrix must have {k} columns")
        return sel.astype(float)
    raise ShapeError("selection must be an index vector or a matrix")


def wald_test(
    theta_hat: np.ndarray,
    v_mat: np.ndarray,
    selection,
    r: np.ndarray | None = None,
    hypothesis: str = "",
) -> TestResult:
    """Robust Wald test of ``R theta = r``.

    ``selection`` is either an index set (unit-row restrictions) or a full
    restriction matrix; rows must be linearly independent.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    k = theta_hat.shape[0]
    r_mat = _restriction_matrix(selection, k)
    df = r_mat.shape[0]
    if np.linalg.matrix_rank(r_mat) < df:
        raise DomainError("restriction rows are linearly dependent")
    target = np.zeros(df) if r is None else np.asarray(r, dtype=float)
    diff = r_mat @ theta_hat - target
    rvr = r_mat @ v_mat @ r_mat.T
    try:
        stat = float(diff @ np.linalg.solve(rvr, diff))
    except np.linalg.LinAlgError as exc:
        raise DomainError("R V R' is singular") from exc
    stat = max(stat, 0.0)
    return TestResult(
        statistic=stat,
        df=df,
        p_value=float(chi2.sf(stat, df)),
        hypothesis=hypothesis,
    )


def lr_test(
    loglik_restricted: float,
    loglik_unrestricted: float,
    df: int,
    hypothesis: str = "",
) -> TestResult:
    """Likelihood-ratio test of nested fits."""
    if loglik_unrestricted < loglik_restricted:
        raise EstimationError(
            "unrestricted log-likelihood below restricted one; re-estimate "
            "(nested optima must satisfy lnL_u >= lnL_r)"
        )
    stat = 2.0 * (loglik_unrestricted - loglik_restricted)
    return TestResult(
        statistic=float(stat),
        df=df,
        p_value=float(chi2.sf(stat, df)),
        hypothesis=hypothesis,
    )


def information_criteria(loglik: float, k: int, t_len: float) -> tuple[float, float]:
    """(AIC, SBC) in the smaller-is-better ``-2 lnL + penalty`` form."""
    if k < 0 or t_len < 1:
        raise ConfigurationError("need k >= 0 and T >= 1")
    aic = -2.0 * loglik + 2.0 * k
    sbc = -2.0 * loglik + k * np.log(t_len)
    return float(aic), float(sbc)


@dataclass(frozen=True)
class ResidualDiagnostics:
    """Moments of one standardized-residual series."""

    mean_x100: float
    skewness: float
    excess_kurtosis: float
    jarque_bera: float
    q12: float


def standardized_residual_diagnostics(
    result: EstimationResult,
) -> list[ResidualDiagnostics]:
    """Per-asset diagnostics of ``eps_it / sqrt(h_iit)`` at the optimum."""
    path = result.cov_path
    if path is None:
        raise EstimationError("result carries no fitted covariance path")
    if np.any(path.h_diag <= 0.0):
        raise DomainError("conditional variances must be positive")
    std = path.eps / np.sqrt(path.h_diag)
    out = []
    for j in range(std.shape[1]):
        series = std[:, j]
        if np.ptp(series) == 0.0:
            raise DegenerateSeriesError(f"standardized residuals constant (col {j})")
        out.append(
            ResidualDiagnostics(
                mean_x100=float(series.mean() * 100.0),
                skewness=float(skewness(series)),
                excess_kurtosis=float(excess_kurtosis(series)),
                jarque_bera=float(jarque_bera(series)),
                q12=float(ljung_box(series, 12)),
            )
        )
    return out


# ---------------------------------------------------------------------------
# Named hypotheses
# ---------------------------------------------------------------------------


def available_hypotheses(layout, asset_names) -> list[str]:
    """Valid names for :func:`hypothesis_indices` given a layout.

    Constancy hypotheses disappear when the matching instrument set has
    only the constant (the restricted block would be empty).
    """
    non_world = list(asset_names[:-1])
    names = []
    if layout.spec.n_global > 1:
        names.append("world-price-constant")
    names.append("all-domestic-prices-zero")
    names += [f"domestic-price-zero:{a}" for a in non_world]
    if layout.spec.n_local > 1:
        names += [f"domestic-price-constant:{a}" for a in non_world]
    if layout.s is not None:
        names += ["s-zero", "z-zero"]
    if layout.alpha is not None:
        names += ["country-constants-zero", "local-coefficients-zero"]
    return names


def hypothesis_indices(name: str, layout, asset_names) -> tuple[str, list[int]]:
    """Map a named pricing hypothesis to parameter indices (tested against 0).

    Single-country domestic tests restrict the whole local block including
    its constant; the ``-constant`` variants restrict only the
    time-varying part.
    """
    non_world = list(asset_names[:-1])
    valid = available_hypotheses(layout, asset_names)
    if name not in valid:
        raise ConfigurationError(
            f"unknown hypothesis {name!r}; valid names: {', '.join(valid)}"
        )
    if name == "world-price-constant":
        sl = layout.kappa_world
        return "world price of risk constant", list(range(sl.start + 1, sl.stop))
    if name == "all-domestic-prices-zero":
        idx: list[int] = []
        for sl in layout.kappa_local:
            idx.extend(range(sl.start, sl.stop))
        return "all domestic risk prices jointly zero", idx
    if name.startswith("domestic-price-zero:"):
        asset = name.split(":", 1)[1]
        if asset in non_world:
            sl = layout.kappa_local[non_world.index(asset)]
            return (
                f"domestic risk price of {asset} zero",
                list(range(sl.start, sl.stop)),
            )
    if name.startswith("domestic-price-constant:"):
        asset = name.split(":", 1)[1]
        if asset in non_world:
            sl = layout.kappa_local[non_world.index(asset)]
            return (
                f"domestic risk price of {asset} constant",
                list(range(sl.start + 1, sl.stop)),
            )
    if name == "s-zero" and layout.s is not None:
        return "negative-shock loadings jointly zero", list(
            range(layout.s.start, layout.s.stop)
        )
    if name == "z-zero" and layout.z is not None:
        return "large-shock loadings jointly zero", list(
            range(layout.z.start, layout.z.stop)
        )
    if name == "country-constants-zero" and layout.alpha is not None:
        return "country-specific constants jointly zero", list(
            range(layout.alpha.start, layout.alpha.stop)
        )
    if name == "local-coefficients-zero" and layout.phi is not None:
        idx = []
        for sl in layout.phi:
            idx.extend(range(sl.start, sl.stop))
        return "residual local-information coefficients jointly zero", idx
    raise ConfigurationError(
        f"unknown hypothesis {name!r}; valid names: {', '.join(valid)}"
    )
