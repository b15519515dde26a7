"""Machine-readable report builders mirroring the standard table shapes."""

from __future__ import annotations

import numpy as np
from scipy.stats import chi2, norm

from .data import ReturnsPanel
from .errors import IcapmError
from .descriptive import (
    autocorrelations,
    cross_correlations_squared,
    summarize,
    unconditional_correlations,
)
from .estimation import EstimationResult
from .inference import (
    SandwichCovariance,
    TestResult,
    information_criteria,
    standardized_residual_diagnostics,
)

STAR_1PCT = "*"
STAR_5PCT = "**"


def stars_from_p(p: float) -> str:
    if p < 0.01:
        return STAR_1PCT
    if p < 0.05:
        return STAR_5PCT
    return ""


def stars_from_z(value: float, std: float) -> str:
    if std <= 0.0 or not np.isfinite(std):
        return ""
    return stars_from_p(2.0 * norm.sf(abs(value) / std))


def _corr_stars(value: float, t_len: int) -> str:
    z = abs(value) * np.sqrt(t_len)
    return stars_from_p(2.0 * norm.sf(z))


def describe_report(panel: ReturnsPanel, max_lag: int = 6) -> dict:
    """Summary, correlation and autocorrelation panels for one sample."""
    t_len = panel.n_periods
    values = panel.values
    summary = {}
    for j, name in enumerate(panel.asset_names):
        st = summarize(values[:, j], panel.dates)
        summary[name] = {
            "mean_annual_pct": st.mean_annual,
            "min_monthly_pct": st.min_monthly,
            "min_date": st.min_date,
            "max_monthly_pct": st.max_monthly,
            "max_date": st.max_date,
            "std_annual_pct": st.std_annual,
            "skewness": st.skewness,
            "skewness_stars": stars_from_z(st.skewness, np.sqrt(6.0 / t_len)),
            "excess_kurtosis": st.excess_kurtosis,
            "kurtosis_stars": stars_from_z(
                st.excess_kurtosis, np.sqrt(24.0 / t_len)
            ),
            "jarque_bera": st.jarque_bera,
            "jarque_bera_stars": stars_from_p(float(chi2.sf(st.jarque_bera, 2))),
            "q12": st.q12,
            "q12_stars": stars_from_p(float(chi2.sf(st.q12, 12))),
        }

    corr = unconditional_correlations(panel)
    panel_b = {
        "assets": list(panel.asset_names),
        "matrix": [[float(x) for x in row] for row in corr],
    }

    def _acf_panel(squared: bool) -> dict:
        out = {}
        for j, name in enumerate(panel.asset_names):
            res = autocorrelations(values[:, j], max_lag, squared=squared)
            out[name] = [
                {
                    "lag": int(lag),
                    "value": float(v),
                    "stars": _corr_stars(float(v), t_len),
                }
                for lag, v in zip(res.lags, res.values)
            ]
        return out

    w = panel.world_index
    panel_e = {}
    for j, name in enumerate(panel.asset_names):
        if j == w:
            continue
        res = cross_correlations_squared(values[:, w], values[:, j], max_lag)
        panel_e[name] = [
            {
                "lag": int(lag),
                "value": float(v),
                "stars": _corr_stars(float(v), t_len),
            }
            for lag, v in zip(res.lags, res.values)
        ]

    return {
        "n_periods": t_len,
        "window": [panel.dates[0], panel.dates[-1]],
        "panel_a_summary": summary,
        "panel_b_unconditional_correlations": panel_b,
        "panel_c_autocorrelations": _acf_panel(False),
        "panel_d_squared_autocorrelations": _acf_panel(True),
        "panel_e_squared_cross_correlations_world": panel_e,
        "significance_band_5pct": 1.96 / np.sqrt(t_len),
    }


def _block(names, estimates, std_errors) -> dict:
    return {
        "names": list(names),
        "estimates": [float(x) for x in estimates],
        "std_errors": [float(x) for x in std_errors],
        "stars": [
            stars_from_z(est, se) for est, se in zip(estimates, std_errors)
        ],
    }


def estimate_report(
    result: EstimationResult,
    sandwich: SandwichCovariance | None,
    panel: ReturnsPanel,
    global_names,
    local_names,
) -> dict:
    """Parameter table (mean blocks, GARCH vectors), fit measures, metadata."""
    lay = result.layout
    theta = result.theta_hat
    k = theta.shape[0]
    se = (
        sandwich.std_errors()
        if sandwich is not None
        else np.full(k, np.nan)
    )
    assets = list(panel.asset_names)
    non_world = assets[:-1]
    t_len = panel.n_periods

    world_block = _block(
        global_names, theta[lay.kappa_world], se[lay.kappa_world]
    )
    domestic = {
        asset: _block(local_names[i], theta[lay.kappa_local[i]], se[lay.kappa_local[i]])
        for i, asset in enumerate(non_world)
    }
    garch_blocks = {
        "a": _block(assets, theta[lay.a], se[lay.a]),
        "b": _block(assets, theta[lay.b], se[lay.b]),
    }
    if lay.s is not None:
        garch_blocks["s"] = _block(assets, theta[lay.s], se[lay.s])
        garch_blocks["z"] = _block(assets, theta[lay.z], se[lay.z])

    raw_ll = result.loglik_unpenalized
    aic, sbc = information_criteria(raw_ll, k, t_len)

    report = {
        "model": result.spec.variant,
        "n_assets": panel.n_assets,
        "n_periods": t_len,
        "window": [panel.dates[0], panel.dates[-1]],
        "assets": assets,
        "loglik": raw_ll,
        "penalty": result.penalty,
        "aic": aic,
        "sbc": sbc,
        "n_params": k,
        "converged": result.converged,
        "iterations": result.iterations,
        "message": result.message,
        "clamped": result.clamped,
        "panel_a_world_price": world_block,
        "panel_a_domestic_prices": domestic,
        "panel_b_garch": garch_blocks,
        "price_means": {
            "world": float(result.prices.delta_world.mean()),
            "domestic": {
                asset: float(result.prices.delta_local[:, i].mean())
                for i, asset in enumerate(non_world)
            },
        },
        "theta_hat": [float(x) for x in theta],
    }
    if lay.alpha is not None:
        report["panel_a_country_constants"] = _block(
            non_world, theta[lay.alpha], se[lay.alpha]
        )
        report["panel_a_local_coefficients"] = {
            asset: _block(
                local_names[i][1:], theta[lay.phi[i]], se[lay.phi[i]]
            )
            for i, asset in enumerate(non_world)
        }
    try:
        diagnostics = standardized_residual_diagnostics(result)
        report["residual_diagnostics"] = {
            asset: {
                "mean_x100": d.mean_x100,
                "skewness": d.skewness,
                "excess_kurtosis": d.excess_kurtosis,
                "jarque_bera": d.jarque_bera,
                "q12": d.q12,
            }
            for asset, d in zip(assets, diagnostics)
        }
    except IcapmError:  # degenerate residuals: report without diagnostics
        report["residual_diagnostics"] = None
    return report


def tests_report(results: list[TestResult]) -> list[dict]:
    return [
        {
            "hypothesis": r.hypothesis,
            "statistic": float(r.statistic),
            "df": int(r.df),
            "p_value": float(r.p_value),
            "stars": stars_from_p(r.p_value),
        }
        for r in results
    ]
