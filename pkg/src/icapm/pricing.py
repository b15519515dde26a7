"""Time-varying risk prices and the conditional mean system.

Expected excess returns combine world covariance risk and domestic
residual risk, each scaled by a strictly positive price built as
``exp(kappa' Z)`` from lagged information variables.  The world equation
carries only world covariance risk (its residual variance is identically
zero, so a domestic price for the world market is unidentified and
excluded from the layout).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigurationError, ShapeError
from .garch import residual_variance

if TYPE_CHECKING:  # pragma: no cover
    from .data import InstrumentSet

EXP_CLAMP = 50.0


@dataclass(frozen=True)
class PriceParams:
    """Exponential price weights; alpha/phi are present only when augmented."""

    kappa_world: np.ndarray
    kappa_local: np.ndarray
    alpha: np.ndarray | None = None
    phi: np.ndarray | None = None


@dataclass(frozen=True)
class PricePath:
    """Strictly positive world and domestic price series.

    ``clamped`` flags that some exponent exceeded the +/-50 guard; an
    optimum reached with active clamps is unreliable.
    """

    delta_world: np.ndarray
    delta_local: np.ndarray
    clamped: bool


def risk_prices(params: PriceParams, instruments: "InstrumentSet") -> PricePath:
    """Evaluate ``delta = exp(kappa' Z)`` paths for the world and each country."""
    zg = instruments.z_global
    kw = np.asarray(params.kappa_world, dtype=float)
    if kw.shape != (zg.shape[1],):
        raise ShapeError(
            f"kappa_world has shape {kw.shape}, instruments give {zg.shape[1]}"
        )
    n_local = len(instruments.z_local)
    kl = np.asarray(params.kappa_local, dtype=float)
    if kl.shape != (n_local, instruments.n_local):
        raise ShapeError(
            f"kappa_local has shape {kl.shape}, expected "
            f"({n_local}, {instruments.n_local})"
        )
    x_world = zg @ kw
    x_local = np.column_stack(
        [instruments.z_local[i] @ kl[i] for i in range(n_local)]
    ) if n_local else np.zeros((zg.shape[0], 0))
    clamped = bool(
        np.any(np.abs(x_world) > EXP_CLAMP) or np.any(np.abs(x_local) > EXP_CLAMP)
    )
    delta_world = np.exp(np.clip(x_world, -EXP_CLAMP, EXP_CLAMP))
    delta_local = np.exp(np.clip(x_local, -EXP_CLAMP, EXP_CLAMP))
    return PricePath(delta_world=delta_world, delta_local=delta_local, clamped=clamped)


def conditional_mean(
    delta_t: float,
    delta_local_t: np.ndarray,
    H_t: np.ndarray,
    world_index: int,
) -> np.ndarray:
    """Model-implied mean: world covariance premium plus domestic premium.

    ``mu_i = delta * h_iW + delta_di * q_i`` for each country and
    ``mu_W = delta * h_WW`` for the world market.
    """
    H_t = np.asarray(H_t, dtype=float)
    n = H_t.shape[0]
    w = world_index
    delta_local_t = np.asarray(delta_local_t, dtype=float)
    if delta_local_t.shape != (n - 1,):
        raise ShapeError(f"delta_local_t must have shape ({n - 1},)")
    q = residual_variance(H_t, w)
    dl = np.zeros(n)
    dl[:w] = delta_local_t[:w]
    dl[w + 1 :] = delta_local_t[w:]
    return delta_t * H_t[:, w] + dl * q


def augmented_mean(
    alpha: np.ndarray,
    phi: np.ndarray,
    z_local_row: np.ndarray,
    mu_t: np.ndarray,
) -> np.ndarray:
    """Add country intercepts and residual local-information terms.

    ``phi`` multiplies only the non-constant local instruments (the
    constant's role is taken by ``alpha``); the world entry is unchanged.
    """
    if alpha is None or phi is None:
        raise ConfigurationError("augmented mean requires alpha and phi")
    alpha = np.asarray(alpha, dtype=float)
    phi = np.asarray(phi, dtype=float)
    z_local_row = np.asarray(z_local_row, dtype=float)
    n_local = alpha.shape[0]
    if z_local_row.shape[0] != n_local or phi.shape != (
        n_local,
        z_local_row.shape[1] - 1,
    ):
        raise ShapeError("alpha/phi/instrument-row dimensions disagree")
    out = np.asarray(mu_t, dtype=float).copy()
    out[:n_local] += alpha + np.sum(phi * z_local_row[:, 1:], axis=1)
    return out


def residuals(r_t: np.ndarray, mu_t: np.ndarray) -> np.ndarray:
    """Pricing errors ``eps_t = r_t - mu_t``."""
    r_t = np.asarray(r_t, dtype=float)
    mu_t = np.asarray(mu_t, dtype=float)
    if r_t.shape != mu_t.shape:
        raise ShapeError("returns and means must have equal shapes")
    return r_t - mu_t
