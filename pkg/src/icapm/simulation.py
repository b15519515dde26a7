"""Synthetic panels drawn from the exact model data-generating process.

Used as the oracle for likelihood, recovery and test-size experiments:
returns are ``r_t = mu_t + eps_t`` with ``eps_t ~ N(0, H_t)`` along the
joint mean/covariance recursion, instruments follow an exogenous
stationary process, and a burn-in washes out the covariance start.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import InstrumentSet, ModelSpec, ReturnsPanel, layout, month_index, month_label
from .errors import ConfigurationError, SimulationError
from .garch import CovariancePath, indicator_innovations
from .pricing import EXP_CLAMP, PricePath
from .utils import lower_triangular_root

EXPLOSION_FACTOR = 1e6


@dataclass(frozen=True)
class InstrumentProcess:
    """Exogenous instrument dynamics: constant, iid gaussian, or AR(1)."""

    kind: str = "iid-gaussian"
    scale: float = 0.1
    rho: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "iid-gaussian", "ar1"):
            raise ConfigurationError(f"unknown instrument process {self.kind!r}")
        if self.scale <= 0.0:
            raise ConfigurationError("scale must be positive")
        if not abs(self.rho) < 1.0:
            raise ConfigurationError("|rho| must be below 1")

    def draw(self, rng: np.random.Generator, t_len: int, width: int) -> np.ndarray:
        """A (t_len, width) matrix whose first column is the constant."""
        out = np.ones((t_len, width))
        if width == 1 or self.kind == "constant":
            return out
        k = width - 1
        if self.kind == "iid-gaussian":
            out[:, 1:] = self.scale * rng.standard_normal((t_len, k))
            return out
        x = np.empty((t_len, k))
        x[0] = self.scale / np.sqrt(1.0 - self.rho**2) * rng.standard_normal(k)
        shocks = self.scale * rng.standard_normal((t_len, k))
        for t in range(1, t_len):
            x[t] = self.rho * x[t - 1] + shocks[t]
        out[:, 1:] = x
        return out


@dataclass(frozen=True)
class SimulationConfig:
    """Everything needed to reproduce one synthetic sample."""

    theta_true: np.ndarray
    spec: ModelSpec
    n_periods: int
    seed: int
    instrument_process: InstrumentProcess = field(default_factory=InstrumentProcess)
    burn_in: int = 200
    start_month: str = "1970-02"
    asset_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.n_periods < 2:
            raise ConfigurationError("n_periods must be >= 2")
        if self.burn_in < 0:
            raise ConfigurationError("burn_in must be >= 0")
        month_index(self.start_month)


@dataclass(frozen=True)
class SimulatedData:
    """Panel, instruments and the true latent paths behind them."""

    panel: ReturnsPanel
    instruments: InstrumentSet
    cov_path: CovariancePath
    prices: PricePath
    theta_true: np.ndarray


def _psd_factor(h: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(h)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(h)
        if vals.min() < -1e-8:
            raise SimulationError("covariance lost positive semidefiniteness")
        return vecs * np.sqrt(np.maximum(vals, 0.0))


def simulate_panel(config: SimulationConfig) -> SimulatedData:
    """Draw a reproducible panel from the model at ``theta_true``."""
    spec = config.spec
    lay = layout(spec)
    theta = np.asarray(config.theta_true, dtype=float)
    if theta.shape != (lay.size,):
        raise ConfigurationError(
            f"theta_true has length {theta.shape}, layout expects {lay.size}"
        )
    prices_p, garch_p = lay.unpack(theta)
    n = spec.n_assets
    w = n - 1
    total = config.burn_in + config.n_periods
    rng = np.random.default_rng(config.seed)

    z_global = config.instrument_process.draw(rng, total, spec.n_global)
    z_local = [
        config.instrument_process.draw(rng, total, spec.n_local)
        for _ in range(n - 1)
    ]

    log_dw = z_global @ prices_p.kappa_world
    log_dl = (
        np.column_stack([z_local[i] @ prices_p.kappa_local[i] for i in range(n - 1)])
        if n > 1
        else np.zeros((total, 0))
    )
    clamped = bool(
        np.any(np.abs(log_dw) > EXP_CLAMP) or np.any(np.abs(log_dl) > EXP_CLAMP)
    )
    dw = np.exp(np.clip(log_dw, -EXP_CLAMP, EXP_CLAMP))
    dl = np.exp(np.clip(log_dl, -EXP_CLAMP, EXP_CLAMP))

    if spec.is_augmented:
        zl_rest = np.stack([z[:, 1:] for z in z_local])
        add = prices_p.alpha[None, :] + np.sum(
            prices_p.phi[None, :, :] * np.transpose(zl_rest, (1, 0, 2)), axis=2
        )
    else:
        add = None

    ctc = garch_p.C.T @ garch_p.C
    bb = np.outer(garch_p.b, garch_p.b)

    big_h = np.empty((total, n, n))
    eps = np.empty((total, n))
    mu = np.empty((total, n))
    returns = np.empty((total, n))
    xi = np.empty((total, n))
    eta = np.empty((total, n))
    big_h[0] = ctc
    init_diag = np.maximum(np.diagonal(ctc), 1e-12)

    for t in range(total):
        h_t = big_h[t]
        h_diag = np.diagonal(h_t)
        if not np.isfinite(h_t).all() or np.any(
            h_diag > EXPLOSION_FACTOR * init_diag
        ):
            raise SimulationError(
                f"explosive covariance path at period {t}; "
                "use smaller a/b loadings"
            )
        h_w = h_t[:, w]
        q = np.maximum(h_diag - h_w**2 / h_t[w, w], 0.0)
        q[w] = 0.0
        mu_t = dw[t] * h_w
        mu_t[:w] += dl[t] * q[:w]
        if add is not None:
            mu_t[:w] += add[t]
        factor = _psd_factor(h_t)
        eps[t] = factor @ rng.standard_normal(n)
        mu[t] = mu_t
        returns[t] = mu_t + eps[t]
        xi[t], eta[t] = indicator_innovations(eps[t], np.maximum(h_diag, 1e-300))
        if t + 1 < total:
            ae = garch_p.a * eps[t]
            se = garch_p.s * xi[t]
            ze = garch_p.z * eta[t]
            big_h[t + 1] = (
                ctc
                + np.outer(ae, ae)
                + bb * h_t
                + np.outer(se, se)
                + np.outer(ze, ze)
            )

    keep = slice(config.burn_in, total)
    start = month_index(config.start_month)
    dates = tuple(month_label(start + i) for i in range(config.n_periods))
    names = config.asset_names or tuple(
        [f"asset{i + 1}" for i in range(n - 1)] + ["world"]
    )
    if len(names) != n:
        raise ConfigurationError(f"need {n} asset names, got {len(names)}")

    panel = ReturnsPanel(
        dates=dates,
        values=returns[keep],
        asset_names=names,
        world_index=w,
    )
    instruments = InstrumentSet(
        z_global=z_global[keep],
        z_local=tuple(z[keep] for z in z_local),
        global_names=("const", *[f"g{j}" for j in range(1, spec.n_global)]),
        local_names=tuple(
            ("const", *[f"l{j}" for j in range(1, spec.n_local)])
            for _ in range(n - 1)
        ),
    )
    cov_path = CovariancePath(
        H=big_h[keep],
        eps=eps[keep],
        xi=xi[keep],
        eta=eta[keep],
        h_diag=np.diagonal(big_h[keep], axis1=1, axis2=2).copy(),
    )
    prices = PricePath(
        delta_world=dw[keep], delta_local=dl[keep], clamped=clamped
    )
    return SimulatedData(
        panel=panel,
        instruments=instruments,
        cov_path=cov_path,
        prices=prices,
        theta_true=theta,
    )


def plausible_theta(spec: ModelSpec) -> np.ndarray:
    """A deterministic, stationary truth for demos and simulation defaults.

    World price near 2, domestic prices near 1, moderate correlation in
    the covariance intercept, strong persistence and mild asymmetry.
    """
    lay = layout(spec)
    n = spec.n_assets
    theta = np.zeros(lay.size)
    theta[lay.kappa_world.start] = np.log(2.0)
    sd = 0.04 * (1.0 + 0.1 * np.arange(n))
    corr = np.full((n, n), 0.4)
    np.fill_diagonal(corr, 1.0)
    omega = np.outer(sd, sd) * corr
    a = np.full(n, 0.30)
    b = np.full(n, 0.70)
    c = lower_triangular_root(omega * (1.0 - a**2 - b**2))
    theta[lay.c_vech] = c[np.tril_indices(n)]
    theta[lay.a] = a
    theta[lay.b] = b
    if lay.s is not None:
        theta[lay.s] = np.where(np.arange(n) % 2 == 0, 0.20, 0.15)
        theta[lay.z] = np.where(np.arange(n) % 2 == 0, -0.15, 0.10)
    return theta
