"""Gaussian quasi-likelihood of the joint mean/covariance recursion.

The per-period contribution is

    l_t = -N/2 log(2 pi) - 1/2 log|H_t| - 1/2 e_t' H_t^{-1} e_t

evaluated along the fused path: the mean at ``t`` uses ``H_t``, the
residual ``e_t`` feeds the covariance recursion at ``t + 1``.  The
evaluator is batched over parameter vectors because finite-difference
scores and Hessian columns are embarrassingly parallel; a batch of one is
the scalar case.  The batched loop mirrors the element-level arithmetic
of :mod:`icapm.garch` and :mod:`icapm.pricing` exactly, so a fused path
and a step-by-step composition of those modules agree bit-for-bit.

A soft stationarity penalty ``1e4 * sum_i max(0, a_i^2 + b_i^2 +
s_i^2/2 + z_i^2/2 - 0.9999)^2`` is subtracted from the objective to keep
the optimizer out of explosive regions; the 1/2 weights approximate how
often each indicator is active.

The large-shock indicator makes the objective discontinuous wherever an
observation sits exactly on its ``|e| = sqrt(h)`` boundary (the payload
jumps by ``sqrt(h)``), and optima often ride such boundaries.  Scores
and Hessians therefore default to the almost-everywhere derivative:
indicator regimes are frozen at the expansion point while the finite
differences are taken, which removes the ``O(jump / step)`` spikes a
naive difference picks up at a boundary.  Away from boundaries the
frozen and free evaluations coincide exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import InstrumentSet, ModelSpec, ParameterLayout, ReturnsPanel, layout
from .errors import ConfigurationError, DomainError, EstimationError, ShapeError
from .garch import PSD_TOL, CovariancePath
from .pricing import EXP_CLAMP, PricePath

LOG_2PI = math.log(2.0 * math.pi)
PENALTY_WEIGHT = 1e4
STATIONARITY_MARGIN = 0.9999
CONDITION_LIMIT = 1e12
SCORE_STEP = 1e-5


@dataclass(frozen=True)
class LikelihoodResult:
    """Total and per-period log-likelihood with evaluation metadata.

    ``total_loglik = per_period.sum() - penalty_applied`` unless the
    evaluation failed, in which case ``total_loglik`` is ``-inf`` and
    ``fail_index`` names the offending period.
    """

    total_loglik: float
    per_period: np.ndarray
    clamp_flag: bool
    penalty_applied: float
    failed: bool = False
    fail_index: int | None = None


@dataclass(frozen=True)
class ModelPath:
    """Full fitted path at one parameter vector."""

    cov_path: CovariancePath
    prices: PricePath
    mu: np.ndarray
    loglik: LikelihoodResult


@dataclass(frozen=True)
class PreparedModel:
    """Aligned arrays ready for repeated likelihood evaluation."""

    r: np.ndarray
    z_global: np.ndarray
    z_local: np.ndarray
    h_init: np.ndarray
    spec: ModelSpec
    layout: ParameterLayout

    @property
    def n_periods(self) -> int:
        return self.r.shape[0]

    @property
    def n_assets(self) -> int:
        return self.r.shape[1]


def default_h_init(returns: np.ndarray) -> np.ndarray:
    """Unconditional covariance of demeaned returns (recursion start)."""
    r = np.asarray(returns, dtype=float)
    centered = r - r.mean(axis=0)
    return centered.T @ centered / r.shape[0]


def prepare_arrays(
    returns: np.ndarray,
    z_global: np.ndarray,
    z_local,
    spec: ModelSpec,
    h_init: np.ndarray | None = None,
) -> PreparedModel:
    """Validate raw arrays against the spec and stack them for evaluation."""
    r = np.ascontiguousarray(returns, dtype=float)
    zg = np.ascontiguousarray(z_global, dtype=float)
    zl_list = [np.ascontiguousarray(z, dtype=float) for z in z_local]
    if r.ndim != 2:
        raise ShapeError("returns must be T x N")
    t_len, n = r.shape
    if n != spec.n_assets:
        raise ConfigurationError(
            f"spec has n_assets={spec.n_assets}, data has {n}"
        )
    if zg.shape != (t_len, spec.n_global):
        raise ConfigurationError(
            f"global instruments shaped {zg.shape}, expected "
            f"({t_len}, {spec.n_global})"
        )
    if len(zl_list) != n - 1:
        raise ConfigurationError(
            f"need {n - 1} local instrument matrices, got {len(zl_list)}"
        )
    for z in zl_list:
        if z.shape != (t_len, spec.n_local):
            raise ConfigurationError(
                f"local instruments shaped {z.shape}, expected "
                f"({t_len}, {spec.n_local})"
            )
    zl = np.stack(zl_list) if zl_list else np.zeros((0, t_len, spec.n_local))
    if h_init is None:
        h_init = default_h_init(r)
    h_init = np.asarray(h_init, dtype=float)
    if h_init.shape != (n, n):
        raise ShapeError(f"h_init must be ({n}, {n})")
    if not np.allclose(h_init, h_init.T, atol=1e-10, rtol=0.0):
        raise DomainError("h_init is not symmetric")
    if np.linalg.eigvalsh(h_init).min() < -PSD_TOL:
        raise DomainError("h_init is not positive semidefinite")
    return PreparedModel(
        r=r, z_global=zg, z_local=zl, h_init=h_init, spec=spec, layout=layout(spec)
    )


def prepare(
    panel: ReturnsPanel,
    instruments: InstrumentSet,
    spec: ModelSpec,
    h_init: np.ndarray | None = None,
) -> PreparedModel:
    """Validate a panel/instrument pair against the spec."""
    if panel.n_periods != instruments.n_periods:
        raise ConfigurationError("panel and instruments have different lengths")
    return prepare_arrays(
        panel.values, instruments.z_global, instruments.z_local, spec, h_init
    )


@dataclass(frozen=True)
class BatchEval:
    """Raw output of one batched evaluation (per-period values carry no penalty)."""

    per_period: np.ndarray  # (B, T)
    penalty: np.ndarray  # (B,)
    ok: np.ndarray  # (B,) bool
    fail_index: np.ndarray  # (B,) int, -1 when ok
    clamped: np.ndarray  # (B,) bool
    xi_mask: np.ndarray | None = None  # (B, T, N) bool when requested
    eta_mask: np.ndarray | None = None

    def totals(self) -> np.ndarray:
        out = self.per_period.sum(axis=1) - self.penalty
        out[~self.ok] = -np.inf
        return out

    def masks_of(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        if self.xi_mask is None:
            raise ValueError("evaluation did not store indicator masks")
        return self.xi_mask[index], self.eta_mask[index]


def _batch_cholesky(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cholesky of a batch, flagging members that fail instead of raising.

    A member that fails gets one retry with a trace-scaled jitter, which
    absorbs harmless rounding-level negative eigenvalues without masking
    genuinely singular matrices.
    """
    b, n, _ = h.shape
    try:
        return np.linalg.cholesky(h), np.ones(b, dtype=bool)
    except np.linalg.LinAlgError:
        factors = np.empty_like(h)
        ok = np.ones(b, dtype=bool)
        eye = np.eye(n)
        for i in range(b):
            try:
                factors[i] = np.linalg.cholesky(h[i])
            except np.linalg.LinAlgError:
                jitter = 1e-14 * max(float(np.trace(h[i])), 0.0) + 1e-300
                try:
                    factors[i] = np.linalg.cholesky(h[i] + jitter * eye)
                except np.linalg.LinAlgError:
                    factors[i] = eye
                    ok[i] = False
        return factors, ok


def _eval_batch(
    thetas: np.ndarray,
    prep: PreparedModel,
    store_path: bool = False,
    xi_mask: np.ndarray | None = None,
    eta_mask: np.ndarray | None = None,
    store_masks: bool = False,
):
    """Evaluate per-period contributions for a batch of parameter vectors.

    Returns ``BatchEval`` (and a path dict for a batch of one when
    ``store_path``).  Failed members continue on substituted identity
    covariances so the batch shapes survive; their output is masked.
    When ``xi_mask``/``eta_mask`` (T x N bool) are given, the indicator
    regimes are frozen to those patterns instead of being recomputed,
    which makes the objective smooth around the masking point.
    """
    lay = prep.layout
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    n_batch, width = thetas.shape
    if width != lay.size:
        raise ShapeError(f"theta length {width}, layout expects {lay.size}")
    t_len, n = prep.r.shape
    w = n - 1

    a_blk = thetas[:, lay.a]
    b_blk = thetas[:, lay.b]
    if lay.s is not None:
        s_blk = thetas[:, lay.s]
        z_blk = thetas[:, lay.z]
    else:
        s_blk = np.zeros((n_batch, n))
        z_blk = np.zeros((n_batch, n))

    load = a_blk**2 + b_blk**2 + 0.5 * s_blk**2 + 0.5 * z_blk**2
    penalty = PENALTY_WEIGHT * np.square(
        np.maximum(0.0, load - STATIONARITY_MARGIN)
    ).sum(axis=1)

    # price paths per member, same matmul/clip/exp chain as pricing.risk_prices
    log_dw = np.empty((n_batch, t_len))
    log_dl = np.empty((n_batch, t_len, w))
    for bi in range(n_batch):
        log_dw[bi] = prep.z_global @ thetas[bi, lay.kappa_world]
        for i, sl in enumerate(lay.kappa_local):
            log_dl[bi, :, i] = prep.z_local[i] @ thetas[bi, sl]
    clamped = (np.abs(log_dw) > EXP_CLAMP).any(axis=1) | (
        np.abs(log_dl) > EXP_CLAMP
    ).any(axis=(1, 2))
    dw = np.exp(np.clip(log_dw, -EXP_CLAMP, EXP_CLAMP))
    dl = np.exp(np.clip(log_dl, -EXP_CLAMP, EXP_CLAMP))

    # intercept Gram matrix and b-outer per member, matching garch._step
    ctc = np.empty((n_batch, n, n))
    bb = np.empty((n_batch, n, n))
    tril = np.tril_indices(n)
    for bi in range(n_batch):
        c = np.zeros((n, n))
        c[tril] = thetas[bi, lay.c_vech]
        ctc[bi] = c.T @ c
        bb[bi] = np.outer(b_blk[bi], b_blk[bi])

    if lay.alpha is not None:
        alpha = thetas[:, lay.alpha]
        phi = np.stack([thetas[:, sl] for sl in lay.phi], axis=1)
        # same sum-over-instruments expression as pricing.augmented_mean
        zl_rest = np.transpose(prep.z_local[:, :, 1:], (1, 0, 2))  # (T, N-1, L-1)
        add = alpha[:, None, :] + np.sum(
            phi[:, None, :, :] * zl_rest[None, :, :, :], axis=3
        )
    else:
        add = None

    big_h = np.broadcast_to(prep.h_init, (n_batch, n, n)).copy()
    per_period = np.zeros((n_batch, t_len))
    ok = np.ones(n_batch, dtype=bool)
    fail_index = np.full(n_batch, -1, dtype=int)
    eye = np.eye(n)
    const_term = -0.5 * n * LOG_2PI
    diag_ix = np.arange(n)

    if store_path:
        h_path = np.empty((n_batch, t_len, n, n))
        eps_path = np.empty((n_batch, t_len, n))
        xi_path = np.empty((n_batch, t_len, n))
        eta_path = np.empty((n_batch, t_len, n))
        mu_path = np.empty((n_batch, t_len, n))
    if store_masks:
        xi_mask_out = np.empty((n_batch, t_len, n), dtype=bool)
        eta_mask_out = np.empty((n_batch, t_len, n), dtype=bool)

    def _fail(mask: np.ndarray, t: int) -> bool:
        fresh = mask & ok
        if fresh.any():
            fail_index[fresh] = t
            ok[fresh] = False
            big_h[fresh] = eye
            return True
        return False

    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        for t in range(t_len):
            finite = np.isfinite(big_h).all(axis=(1, 2))
            bad = ~finite
            bad |= (big_h[:, diag_ix, diag_ix] <= 0.0).any(axis=1)
            _fail(bad, t)

            h_diag = big_h[:, diag_ix, diag_ix]
            h_w = big_h[:, :, w]
            h_ww = h_diag[:, w]
            q = h_diag - h_w**2 / h_ww[:, None]
            np.maximum(q, 0.0, out=q)
            q[:, w] = 0.0

            mu = dw[:, t][:, None] * h_w
            mu[:, :w] += dl[:, t, :] * q[:, :w]
            if add is not None:
                mu[:, :w] += add[:, t, :]
            eps = prep.r[t][None, :] - mu
            eps[~ok] = 0.0

            chol, chol_ok = _batch_cholesky(big_h)
            if _fail(~chol_ok, t):
                chol, _ = _batch_cholesky(big_h)
            diag_l = chol[:, diag_ix, diag_ix]
            # (max/min)^2 of the Cholesky diagonal as a condition proxy
            cond = (diag_l.max(axis=1) / diag_l.min(axis=1)) ** 2
            _fail(~np.isfinite(cond) | (cond > CONDITION_LIMIT), t)

            y = np.linalg.solve(chol, eps[:, :, None])[:, :, 0]
            per_period[:, t] = (
                const_term - np.log(diag_l).sum(axis=1) - 0.5 * (y * y).sum(axis=1)
            )

            if xi_mask is None:
                cond_xi = eps < 0.0
                cond_eta = np.abs(eps) > np.sqrt(h_diag)
            else:
                cond_xi = xi_mask[t]
                cond_eta = eta_mask[t]
            xi = np.where(cond_xi, eps, 0.0)
            eta = np.where(cond_eta, eps, 0.0)
            if store_masks:
                xi_mask_out[:, t] = cond_xi
                eta_mask_out[:, t] = cond_eta

            if store_path:
                h_path[:, t] = big_h
                eps_path[:, t] = eps
                xi_path[:, t] = xi
                eta_path[:, t] = eta
                mu_path[:, t] = mu

            if t + 1 < t_len:
                # term order mirrors garch._step exactly
                ae = a_blk * eps
                se = s_blk * xi
                ze = z_blk * eta
                h_next = ctc + ae[:, :, None] * ae[:, None, :]
                h_next += bb * big_h
                h_next += se[:, :, None] * se[:, None, :]
                h_next += ze[:, :, None] * ze[:, None, :]
                big_h = h_next
                big_h[~ok] = eye

    per_period[~ok] = np.nan
    result = BatchEval(
        per_period=per_period,
        penalty=penalty,
        ok=ok,
        fail_index=fail_index,
        clamped=clamped,
        xi_mask=xi_mask_out if store_masks else None,
        eta_mask=eta_mask_out if store_masks else None,
    )
    if not store_path:
        return result
    paths = {
        "H": h_path,
        "eps": eps_path,
        "xi": xi_path,
        "eta": eta_path,
        "mu": mu_path,
        "h_diag": np.diagonal(h_path, axis1=2, axis2=3).copy(),
        "delta_world": dw,
        "delta_local": dl,
    }
    return result, paths


def _result_from_batch(batch: BatchEval, index: int = 0) -> LikelihoodResult:
    if batch.ok[index]:
        per = batch.per_period[index].copy()
        total = float(per.sum() - batch.penalty[index])
        return LikelihoodResult(
            total_loglik=total,
            per_period=per,
            clamp_flag=bool(batch.clamped[index]),
            penalty_applied=float(batch.penalty[index]),
        )
    return LikelihoodResult(
        total_loglik=-np.inf,
        per_period=batch.per_period[index].copy(),
        clamp_flag=bool(batch.clamped[index]),
        penalty_applied=float(batch.penalty[index]),
        failed=True,
        fail_index=int(batch.fail_index[index]),
    )


def loglik_prepared(theta: np.ndarray, prep: PreparedModel) -> LikelihoodResult:
    """Likelihood at one parameter vector over prepared data."""
    batch = _eval_batch(np.asarray(theta, dtype=float)[None, :], prep)
    return _result_from_batch(batch)


def log_likelihood(
    theta: np.ndarray,
    panel: ReturnsPanel,
    instruments: InstrumentSet,
    spec: ModelSpec,
    h_init: np.ndarray | None = None,
) -> LikelihoodResult:
    """Gaussian quasi-log-likelihood of the model at ``theta``."""
    return loglik_prepared(theta, prepare(panel, instruments, spec, h_init))


def evaluate_model(theta: np.ndarray, prep: PreparedModel) -> ModelPath:
    """Likelihood plus full fitted paths (covariances, residuals, prices)."""
    theta = np.asarray(theta, dtype=float)
    batch, paths = _eval_batch(theta[None, :], prep, store_path=True)
    result = _result_from_batch(batch)
    if result.failed:
        raise EstimationError(
            f"likelihood evaluation failed at period {result.fail_index}"
        )
    cov_path = CovariancePath(
        H=paths["H"][0],
        eps=paths["eps"][0],
        xi=paths["xi"][0],
        eta=paths["eta"][0],
        h_diag=paths["h_diag"][0],
    )
    prices = PricePath(
        delta_world=paths["delta_world"][0],
        delta_local=paths["delta_local"][0],
        clamped=bool(batch.clamped[0]),
    )
    return ModelPath(cov_path=cov_path, prices=prices, mu=paths["mu"][0], loglik=result)


def _score_steps(theta: np.ndarray, rel_step: float) -> np.ndarray:
    return np.maximum(rel_step, rel_step * np.abs(theta))


def indicator_masks(
    theta: np.ndarray, prep: PreparedModel
) -> tuple[np.ndarray, np.ndarray, LikelihoodResult]:
    """Indicator regimes (T x N bool) active along the path at ``theta``."""
    batch, paths = _eval_batch(
        np.asarray(theta, dtype=float)[None, :], prep, store_path=True
    )
    result = _result_from_batch(batch)
    if result.failed:
        raise EstimationError(
            f"likelihood evaluation failed at period {result.fail_index}"
        )
    eps = paths["eps"][0]
    h_diag = paths["h_diag"][0]
    return eps < 0.0, np.abs(eps) > np.sqrt(h_diag), result


def per_period_scores(
    theta: np.ndarray,
    prep: PreparedModel,
    rel_step: float = SCORE_STEP,
    indicators="frozen",
    base_checked: bool = False,
) -> np.ndarray:
    """T x K matrix of central-difference per-period score contributions.

    Column ``k`` perturbs only ``theta_k`` by ``max(rel_step,
    rel_step * |theta_k|)``.  A failed perturbed evaluation retries once
    with a ten times smaller step, then raises.

    ``indicators`` selects the regime treatment: ``"frozen"`` (default)
    freezes the indicator patterns at ``theta``, giving the
    almost-everywhere derivative; ``"free"`` recomputes them at every
    perturbed point; an explicit ``(xi_mask, eta_mask)`` pair freezes
    them as given (used by the Hessian and by callers that already
    evaluated ``theta``, which can then set ``base_checked``).
    """
    theta = np.asarray(theta, dtype=float)
    k = theta.shape[0]
    if isinstance(indicators, str) and indicators == "frozen":
        xi_mask, eta_mask, _ = indicator_masks(theta, prep)
    elif isinstance(indicators, str) and indicators == "free":
        xi_mask = eta_mask = None
        if not base_checked:
            base = loglik_prepared(theta, prep)
            if base.failed:
                raise EstimationError(
                    "likelihood not finite at the expansion point"
                )
    else:
        xi_mask, eta_mask = indicators
        if not base_checked:
            base = _result_from_batch(
                _eval_batch(theta[None, :], prep, xi_mask=xi_mask, eta_mask=eta_mask)
            )
            if base.failed:
                raise EstimationError(
                    "likelihood not finite at the expansion point"
                )
    steps = _score_steps(theta, rel_step)
    plus = np.repeat(theta[None, :], k, axis=0)
    minus = np.repeat(theta[None, :], k, axis=0)
    plus[np.arange(k), np.arange(k)] += steps
    minus[np.arange(k), np.arange(k)] -= steps

    batch = _eval_batch(
        np.vstack([plus, minus]), prep, xi_mask=xi_mask, eta_mask=eta_mask
    )
    ll_plus = batch.per_period[:k]
    ll_minus = batch.per_period[k:]
    bad = ~(batch.ok[:k] & batch.ok[k:])
    if bad.any():
        for idx in np.where(bad)[0]:
            steps[idx] /= 10.0
            pair = np.repeat(theta[None, :], 2, axis=0)
            pair[0, idx] += steps[idx]
            pair[1, idx] -= steps[idx]
            retry = _eval_batch(pair, prep, xi_mask=xi_mask, eta_mask=eta_mask)
            if not retry.ok.all():
                raise EstimationError(
                    f"score evaluation failed for coordinate {idx}"
                )
            ll_plus[idx] = retry.per_period[0]
            ll_minus[idx] = retry.per_period[1]
    return ((ll_plus - ll_minus) / (2.0 * steps[:, None])).T


def total_gradient(
    theta: np.ndarray,
    prep: PreparedModel,
    rel_step: float = SCORE_STEP,
    indicators="frozen",
) -> np.ndarray:
    """Central-difference gradient of the summed per-period likelihood."""
    return per_period_scores(theta, prep, rel_step, indicators=indicators).sum(axis=0)
