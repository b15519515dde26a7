"""Two-stage quasi-maximum-likelihood estimation: simplex start, BHHH ascent.

The BHHH update is ``theta <- theta + lambda (G'G)^{-1} g`` with ``G`` the
per-period score matrix and ``g`` its column sum; ``lambda`` comes from a
backtracking Armijo line search on the penalized objective.  Accepted
steps never decrease the objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import InstrumentSet, ModelSpec, ParameterLayout, ReturnsPanel
from .errors import EstimationError
from .garch import CovariancePath
from .likelihood import (
    PreparedModel,
    _eval_batch,
    evaluate_model,
    loglik_prepared,
    per_period_scores,
    prepare,
)
from .pricing import PricePath
from .utils import lower_triangular_root

DEFAULT_TOL = 1e-5
DEFAULT_MAX_ITER = 200
RELATIVE_LL_TOL = 1e-9
ARMIJO_C = 1e-4
MAX_HALVINGS = 30
RIDGE_SCALE = 1e-8
SIMPLEX_BUDGET_PER_PARAM = 200


@dataclass
class EstimationResult:
    """Optimum, scores, paths and convergence metadata of one fit."""

    theta_hat: np.ndarray
    loglik: float  # penalized objective at the optimum
    penalty: float
    scores: np.ndarray  # (T, K) per-period scores at the optimum
    iterations: int
    converged: bool
    step_history: list = field(default_factory=list)
    cov_path: CovariancePath | None = None
    prices: PricePath | None = None
    spec: ModelSpec | None = None
    layout: ParameterLayout | None = None
    clamped: bool = False
    message: str = ""

    @property
    def loglik_unpenalized(self) -> float:
        return self.loglik + self.penalty

    @property
    def n_params(self) -> int:
        return self.theta_hat.shape[0]


def default_start(prep: PreparedModel) -> np.ndarray:
    """Data-driven default starting vector.

    Price weights are zero except a world constant of ``log(3.5)`` (a
    typical average price of market risk); the intercept root targets
    half the sample covariance; ARCH/GARCH loadings start at moderate
    persistence and the indicator loadings just off zero.
    """
    lay = prep.layout
    n = prep.n_assets
    theta = np.zeros(lay.size)
    theta[lay.kappa_world.start] = math.log(3.5)
    centered = prep.r - prep.r.mean(axis=0)
    sample_cov = centered.T @ centered / prep.n_periods
    c = lower_triangular_root(0.5 * sample_cov)
    theta[lay.c_vech] = c[np.tril_indices(n)]
    theta[lay.a] = 0.3
    theta[lay.b] = 0.7
    if lay.s is not None:
        theta[lay.s] = 0.01
        theta[lay.z] = 0.01
    return theta


def nelder_mead_maximize(
    fun,
    x0: np.ndarray,
    budget: int,
) -> tuple[np.ndarray, float]:
    """Nelder-Mead ascent on ``fun`` within a fixed evaluation budget.

    Standard coefficients (reflection 1, expansion 2, contraction 0.5,
    shrink 0.5).  Returns the best vertex and its value; the result is
    never worse than ``x0`` because the start is itself a vertex.  A
    budget of ``K + 1`` builds exactly one simplex and returns its best
    vertex.  Non-finite objective values are treated as ``-inf``.
    """
    x0 = np.asarray(x0, dtype=float)
    k = x0.shape[0]
    if budget < k + 1:
        raise EstimationError(f"simplex budget must be at least K+1 = {k + 1}")

    evals_left = budget

    def objective(x: np.ndarray) -> float:
        nonlocal evals_left
        evals_left -= 1
        val = float(fun(x))
        return val if np.isfinite(val) else -np.inf

    # initial simplex: relative 5% displacement, absolute for zero coords
    vertices = [x0.copy()]
    for i in range(k):
        v = x0.copy()
        v[i] += 0.05 * abs(v[i]) if v[i] != 0.0 else 0.00025
        vertices.append(v)
    values = [objective(v) for v in vertices]
    if not any(np.isfinite(v) for v in values):
        raise EstimationError("all initial simplex vertices are infeasible")

    def reorder():
        order = sorted(range(len(values)), key=lambda i: values[i], reverse=True)
        return [vertices[i] for i in order], [values[i] for i in order]

    vertices, values = reorder()

    while evals_left > 0:
        centroid = np.mean(np.asarray(vertices[:-1]), axis=0)
        worst = vertices[-1]
        reflected = centroid + (centroid - worst)
        f_r = objective(reflected)
        if f_r > values[0]:
            if evals_left > 0:
                expanded = centroid + 2.0 * (centroid - worst)
                f_e = objective(expanded)
                if f_e > f_r:
                    vertices[-1], values[-1] = expanded, f_e
                else:
                    vertices[-1], values[-1] = reflected, f_r
            else:
                vertices[-1], values[-1] = reflected, f_r
        elif f_r > values[-2]:
            vertices[-1], values[-1] = reflected, f_r
        elif evals_left > 0:
            contracted = centroid + 0.5 * (worst - centroid)
            f_c = objective(contracted)
            if f_c > values[-1]:
                vertices[-1], values[-1] = contracted, f_c
            else:
                best = vertices[0]
                for i in range(1, k + 1):
                    if evals_left <= 0:
                        break
                    vertices[i] = best + 0.5 * (vertices[i] - best)
                    values[i] = objective(vertices[i])
        vertices, values = reorder()
        if np.isfinite(values[-1]) and values[0] - values[-1] < 1e-12:
            break
    return vertices[0], values[0]


def simplex_initialize(
    theta0: np.ndarray,
    prep: PreparedModel,
    budget: int,
) -> np.ndarray:
    """Improve a starting vector by Nelder-Mead on the penalized likelihood."""
    best, _ = nelder_mead_maximize(
        lambda x: loglik_prepared(x, prep).total_loglik,
        np.asarray(theta0, dtype=float),
        budget,
    )
    return best


def _solve_direction(scores: np.ndarray, grad: np.ndarray) -> np.ndarray:
    gtg = scores.T @ scores
    k = gtg.shape[0]
    if not np.isfinite(gtg).all():
        raise EstimationError("scores contain non-finite values")
    if np.linalg.cond(gtg) > 1e12:
        gtg = gtg + (RIDGE_SCALE * np.trace(gtg) / k) * np.eye(k)
    try:
        return np.linalg.solve(gtg, grad)
    except np.linalg.LinAlgError:
        gtg = gtg + (RIDGE_SCALE * max(np.trace(gtg), 1.0) / k) * np.eye(k)
        return np.linalg.solve(gtg, grad)


def _line_search(theta, direction, slope, f_val, prep):
    """Backtracking Armijo search.

    Returns ``(lambda, value, masks)`` for the first accepted step in
    1, 1/2, 1/4, ..., or ``(None, None, None)`` after 30 halvings.  The
    leading halvings after a rejected full step are evaluated as one
    batch, which changes cost but not the accepted step.  ``masks`` are
    the indicator regimes at the accepted point, reused by the caller
    for the next score evaluation.
    """

    def armijo(lam: float, value: float) -> bool:
        return np.isfinite(value) and value >= f_val + ARMIJO_C * lam * slope

    def single(lam: float):
        batch = _eval_batch(
            (theta + lam * direction)[None, :], prep, store_masks=True
        )
        return float(batch.totals()[0]), batch

    value, batch = single(1.0)
    if armijo(1.0, value):
        return 1.0, value, batch.masks_of(0)

    block = 6
    lams = [0.5**j for j in range(1, block + 1)]
    batch = _eval_batch(
        np.asarray([theta + lam * direction for lam in lams]),
        prep,
        store_masks=True,
    )
    totals = batch.totals()
    for j, lam in enumerate(lams):
        if armijo(lam, totals[j]):
            return lam, float(totals[j]), batch.masks_of(j)
    lam = lams[-1]
    for _ in range(block + 1, MAX_HALVINGS + 1):
        lam *= 0.5
        value, batch = single(lam)
        if armijo(lam, value):
            return lam, value, batch.masks_of(0)
    return None, None, None


RESCUE_GAIN = 0.05  # log-likelihood units; below this a stall is benign


def _ascent_probe(theta, grad, f_val, prep):
    """Try short moves along the raw gradient; None when nothing helps.

    Only a material gain (RESCUE_GAIN log-likelihood units) counts: the
    probe exists to pull the optimizer off degenerate outer-product
    directions near indicator boundaries, not to polish the last digits.
    One batched evaluation, so the probe is cheap.
    """
    norm = float(np.linalg.norm(grad))
    if not np.isfinite(norm) or norm == 0.0:
        return None
    unit = grad / norm
    steps = (1e-2, 1e-3, 1e-4)
    batch = _eval_batch(
        np.asarray([theta + t * unit for t in steps]), prep, store_masks=True
    )
    totals = batch.totals()
    best = int(np.argmax(totals))
    if not np.isfinite(totals[best]) or totals[best] <= f_val + RESCUE_GAIN:
        return None
    return theta + steps[best] * unit, float(totals[best]), batch.masks_of(best)


def bhhh_maximize(
    theta_init: np.ndarray,
    prep: PreparedModel,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    rel_tol: float = RELATIVE_LL_TOL,
) -> EstimationResult:
    """BHHH ascent from ``theta_init`` until the gradient or step stalls.

    Converged when the sup-norm of the summed scores falls below ``tol``
    or the relative objective change falls below ``rel_tol`` (1e-9 by
    default) with no steepest-ascent rescue available.  A failed line
    search (30 halvings) terminates with ``converged=False`` and
    diagnostics in ``message``.
    """
    theta = np.asarray(theta_init, dtype=float).copy()
    start = _eval_batch(theta[None, :], prep, store_masks=True)
    f_val = float(start.totals()[0])
    if not np.isfinite(f_val):
        raise EstimationError("likelihood not finite at theta_init")
    masks = start.masks_of(0)

    history: list = []
    converged = False
    message = ""
    iterations = 0
    scores = per_period_scores(theta, prep, indicators=masks, base_checked=True)

    for iteration in range(1, max_iter + 1):
        grad = scores.sum(axis=0)
        grad_norm = float(np.abs(grad).max())
        if grad_norm < tol:
            converged = True
            message = f"gradient norm {grad_norm:.3e} below tol"
            break
        direction = _solve_direction(scores, grad)
        slope = float(grad @ direction)
        if not np.isfinite(slope) or slope <= 0.0:
            message = "search direction lost ascent property"
            break

        lam, f_cand, masks = _line_search(theta, direction, slope, f_val, prep)
        if lam is None:
            message = (
                f"line search failed after {MAX_HALVINGS} halvings "
                f"(grad norm {grad_norm:.3e})"
            )
            break

        iterations = iteration
        history.append(
            {
                "iteration": iteration,
                "loglik": float(f_cand),
                "step": lam,
                "grad_norm": grad_norm,
            }
        )
        theta = theta + lam * direction
        improvement = f_cand - f_val
        f_val = f_cand
        scores = per_period_scores(
            theta, prep, indicators=masks, base_checked=True
        )
        if abs(improvement) <= rel_tol * max(1.0, abs(f_val)):
            # the outer-product direction can degenerate near indicator
            # boundaries while the gradient is still large; probe a few
            # steepest-ascent steps before declaring the stop a stall
            rescue = _ascent_probe(theta, scores.sum(axis=0), f_val, prep)
            if rescue is None:
                converged = True
                message = f"relative objective change below {rel_tol:g}"
                break
            theta, f_val, masks = rescue
            scores = per_period_scores(
                theta, prep, indicators=masks, base_checked=True
            )
    else:
        message = f"maximum iterations ({max_iter}) reached"

    final = loglik_prepared(theta, prep)
    path = evaluate_model(theta, prep)
    return EstimationResult(
        theta_hat=theta,
        loglik=final.total_loglik,
        penalty=final.penalty_applied,
        scores=scores,
        iterations=iterations,
        converged=converged,
        step_history=history,
        cov_path=path.cov_path,
        prices=path.prices,
        spec=prep.spec,
        layout=prep.layout,
        clamped=final.clamp_flag,
        message=message,
    )


def fit(
    panel: ReturnsPanel,
    instruments: InstrumentSet,
    spec: ModelSpec,
    theta0: np.ndarray | None = None,
    simplex_budget: int | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    rel_tol: float = RELATIVE_LL_TOL,
    h_init: np.ndarray | None = None,
) -> EstimationResult:
    """Full pipeline: prepare, simplex warm-up, BHHH ascent."""
    prep = prepare(panel, instruments, spec, h_init)
    return fit_prepared(
        prep,
        theta0=theta0,
        simplex_budget=simplex_budget,
        max_iter=max_iter,
        tol=tol,
        rel_tol=rel_tol,
    )


def fit_prepared(
    prep: PreparedModel,
    theta0: np.ndarray | None = None,
    simplex_budget: int | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    rel_tol: float = RELATIVE_LL_TOL,
) -> EstimationResult:
    """Like :func:`fit` for data that is already prepared."""
    if theta0 is None:
        theta0 = default_start(prep)
    if simplex_budget is None:
        simplex_budget = SIMPLEX_BUDGET_PER_PARAM * prep.layout.size
    if simplex_budget > 0:
        theta0 = simplex_initialize(theta0, prep, simplex_budget)
    return bhhh_maximize(theta0, prep, max_iter=max_iter, tol=tol, rel_tol=rel_tol)
