"""Asymmetric diagonal multivariate GARCH covariance engine.

The conditional covariance follows

    H_t = C'C + aa' o (e e') + bb' o H_{t-1} + ss' o (xi xi') + zz' o (eta eta')

with ``o`` the Hadamard product, ``e`` the lagged residual vector, ``xi``
the negative-shock innovations and ``eta`` the large-shock innovations.
Every term is positive semidefinite (the rank-one Hadamard forms equal
outer products of scaled vectors; ``bb' o H`` is PSD by the Schur product
theorem), so the recursion preserves PSD by construction.  Setting
``s = z = 0`` recovers the symmetric diagonal process.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

PSD_TOL = 1e-8


@dataclass(frozen=True)
class GarchParams:
    """Recursion parameters: lower-triangular intercept root and loading vectors."""

    C: np.ndarray
    a: np.ndarray
    b: np.ndarray
    s: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.C, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ShapeError("C must be square")
        if np.any(np.triu(c, 1) != 0.0):
            raise ShapeError("C must be lower triangular")
        n = c.shape[0]
        for name in ("a", "b", "s", "z"):
            vec = np.asarray(getattr(self, name), dtype=float)
            if vec.shape != (n,):
                raise ShapeError(f"{name} must have shape ({n},)")
            object.__setattr__(self, name, vec)
        object.__setattr__(self, "C", c)

    @classmethod
    def symmetric(cls, C, a, b) -> "GarchParams":
        n = np.asarray(a).shape[0]
        return cls(C=C, a=a, b=b, s=np.zeros(n), z=np.zeros(n))

    @property
    def n_assets(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class CovariancePath:
    """Conditional covariance path with residuals and indicator innovations.

    ``xi[t]`` and ``eta[t]`` are built from ``eps[t]`` and the diagonal of
    ``H[t]`` (same period); the recursion consumes them at ``t + 1``.
    """

    H: np.ndarray
    eps: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    h_diag: np.ndarray

    @property
    def n_periods(self) -> int:
        return self.H.shape[0]

    @property
    def n_assets(self) -> int:
        return self.H.shape[1]

    def validate(self, tol: float = PSD_TOL) -> None:
        """Check symmetry, PSD and indicator definitions along the path."""
        for t in range(self.n_periods):
            h = self.H[t]
            if not np.allclose(h, h.T, atol=1e-12, rtol=0.0):
                raise DomainError(f"H[{t}] is not symmetric")
            if np.linalg.eigvalsh(h).min() < -tol:
                raise DomainError(f"H[{t}] has eigenvalue below -{tol}")
        if not np.array_equal(
            self.h_diag, np.diagonal(self.H, axis1=1, axis2=2)
        ):
            raise DomainError("h_diag does not match the diagonal of H")
        xi_ref = np.where(self.eps < 0.0, self.eps, 0.0)
        eta_ref = np.where(np.abs(self.eps) > np.sqrt(self.h_diag), self.eps, 0.0)
        if not np.array_equal(self.xi, xi_ref) or not np.array_equal(
            self.eta, eta_ref
        ):
            raise DomainError("indicator innovations inconsistent with eps/H")


def _check_psd(h: np.ndarray, tol: float, what: str) -> None:
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ShapeError(f"{what} must be a square matrix")
    if not np.allclose(h, h.T, atol=1e-10, rtol=0.0):
        raise DomainError(f"{what} is not symmetric")
    if np.linalg.eigvalsh(h).min() < -tol:
        raise DomainError(f"{what} is not positive semidefinite")


def indicator_innovations(
    eps_t: np.ndarray, h_diag_t: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Negative-shock and large-shock innovations for one period.

    ``xi_i = eps_i`` when ``eps_i < 0`` (else 0); ``eta_i = eps_i`` when
    ``|eps_i| > sqrt(h_ii)`` (else 0).  Both inequalities are strict, so
    boundary cases map to zero.
    """
    eps_t = np.asarray(eps_t, dtype=float)
    h_diag_t = np.asarray(h_diag_t, dtype=float)
    if eps_t.shape != h_diag_t.shape:
        raise ShapeError("eps and h_diag must have equal shapes")
    if np.any(h_diag_t <= 0.0):
        raise DomainError("conditional variances must be strictly positive")
    xi = np.where(eps_t < 0.0, eps_t, 0.0)
    eta = np.where(np.abs(eps_t) > np.sqrt(h_diag_t), eps_t, 0.0)
    return xi, eta


def _step(H_prev, eps_prev, xi_prev, eta_prev, params: GarchParams) -> np.ndarray:
    # mirrored element-for-element by the fused likelihood loop; keep the
    # operation order in sync with likelihood._eval_batch
    ae = params.a * eps_prev
    se = params.s * xi_prev
    ze = params.z * eta_prev
    return (
        params.C.T @ params.C
        + np.outer(ae, ae)
        + np.outer(params.b, params.b) * H_prev
        + np.outer(se, se)
        + np.outer(ze, ze)
    )


def covariance_step(
    H_prev: np.ndarray,
    eps_prev: np.ndarray,
    xi_prev: np.ndarray,
    eta_prev: np.ndarray,
    params: GarchParams,
) -> np.ndarray:
    """One asymmetric recursion step from ``H_{t-1}`` to ``H_t``."""
    _check_psd(H_prev, PSD_TOL, "H_prev")
    return _step(H_prev, eps_prev, xi_prev, eta_prev, params)


def symmetric_covariance_step(
    H_prev: np.ndarray, eps_prev: np.ndarray, C: np.ndarray, a: np.ndarray, b: np.ndarray
) -> np.ndarray:
    """One step of the symmetric diagonal process (no indicator terms).

    Kept as an independent coding of the ``s = z = 0`` reduction; the
    asymmetric step must reproduce it bit-for-bit when the indicator
    loadings vanish.
    """
    _check_psd(H_prev, PSD_TOL, "H_prev")
    ae = np.asarray(a, dtype=float) * np.asarray(eps_prev, dtype=float)
    return np.asarray(C).T @ np.asarray(C) + np.outer(ae, ae) + np.outer(b, b) * H_prev


def run_recursion(
    eps: np.ndarray, params: GarchParams, H_init: np.ndarray
) -> CovariancePath:
    """Run the covariance recursion over a residual panel.

    ``H[0] = H_init``; for later periods ``H[t]`` follows from
    ``eps[t-1]`` and the indicators built from the diagonal of ``H[t-1]``.
    Raises :class:`DomainError` with the offending period index if the
    path loses positive semidefiniteness beyond tolerance.
    """
    eps = np.asarray(eps, dtype=float)
    if eps.ndim != 2:
        raise ShapeError("eps must be T x N")
    t_len, n = eps.shape
    _check_psd(H_init, PSD_TOL, "H_init")

    H = np.empty((t_len, n, n))
    xi = np.empty((t_len, n))
    eta = np.empty((t_len, n))
    h_diag = np.empty((t_len, n))
    H[0] = H_init
    for t in range(t_len):
        if t > 0:
            H[t] = _step(H[t - 1], eps[t - 1], xi[t - 1], eta[t - 1], params)
            if np.linalg.eigvalsh(H[t]).min() < -PSD_TOL:
                raise DomainError(f"PSD violation at period t={t}")
        h_diag[t] = np.diagonal(H[t])
        xi[t], eta[t] = indicator_innovations(eps[t], h_diag[t])
    return CovariancePath(H=H, eps=eps.copy(), xi=xi, eta=eta, h_diag=h_diag)


def run_symmetric_recursion(
    eps: np.ndarray, C: np.ndarray, a: np.ndarray, b: np.ndarray, H_init: np.ndarray
) -> CovariancePath:
    """Symmetric counterpart of :func:`run_recursion` (independent coding)."""
    eps = np.asarray(eps, dtype=float)
    t_len, n = eps.shape
    _check_psd(H_init, PSD_TOL, "H_init")
    H = np.empty((t_len, n, n))
    H[0] = H_init
    for t in range(1, t_len):
        H[t] = symmetric_covariance_step(H[t - 1], eps[t - 1], C, a, b)
        if np.linalg.eigvalsh(H[t]).min() < -PSD_TOL:
            raise DomainError(f"PSD violation at period t={t}")
    h_diag = np.diagonal(H, axis1=1, axis2=2).copy()
    if np.any(h_diag <= 0.0):
        raise DomainError("symmetric path produced nonpositive variances")
    xi = np.where(eps < 0.0, eps, 0.0)
    eta = np.where(np.abs(eps) > np.sqrt(h_diag), eps, 0.0)
    return CovariancePath(H=H, eps=eps.copy(), xi=xi, eta=eta, h_diag=h_diag)


def residual_variance(H_t: np.ndarray, world_index: int) -> np.ndarray:
    """Domestic residual variance ``q_i = h_ii - h_iW^2 / h_WW``.

    Nonnegative for PSD input by Cauchy-Schwarz; exactly zero at the world
    position.  Tiny negative values from rounding are clipped to zero.
    """
    H_t = np.asarray(H_t, dtype=float)
    w = world_index
    h_ww = H_t[w, w]
    if not h_ww > 0.0:
        raise DomainError("world conditional variance must be positive")
    h_w = H_t[:, w]
    q = np.diagonal(H_t) - h_w**2 / h_ww
    q = np.maximum(q, 0.0)
    q[w] = 0.0
    return q


def conditional_correlations(path: CovariancePath, world_index: int) -> np.ndarray:
    """Conditional correlations of each non-world asset with the world market."""
    w = world_index
    if np.any(path.h_diag <= 0.0):
        raise DomainError("conditional variances must be positive")
    keep = [i for i in range(path.n_assets) if i != w]
    cov_w = path.H[:, keep, w]
    scale = np.sqrt(path.h_diag[:, keep] * path.h_diag[:, [w]])
    return np.clip(cov_w / scale, -1.0, 1.0)
