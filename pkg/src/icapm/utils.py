"""Small shared helpers: hashing, threading caps, triangular roots."""

from __future__ import annotations

import hashlib
import os

import numpy as np

from .errors import DomainError

THREADS_ENV = "ICAPM_THREADS"


def thread_count() -> int:
    """Number of worker threads allowed for independent likelihood evaluations.

    Controlled by the ``ICAPM_THREADS`` environment variable; defaults to 1,
    which keeps every computation strictly sequential.
    """
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def sha256_file(path) -> str:
    """Hex digest of a file's contents."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def lower_triangular_root(mat: np.ndarray) -> np.ndarray:
    """Lower-triangular ``C`` with ``C.T @ C`` equal to ``mat``.

    Standard Cholesky gives ``L L'``; the recursion intercept needs the
    Gram form ``C'C`` instead, so factor the anti-transposed matrix and
    flip back.
    """
    mat = np.asarray(mat, dtype=float)
    flipped = mat[::-1, ::-1]
    try:
        upper = np.linalg.cholesky(flipped).T
    except np.linalg.LinAlgError as exc:
        raise DomainError("matrix is not positive definite") from exc
    c = upper[::-1, ::-1]
    # exact zeros above the diagonal, rounding can leave -0.0 artifacts
    return np.tril(c)
