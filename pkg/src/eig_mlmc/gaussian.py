"""Multivariate Gaussian density with cached Cholesky factor.

Used for priors, observation noise, and fitted importance distributions.  It
also satisfies the prior interface expected by :class:`eig_mlmc.bayes.BayesModel`
(``sample``, ``log_pdf``, ``grad_log_pdf``, ``hess_log_pdf``, ``dim``).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .streams import RandomStream, as_generator

__all__ = ["GaussianDensity", "safeguarded_cholesky"]

LOG_2PI = float(np.log(2.0 * np.pi))


class GaussianDensity:
    """N(mean, cov) with the lower Cholesky factor and log normaliser cached.

    All density arithmetic stays in log space.  ``log_pdf`` accepts a single
    point of shape (dim,) or a batch of shape (n, dim).
    """

    def __init__(self, mean, cov):
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError("mean must be a vector and cov a matching square matrix")
        if not np.allclose(cov, cov.T, rtol=1e-10, atol=0.0):
            raise ValueError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance must be positive definite") from exc
        self.mean = mean
        self.cov = cov
        self.chol = chol
        self.log_norm_const = float(
            -0.5 * mean.size * LOG_2PI - np.sum(np.log(np.diag(chol)))
        )
        self._prec = None  # lazy; only priors need it

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def precision(self) -> np.ndarray:
        if self._prec is None:
            eye = np.eye(self.dim)
            inv_l = solve_triangular(self.chol, eye, lower=True)
            self._prec = inv_l.T @ inv_l
        return self._prec

    def log_pdf(self, x) -> float | np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[-1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}")
        v = pts - self.mean
        u = solve_triangular(self.chol, v.T, lower=True)
        out = self.log_norm_const - 0.5 * np.sum(u * u, axis=0)
        return float(out[0]) if single else out

    def grad_log_pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return -(x - self.mean) @ self.precision

    def hess_log_pdf(self, x=None) -> np.ndarray:
        """Constant -precision; the argument is accepted for interface parity."""
        return -self.precision

    def sample(self, stream: RandomStream | np.random.Generator, size: int | None = None) -> np.ndarray:
        """Draw one point (size=None) or a (size, dim) batch.

        Draws raw standard normals first and colours them with the Cholesky
        factor, so the raw stream can be replayed independently.
        """
        rng = as_generator(stream)
        if size is None:
            return self.mean + self.chol @ rng.standard_normal(self.dim)
        z = rng.standard_normal((size, self.dim))
        return self.mean + z @ self.chol.T


def safeguarded_cholesky(mat: np.ndarray) -> tuple[np.ndarray | None, float]:
    """Cholesky with an escalating jitter ladder for non-PD inputs.

    Tries the matrix as given, then adds ``j * (trace/dim) * I`` for
    ``j = 1e-10, 1e-9, ..., 1e-4``.  Returns ``(chol, jitter_used)``; ``chol``
    is None when every attempt failed.
    """
    d = mat.shape[0]
    scale = float(np.trace(mat)) / d
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    jitter = 0.0
    step = 1e-10
    while True:
        try:
            return np.linalg.cholesky(mat + jitter * np.eye(d)), jitter
        except np.linalg.LinAlgError:
            if step > 1e-4:
                return None, jitter
            jitter = step * scale
            step *= 10.0
