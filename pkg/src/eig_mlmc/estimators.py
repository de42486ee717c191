"""Nested Monte Carlo and antithetic multilevel samplers.

One outer sample draws (theta, Y) from the joint model; M inner samples give
a log-mean of importance weights estimating log p(Y).  The level-l inner
count is M_l = M0 * 2**l.  The antithetic correction at level l >= 1 is

    0.5 * (log-mean of first half + log-mean of second half) - log-mean of all,

with the halves taken in stream order, so it is non-positive up to round-off
by concavity of the logarithm.

Sampling is organised in fixed-size blocks of outer indices.  Block b of a
given sampler draws from the sub-stream (purpose, level-or-M, b), so the
value attached to one outer index is a pure function of (seed, index) and is
unchanged by how spans of work are split across rounds or workers.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import laplace
from .bayes import BayesModel
from .errors import EvaluationError, InnerUnderflowError
from .streams import RandomStream

__all__ = [
    "EstimatorConfig",
    "LevelSample",
    "LevelStats",
    "accumulate",
    "merge",
    "nmc_estimate",
    "sample_level_zero",
    "sample_correction",
    "sample_plain_difference",
    "sample_level_values",
    "sample_p_values",
    "per_sample_cost",
]

# Target number of inner-weight scalars per sampling block; the block row
# count shrinks as the inner count M grows so the working set stays cache
# friendly.  The row cap bounds the per-row Laplace arrays at small M.
BLOCK_SCALARS = 32768
MAX_BLOCK_ROWS = 16384

_PURPOSE_CORRECTION = 1
_PURPOSE_PLAIN = 2


@dataclass(frozen=True)
class EstimatorConfig:
    """Inner-sample schedule (M_l = m0 * 2**l) and the importance toggle."""

    m0: int = 1
    use_is: bool = True

    def __post_init__(self):
        if self.m0 < 1:
            raise ValueError("m0 must be >= 1")

    def inner_count(self, level: int) -> int:
        return self.m0 << level


@dataclass(frozen=True)
class LevelSample:
    """One realisation of a level variable with its evaluation cost."""

    value: float
    level: int
    cost: float


@dataclass(frozen=True)
class LevelStats:
    """Streaming power sums of level values, mergeable across workers."""

    count: int = 0
    sum1: float = 0.0
    sum2: float = 0.0
    sum3: float = 0.0
    sum4: float = 0.0
    total_cost: float = 0.0
    level: int | None = None

    @property
    def mean(self) -> float:
        return self.sum1 / self.count if self.count else math.nan

    @property
    def variance(self) -> float:
        if self.count < 2:
            return math.nan
        return max(0.0, (self.sum2 - self.sum1 ** 2 / self.count) / (self.count - 1))

    @property
    def kurtosis(self) -> float:
        if self.count < 4:
            return math.nan
        n = self.count
        m = self.sum1 / n
        mu2 = self.sum2 / n - m * m
        if mu2 <= 0.0:
            return math.nan
        mu4 = (self.sum4 - 4.0 * m * self.sum3 + 6.0 * m * m * self.sum2) / n - 3.0 * m ** 4
        return mu4 / mu2 ** 2

    @property
    def cost_per_sample(self) -> float:
        return self.total_cost / self.count if self.count else math.nan


def accumulate(stats: LevelStats, sample: LevelSample) -> LevelStats:
    """Fold one sample into the bucket, returning the updated stats."""
    if stats.level is not None and sample.level != stats.level:
        raise ValueError(f"sample level {sample.level} does not match bucket {stats.level}")
    v = sample.value
    return LevelStats(
        count=stats.count + 1,
        sum1=stats.sum1 + v,
        sum2=stats.sum2 + v * v,
        sum3=stats.sum3 + v ** 3,
        sum4=stats.sum4 + v ** 4,
        total_cost=stats.total_cost + sample.cost,
        level=stats.level if stats.level is not None else sample.level,
    )


def merge(a: LevelStats, b: LevelStats) -> LevelStats:
    if a.level is not None and b.level is not None and a.level != b.level:
        raise ValueError("cannot merge stats for different levels")
    return LevelStats(
        count=a.count + b.count,
        sum1=a.sum1 + b.sum1,
        sum2=a.sum2 + b.sum2,
        sum3=a.sum3 + b.sum3,
        sum4=a.sum4 + b.sum4,
        total_cost=a.total_cost + b.total_cost,
        level=a.level if a.level is not None else b.level,
    )


def stats_from_values(values: np.ndarray, cost_each: float, level: int | None = None) -> LevelStats:
    v = np.asarray(values, dtype=float)
    return LevelStats(
        count=v.size,
        sum1=float(np.sum(v)),
        sum2=float(np.sum(v ** 2)),
        sum3=float(np.sum(v ** 3)),
        sum4=float(np.sum(v ** 4)),
        total_cost=cost_each * v.size,
        level=level,
    )


def per_sample_cost(model: BayesModel, m: int, use_is: bool) -> float:
    """Forward-evaluation cost of one outer sample with m inner samples.

    Counts the m inner evaluations plus the one outer theta.  When the fit
    needs finite-difference derivatives, the 2d + 2d^2 stencil evaluations
    are charged on top; analytic derivatives are free.
    """
    units = model.forward.cost_units
    cost = (m + 1) * units
    if use_is and not model.forward.has_analytic_derivatives:
        d = model.prior.dim
        cost += (2 * d + 2 * d * d) * units
    return cost


# ---------------------------------------------------------------------------
# Batched sampling core
# ---------------------------------------------------------------------------


def _block_rows(m: int) -> int:
    return max(1, min(MAX_BLOCK_ROWS, BLOCK_SCALARS // max(1, m)))


def _logmeanexp(logw: np.ndarray) -> np.ndarray:
    """Row-wise log of the mean of exp, safe against -inf rows."""
    top = np.max(logw, axis=1)
    finite = np.isfinite(top)
    shift = np.where(finite, top, 0.0)
    with np.errstate(divide="ignore"):  # all-(-inf) rows legitimately hit log(0)
        out = shift + np.log(np.mean(np.exp(logw - shift[:, None]), axis=1))
    return np.where(finite, out, -np.inf)


def _loglik_grid(model: BayesModel, thetas: np.ndarray, y: np.ndarray) -> np.ndarray:
    """log p(y_b | theta_bm) for thetas (n, m, d) against per-row data (n, D)."""
    n, m, d = thetas.shape
    w = model.forward.out_dim
    ne = model.replicates
    g = model.forward.eval(thetas.reshape(n * m, d)).reshape(n, m, w)
    resid = y.reshape(n, 1, ne, w) - g[:, :, None, :]
    u = solve_triangular(model.noise.chol, resid.reshape(-1, w).T, lower=True)
    with np.errstate(over="ignore"):  # an overflowing quad form means density zero
        quad = np.sum(u * u, axis=0).reshape(n, m, ne).sum(axis=-1)
    return ne * model.noise.log_norm_const - 0.5 * quad


def _outer_loglik(model: BayesModel, g: np.ndarray, y: np.ndarray) -> np.ndarray:
    n = g.shape[0]
    w = model.forward.out_dim
    ne = model.replicates
    resid = y.reshape(n, ne, w) - g[:, None, :]
    u = solve_triangular(model.noise.chol, resid.reshape(-1, w).T, lower=True)
    quad = np.sum(u * u, axis=0).reshape(n, ne).sum(axis=-1)
    return ne * model.noise.log_norm_const - 0.5 * quad


def _draw_outer(model: BayesModel, m: int, n: int, rng: np.random.Generator):
    """Draw n outer samples and the raw normals for their inner samples.

    Draw order contract: prior normals (n, d), noise normals (n, Ne, w),
    inner normals (n, m, d), each as a single block.
    """
    w = model.forward.out_dim
    ne = model.replicates
    theta = model.prior.sample(rng, size=n)
    g = model.forward.eval(theta)
    z_noise = rng.standard_normal((n, ne, w))
    y = (g[:, None, :] + z_noise @ model.noise.chol.T).reshape(n, ne * w)
    z_inner = rng.standard_normal((n, m, model.prior.dim))
    return theta, g, y, z_inner


def _prior_logweights(model: BayesModel, y: np.ndarray, z_inner: np.ndarray) -> np.ndarray:
    n, m, d = z_inner.shape
    prior = model.prior
    inner = (prior.mean + z_inner.reshape(n * m, d) @ prior.chol.T).reshape(n, m, d)
    return _loglik_grid(model, inner, y)


def _is_logweights(model: BayesModel, theta, y, z_inner) -> np.ndarray:
    n, m, d = z_inner.shape
    fits = laplace.fit_batch(model, theta, y)
    inner = fits.draw(z_inner)
    return (
        _loglik_grid(model, inner, y)
        + np.asarray(model.prior.log_pdf(inner.reshape(n * m, d))).reshape(n, m)
        - fits.log_pdf(inner)
    )


def _inner_logweights(
    model: BayesModel,
    theta: np.ndarray,
    y: np.ndarray,
    z_inner: np.ndarray,
    use_is: bool,
) -> np.ndarray:
    """Per-row inner log weights: log p(y | .) alone, or with the importance
    correction log p(.) - log q(. | y) under per-row Laplace fits.

    Outer samples whose derivative evaluations come back non-finite cannot be
    fitted; those rows fall back to prior sampling.
    """
    if not use_is:
        return _prior_logweights(model, y, z_inner)
    try:
        return _is_logweights(model, theta, y, z_inner)
    except EvaluationError:
        jac = model.forward.jacobian(theta)
        hess = model.forward.hessian(theta)
        g = model.forward.eval(theta)
        bad = ~(
            np.all(np.isfinite(jac), axis=(1, 2))
            & np.all(np.isfinite(hess), axis=(1, 2, 3))
            & np.all(np.isfinite(g), axis=1)
        )
        if not np.any(bad):
            raise
        warnings.warn(
            f"{int(np.sum(bad))} outer samples had non-finite derivatives; "
            "falling back to prior sampling for them",
            RuntimeWarning,
        )
        logw = np.empty(z_inner.shape[:2])
        good = ~bad
        if np.any(good):
            logw[good] = _is_logweights(model, theta[good], y[good], z_inner[good])
        logw[bad] = _prior_logweights(model, y[bad], z_inner[bad])
        return logw


def _block_values(
    model: BayesModel,
    m: int,
    n: int,
    rng: np.random.Generator,
    use_is: bool,
    antithetic: bool,
    base_index: int,
) -> np.ndarray:
    """Values of n outer samples drawn from one generator."""
    theta, g, y, z_inner = _draw_outer(model, m, n, rng)
    logw = _inner_logweights(model, theta, y, z_inner, use_is)
    log_full = _logmeanexp(logw)
    if antithetic:
        half = m // 2
        log_a = _logmeanexp(logw[:, :half])
        log_b = _logmeanexp(logw[:, half:])
        values = 0.5 * (log_a + log_b) - log_full
    else:
        values = _outer_loglik(model, g, y) - log_full
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise InnerUnderflowError(base_index + int(np.argmax(bad)))
    return values


def _span_values(
    model: BayesModel,
    m: int,
    start: int,
    count: int,
    stream: RandomStream,
    purpose: int,
    tag: int,
    use_is: bool,
    antithetic: bool,
    threads: int,
) -> np.ndarray:
    """Values for outer indices [start, start + count) under the block layout.

    ``tag`` is the level for correction sampling and the inner count for
    plain sampling; together with ``purpose`` it pins the stream path.
    """
    if count <= 0:
        return np.empty(0)
    rows = _block_rows(m)
    first = start // rows
    last = (start + count - 1) // rows

    def one_block(b: int) -> np.ndarray:
        rng = stream.child(purpose, tag, b).generator()
        vals = _block_values(model, m, rows, rng, use_is, antithetic, b * rows)
        lo = max(start, b * rows) - b * rows
        hi = min(start + count, (b + 1) * rows) - b * rows
        return vals[lo:hi]

    blocks = range(first, last + 1)
    if threads > 1 and last > first:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one_block, blocks))
    else:
        parts = [one_block(b) for b in blocks]
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Public sampling operations
# ---------------------------------------------------------------------------


def sample_level_values(
    model: BayesModel,
    config: EstimatorConfig,
    level: int,
    start: int,
    count: int,
    stream: RandomStream,
    use_is: bool | None = None,
    threads: int = 1,
) -> np.ndarray:
    """Batch of level-``level`` variable realisations for outer indices
    [start, start + count): the level-zero variable at level 0, antithetic
    corrections at levels >= 1."""
    if level < 0:
        raise ValueError("level must be >= 0")
    use_is = config.use_is if use_is is None else use_is
    m = config.inner_count(level)
    return _span_values(
        model, m, start, count, stream,
        _PURPOSE_CORRECTION, level, use_is, antithetic=level >= 1, threads=threads,
    )


def sample_p_values(
    model: BayesModel,
    m: int,
    start: int,
    count: int,
    stream: RandomStream,
    use_is: bool = False,
    threads: int = 1,
) -> np.ndarray:
    """Batch of plain nested estimates (one outer sample, m inner samples)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return _span_values(
        model, m, start, count, stream,
        _PURPOSE_PLAIN, m, use_is, antithetic=False, threads=threads,
    )


def sample_level_zero(
    model: BayesModel,
    config: EstimatorConfig,
    stream: RandomStream,
    use_is: bool | None = None,
) -> LevelSample:
    """One level-zero realisation drawn directly from ``stream``.

    Draw order: prior normals, noise normals, inner normals, each as one
    block, so the raw stream can be replayed independently.
    """
    use_is = config.use_is if use_is is None else use_is
    value = _block_values(model, config.m0, 1, stream.generator(), use_is, False, 0)
    return LevelSample(float(value[0]), 0, per_sample_cost(model, config.m0, use_is))


def sample_correction(
    model: BayesModel,
    config: EstimatorConfig,
    level: int,
    stream: RandomStream,
    use_is: bool | None = None,
) -> LevelSample:
    """One antithetic correction at ``level`` >= 1, drawn from ``stream``."""
    if level < 1:
        raise ValueError("correction level must be >= 1")
    use_is = config.use_is if use_is is None else use_is
    m = config.inner_count(level)
    value = _block_values(model, m, 1, stream.generator(), use_is, True, 0)
    return LevelSample(float(value[0]), level, per_sample_cost(model, m, use_is))


def sample_plain_difference(
    model: BayesModel,
    config: EstimatorConfig,
    level: int,
    stream: RandomStream,
    use_is: bool | None = None,
) -> LevelSample:
    """Test-oracle coupling: the plain fine-minus-coarse difference, where
    the coarse term reuses the first half of the fine inner draws.

    Same expectation as the antithetic correction but without its variance
    decay; no driver uses it.
    """
    if level < 1:
        raise ValueError("difference level must be >= 1")
    use_is = config.use_is if use_is is None else use_is
    m = config.inner_count(level)
    theta, g, y, z_inner = _draw_outer(model, m, 1, stream.generator())
    logw = _inner_logweights(model, theta, y, z_inner, use_is)
    value = _logmeanexp(logw[:, : m // 2])[0] - _logmeanexp(logw)[0]
    if not np.isfinite(value):
        raise InnerUnderflowError(0)
    return LevelSample(float(value), level, per_sample_cost(model, m, use_is))


def nmc_estimate(
    model: BayesModel,
    n: int,
    m: int,
    stream: RandomStream,
    use_is: bool = False,
    threads: int = 1,
) -> tuple[float, float, float]:
    """Nested Monte Carlo estimate of the expected information gain.

    Averages n outer samples of [log p(Y | theta) - log mean of m inner
    weights]; the inner log-mean uses log-sum-exp throughout.  Returns
    (estimate, standard error, total cost).
    """
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    values = sample_p_values(model, m, 0, n, stream, use_is=use_is, threads=threads)
    est = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return est, se, n * per_sample_cost(model, m, use_is)
