"""Denoisers sharing one evaluation interface.

A denoiser maps a noisy vector x and a noise level sigma to an estimate of
the clean vector. The closed-form ones here are the exact optima for two
idealized data models: a finite point set (softmax-weighted average of the
points) and a multivariate Gaussian (the Wiener / MMSE linear filter built
from the empirical mean and covariance). All built-in denoisers are
immutable and safe for concurrent evaluation.
"""

from __future__ import annotations

import numpy as np

from .dataset import DataMatrix, GaussianStats
from .errors import DimensionMismatchError, ValueRangeError


class Denoiser:
    """Interface: ``evaluate(x, sigma) -> x_hat`` plus a fixed ``dim``.

    Batch evaluation is defined as independent per-row evaluation; subclasses
    override ``evaluate_batch`` only to vectorize it.
    """

    dim: int

    def evaluate(self, x: np.ndarray, sigma: float) -> np.ndarray:
        return self.evaluate_batch(np.asarray(x, dtype=np.float64)[None, :], sigma)[0]

    def evaluate_batch(self, X: np.ndarray, sigma: float) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.stack([self.evaluate(row, sigma) for row in X])

    def _check_input(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim:
            raise DimensionMismatchError(
                f"input dimension {X.shape[-1]} != denoiser dimension {self.dim}"
            )
        if not np.all(np.isfinite(X)):
            raise ValueRangeError("non-finite input to denoiser")
        return X


class MultiDeltaDenoiser(Denoiser):
    """Exact optimal denoiser when the data distribution is a finite point set.

    Output is the softmax-weighted average of the training rows with logits
    -||x - y_i||^2 / (2 sigma^2). Weights are materialized only in the
    max-shifted log domain, so extreme sigma neither overflows nor underflows.
    The output always lies in the convex hull of the rows.
    """

    def __init__(self, data: DataMatrix):
        self.data = data
        self.dim = data.dim

    def evaluate_batch(self, X: np.ndarray, sigma: float) -> np.ndarray:
        X = self._check_input(X)
        if not sigma > 0:
            raise ValueRangeError(f"sigma must be positive, got {sigma}")
        Y = self.data.values
        # squared distances via ||x||^2 - 2<x,y> + ||y||^2, clipped against
        # cancellation producing small negatives
        sq = np.maximum(
            (X**2).sum(axis=1)[:, None] - 2.0 * X @ Y.T + (Y**2).sum(axis=1)[None, :],
            0.0,
        )
        logits = -sq / (2.0 * sigma**2)
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        w /= w.sum(axis=1, keepdims=True)
        return w @ Y


class GaussianDenoiser(Denoiser):
    """Optimal denoiser for the Gaussian fit of the data (Wiener filter).

    Works in the rank-r eigenbasis, shrinking each component of x - mean by
    eigval / (eigval + sigma^2) and annihilating anything orthogonal to the
    basis; never forms the dense d x d weight. At sigma = 0 the coefficient is
    1 for positive eigenvalues and 0 for zero ones (the continuous limit).
    """

    def __init__(self, stats: GaussianStats):
        self.stats = stats
        self.dim = stats.dim

    def shrinkage(self, sigma: float) -> np.ndarray:
        """Per-component gain eigval / (eigval + sigma^2)."""
        if sigma < 0:
            raise ValueRangeError(f"sigma must be nonnegative, got {sigma}")
        lam = self.stats.eigvals
        denom = lam + sigma**2
        return np.divide(lam, denom, out=np.zeros_like(lam), where=denom > 0)

    def evaluate_batch(self, X: np.ndarray, sigma: float) -> np.ndarray:
        X = self._check_input(X)
        coef = self.shrinkage(sigma)
        centered = X - self.stats.mean
        proj = centered @ self.stats.basis
        return self.stats.mean + (proj * coef) @ self.stats.basis.T


class AffineDenoiser(Denoiser):
    """Dense affine map x -> W x + b, the output of linear distillation.

    ``sigma`` records the noise level the map was fit at; evaluation ignores
    the sigma argument since the map itself is level-specific.
    """

    def __init__(self, weight: np.ndarray, bias: np.ndarray, sigma: float | None = None):
        weight = np.asarray(weight, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weight.ndim != 2 or weight.shape[0] != weight.shape[1]:
            raise DimensionMismatchError(f"weight must be square, got {weight.shape}")
        if bias.shape != (weight.shape[0],):
            raise DimensionMismatchError(
                f"bias shape {bias.shape} does not match weight {weight.shape}"
            )
        if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
            raise ValueRangeError("non-finite affine parameters")
        self.weight = weight
        self.bias = bias
        self.sigma = sigma
        self.dim = weight.shape[0]

    def evaluate_batch(self, X: np.ndarray, sigma: float = 0.0) -> np.ndarray:
        X = self._check_input(X)
        return X @ self.weight.T + self.bias


class PerLevelDenoiser(Denoiser):
    """Dispatch table mapping each noise level to its own denoiser.

    Mirrors per-level training: one model per sigma, looked up by nearest
    level (within 1e-9 relative by default, else the closest entry).
    """

    def __init__(self, levels: dict[float, Denoiser]):
        if not levels:
            raise ValueRangeError("empty level table")
        dims = {d.dim for d in levels.values()}
        if len(dims) != 1:
            raise DimensionMismatchError(f"mixed dimensions in level table: {dims}")
        self._sigmas = np.array(sorted(levels), dtype=np.float64)
        self._table = {float(s): levels[s] for s in levels}
        self.dim = dims.pop()

    def evaluate_batch(self, X: np.ndarray, sigma: float) -> np.ndarray:
        nearest = float(self._sigmas[np.argmin(np.abs(self._sigmas - sigma))])
        return self._table[nearest].evaluate_batch(X, sigma)


def multi_delta_denoise(Y: DataMatrix, x: np.ndarray, sigma: float) -> np.ndarray:
    """Softmax-weighted average of the rows of Y around x at level sigma."""
    return MultiDeltaDenoiser(Y).evaluate(x, sigma)


def gaussian_denoise(stats: GaussianStats, x: np.ndarray, sigma: float) -> np.ndarray:
    """Wiener-filter estimate of the clean vector under the Gaussian fit."""
    return GaussianDenoiser(stats).evaluate(x, sigma)


def affine_denoise(D: AffineDenoiser, x: np.ndarray) -> np.ndarray:
    """Apply the affine map W x + b."""
    return D.evaluate(x, 0.0)


def denoiser_to_score(D: Denoiser, x: np.ndarray, sigma: float) -> np.ndarray:
    """Score of the sigma-mollified density at x: (D(x; sigma) - x) / sigma^2."""
    if not sigma > 0:
        raise ValueRangeError(f"score conversion requires sigma > 0, got {sigma}")
    x = np.asarray(x, dtype=np.float64)
    return (D.evaluate(x, sigma) - x) / sigma**2


def score_batch(D: Denoiser, X: np.ndarray, sigma: float) -> np.ndarray:
    """Vectorized ``denoiser_to_score`` over rows of X."""
    if not sigma > 0:
        raise ValueRangeError(f"score conversion requires sigma > 0, got {sigma}")
    X = np.asarray(X, dtype=np.float64)
    return (D.evaluate_batch(X, sigma) - X) / sigma**2
