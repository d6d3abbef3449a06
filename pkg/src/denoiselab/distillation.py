"""Linear distillation of denoisers and the closed-form optimal affine map.

The least-squares problem "match a denoiser's outputs on noisy data with an
affine map" is convex with a unique optimum. When the matching target is the
clean data itself, that optimum is the Wiener filter built from the empirical
mean and covariance; ``closed_form_linear`` constructs it directly and the
two trainers approach it from the stochastic (Adam) and deterministic
(plain gradient descent) side respectively.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DataMatrix, GaussianStats
from .denoisers import AffineDenoiser, Denoiser, GaussianDenoiser
from .errors import (
    DimensionMismatchError,
    DivergenceError,
    FormatError,
    ValueRangeError,
)
from .optim import Adam

AFFINE_MAGIC = b"AFF1"

#: dense d x d weights above this are refused rather than silently slow
MAX_DENSE_DIM = 4096

#: loss exceeding this multiple of its starting value counts as divergence
_DIVERGENCE_FACTOR = 10.0


@dataclass(frozen=True)
class DistillConfig:
    """Hyperparameters for the iterative linear fits."""

    steps: int
    batch: int
    lr: float
    seed: int
    use_adam: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.steps < 1 or self.batch < 1:
            raise ValueRangeError("steps and batch must be at least 1")
        if self.lr < 0:
            raise ValueRangeError(f"learning rate must be nonnegative, got {self.lr}")


def _check_dense_dim(dim: int) -> None:
    if dim > MAX_DENSE_DIM:
        raise ValueRangeError(
            f"dense {dim}x{dim} weight exceeds the {MAX_DENSE_DIM} desk-scale cap"
        )


def closed_form_linear(stats: GaussianStats, sigma: float) -> AffineDenoiser:
    """Optimal affine denoiser for data with the given mean and covariance.

    W = basis @ diag(eigval/(eigval+sigma^2)) @ basis.T (symmetric PSD,
    eigenvalues in [0, 1]); b = (I - W) mean. This is the unique minimizer of
    the affine-constrained denoising objective, hence the reference every
    distillation result is compared against.
    """
    _check_dense_dim(stats.dim)
    coef = GaussianDenoiser(stats).shrinkage(sigma)
    W = (stats.basis * coef) @ stats.basis.T
    b = stats.mean - W @ stats.mean
    return AffineDenoiser(weight=W, bias=b, sigma=float(sigma))


def distill_linear(target: Denoiser, X: DataMatrix, sigma: float,
                   cfg: DistillConfig) -> tuple[AffineDenoiser, np.ndarray]:
    """Fit W x + b to a target denoiser on noisy data by stochastic Adam.

    W and b start at zero. Each step draws ``cfg.batch`` rows of X (with
    replacement) plus fresh Gaussian noise at level sigma, queries the target
    once per batch, and takes an Adam step on the squared matching error.
    Returns the fitted map and the per-step loss sequence.
    """
    if target.dim != X.dim:
        raise DimensionMismatchError(f"target dim {target.dim} != data dim {X.dim}")
    if not sigma > 0:
        raise ValueRangeError(f"sigma must be positive, got {sigma}")
    _check_dense_dim(X.dim)
    d = X.dim
    rng = np.random.default_rng(cfg.seed)
    W = np.zeros((d, d))
    b = np.zeros(d)
    opt = Adam([W, b], lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps) \
        if cfg.use_adam else None
    losses = np.empty(cfg.steps)
    for k in range(cfg.steps):
        rows = X.values[rng.integers(0, X.n_samples, size=cfg.batch)]
        noisy = rows + sigma * rng.standard_normal(rows.shape)
        teach = target.evaluate_batch(noisy, sigma)
        resid = noisy @ W.T + b - teach
        loss = float((resid**2).sum(axis=1).mean())
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite distillation loss at step {k}", step=k)
        losses[k] = loss
        grad_W = 2.0 / cfg.batch * resid.T @ noisy
        grad_b = 2.0 / cfg.batch * resid.sum(axis=0)
        if opt is not None:
            opt.step([grad_W, grad_b])
        else:
            W -= cfg.lr * grad_W
            b -= cfg.lr * grad_b
    return AffineDenoiser(weight=W, bias=b, sigma=float(sigma)), losses


def train_linear_dsm(X: DataMatrix, sigma: float,
                     cfg: DistillConfig) -> tuple[AffineDenoiser, np.ndarray]:
    """Train an affine denoiser on the clean-target objective by plain GD.

    The expectation over the noise has the closed form
    E||W(x+e)+b-x||^2 = ||(W-I)x+b||^2 + sigma^2 ||W||_F^2, so the gradient
    is evaluated exactly from the dataset's first and second moments and the
    descent is deterministic; ``cfg.batch`` and ``cfg.seed`` are not used.
    Raises DivergenceError once the loss exceeds 10x its starting value.
    """
    if not sigma > 0:
        raise ValueRangeError(f"sigma must be positive, got {sigma}")
    _check_dense_dim(X.dim)
    d = X.dim
    Y = X.values
    mu = Y.mean(axis=0)
    second = Y.T @ Y / X.n_samples
    W = np.zeros((d, d))
    b = np.zeros(d)
    eye = np.eye(d)

    def loss_of(W, b):
        E = W - eye
        quad = float(np.sum((E @ second) * E)) + 2.0 * float(b @ (E @ mu)) + float(b @ b)
        return quad + sigma**2 * float(np.sum(W * W))

    losses = np.empty(cfg.steps)
    initial = loss_of(W, b)
    for k in range(cfg.steps):
        loss = loss_of(W, b)
        if not np.isfinite(loss) or loss > _DIVERGENCE_FACTOR * initial:
            raise DivergenceError(
                f"gradient descent diverged at step {k}: loss {loss:.3e} "
                f"exceeds 10x initial {initial:.3e}", step=k)
        losses[k] = loss
        grad_W = 2.0 * ((W - eye) @ second + np.outer(b, mu) + sigma**2 * W)
        grad_b = 2.0 * (W @ mu + b - mu)
        W -= cfg.lr * grad_W
        b -= cfg.lr * grad_b
    return AffineDenoiser(weight=W, bias=b, sigma=float(sigma)), losses


def orthogonality_residual(D: Denoiser, X: DataMatrix, sigma: float,
                           n_samples: int, seed: int) -> float:
    """Monte-Carlo check of the normal equations for a denoiser's residual.

    Estimates ||E[(D(x+e) - x)(x+e - mean)^T]||_F normalized by
    ||E[(x+e - mean)(x+e - mean)^T]||_F. Exactly zero in expectation for the
    optimal affine denoiser; bounded away from zero for clearly suboptimal
    maps like the zero map on strongly anisotropic data.
    """
    if not sigma > 0:
        raise ValueRangeError(f"sigma must be positive, got {sigma}")
    if n_samples < 1:
        raise ValueRangeError("need at least one sample")
    rng = np.random.default_rng(seed)
    rows = X.values[rng.integers(0, X.n_samples, size=n_samples)]
    noisy = rows + sigma * rng.standard_normal(rows.shape)
    resid = D.evaluate_batch(noisy, sigma) - rows
    centered = noisy - X.values.mean(axis=0)
    cross = resid.T @ centered / n_samples
    gram = centered.T @ centered / n_samples
    return float(np.linalg.norm(cross) / np.linalg.norm(gram))


def save_affine(D: AffineDenoiser, path: str | Path) -> None:
    """Write an affine checkpoint: magic, u32 dim, f64 sigma, W row-major, b."""
    with open(path, "wb") as fh:
        fh.write(AFFINE_MAGIC)
        fh.write(struct.pack("<I", D.dim))
        fh.write(struct.pack("<d", D.sigma if D.sigma is not None else float("nan")))
        fh.write(D.weight.astype("<f8").tobytes())
        fh.write(D.bias.astype("<f8").tobytes())


def load_affine(path: str | Path) -> AffineDenoiser:
    """Read an affine checkpoint written by ``save_affine``."""
    blob = Path(path).read_bytes()
    if len(blob) < 16:
        raise FormatError(f"{path}: too short for an affine checkpoint")
    if blob[:4] != AFFINE_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {AFFINE_MAGIC!r}")
    (dim,) = struct.unpack("<I", blob[4:8])
    (sigma,) = struct.unpack("<d", blob[8:16])
    expected = 16 + 8 * (dim * dim + dim)
    if len(blob) != expected:
        raise DimensionMismatchError(
            f"{path}: checkpoint for dim {dim} should be {expected} bytes, got {len(blob)}"
        )
    W = np.frombuffer(blob[16:16 + 8 * dim * dim], dtype="<f8").reshape(dim, dim)
    b = np.frombuffer(blob[16 + 8 * dim * dim:], dtype="<f8")
    return AffineDenoiser(weight=W.copy(), bias=b.copy(),
                          sigma=None if np.isnan(sigma) else float(sigma))


def losses_to_csv(losses: np.ndarray, path: str | Path) -> None:
    """Write a loss curve as (step, loss) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for i, v in enumerate(losses):
            writer.writerow([i, repr(float(v))])
