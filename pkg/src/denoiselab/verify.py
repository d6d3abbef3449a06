"""One-command verification suites over the closed-form oracles.

Each suite returns a list of named checks with their measured values and
thresholds; the CLI renders them as PASS/FAIL lines. Scales are desk-sized
by default and adjustable through the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import DataMatrix, empirical_stats
from .denoisers import GaussianDenoiser, MultiDeltaDenoiser
from .distillation import (
    DistillConfig,
    closed_form_linear,
    orthogonality_residual,
    train_linear_dsm,
)
from .errors import ValueRangeError
from .metrics import gl_score, weight_nmse
from .sampler import edm_schedule, gaussian_trajectory, ode_sample
from .synth import gaussian_dataset


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    comparison: str = "<"

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: value={self.value:.6g} "
                f"(required {self.comparison} {self.threshold:g})")


def _check(name: str, value: float, threshold: float, comparison: str = "<") -> CheckResult:
    if comparison == "<":
        ok = value < threshold
    elif comparison == ">":
        ok = value > threshold
    elif comparison == ">=":
        ok = value >= threshold
    else:
        raise ValueError(f"unknown comparison {comparison!r}")
    return CheckResult(name, bool(ok), float(value), float(threshold), comparison)


def _default_data(seed: int, dim: int, n_samples: int) -> DataMatrix:
    eigvals = np.linspace(2.0, 0.2, dim)
    mean = np.full(dim, 0.5)
    return gaussian_dataset(seed, n_samples, dim, mean=mean, eigvals=eigvals)


def _stable_lr(X: DataMatrix, sigma: float) -> float:
    """Safe step size from the curvature of the affine least-squares problem."""
    Y = X.values
    d = X.dim
    M = np.empty((d + 1, d + 1))
    M[:d, :d] = Y.T @ Y / X.n_samples + sigma**2 * np.eye(d)
    M[:d, d] = M[d, :d] = Y.mean(axis=0)
    M[d, d] = 1.0
    return 0.9 / float(np.linalg.eigvalsh(M)[-1])


def suite_theorem1(seed: int = 0, dim: int = 16, n_samples: int = 2000,
                   steps: int = 20000, tolerance: float = 1e-3) -> list[CheckResult]:
    """Gradient descent on the clean-target objective recovers the closed form."""
    if tolerance <= 0:
        raise ValueRangeError(f"tolerance must be positive, got {tolerance}")
    X = _default_data(seed, dim, n_samples)
    stats = empirical_stats(X)
    results = []
    for sigma in (0.1, 1.0, 10.0):
        cfg = DistillConfig(steps=steps, batch=1, lr=_stable_lr(X, sigma),
                            seed=seed, use_adam=False)
        fitted, _ = train_linear_dsm(X, sigma, cfg)
        exact = closed_form_linear(stats, sigma)
        results.append(_check(f"theorem1/weight-nmse@sigma={sigma}",
                              weight_nmse(fitted.weight, exact.weight), tolerance))
        bias_err = np.linalg.norm(fitted.bias - exact.bias) / np.linalg.norm(exact.bias)
        results.append(_check(f"theorem1/bias-relerr@sigma={sigma}",
                              float(bias_err), tolerance))
    return results


def suite_trajectory(seed: int = 0, dim: int = 24, n_samples: int = 512,
                     tolerance: float = 1e-3, n_seeds: int = 20) -> list[CheckResult]:
    """Euler sampling under the Gaussian denoiser matches the closed form."""
    if tolerance <= 0:
        raise ValueRangeError(f"tolerance must be positive, got {tolerance}")
    X = _default_data(seed, dim, n_samples)
    stats = empirical_stats(X)
    den = GaussianDenoiser(stats)
    rng = np.random.default_rng(seed)
    starts = 80.0 * rng.standard_normal((n_seeds, dim))
    step_counts = (10, 50, 200, 400)
    mean_errors = []
    max_err_400 = 0.0
    for n in step_counts:
        schedule = edm_schedule(0.002, 80.0, 7.0, n)
        errs = []
        for x_T in starts:
            euler = ode_sample(den, schedule, x_T).final
            exact = gaussian_trajectory(stats, x_T, schedule).final
            errs.append(np.linalg.norm(euler - exact) / np.linalg.norm(exact))
        mean_errors.append(float(np.mean(errs)))
        if n == 400:
            max_err_400 = float(np.max(errs))
    results = [_check("trajectory/max-relerr@400steps", max_err_400, tolerance)]
    for (n_a, n_b), (e_a, e_b) in zip(zip(step_counts, step_counts[1:]),
                                      zip(mean_errors, mean_errors[1:])):
        results.append(_check(f"trajectory/error-decreases@{n_a}->{n_b}",
                              e_b, e_a))
    return results


def suite_memorize(seed: int = 0, dim: int = 16, n_samples: int = 32,
                   n_starts: int = 100, tolerance: float = 1e-2) -> list[CheckResult]:
    """Sampling with the finite-point-set denoiser reproduces training rows."""
    if tolerance <= 0:
        raise ValueRangeError(f"tolerance must be positive, got {tolerance}")
    rng = np.random.default_rng(seed)
    X = DataMatrix(rng.uniform(-1.0, 1.0, size=(n_samples, dim)))
    den = MultiDeltaDenoiser(X)
    schedule = edm_schedule(0.002, 80.0, 7.0, 100)
    finals = np.empty((n_starts, dim))
    hits = 0
    for i in range(n_starts):
        x_T = 80.0 * np.random.default_rng([seed, i]).standard_normal(dim)
        finals[i] = ode_sample(den, schedule, x_T).final
        rel = np.linalg.norm(X.values - finals[i], axis=1) / np.linalg.norm(X.values, axis=1)
        hits += bool(rel.min() <= tolerance)
    results = [_check(f"memorize/replica-hits(n={n_starts})", hits, 0.95 * n_starts, ">=")]
    results.append(_check("memorize/gl-score", gl_score(finals, X).value, 0.05))
    return results


class _ZeroMap:
    def __init__(self, dim: int):
        self.dim = dim

    def evaluate_batch(self, batch, sigma):
        return np.zeros_like(batch)


def suite_orthogonality(seed: int = 0, dim: int = 16,
                        n_samples: int = 10_000) -> list[CheckResult]:
    """Normal equations hold for the Gaussian denoiser but not the zero map."""
    results = []
    for sigma in (0.5, 1.0, 4.0):
        # top eigenvalue at least 10 sigma^2 so the zero map is clearly suboptimal
        eigvals = np.concatenate(([12.0 * sigma**2], np.linspace(1.0, 0.2, dim - 1)))
        X = gaussian_dataset(seed, 4000, dim, eigvals=eigvals)
        stats = empirical_stats(X)
        gauss = orthogonality_residual(GaussianDenoiser(stats), X, sigma,
                                       n_samples, seed)
        results.append(_check(f"orthogonality/gaussian@sigma={sigma}", gauss, 0.05))
        zero = orthogonality_residual(_ZeroMap(dim), X, sigma, n_samples, seed)
        results.append(_check(f"orthogonality/zero-map@sigma={sigma}", zero, 0.3, ">"))
    return results


SUITES = {
    "theorem1": suite_theorem1,
    "trajectory": suite_trajectory,
    "memorize": suite_memorize,
    "orthogonality": suite_orthogonality,
}
