"""Posterior function samples.

Stationary kernels get decoupled paths: a random-Fourier-feature prior draw
plus a pathwise (Matheron) correction through the training data. Paths are
deterministic once drawn, cheap to evaluate anywhere and differentiable.
Non-stationary kernels (tanimoto) only support exact joint draws on a finite
candidate set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Union

import numpy as np
from scipy import linalg

from .errors import UnsupportedKernelError
from .gp import FittedGP, factorize, posterior_covariance
from .kernels import KernelSpec, input_kernel, input_kernel_gradient


SeedLike = Union[int, np.random.Generator, None]


@dataclass(frozen=True)
class FeatureMap:
    frequencies: np.ndarray
    phases: np.ndarray
    scale: float

    @property
    def num_features(self) -> int:
        return self.frequencies.shape[0]

    def features(self, X: Any) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.scale * np.cos(X @ self.frequencies.T + self.phases)

    def jacobian(self, x: Any) -> np.ndarray:
        """d phi(x) / dx, shape (m, d)."""
        x = np.asarray(x, dtype=float).reshape(-1)
        return -self.scale * np.sin(self.frequencies @ x + self.phases)[:, None] * self.frequencies


def draw_feature_map(kernel: KernelSpec, num_features: int, seed: SeedLike = None) -> FeatureMap:
    if not kernel.stationary:
        raise UnsupportedKernelError(
            f"{kernel.family} kernel has no spectral representation; use exact_joint_sample on a candidate set"
        )
    if num_features < 1:
        raise ValueError("num_features must be >= 1")
    rng = np.random.default_rng(seed)
    d = kernel.lengthscales.shape[0]
    z = rng.normal(size=(num_features, d))
    if kernel.family == "squared_exponential":
        frequencies = z / kernel.lengthscales
    else:
        # Matern-5/2 spectral measure is a multivariate t with 5 degrees of freedom
        u = rng.chisquare(5.0, size=num_features)
        frequencies = z / kernel.lengthscales / np.sqrt(u / 5.0)[:, None]
    phases = rng.uniform(0.0, 2.0 * np.pi, size=num_features)
    scale = float(np.sqrt(2.0 * kernel.signal_variance / num_features))
    return FeatureMap(frequencies=frequencies, phases=phases, scale=scale)


def task_factor(coupling: np.ndarray) -> np.ndarray:
    """Square root L of the coupling matrix with L L^T = B."""
    try:
        return linalg.cholesky(coupling, lower=True)
    except linalg.LinAlgError:
        values, vectors = np.linalg.eigh(coupling)
        return vectors * np.sqrt(np.maximum(values, 0.0))


@dataclass(frozen=True)
class PathSample:
    feature_map: FeatureMap
    prior_weights: np.ndarray
    task_factor: np.ndarray
    correction_coeffs: np.ndarray
    gp: FittedGP

    @property
    def num_outputs(self) -> int:
        return self.task_factor.shape[0]

    def prior_many(self, X: Any) -> np.ndarray:
        Phi = self.feature_map.features(X)
        return Phi @ self.prior_weights.T @ self.task_factor.T

    def correction_many(self, X: Any) -> np.ndarray:
        kernel = self.gp.kernel
        Kx = input_kernel(kernel.family, kernel.lengthscales, X, self.gp.train_inputs)
        V = self.correction_coeffs.reshape(-1, self.num_outputs)
        return kernel.signal_variance * (Kx @ V) @ kernel.task_coupling.T

    def evaluate_many(self, X: Any) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.gp.prior_mean + self.prior_many(X) + self.correction_many(X)

    def evaluate(self, x: Any) -> np.ndarray:
        return self.evaluate_many(np.asarray(x, dtype=float).reshape(1, -1))[0]

    def jacobian(self, x: Any) -> np.ndarray:
        """Analytic Jacobian of evaluate, shape (n, d)."""
        kernel = self.gp.kernel
        x = np.asarray(x, dtype=float).reshape(-1)
        prior = self.task_factor @ self.prior_weights @ self.feature_map.jacobian(x)
        dKx = input_kernel_gradient(kernel.family, kernel.lengthscales, x, self.gp.train_inputs)
        V = self.correction_coeffs.reshape(-1, self.num_outputs)
        correction = kernel.signal_variance * kernel.task_coupling @ (V.T @ dKx)
        return prior + correction


def draw_path(gp: FittedGP, num_features: int = 1024, seed: SeedLike = None) -> PathSample:
    rng = np.random.default_rng(seed)
    kernel = gp.kernel
    n = gp.num_outputs
    feature_map = draw_feature_map(kernel, num_features, rng)
    weights = rng.normal(size=(n, num_features))
    factor = task_factor(kernel.task_coupling)

    prior_train = feature_map.features(gp.train_inputs) @ weights.T @ factor.T
    noise_std = np.sqrt(kernel.noise_variance + gp.jitter)
    eps = noise_std * rng.normal(size=prior_train.size)
    # alpha already holds K^-1 (y - m); subtract K^-1 (prior(X) + eps)
    coeffs = gp.dual_coeffs - linalg.cho_solve((gp.factor, True), prior_train.reshape(-1) + eps)
    return PathSample(
        feature_map=feature_map,
        prior_weights=weights,
        task_factor=factor,
        correction_coeffs=coeffs,
        gp=gp,
    )


def eval_path(path: PathSample, x: Any) -> np.ndarray:
    return path.evaluate(x)


def eval_path_gradient(path: PathSample, x: Any) -> np.ndarray:
    return path.jacobian(x)


def exact_joint_sample(gp: FittedGP, candidates: Any, seed: SeedLike = None) -> np.ndarray:
    """One draw from the exact joint posterior over all candidates and outputs, shape (C, n).

    Repeated candidate rows share one latent draw.
    """
    rng = np.random.default_rng(seed)
    X = np.atleast_2d(np.asarray(candidates, dtype=float))
    unique, inverse = np.unique(X, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    mean, cov = posterior_covariance(gp, unique)
    cov = 0.5 * (cov + cov.T)
    L, _ = factorize(cov, 0.0, gp.kernel.signal_variance)
    draw = mean + L @ rng.normal(size=mean.size)
    return draw.reshape(unique.shape[0], gp.num_outputs)[inverse]
