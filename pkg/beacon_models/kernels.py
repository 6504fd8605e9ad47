"""Kernels over the extended (input, output-index) space."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Tuple

import numpy as np

from .config import KERNEL_FAMILIES
from .errors import DimensionError, UnsupportedKernelError


_SQRT5 = np.sqrt(5.0)

STATIONARY_FAMILIES = ("squared_exponential", "matern52")


@dataclass
class KernelSpec:
    family: str
    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float
    task_coupling: np.ndarray = field(default_factory=lambda: np.ones((1, 1)))

    def __post_init__(self) -> None:
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        self.lengthscales = np.asarray(self.lengthscales, dtype=float).reshape(-1)
        self.task_coupling = np.atleast_2d(np.asarray(self.task_coupling, dtype=float))
        self.signal_variance = float(self.signal_variance)
        self.noise_variance = float(self.noise_variance)
        if self.family == "tanimoto":
            self.lengthscales = np.zeros(0)
        elif self.lengthscales.size == 0 or np.any(self.lengthscales <= 0):
            raise ValueError("lengthscales must be positive")
        if not self.signal_variance > 0:
            raise ValueError("signal_variance must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be non-negative")
        B = self.task_coupling
        if B.shape[0] != B.shape[1]:
            raise DimensionError("task_coupling must be square")
        if not np.allclose(B, B.T, atol=1e-12) or not np.allclose(np.diag(B), 1.0, atol=1e-10):
            raise ValueError("task_coupling must be symmetric with unit diagonal")
        if np.linalg.eigvalsh(B).min() < -1e-9:
            raise ValueError("task_coupling must be positive semi-definite")

    @property
    def num_outputs(self) -> int:
        return self.task_coupling.shape[0]

    @property
    def stationary(self) -> bool:
        return self.family in STATIONARY_FAMILIES

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "lengthscales": [float(v) for v in self.lengthscales],
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
            "task_coupling": [[float(v) for v in row] for row in self.task_coupling],
        }


def coupling_from_params(u: np.ndarray) -> np.ndarray:
    """Rank-1 plus diagonal coupling with unit diagonal, rho = tanh(u)."""
    rho = np.tanh(np.asarray(u, dtype=float))
    B = np.outer(rho, rho)
    np.fill_diagonal(B, 1.0)
    return B


def _scaled_sq_dist(X1: np.ndarray, X2: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    A = X1 / lengthscales
    C = X2 / lengthscales
    sq = np.sum(A**2, axis=1)[:, None] + np.sum(C**2, axis=1)[None, :] - 2.0 * A @ C.T
    return np.maximum(sq, 0.0)


def _tanimoto(X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
    cross = X1 @ X2.T
    n1 = np.sum(X1 * X1, axis=1)[:, None]
    n2 = np.sum(X2 * X2, axis=1)[None, :]
    denom = n1 + n2 - cross
    # two all-zero vectors are identical fingerprints
    out = np.ones_like(cross)
    nonzero = denom > 0
    out[nonzero] = cross[nonzero] / denom[nonzero]
    return out


def input_kernel(family: str, lengthscales: np.ndarray, X1: Any, X2: Any) -> np.ndarray:
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    if X1.shape[1] != X2.shape[1]:
        raise DimensionError(f"input dimensions differ: {X1.shape[1]} vs {X2.shape[1]}")
    if family == "tanimoto":
        return _tanimoto(X1, X2)
    if lengthscales.shape[0] != X1.shape[1]:
        raise DimensionError(
            f"kernel has {lengthscales.shape[0]} lengthscales but inputs have dimension {X1.shape[1]}"
        )
    sq = _scaled_sq_dist(X1, X2, lengthscales)
    if family == "squared_exponential":
        return np.exp(-0.5 * sq)
    r = np.sqrt(sq)
    return (1.0 + _SQRT5 * r + 5.0 / 3.0 * sq) * np.exp(-_SQRT5 * r)


def input_kernel_lengthscale_grads(
    family: str, lengthscales: np.ndarray, X: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Gram matrix and its derivatives w.r.t. each log-lengthscale, shape (d, N, N)."""
    diffs = (X[:, None, :] - X[None, :, :]) / lengthscales
    per_dim = diffs**2
    sq = per_dim.sum(axis=2)
    if family == "squared_exponential":
        K = np.exp(-0.5 * sq)
        return K, np.moveaxis(per_dim, 2, 0) * K[None, :, :]
    if family == "matern52":
        r = np.sqrt(sq)
        decay = np.exp(-_SQRT5 * r)
        K = (1.0 + _SQRT5 * r + 5.0 / 3.0 * sq) * decay
        factor = 5.0 / 3.0 * (1.0 + _SQRT5 * r) * decay
        return K, np.moveaxis(per_dim, 2, 0) * factor[None, :, :]
    raise UnsupportedKernelError(f"{family} kernel has no lengthscales")


def input_kernel_gradient(family: str, lengthscales: np.ndarray, x: np.ndarray, X: np.ndarray) -> np.ndarray:
    """d k(x, X_i) / dx for every row of X, shape (N, d)."""
    if family not in STATIONARY_FAMILIES:
        raise UnsupportedKernelError(f"{family} kernel is not differentiable in the input")
    x = np.asarray(x, dtype=float).reshape(-1)
    diffs = (x[None, :] - X) / lengthscales**2
    sq = np.sum(((x[None, :] - X) / lengthscales) ** 2, axis=1)
    if family == "squared_exponential":
        return -np.exp(-0.5 * sq)[:, None] * diffs
    r = np.sqrt(sq)
    factor = 5.0 / 3.0 * (1.0 + _SQRT5 * r) * np.exp(-_SQRT5 * r)
    return -factor[:, None] * diffs


def kernel_matrix(spec: KernelSpec, X1: Any, J1: Any, X2: Any, J2: Any) -> np.ndarray:
    J1 = np.asarray(J1, dtype=int).reshape(-1)
    J2 = np.asarray(J2, dtype=int).reshape(-1)
    Kx = input_kernel(spec.family, spec.lengthscales, X1, X2)
    return spec.signal_variance * Kx * spec.task_coupling[np.ix_(J1, J2)]


def kernel_eval(spec: KernelSpec, a: Tuple[Any, int], b: Tuple[Any, int]) -> float:
    (x, j), (x2, j2) = a, b
    return float(kernel_matrix(spec, np.atleast_2d(x), [j], np.atleast_2d(x2), [j2])[0, 0])
