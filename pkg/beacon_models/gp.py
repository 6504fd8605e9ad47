"""Latent-input multi-output GP: posterior, marginal likelihood and hyperparameter fitting.

Every observation (x_i, y_i) contributes one scalar target per output index j.
Extended training points are ordered input-major, i.e. entry ``i * n + j``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Any, List, Optional, Tuple

import numpy as np
from scipy import linalg, optimize, spatial

from .config import COUPLING_MODES, KERNEL_FAMILIES
from .errors import DegenerateDataWarning, DimensionError, FactorizationError
from .kernels import (
    KernelSpec,
    coupling_from_params,
    input_kernel,
    input_kernel_gradient,
    input_kernel_lengthscale_grads,
)


logger = logging.getLogger("beacon.gp")

VARIANCE_FLOOR = 1e-12
JITTER_START = 1e-8
JITTER_MAX = 1e-4
_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self) -> None:
        X = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        Y = np.asarray(self.outcomes, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape[0] != Y.shape[0]:
            raise DimensionError(f"{X.shape[0]} inputs but {Y.shape[0]} outcomes")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "outcomes", Y)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def outcome_dim(self) -> int:
        return self.outcomes.shape[1]

    def append(self, x: Any, y: Any) -> "Dataset":
        x = np.asarray(x, dtype=float).reshape(1, -1)
        y = np.asarray(y, dtype=float).reshape(1, -1)
        return Dataset(np.vstack([self.inputs, x]), np.vstack([self.outcomes, y]))


@dataclass(frozen=True)
class FittedGP:
    kernel: KernelSpec
    train_inputs: np.ndarray
    factor: np.ndarray
    dual_coeffs: np.ndarray
    prior_mean: np.ndarray
    jitter: float = 0.0

    @property
    def num_outputs(self) -> int:
        return self.kernel.num_outputs

    @property
    def train_pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        N, n = self.train_inputs.shape[0], self.num_outputs
        return np.repeat(self.train_inputs, n, axis=0), np.tile(np.arange(n), N)


def extended_gram(kernel: KernelSpec, X: np.ndarray) -> np.ndarray:
    Kx = input_kernel(kernel.family, kernel.lengthscales, X, X)
    return kernel.signal_variance * np.kron(Kx, kernel.task_coupling)


def factorize(K: np.ndarray, noise_variance: float, scale: float) -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor of K + noise I, escalating jitter on failure."""
    size = K.shape[0]
    base = K + noise_variance * np.eye(size)
    try:
        return linalg.cholesky(base, lower=True), 0.0
    except linalg.LinAlgError:
        pass
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1.0 + 1e-9):
        try:
            L = linalg.cholesky(base + jitter * scale * np.eye(size), lower=True)
            logger.warning("Gram factorization needed jitter=%s (size=%s).", jitter, size)
            return L, jitter * scale
        except linalg.LinAlgError:
            jitter *= 10.0
    raise FactorizationError(
        f"Gram matrix of size {size} is not positive definite even with relative jitter {JITTER_MAX}; "
        "the training inputs are probably (near-)duplicated with too little noise variance"
    )


def _centered_targets(data: Dataset) -> Tuple[np.ndarray, np.ndarray]:
    prior_mean = data.outcomes.mean(axis=0)
    return (data.outcomes - prior_mean).reshape(-1), prior_mean


def _check_outputs(data: Dataset, kernel: KernelSpec) -> None:
    if data.outcome_dim != kernel.num_outputs:
        raise DimensionError(
            f"data has {data.outcome_dim} outputs but task_coupling is {kernel.num_outputs}x{kernel.num_outputs}"
        )


def fit_posterior(data: Dataset, kernel: KernelSpec) -> FittedGP:
    if len(data) == 0:
        raise ValueError("cannot fit a posterior to an empty dataset")
    _check_outputs(data, kernel)
    targets, prior_mean = _centered_targets(data)
    K = extended_gram(kernel, data.inputs)
    L, jitter = factorize(K, kernel.noise_variance, kernel.signal_variance)
    alpha = linalg.cho_solve((L, True), targets)
    return FittedGP(
        kernel=kernel,
        train_inputs=data.inputs,
        factor=L,
        dual_coeffs=alpha,
        prior_mean=prior_mean,
        jitter=jitter,
    )


def cross_covariance(gp: FittedGP, X: Any) -> np.ndarray:
    """Covariance between test pairs (x, j) and extended training pairs, shape (M*n, N*n)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    kernel = gp.kernel
    Kx = input_kernel(kernel.family, kernel.lengthscales, X, gp.train_inputs)
    return kernel.signal_variance * np.kron(Kx, kernel.task_coupling)


def predict(gp: FittedGP, X: Any) -> Tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not np.all(np.isfinite(X)):
        raise ValueError("prediction inputs must be finite")
    M, n = X.shape[0], gp.num_outputs
    Ks = cross_covariance(gp, X)
    mean = gp.prior_mean + (Ks @ gp.dual_coeffs).reshape(M, n)
    V = linalg.solve_triangular(gp.factor, Ks.T, lower=True)
    prior_var = gp.kernel.signal_variance * np.tile(np.diag(gp.kernel.task_coupling), M)
    var = (prior_var - np.sum(V**2, axis=0)).reshape(M, n)
    return mean, np.maximum(var, VARIANCE_FLOOR)


def posterior_mean(gp: FittedGP, x: Any) -> np.ndarray:
    mean, _ = predict(gp, np.asarray(x, dtype=float).reshape(1, -1))
    return mean[0]


def posterior_variance(gp: FittedGP, x: Any) -> np.ndarray:
    _, var = predict(gp, np.asarray(x, dtype=float).reshape(1, -1))
    return var[0]


def posterior_covariance(gp: FittedGP, X: Any) -> Tuple[np.ndarray, np.ndarray]:
    """Joint posterior mean (M*n,) and covariance (M*n, M*n) over all (candidate, output) pairs."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    kernel = gp.kernel
    Ks = cross_covariance(gp, X)
    mean = np.tile(gp.prior_mean, X.shape[0]) + Ks @ gp.dual_coeffs
    V = linalg.solve_triangular(gp.factor, Ks.T, lower=True)
    prior = extended_gram(kernel, X)
    return mean, prior - V.T @ V


def posterior_variance_gradient(gp: FittedGP, x: Any) -> Tuple[float, np.ndarray]:
    """Sum over outputs of the posterior variance at x and its gradient in x."""
    kernel = gp.kernel
    x = np.asarray(x, dtype=float).reshape(-1)
    N, n = gp.train_inputs.shape[0], gp.num_outputs
    B = kernel.task_coupling
    s2 = kernel.signal_variance
    kx = input_kernel(kernel.family, kernel.lengthscales, x[None, :], gp.train_inputs)[0]
    Ks = s2 * np.kron(kx[None, :], B)
    beta = linalg.cho_solve((gp.factor, True), Ks.T)
    total = float(np.sum(s2 * np.diag(B)) - np.sum(Ks.T * beta))
    dkx = input_kernel_gradient(kernel.family, kernel.lengthscales, x, gp.train_inputs)
    grad = -2.0 * s2 * np.einsum("ab,iba,id->d", B, beta.reshape(N, n, n), dkx)
    return max(total, VARIANCE_FLOOR), grad


@dataclass(frozen=True)
class HyperparameterLayout:
    """Maps kernel hyperparameters to an unconstrained log-space vector.

    Layout: log lengthscales (stationary families), log signal variance,
    log noise variance, then one coupling parameter per output when the
    coupling is "icm" and there is more than one output.
    """

    family: str
    input_dim: int
    num_outputs: int
    coupling: str = "icm"

    def __post_init__(self) -> None:
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.coupling not in COUPLING_MODES:
            raise ValueError(f"unknown coupling {self.coupling!r}")

    @property
    def num_lengthscales(self) -> int:
        return 0 if self.family == "tanimoto" else self.input_dim

    @property
    def num_coupling(self) -> int:
        return self.num_outputs if (self.coupling == "icm" and self.num_outputs > 1) else 0

    @property
    def size(self) -> int:
        return self.num_lengthscales + 2 + self.num_coupling

    def unpack(self, theta: np.ndarray) -> KernelSpec:
        theta = np.asarray(theta, dtype=float)
        d = self.num_lengthscales
        if self.num_coupling:
            coupling = coupling_from_params(theta[d + 2 :])
        else:
            coupling = np.eye(self.num_outputs)
        return KernelSpec(
            family=self.family,
            lengthscales=np.exp(theta[:d]) if d else np.zeros(0),
            signal_variance=float(np.exp(theta[d])),
            noise_variance=float(np.exp(theta[d + 1])),
            task_coupling=coupling,
        )

    def initial(self, data: Dataset, noise_floor: float = 1e-6) -> np.ndarray:
        spread = data.inputs.std(axis=0)
        spread = np.where(spread > 0, spread, 1.0)
        signal = _outcome_variance(data)
        noise = max(1e-2 * signal, noise_floor * signal)
        parts = [np.log(spread[: self.num_lengthscales]), [np.log(signal), np.log(noise)]]
        if self.num_coupling:
            # rho = 0 is a saddle of the likelihood in the coupling parameters
            parts.append(np.full(self.num_coupling, 0.1))
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    def bounds(self, data: Dataset, noise_floor: float = 1e-6) -> List[Tuple[float, float]]:
        init = self.initial(data, noise_floor)
        d = self.num_lengthscales
        signal_log = init[d]
        out: List[Tuple[float, float]] = []
        floor = _neighbor_spacing(data.inputs)
        for value in init[:d]:
            low = value - np.log(1e3)
            if floor > 0:
                # a lengthscale below the typical point spacing turns the kernel into white noise
                low = min(max(low, np.log(floor)), value)
            out.append((low, value + np.log(1e3)))
        out.append((signal_log - np.log(1e4), signal_log + np.log(1e4)))
        noise_low = signal_log + np.log(noise_floor)
        out.append((noise_low, max(signal_log + np.log(10.0), noise_low + 1.0)))
        out.extend([(-3.0, 3.0)] * self.num_coupling)
        return out


def _neighbor_spacing(X: np.ndarray) -> float:
    """Median distance from each distinct input to its nearest distinct neighbor (0 if fewer than two)."""
    unique = np.unique(X, axis=0)
    if unique.shape[0] < 2:
        return 0.0
    dist = spatial.distance.squareform(spatial.distance.pdist(unique))
    np.fill_diagonal(dist, np.inf)
    return float(np.median(dist.min(axis=1)))


def _outcome_variance(data: Dataset) -> float:
    if len(data) < 2:
        return 1.0
    value = float(np.mean(data.outcomes.var(axis=0)))
    return value if value > 0 else 1.0


def log_marginal_likelihood(data: Dataset, kernel: KernelSpec) -> float:
    if len(data) == 0:
        raise ValueError("log marginal likelihood needs at least one observation")
    _check_outputs(data, kernel)
    targets, _ = _centered_targets(data)
    K = extended_gram(kernel, data.inputs)
    L, _ = factorize(K, kernel.noise_variance, kernel.signal_variance)
    alpha = linalg.cho_solve((L, True), targets)
    return float(
        -0.5 * targets @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * targets.size * _LOG_2PI
    )


def log_marginal_likelihood_and_gradient(
    data: Dataset, layout: HyperparameterLayout, theta: np.ndarray
) -> Tuple[float, np.ndarray]:
    """Exact log marginal likelihood and its gradient w.r.t. the log-space vector theta."""
    kernel = layout.unpack(theta)
    X = data.inputs
    N, n = X.shape[0], layout.num_outputs
    d = layout.num_lengthscales
    targets, _ = _centered_targets(data)
    B = kernel.task_coupling
    s2 = kernel.signal_variance

    if d:
        Kx, dKx = input_kernel_lengthscale_grads(kernel.family, kernel.lengthscales, X)
    else:
        Kx, dKx = input_kernel(kernel.family, kernel.lengthscales, X, X), np.zeros((0, N, N))
    K = s2 * np.kron(Kx, B)
    L, _ = factorize(K, kernel.noise_variance, s2)
    alpha = linalg.cho_solve((L, True), targets)
    lml = -0.5 * targets @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * targets.size * _LOG_2PI

    W = np.outer(alpha, alpha) - linalg.cho_solve((L, True), np.eye(N * n))
    Wr = W.reshape(N, n, N, n)
    WB = np.einsum("iajb,ab->ij", Wr, B)
    grad = np.zeros(layout.size)
    for p in range(d):
        grad[p] = 0.5 * s2 * np.sum(WB * dKx[p])
    grad[d] = 0.5 * s2 * np.sum(WB * Kx)
    grad[d + 1] = 0.5 * kernel.noise_variance * np.trace(W)
    if layout.num_coupling:
        GB = np.einsum("iajb,ij->ab", Wr, Kx)
        rho = np.tanh(theta[d + 2 :])
        sym = GB + GB.T
        for c in range(n):
            others = np.arange(n) != c
            grad[d + 2 + c] = 0.5 * s2 * (1.0 - rho[c] ** 2) * np.sum(sym[c, others] * rho[others])
    return float(lml), grad


def fit_hyperparameters(
    data: Dataset,
    family: str = "matern52",
    restarts: int = 3,
    seed: Optional[int] = 0,
    *,
    coupling: str = "icm",
    noise_floor: float = 1e-6,
) -> KernelSpec:
    """Multi-start L-BFGS-B ascent of the log marginal likelihood in log-parameter space.

    Restart 0 starts from the initialization heuristic; later restarts perturb it
    with standard-normal noise, so a larger restart count explores a superset.
    """
    if len(data) < 2:
        raise ValueError("hyperparameter fitting needs at least two observations")
    layout = HyperparameterLayout(family, data.input_dim, data.outcome_dim, coupling)
    init = layout.initial(data, noise_floor)
    bounds = layout.bounds(data, noise_floor)
    if np.all(np.ptp(data.inputs, axis=0) == 0):
        message = "all training inputs are identical; keeping the initialization heuristic"
        warnings.warn(message, DegenerateDataWarning, stacklevel=2)
        logger.warning("%s (N=%s).", message, len(data))
        return layout.unpack(init)

    low = np.array([b[0] for b in bounds])
    high = np.array([b[1] for b in bounds])
    init = np.clip(init, low, high)

    def objective(theta: np.ndarray) -> Tuple[float, np.ndarray]:
        try:
            value, grad = log_marginal_likelihood_and_gradient(data, layout, theta)
        except FactorizationError:
            return 1e25, np.zeros_like(theta)
        if not np.isfinite(value):
            return 1e25, np.zeros_like(theta)
        return -value, -grad

    best_theta = init
    best_value = objective(init)[0]
    rng = np.random.default_rng(seed)
    for restart in range(max(1, int(restarts))):
        start = init if restart == 0 else np.clip(init + rng.normal(size=init.size), low, high)
        result = optimize.minimize(
            objective,
            start,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": 200},
        )
        logger.debug("Restart %s: neg_lml=%s success=%s.", restart, result.fun, result.success)
        if result.fun < best_value:
            best_value = float(result.fun)
            best_theta = np.asarray(result.x)
    return layout.unpack(best_theta)
