"""Novelty acquisition over sampled outcomes and its maximization."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Any, Callable, FrozenSet, Iterable, Optional, Protocol, Sequence, Set, Tuple, Union

import numpy as np
from scipy import optimize

from .behavior import BehaviorSpace
from .config import CONSTRAINT_MODES, NoveltyConfig
from .errors import DimensionError, PoolExhaustedError
from .gp import Dataset, FittedGP, posterior_mean, predict


logger = logging.getLogger("beacon.acquisition")

NEIGHBOR_DIVISOR = 4


class OutcomeSampler(Protocol):
    def evaluate(self, x: Any) -> np.ndarray: ...

    def evaluate_many(self, X: Any) -> np.ndarray: ...

    def jacobian(self, x: Any) -> np.ndarray: ...


@dataclass(frozen=True)
class ReferenceSet:
    points: np.ndarray
    bins: np.ndarray
    dedup: bool = True

    def __post_init__(self) -> None:
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        bins = np.asarray(self.bins, dtype=np.int64).reshape(-1)
        if points.shape[0] != bins.shape[0]:
            raise DimensionError(f"{points.shape[0]} reference points but {bins.shape[0]} bins")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "bins", bins)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class UgConstraint:
    forbidden_bins: FrozenSet[int] = frozenset()
    forbid_observed: bool = False
    mode: str = "hard"
    soft_penalty: float = 1e3

    def __post_init__(self) -> None:
        object.__setattr__(self, "forbidden_bins", frozenset(int(b) for b in self.forbidden_bins))
        if self.mode not in CONSTRAINT_MODES:
            raise ValueError(f"unknown constraint mode {self.mode!r}; use one of {CONSTRAINT_MODES}")
        if not self.soft_penalty > 0:
            raise ValueError("soft_penalty must be positive")

    def validate(self, space: BehaviorSpace) -> None:
        bad = sorted(b for b in self.forbidden_bins if not 0 <= b < space.num_bins)
        if bad:
            raise ValueError(f"forbidden bins {bad} outside [0, {space.num_bins})")

    def blocked(self, refs: Optional[ReferenceSet] = None) -> Set[int]:
        out = set(self.forbidden_bins)
        if self.forbid_observed and refs is not None:
            out.update(int(b) for b in refs.bins)
        return out


@dataclass(frozen=True)
class AcquisitionResult:
    choice: Union[np.ndarray, int]
    value: float
    feasible: bool = True
    fallback: bool = False


def build_references(
    gp: FittedGP, data: Dataset, space: BehaviorSpace, config: NoveltyConfig
) -> ReferenceSet:
    if len(data) == 0:
        raise ValueError("reference set needs at least one observation")
    means, _ = predict(gp, data.inputs)
    bins = space.project_many(means)
    if not config.dedup:
        return ReferenceSet(points=means, bins=bins, dedup=False)
    _, first = np.unique(bins, return_index=True)
    keep = np.sort(first)
    return ReferenceSet(points=means[keep], bins=bins[keep], dedup=True)


def neighborhood_config(config: NoveltyConfig, num_refs: int) -> NoveltyConfig:
    """Clamp k to a quarter of the reference count (at least one).

    Keeps the score a local neighborhood average; with k equal to the reference
    count it is the mean distance to every reference and peaks at extreme outcomes.
    """
    k = min(config.k, max(1, int(num_refs) // NEIGHBOR_DIVISOR))
    return config if k == config.k else replace(config, k=k)


def _distances(Y: np.ndarray, points: np.ndarray, metric: str) -> np.ndarray:
    """Distances between rows of Y (M, n) and reference points (R, n), shape (M, R)."""
    diff = Y[:, None, :] - points[None, :, :]
    if metric == "manhattan":
        return np.sum(np.abs(diff), axis=2)
    return np.sqrt(np.sum(diff**2, axis=2))


def _prepare(y: Any, refs: ReferenceSet) -> np.ndarray:
    if len(refs) == 0:
        raise ValueError("novelty needs a nonempty reference set")
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != refs.points.shape[1]:
        raise DimensionError(f"outcome dimension {y.shape[0]} does not match references {refs.points.shape[1]}")
    return y


def novelty_naive(y: Any, refs: ReferenceSet, config: NoveltyConfig) -> float:
    """Mean of the k nearest (or, for sort_order="descending", k farthest) reference distances."""
    y = _prepare(y, refs)
    dist = _distances(y[None, :], refs.points, config.metric)[0]
    k = min(config.k, dist.shape[0])
    if config.sort_order == "descending":
        return float(-np.mean(np.partition(-dist, k - 1)[:k]))
    return float(np.mean(np.partition(dist, k - 1)[:k]))


def _sorted_selection(dist: np.ndarray, k: int, sort_order: str) -> np.ndarray:
    ordered = np.sort(dist, axis=-1)
    if sort_order == "descending":
        ordered = ordered[..., ::-1]
    indicator = (np.arange(dist.shape[-1]) < k).astype(float)
    return ordered @ indicator / k


def novelty_sorted(y: Any, refs: ReferenceSet, config: NoveltyConfig) -> float:
    """Sort the full distance vector and average the first k entries through an indicator vector."""
    y = _prepare(y, refs)
    dist = _distances(y[None, :], refs.points, config.metric)[0]
    k = min(config.k, dist.shape[0])
    return float(_sorted_selection(dist, k, config.sort_order))


def novelty_many(Y: Any, refs: ReferenceSet, config: NoveltyConfig) -> np.ndarray:
    if len(refs) == 0:
        raise ValueError("novelty needs a nonempty reference set")
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    dist = _distances(Y, refs.points, config.metric)
    return _sorted_selection(dist, min(config.k, len(refs)), config.sort_order)


def novelty_value_and_grad(y: Any, refs: ReferenceSet, config: NoveltyConfig) -> Tuple[float, np.ndarray]:
    """Novelty and its gradient in y with the selected neighbor permutation held fixed."""
    y = _prepare(y, refs)
    dist = _distances(y[None, :], refs.points, config.metric)[0]
    k = min(config.k, dist.shape[0])
    order = np.argsort(dist, kind="stable")
    if config.sort_order == "descending":
        order = order[::-1]
    chosen = order[:k]
    diff = y[None, :] - refs.points[chosen]
    if config.metric == "manhattan":
        grad = np.sign(diff).sum(axis=0) / k
    else:
        norms = dist[chosen]
        safe = np.where(norms > 0, norms, 1.0)
        grad = np.where((norms > 0)[:, None], diff / safe[:, None], 0.0).sum(axis=0) / k
    return float(np.mean(dist[chosen])), grad


def _predicted_bin(gp: FittedGP, space: BehaviorSpace, x: Any) -> int:
    return space.project(posterior_mean(gp, x))


def acquisition_value(
    x: Any,
    path: OutcomeSampler,
    refs: ReferenceSet,
    config: NoveltyConfig,
    constraint: Optional[UgConstraint] = None,
    gp: Optional[FittedGP] = None,
    space: Optional[BehaviorSpace] = None,
) -> float:
    value = novelty_sorted(path.evaluate(x), refs, config)
    if constraint is None:
        return value
    if gp is None or space is None:
        raise ValueError("a behavior constraint needs the fitted GP and the behavior space")
    if _predicted_bin(gp, space, x) in constraint.blocked(refs):
        return float("-inf") if constraint.mode == "hard" else value - constraint.soft_penalty
    return value


def acquisition_value_and_grad(
    x: Any, path: OutcomeSampler, refs: ReferenceSet, config: NoveltyConfig
) -> Tuple[float, np.ndarray]:
    value, grad_y = novelty_value_and_grad(path.evaluate(x), refs, config)
    return value, grad_y @ path.jacobian(x)


def multistart_maximize(
    fun_and_grad: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    starts: np.ndarray,
    bounds: Sequence[Tuple[float, float]],
    maxiter: int = 200,
) -> Tuple[np.ndarray, np.ndarray]:
    """Run L-BFGS-B ascent from every start; returns the local optima and their values."""

    def negated(x: np.ndarray) -> Tuple[float, np.ndarray]:
        value, grad = fun_and_grad(x)
        return -value, -np.asarray(grad, dtype=float)

    optima = []
    values = []
    for start in np.atleast_2d(starts):
        result = optimize.minimize(
            negated,
            start,
            jac=True,
            method="L-BFGS-B",
            bounds=list(bounds),
            options={"maxiter": maxiter},
        )
        x = np.clip(result.x, [b[0] for b in bounds], [b[1] for b in bounds])
        optima.append(x)
        values.append(-float(result.fun))
        logger.debug("Restart finished: value=%s nit=%s success=%s.", -result.fun, result.nit, result.success)
    return np.array(optima), np.array(values)


def uniform_starts(bounds: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    bounds = np.asarray(bounds, dtype=float)
    return rng.uniform(bounds[:, 0], bounds[:, 1], size=(count, bounds.shape[0]))


def maximize_continuous(
    path: OutcomeSampler,
    refs: ReferenceSet,
    config: NoveltyConfig,
    bounds: Any,
    restarts: int = 10,
    seed: Union[int, np.random.Generator, None] = None,
    constraint: Optional[UgConstraint] = None,
    gp: Optional[FittedGP] = None,
    space: Optional[BehaviorSpace] = None,
) -> AcquisitionResult:
    """Best of `restarts` L-BFGS-B ascents started from uniform points in the box.

    The optimizer sees a finite penalty on blocked bins; candidates are then
    compared with the true acquisition. When neither a start nor an optimum is
    feasible, the start with the largest unconstrained acquisition is returned
    with fallback set.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    bounds = np.asarray(bounds, dtype=float)
    if np.any(bounds[:, 0] > bounds[:, 1]):
        raise ValueError("lower bounds must not exceed upper bounds")
    rng = np.random.default_rng(seed)
    starts = uniform_starts(bounds, restarts, rng)

    if constraint is not None and (gp is None or space is None):
        raise ValueError("a behavior constraint needs the fitted GP and the behavior space")
    blocked = constraint.blocked(refs) if constraint is not None else set()

    def objective(x: np.ndarray) -> Tuple[float, np.ndarray]:
        value, grad = acquisition_value_and_grad(x, path, refs, config)
        if blocked and _predicted_bin(gp, space, x) in blocked:
            value -= constraint.soft_penalty
        return value, grad

    optima, _ = multistart_maximize(objective, starts, [tuple(b) for b in bounds])
    candidates = np.vstack([starts, optima])
    scores = np.array([acquisition_value(x, path, refs, config, constraint, gp, space) for x in candidates])
    if np.any(np.isfinite(scores)):
        best = int(np.argmax(scores))
        feasible = not blocked or _predicted_bin(gp, space, candidates[best]) not in blocked
        return AcquisitionResult(choice=candidates[best], value=float(scores[best]), feasible=feasible)

    raw = np.array([novelty_sorted(path.evaluate(x), refs, config) for x in starts])
    best = int(np.argmax(raw))
    logger.warning("No feasible point among %s restarts; falling back to the best unconstrained start.", restarts)
    return AcquisitionResult(choice=starts[best], value=float(raw[best]), feasible=False, fallback=True)


def maximize_discrete(
    sample: Union[OutcomeSampler, np.ndarray],
    refs: ReferenceSet,
    config: NoveltyConfig,
    pool: Any,
    evaluated: Iterable[int],
    constraint: Optional[UgConstraint] = None,
    predicted_bins: Optional[np.ndarray] = None,
) -> AcquisitionResult:
    """Exact argmax over unevaluated candidates, lowest index on ties.

    `sample` is either a path evaluated on the pool or a (C, n) matrix of sampled
    outcomes aligned with the pool rows (rows of evaluated candidates are ignored).
    A constraint needs `predicted_bins`, the bin of the posterior mean per candidate.
    """
    pool = np.atleast_2d(np.asarray(pool, dtype=float))
    size = pool.shape[0]
    mask = np.ones(size, dtype=bool)
    done = np.fromiter((int(i) for i in evaluated), dtype=np.int64)
    mask[done[(done >= 0) & (done < size)]] = False
    open_idx = np.flatnonzero(mask)
    if open_idx.size == 0:
        raise PoolExhaustedError(f"all {size} pool candidates have been evaluated")

    if isinstance(sample, np.ndarray):
        outcomes = np.atleast_2d(sample)[open_idx]
    else:
        outcomes = sample.evaluate_many(pool[open_idx])
    scores = novelty_many(outcomes, refs, config)

    if constraint is None:
        best = int(np.argmax(scores))
        return AcquisitionResult(choice=int(open_idx[best]), value=float(scores[best]))
    if predicted_bins is None:
        raise ValueError("a behavior constraint needs the predicted bin of every candidate")
    blocked = np.isin(np.asarray(predicted_bins)[open_idx], sorted(constraint.blocked(refs)))
    if constraint.mode == "soft":
        penalised = scores - constraint.soft_penalty * blocked
        best = int(np.argmax(penalised))
        return AcquisitionResult(
            choice=int(open_idx[best]), value=float(penalised[best]), feasible=not bool(blocked[best])
        )
    if np.all(blocked):
        best = int(np.argmax(scores))
        logger.warning("Every unevaluated candidate is blocked; falling back to index=%s.", open_idx[best])
        return AcquisitionResult(choice=int(open_idx[best]), value=float(scores[best]), feasible=False, fallback=True)
    masked = np.where(blocked, -np.inf, scores)
    best = int(np.argmax(masked))
    return AcquisitionResult(choice=int(open_idx[best]), value=float(masked[best]))
