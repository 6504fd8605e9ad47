"""Search loops: novelty-driven Thompson sampling and the baselines it is compared with.

Every algorithm consumes exactly one problem query per step. All randomness is
drawn from the replicate's generator, so (algorithm, problem, space, settings,
seed) fully determines the trace.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Set, Tuple

import numpy as np
from scipy.stats import qmc

from beacon_models.acquisition import (
    ReferenceSet,
    UgConstraint,
    build_references,
    maximize_continuous,
    maximize_discrete,
    multistart_maximize,
    neighborhood_config,
    novelty_sorted,
    uniform_starts,
)
from beacon_models.behavior import BehaviorSpace
from beacon_models.config import NoveltyConfig, SearchSettings
from beacon_models.errors import FactorizationError, PoolExhaustedError, UnsupportedKernelError
from beacon_models.gp import (
    Dataset,
    FittedGP,
    HyperparameterLayout,
    fit_hyperparameters,
    fit_posterior,
    posterior_variance_gradient,
    predict,
)
from beacon_models.kernels import KernelSpec
from beacon_models.problems import Problem
from beacon_models.sampling import draw_path, exact_joint_sample

from .run_state import log_timestamp
from .traces import RunTrace, TraceRow


logger = logging.getLogger("beacon.search")

SOBOL_MAX_DIM = 21201


class ReplicateError(RuntimeError):
    def __init__(self, message: str, trace: RunTrace) -> None:
        super().__init__(message)
        self.trace = trace


@dataclass
class SearchState:
    rng: np.random.Generator
    data: Optional[Dataset] = None
    iteration: int = 0
    budget: int = 0
    evaluated: Set[int] = field(default_factory=set)
    indices: List[Optional[int]] = field(default_factory=list)
    noiseless: List[np.ndarray] = field(default_factory=list)
    kernel: Optional[KernelSpec] = None
    hyperparameters: List[Dict[str, Any]] = field(default_factory=list)
    step_flags: List[str] = field(default_factory=list)
    population: List[int] = field(default_factory=list)
    sobol_points: Optional[np.ndarray] = None
    sobol_seed: Optional[int] = None

    @classmethod
    def create(cls, seed: int) -> "SearchState":
        return cls(rng=np.random.default_rng(seed))

    def derive_seed(self) -> int:
        return int(self.rng.integers(2**32))

    def unevaluated(self, pool_size: int) -> np.ndarray:
        mask = np.ones(pool_size, dtype=bool)
        if self.evaluated:
            mask[np.fromiter(self.evaluated, dtype=np.int64)] = False
        return np.flatnonzero(mask)


def observe(state: SearchState, problem: Problem, choice: Any) -> Tuple[np.ndarray, np.ndarray]:
    """Query the problem at a box point or pool index and append the noisy observation."""
    if problem.is_pool:
        index = int(choice)
        if index in state.evaluated:
            raise ValueError(f"pool index {index} was already evaluated")
        noisy, clean = problem.query(index, state.rng)
        x = problem.candidates[index]
        state.evaluated.add(index)
        state.indices.append(index)
    else:
        x = np.clip(np.asarray(choice, dtype=float).reshape(-1), problem.bounds[:, 0], problem.bounds[:, 1])
        noisy, clean = problem.query(x, state.rng)
        state.indices.append(None)
    if state.data is None:
        state.data = Dataset(x[None, :], noisy[None, :])
    else:
        state.data = state.data.append(x, noisy)
    state.noiseless.append(clean)
    return x, noisy


def initialize(state: SearchState, problem: Problem, n_init: int) -> None:
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    if problem.is_pool:
        if n_init > len(problem):
            raise ValueError(f"n_init={n_init} exceeds the pool size {len(problem)}")
        for index in state.rng.choice(len(problem), size=n_init, replace=False):
            observe(state, problem, int(index))
    else:
        for x in problem.sample_inputs(n_init, state.rng):
            observe(state, problem, x)


class SearchAlgorithm:
    name = ""

    def __init__(self, problem: Problem, space: BehaviorSpace, settings: Optional[SearchSettings] = None) -> None:
        self.problem = problem
        self.space = space
        self.settings = settings or SearchSettings()

    def start(self, state: SearchState) -> None:
        pass

    def propose(self, state: SearchState) -> Any:
        raise NotImplementedError

    def after_observe(self, state: SearchState) -> None:
        pass

    def step(self, state: SearchState) -> Tuple[Any, SearchState]:
        if state.data is None:
            raise ValueError("search state has no initial observations")
        if state.budget and state.iteration >= state.budget:
            raise ValueError(f"budget of {state.budget} iterations exhausted")
        state.step_flags = []
        if self.problem.is_pool and not state.unevaluated(len(self.problem)).size:
            raise PoolExhaustedError(f"all {len(self.problem)} pool candidates have been evaluated")
        choice = self.propose(state)
        observe(state, self.problem, choice)
        state.iteration += 1
        self.after_observe(state)
        return choice, state


class RandomSearch(SearchAlgorithm):
    name = "rs"

    def propose(self, state: SearchState) -> Any:
        if self.problem.is_pool:
            return int(state.rng.choice(state.unevaluated(len(self.problem))))
        return self.problem.sample_inputs(1, state.rng)[0]


def sobol_sequence(dim: int, count: int, seed: Optional[int] = None, scramble: bool = True) -> np.ndarray:
    """`count` Sobol points in [0, 1]^dim; the unscrambled sequence skips its all-zero first point."""
    if dim > SOBOL_MAX_DIM:
        raise ValueError(f"Sobol sequences support at most {SOBOL_MAX_DIM} dimensions, got {dim}")
    skip = 0 if scramble else 1
    m = max(0, math.ceil(math.log2(count + skip))) if count + skip > 1 else 0
    engine = qmc.Sobol(d=dim, scramble=scramble, seed=seed)
    return engine.random_base2(m)[skip : skip + count]


class SobolSearch(SearchAlgorithm):
    name = "sobol"

    def __init__(self, problem: Problem, space: Optional[BehaviorSpace] = None, settings: Optional[SearchSettings] = None) -> None:
        super().__init__(problem, space, settings)
        if problem.dim > SOBOL_MAX_DIM:
            raise ValueError(f"Sobol sequences support at most {SOBOL_MAX_DIM} dimensions, got {problem.dim}")
        self._normalized = None
        if problem.is_pool:
            X = problem.candidates
            spread = np.ptp(X, axis=0)
            self._normalized = (X - X.min(axis=0)) / np.where(spread > 0, spread, 1.0)

    def start(self, state: SearchState) -> None:
        if state.sobol_seed is None:
            state.sobol_seed = state.derive_seed()
        state.sobol_points = sobol_sequence(self.problem.dim, max(state.budget, 1), seed=state.sobol_seed)

    def propose(self, state: SearchState) -> Any:
        if state.sobol_seed is None:
            self.start(state)
        if state.iteration >= state.sobol_points.shape[0]:
            # same seed, longer prefix of the same scrambled sequence
            count = 2 * (state.iteration + 1)
            state.sobol_points = sobol_sequence(self.problem.dim, count, seed=state.sobol_seed)
        u = state.sobol_points[state.iteration]
        if not self.problem.is_pool:
            low, high = self.problem.bounds[:, 0], self.problem.bounds[:, 1]
            return low + u * (high - low)
        open_idx = state.unevaluated(len(self.problem))
        dist = np.sum((self._normalized[open_idx] - u) ** 2, axis=1)
        return int(open_idx[int(np.argmin(dist))])


class ModelBasedSearch(SearchAlgorithm):
    """Shared GP refit/posterior plumbing."""

    def _hyper_due(self, state: SearchState) -> bool:
        return state.kernel is None or state.iteration % self.settings.refit_every == 0

    def _default_kernel(self, data: Dataset) -> KernelSpec:
        layout = HyperparameterLayout(self.settings.kernel_family, data.input_dim, data.outcome_dim, self.settings.coupling)
        return layout.unpack(layout.initial(data, self.settings.noise_floor))

    def posterior(self, state: SearchState) -> FittedGP:
        data = state.data
        settings = self.settings
        if self._hyper_due(state):
            if np.all(np.ptp(data.inputs, axis=0) == 0):
                state.step_flags.append("degenerate_data")
            try:
                kernel = fit_hyperparameters(
                    data,
                    settings.kernel_family,
                    restarts=settings.hyper_restarts,
                    seed=state.derive_seed(),
                    coupling=settings.coupling,
                    noise_floor=settings.noise_floor,
                )
                state.kernel = kernel
                state.hyperparameters.append({"iteration": state.iteration, **kernel.to_dict()})
            except (FactorizationError, np.linalg.LinAlgError, ValueError) as exc:
                state.step_flags.append("hyperfit_fallback")
                logger.warning(
                    "Hyperparameter fit failed at iteration=%s (%s); keeping previous hyperparameters. ts=%s",
                    state.iteration,
                    exc,
                    log_timestamp(),
                )
                if state.kernel is None:
                    state.kernel = self._default_kernel(data)
        return fit_posterior(data, state.kernel)


class BeaconSearch(ModelBasedSearch):
    name = "beacon"

    def __init__(self, problem: Problem, space: BehaviorSpace, settings: Optional[SearchSettings] = None) -> None:
        super().__init__(problem, space, settings)
        if not problem.is_pool and self.settings.kernel_family == "tanimoto":
            raise UnsupportedKernelError("the tanimoto kernel is only supported on pool problems")

    def constraint(self) -> Optional[UgConstraint]:
        return None

    def propose(self, state: SearchState) -> Any:
        gp = self.posterior(state)
        refs = build_references(gp, state.data, self.space, self.settings.novelty())
        novelty: NoveltyConfig = neighborhood_config(self.settings.novelty(), len(refs))
        constraint = self.constraint()
        if self.problem.is_pool:
            result = self._propose_pool(state, gp, refs, novelty, constraint)
        else:
            path = draw_path(gp, self.settings.num_features, seed=state.derive_seed())
            result = maximize_continuous(
                path,
                refs,
                novelty,
                self.problem.bounds,
                restarts=self.settings.acquisition_restarts,
                seed=state.derive_seed(),
                constraint=constraint,
                gp=gp,
                space=self.space,
            )
        if result.fallback:
            state.step_flags.append("constraint_fallback")
        return result.choice

    def _propose_pool(self, state, gp, refs, novelty, constraint):
        pool = self.problem.candidates
        open_idx = state.unevaluated(len(self.problem))
        if gp.kernel.stationary:
            sample = draw_path(gp, self.settings.num_features, seed=state.derive_seed())
        else:
            sample = np.full((pool.shape[0], gp.num_outputs), np.nan)
            sample[open_idx] = exact_joint_sample(gp, pool[open_idx], seed=state.derive_seed())
        predicted = None
        if constraint is not None:
            means, _ = predict(gp, pool)
            predicted = self.space.project_many(means)
        return maximize_discrete(sample, refs, novelty, pool, state.evaluated, constraint, predicted)


class UgBeaconSearch(BeaconSearch):
    """Novelty search that refuses candidates whose predicted bin is excluded."""

    name = "ug-beacon"

    def __init__(self, problem: Problem, space: BehaviorSpace, settings: Optional[SearchSettings] = None) -> None:
        super().__init__(problem, space, settings)
        self._constraint = UgConstraint(
            forbidden_bins=frozenset(self.settings.forbidden_bins),
            forbid_observed=self.settings.forbid_observed,
            mode=self.settings.constraint_mode,
            soft_penalty=self.settings.soft_penalty,
        )
        self._constraint.validate(space)

    def constraint(self) -> Optional[UgConstraint]:
        return self._constraint


class MaxVarSearch(ModelBasedSearch):
    name = "maxvar"

    def propose(self, state: SearchState) -> Any:
        gp = self.posterior(state)
        if self.problem.is_pool:
            open_idx = state.unevaluated(len(self.problem))
            _, var = predict(gp, self.problem.candidates[open_idx])
            return int(open_idx[int(np.argmax(var.sum(axis=1)))])
        if not gp.kernel.stationary:
            raise UnsupportedKernelError(f"{gp.kernel.family} kernel has no input gradient")
        bounds = self.problem.bounds
        rng = np.random.default_rng(state.derive_seed())
        starts = uniform_starts(bounds, self.settings.acquisition_restarts, rng)

        def objective(x: np.ndarray) -> Tuple[float, np.ndarray]:
            return posterior_variance_gradient(gp, x)

        optima, _ = multistart_maximize(objective, starts, [tuple(b) for b in bounds])
        candidates = np.vstack([starts, optima])
        values = predict(gp, candidates)[1].sum(axis=1)
        return candidates[int(np.argmax(values))]


def observed_novelty(y: Any, others: np.ndarray, k: int, metric: str) -> float:
    refs = ReferenceSet(points=others, bins=np.zeros(len(others), dtype=np.int64), dedup=False)
    return novelty_sorted(y, refs, NoveltyConfig(k=k, metric=metric, dedup=False))


class NoveltyEvolution(SearchAlgorithm):
    """Steady-state novelty-search EA scored on observed noisy outcomes."""

    name = "ns-ea"

    def __init__(self, problem: Problem, space: BehaviorSpace, settings: Optional[SearchSettings] = None) -> None:
        super().__init__(problem, space, settings)
        if problem.is_pool:
            raise ValueError("ns-ea needs a continuous box problem; pool problems are not supported")
        self.evolution = self.settings.evolution()

    def start(self, state: SearchState) -> None:
        if not state.population:
            size = min(self.evolution.population_size, len(state.data))
            state.population = list(range(len(state.data) - size, len(state.data)))

    def member_novelty(self, state: SearchState) -> np.ndarray:
        Y = state.data.outcomes
        scores = []
        for row in state.population:
            others = np.delete(Y, row, axis=0)
            scores.append(observed_novelty(Y[row], others, self.evolution.novelty_k, self.settings.metric))
        return np.asarray(scores)

    def propose(self, state: SearchState) -> Any:
        self.start(state)
        if len(state.data) > 1:
            parent = state.population[int(np.argmax(self.member_novelty(state)))]
        else:
            parent = state.population[0]
        bounds = self.problem.bounds
        width = bounds[:, 1] - bounds[:, 0]
        child = state.data.inputs[parent] + state.rng.normal(size=width.size) * self.evolution.mutation_scale * width
        return np.clip(child, bounds[:, 0], bounds[:, 1])

    def after_observe(self, state: SearchState) -> None:
        state.population.append(len(state.data) - 1)
        if len(state.population) > self.evolution.population_size:
            del state.population[int(np.argmin(self.member_novelty(state)))]


ALGORITHMS = {
    "beacon": BeaconSearch,
    "ug-beacon": UgBeaconSearch,
    "rs": RandomSearch,
    "sobol": SobolSearch,
    "maxvar": MaxVarSearch,
    "ns-ea": NoveltyEvolution,
}


def build_algorithm(
    name: str, problem: Problem, space: BehaviorSpace, settings: Optional[SearchSettings] = None
) -> SearchAlgorithm:
    cls = ALGORITHMS.get(name)
    if cls is None:
        raise KeyError(f"unknown algorithm {name!r}; use one of {sorted(ALGORITHMS)}")
    return cls(problem, space, settings)


def beacon_step(state: SearchState, problem: Problem, space: BehaviorSpace, settings: SearchSettings):
    return BeaconSearch(problem, space, settings).step(state)


def random_step(state: SearchState, problem: Problem, space: Optional[BehaviorSpace] = None):
    return RandomSearch(problem, space).step(state)


def sobol_step(state: SearchState, problem: Problem, space: Optional[BehaviorSpace] = None):
    return SobolSearch(problem, space).step(state)


def maxvar_step(state: SearchState, problem: Problem, space: BehaviorSpace, settings: Optional[SearchSettings] = None):
    return MaxVarSearch(problem, space, settings).step(state)


def nsea_step(state: SearchState, problem: Problem, space: BehaviorSpace, settings: Optional[SearchSettings] = None):
    return NoveltyEvolution(problem, space, settings).step(state)


def _append_row(trace: RunTrace, state: SearchState, space: BehaviorSpace, problem: Problem, seen: Set[int]) -> None:
    row = len(trace.rows)
    noisy = state.data.outcomes[row]
    clean = state.noiseless[row]
    noisy_bin = space.project(noisy)
    bin_id = space.project(clean) if problem.exposes_noiseless else noisy_bin
    seen.add(bin_id)
    trace.rows.append(
        TraceRow(
            iteration=row + 1,
            input=[float(v) for v in state.data.inputs[row]],
            noisy=[float(v) for v in noisy],
            noiseless=[float(v) for v in clean] if problem.exposes_noiseless else None,
            bin=int(bin_id),
            noisy_bin=int(noisy_bin),
            distinct=len(seen),
            reachability=len(seen) / space.num_bins,
            index=state.indices[row],
            flags=list(state.step_flags) if row >= trace.n_init else [],
        )
    )


def run_replicate(
    algorithm: str,
    problem: Problem,
    space: BehaviorSpace,
    settings: Optional[SearchSettings] = None,
    *,
    iterations: int,
    n_init: int,
    seed: int,
    replicate: int = 0,
    label: str = "",
    config_hash: str = "",
    progress_every: int = 0,
    order: int = 0,
) -> RunTrace:
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    trace = RunTrace(
        label=label or algorithm,
        algorithm=algorithm,
        replicate=replicate,
        seed=seed,
        config_hash=config_hash,
        problem=problem.name,
        num_bins=space.num_bins,
        n_init=n_init,
        iterations=iterations,
        order=order,
    )
    state = SearchState.create(seed)
    state.budget = iterations
    seen: Set[int] = set()
    try:
        search = build_algorithm(algorithm, problem, space, settings)
        initialize(state, problem, n_init)
        for _ in range(n_init):
            _append_row(trace, state, space, problem, seen)
        search.start(state)
        for _ in range(iterations):
            search.step(state)
            _append_row(trace, state, space, problem, seen)
            if progress_every and state.iteration % progress_every == 0:
                logger.info(
                    "%s replicate=%s iteration=%s/%s distinct=%s reach=%.3f ts=%s",
                    trace.label,
                    replicate,
                    state.iteration,
                    iterations,
                    len(seen),
                    trace.rows[-1].reachability,
                    log_timestamp(),
                )
    except Exception as exc:
        trace.hyperparameters = list(state.hyperparameters)
        raise ReplicateError(f"{trace.label} replicate {replicate} failed after {len(trace.rows)} rows: {exc}", trace) from exc
    trace.hyperparameters = list(state.hyperparameters)
    return trace
