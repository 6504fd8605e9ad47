"""Benchmark problems: synthetic box functions and discrete candidate pools."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .behavior import BehaviorSpace, OutcomeBox
from .errors import DimensionError, PoolFormatError


logger = logging.getLogger("beacon.problems")

AUTO_RANGE_SAMPLES = 100_000
AUTO_RANGE_SEED = 0
AUTO_NOISE_FRACTION = 0.01
MIN_RANGE_WIDTH = 1e-9

STAIRCASE_STEPS = (0.35, 0.6, 0.8, 0.92)
STAIRCASE_SHARPNESS = 60.0


def _rows(x: Any) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


def _finish(values: np.ndarray, single: bool) -> Any:
    return values[0] if single else values


def ackley(x: Any, a: float = 20.0, b: float = 0.2, c: float = 2.0 * np.pi) -> Any:
    X, single = _rows(x)
    term1 = -a * np.exp(-b * np.sqrt(np.mean(X**2, axis=1)))
    term2 = -np.exp(np.mean(np.cos(c * X), axis=1))
    return _finish(term1 + term2 + a + np.e, single)


def rosenbrock(x: Any) -> Any:
    X, single = _rows(x)
    values = np.sum(100.0 * (X[:, 1:] - X[:, :-1] ** 2) ** 2 + (1.0 - X[:, :-1]) ** 2, axis=1)
    return _finish(values, single)


def styblinski_tang(x: Any) -> Any:
    X, single = _rows(x)
    return _finish(0.5 * np.sum(X**4 - 16.0 * X**2 + 5.0 * X, axis=1), single)


def multi_output_plus(x: Any) -> np.ndarray:
    """Two-output surrogate on [-5, 5]^6 with a plus-shaped, long-tailed outcome scatter.

    y1 = x3 * exp(-(x1^2 + x2^2)) and y2 = x6 * exp(-(x4^2 + x5^2)): each output is a
    linear stretch gated by a radial decay, so most of the box maps near the origin
    and only small input regions reach the arms of the plus.
    """
    X, single = _rows(x)
    if X.shape[1] != 6:
        raise DimensionError(f"multi_output_plus takes 6 inputs, got {X.shape[1]}")
    if np.any(np.abs(X) > 5.0):
        raise ValueError("multi_output_plus is defined on [-5, 5]^6")
    y1 = X[:, 2] * np.exp(-(X[:, 0] ** 2 + X[:, 1] ** 2))
    y2 = X[:, 5] * np.exp(-(X[:, 3] ** 2 + X[:, 4] ** 2))
    return _finish(np.column_stack([y1, y2]), single)


def staircase(x: Any) -> Any:
    """Five plateaus of unequal width on [0, 1] joined by steep sigmoid steps."""
    X, single = _rows(x)
    steps = np.asarray(STAIRCASE_STEPS)
    values = np.sum(1.0 / (1.0 + np.exp(-STAIRCASE_SHARPNESS * (X[:, :1] - steps))), axis=1)
    return _finish(values, single)


@dataclass(frozen=True)
class FunctionInfo:
    function: Callable[[Any], Any]
    outcome_dim: int
    fixed_dim: Optional[int] = None


FUNCTIONS: Dict[str, FunctionInfo] = {
    "ackley": FunctionInfo(ackley, 1),
    "rosenbrock": FunctionInfo(rosenbrock, 1),
    "styblinski_tang": FunctionInfo(styblinski_tang, 1),
    "multi_output_plus": FunctionInfo(multi_output_plus, 2, fixed_dim=6),
    "staircase": FunctionInfo(staircase, 1, fixed_dim=1),
}


def _noise_vector(noise_std: Any, outcome_dim: int) -> np.ndarray:
    noise = np.broadcast_to(np.asarray(noise_std, dtype=float), (outcome_dim,)).copy()
    if np.any(noise < 0) or not np.all(np.isfinite(noise)):
        raise ValueError("noise_std must be finite and non-negative")
    return noise


@dataclass(frozen=True)
class ContinuousProblem:
    name: str
    bounds: np.ndarray
    outcome_dim: int
    evaluator: Callable[[Any], Any]
    noise_std: Any = 0.0
    exposes_noiseless: bool = True
    provenance: str = "analytic"

    def __post_init__(self) -> None:
        bounds = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        if bounds.shape[1] != 2 or np.any(bounds[:, 0] >= bounds[:, 1]):
            raise ValueError("bounds must be a (d, 2) array with lower < upper")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "noise_std", _noise_vector(self.noise_std, self.outcome_dim))

    @property
    def is_pool(self) -> bool:
        return False

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    def evaluate_many(self, X: Any) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise DimensionError(f"{self.name} takes {self.dim} inputs, got {X.shape[1]}")
        return np.asarray(self.evaluator(X), dtype=float).reshape(X.shape[0], self.outcome_dim)

    def evaluate(self, x: Any) -> np.ndarray:
        return self.evaluate_many(np.asarray(x, dtype=float).reshape(1, -1))[0]

    def sample_inputs(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.bounds[:, 0], self.bounds[:, 1], size=(count, self.dim))

    def query(self, x: Any, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """Noisy observation and the noiseless value (for metrics only)."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise ValueError("query input must be finite")
        clean = self.evaluate(x)
        return clean + self.noise_std * rng.normal(size=self.outcome_dim), clean


@dataclass(frozen=True)
class PoolProblem:
    name: str
    candidates: np.ndarray
    outcomes: np.ndarray
    noise_std: Any = 0.0
    provenance: str = "file"

    def __post_init__(self) -> None:
        X = np.array(self.candidates, dtype=float, ndmin=2)
        Y = np.array(self.outcomes, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape[0] != Y.shape[0]:
            raise DimensionError(f"{X.shape[0]} candidates but {Y.shape[0]} outcome rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("pool entries must be finite")
        if np.unique(X, axis=0).shape[0] != X.shape[0]:
            raise ValueError("pool contains duplicate candidate rows")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "candidates", X)
        object.__setattr__(self, "outcomes", Y)
        object.__setattr__(self, "noise_std", _noise_vector(self.noise_std, Y.shape[1]))

    @property
    def is_pool(self) -> bool:
        return True

    @property
    def dim(self) -> int:
        return self.candidates.shape[1]

    @property
    def outcome_dim(self) -> int:
        return self.outcomes.shape[1]

    @property
    def exposes_noiseless(self) -> bool:
        return True

    def __len__(self) -> int:
        return self.candidates.shape[0]

    def query(self, index: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        index = int(index)
        if not 0 <= index < len(self):
            raise IndexError(f"pool index {index} outside [0, {len(self)})")
        clean = self.outcomes[index].copy()
        return clean + self.noise_std * rng.normal(size=self.outcome_dim), clean


Problem = Union[ContinuousProblem, PoolProblem]


def query(problem: Problem, x_or_index: Any, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    return problem.query(x_or_index, rng)


@dataclass(frozen=True)
class RangeSpec:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    provenance: str = "explicit"
    sample_count: int = 0
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        if len(lower) != len(upper):
            raise DimensionError("range lower/upper lengths differ")
        for i, (lo, hi) in enumerate(zip(lower, upper)):
            if not hi - lo >= MIN_RANGE_WIDTH:
                raise ValueError(f"degenerate outcome range on output {i}: [{lo}, {hi}]")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lower": list(self.lower),
            "upper": list(self.upper),
            "provenance": self.provenance,
            "sample_count": self.sample_count,
            "seed": self.seed,
        }


def empirical_outcomes(problem: ContinuousProblem, sample_count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return problem.evaluate_many(problem.sample_inputs(sample_count, rng))


def estimate_range(
    problem: Problem, sample_count: int = AUTO_RANGE_SAMPLES, seed: int = AUTO_RANGE_SEED
) -> RangeSpec:
    if problem.is_pool:
        Y = problem.outcomes
        return RangeSpec(tuple(Y.min(axis=0)), tuple(Y.max(axis=0)), "empirical", len(problem), None)
    Y = empirical_outcomes(problem, sample_count, seed)
    return RangeSpec(tuple(Y.min(axis=0)), tuple(Y.max(axis=0)), "empirical", sample_count, seed)


def make_space(
    problem: Problem,
    bins_per_dim: Sequence[int],
    outcome_range: Union[RangeSpec, str, Sequence[Sequence[float]]] = "auto",
    *,
    sample_count: int = AUTO_RANGE_SAMPLES,
    seed: int = AUTO_RANGE_SEED,
) -> BehaviorSpace:
    if any(int(b) < 1 for b in bins_per_dim):
        raise ValueError("bins_per_dim entries must be positive")
    if isinstance(outcome_range, str):
        if outcome_range != "auto":
            raise ValueError(f"unknown outcome range {outcome_range!r}; use 'auto' or explicit pairs")
        outcome_range = estimate_range(problem, sample_count, seed)
    elif not isinstance(outcome_range, RangeSpec):
        pairs = [tuple(float(v) for v in pair) for pair in outcome_range]
        outcome_range = RangeSpec(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))
    if len(outcome_range.lower) != problem.outcome_dim:
        raise DimensionError(
            f"range has {len(outcome_range.lower)} outputs but {problem.name} has {problem.outcome_dim}"
        )
    box = OutcomeBox(lower=outcome_range.lower, upper=outcome_range.upper)
    return BehaviorSpace(box=box, bins_per_dim=tuple(int(b) for b in bins_per_dim))


def auto_noise_std(problem: Problem, sample_count: int = 10_000, seed: int = AUTO_RANGE_SEED) -> np.ndarray:
    """One percent of the empirical per-output outcome standard deviation."""
    if problem.is_pool:
        Y = problem.outcomes
    else:
        Y = empirical_outcomes(problem, sample_count, seed)
    return AUTO_NOISE_FRACTION * Y.std(axis=0)


def with_noise(problem: Problem, noise_std: Any) -> Problem:
    if isinstance(noise_std, str):
        if noise_std != "auto":
            raise ValueError(f"unknown noise setting {noise_std!r}")
        noise_std = auto_noise_std(problem)
    return replace(problem, noise_std=noise_std)


def build_function_problem(
    name: str,
    dim: Optional[int],
    bounds: Sequence[float],
    noise_std: Any = 0.0,
    provenance: str = "analytic",
) -> ContinuousProblem:
    info = FUNCTIONS.get(name)
    if info is None:
        raise KeyError(name)
    if info.fixed_dim is not None:
        if dim is not None and int(dim) != info.fixed_dim:
            raise DimensionError(f"{name} has fixed dimension {info.fixed_dim}, got {dim}")
        dim = info.fixed_dim
    if dim is None or int(dim) < 1:
        raise ValueError(f"{name} needs a positive dimension")
    lo, hi = float(bounds[0]), float(bounds[1])
    problem = ContinuousProblem(
        name=name,
        bounds=np.tile([lo, hi], (int(dim), 1)),
        outcome_dim=info.outcome_dim,
        evaluator=info.function,
        provenance=provenance,
    )
    return with_noise(problem, noise_std)


def _header(d: int, n: int) -> list:
    return [f"x{i}" for i in range(1, d + 1)] + [f"y{j}" for j in range(1, n + 1)]


def load_pool(path: Union[str, Path], d: int, n: int, noise_std: Any = 0.0, name: Optional[str] = None) -> PoolProblem:
    path = Path(path)
    expected = _header(d, n)
    rows = []
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise PoolFormatError(f"{path} is empty", line=1)
        if [h.strip() for h in header] != expected:
            raise PoolFormatError(f"expected header {','.join(expected)}, got {','.join(header)}", line=1)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != d + n:
                raise PoolFormatError(f"expected {d + n} values, got {len(row)}", line=line)
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise PoolFormatError(f"non-numeric cell ({exc})", line=line) from exc
            if not all(math.isfinite(v) for v in values):
                raise PoolFormatError("non-finite value", line=line)
            rows.append(values)
    if not rows:
        raise PoolFormatError(f"{path} has no candidate rows", line=2)
    data = np.asarray(rows, dtype=float)
    X, Y = data[:, :d], data[:, d:]
    _, first = np.unique(X, axis=0, return_index=True)
    keep = np.sort(first)
    if keep.size != X.shape[0]:
        logger.warning("Dropped %s duplicate candidate rows from %s.", X.shape[0] - keep.size, path)
    pool = PoolProblem(name=name or path.stem, candidates=X[keep], outcomes=Y[keep], provenance=f"file:{path.name}")
    return with_noise(pool, noise_std)


def save_pool(path: Union[str, Path], pool: PoolProblem) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_header(pool.dim, pool.outcome_dim))
        for x, y in zip(pool.candidates, pool.outcomes):
            writer.writerow([repr(float(v)) for v in np.concatenate([x, y])])


def make_synthetic_pool(
    size: int = 2000,
    dim: int = 4,
    num_bins: int = 25,
    decay: float = 0.3,
    seed: int = 0,
    noise_std: Any = 0.0,
) -> PoolProblem:
    """Seeded pool whose single outcome x1 has a long-tailed occupancy over `num_bins` equal bins.

    Bin b receives roughly size * exp(-decay * b) / Z candidates (at least two), and two
    anchor candidates pin the outcome range to exactly [0, 1].
    """
    if size < 2 * num_bins + 2:
        raise ValueError(f"size must be at least {2 * num_bins + 2} for {num_bins} bins")
    rng = np.random.default_rng(seed)
    weights = np.exp(-decay * np.arange(num_bins))
    counts = np.maximum(2, np.round(weights / weights.sum() * (size - 2)).astype(int))
    counts[0] += (size - 2) - counts.sum()
    if counts[0] < 2:
        raise ValueError("decay too small for the requested pool size")
    outcome = np.concatenate(
        [(b + rng.uniform(0.05, 0.95, size=c)) / num_bins for b, c in enumerate(counts)] + [[0.0, 1.0]]
    )
    features = np.column_stack([outcome, rng.uniform(0.0, 1.0, size=(outcome.size, dim - 1))])
    order = rng.permutation(outcome.size)
    pool = PoolProblem(
        name="synthetic_pool",
        candidates=features[order],
        outcomes=outcome[order, None],
        provenance=f"synthetic(seed={seed})",
    )
    return with_noise(pool, noise_std)
