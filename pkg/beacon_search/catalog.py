from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Optional

import yaml

from beacon_models.behavior import BehaviorSpace
from beacon_models.problems import (
    FUNCTIONS,
    Problem,
    build_function_problem,
    load_pool,
    make_space,
    make_synthetic_pool,
    with_noise,
)

if TYPE_CHECKING:
    from .config import ProblemConfig, SpaceConfig


PROBLEM_KINDS = ("function", "synthetic_pool")


@dataclass
class ProblemEntry:
    name: str
    kind: str = "function"
    dim: Optional[int] = None
    bounds: List[float] = field(default_factory=list)
    bins_per_dim: List[int] = field(default_factory=lambda: [25])
    range: Any = "auto"
    noise_std: Any = "auto"
    size: int = 0
    provenance: str = "analytic"
    description: str = ""


@dataclass
class ProblemCatalog:
    problems: Dict[str, ProblemEntry]

    def names(self) -> List[str]:
        return sorted(self.problems)


def load_catalog(path: str) -> ProblemCatalog:
    with open(path, "r", encoding="utf-8") as handle:
        raw = yaml.safe_load(handle) or {}
    problems_raw = raw.get("problems", {}) or {}
    problems: Dict[str, ProblemEntry] = {}
    for name, values in problems_raw.items():
        if not isinstance(values, dict):
            continue
        kind = str(values.get("kind", "function"))
        if kind not in PROBLEM_KINDS:
            raise ValueError(f"{path}: problem {name!r} has unknown kind {kind!r}")
        if kind == "function" and name not in FUNCTIONS:
            raise ValueError(f"{path}: no built-in function named {name!r}")
        problems[name] = ProblemEntry(
            name=name,
            kind=kind,
            dim=int(values["dim"]) if values.get("dim") is not None else None,
            bounds=[float(v) for v in values.get("bounds", []) or []],
            bins_per_dim=[int(b) for b in values.get("bins_per_dim", [25])],
            range=values.get("range", "auto"),
            noise_std=values.get("noise_std", "auto"),
            size=int(values.get("size", 0) or 0),
            provenance=str(values.get("provenance", "analytic")),
            description=str(values.get("description", "")),
        )
    return ProblemCatalog(problems=problems)


def resolve_catalog_path() -> str:
    override = os.environ.get("BEACON_PROBLEMS")
    if override:
        return override
    base_dir = os.path.dirname(os.path.abspath(__file__))
    return os.path.join(base_dir, "config", "problems.yaml")


def build_problem(problem: "ProblemConfig", catalog: ProblemCatalog, space: Optional["SpaceConfig"] = None) -> Problem:
    """Instantiate the benchmark described by a resolved problem section.

    Synthetic pools are laid out over the configured bin count (the catalog default without a space).
    """
    if problem.name == "pool":
        return load_pool(problem.pool_path, problem.input_dim, problem.outcome_dim, noise_std=problem.noise_std)
    entry = catalog.problems[problem.name]
    if entry.kind == "synthetic_pool":
        bins = space.bins_per_dim if space is not None and space.bins_per_dim else entry.bins_per_dim
        pool = make_synthetic_pool(size=problem.size, dim=problem.dim, num_bins=int(bins[0]), seed=problem.seed)
        return with_noise(pool, problem.noise_std)
    return build_function_problem(
        problem.name,
        problem.dim,
        problem.bounds,
        noise_std=problem.noise_std,
        provenance=entry.provenance,
    )


def build_space(space: "SpaceConfig", problem: Problem) -> BehaviorSpace:
    outcome_range = space.range if space.range is not None else "auto"
    return make_space(
        problem,
        space.bins_per_dim,
        outcome_range,
        sample_count=space.sample_count,
        seed=space.seed,
    )
