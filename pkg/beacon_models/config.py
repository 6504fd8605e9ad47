from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any, List, Mapping


KERNEL_FAMILIES = ("squared_exponential", "matern52", "tanimoto")
COUPLING_MODES = ("icm", "identity")
DISTANCE_METRICS = ("euclidean", "manhattan")
SORT_ORDERS = ("ascending", "descending")
CONSTRAINT_MODES = ("hard", "soft")


@dataclass
class NoveltyConfig:
    k: int = 10
    metric: str = "euclidean"
    dedup: bool = False
    # "descending" keeps the k largest distances; only useful for comparison runs
    sort_order: str = "ascending"

    def __post_init__(self) -> None:
        if int(self.k) < 1:
            raise ValueError("novelty k must be >= 1")
        if self.metric not in DISTANCE_METRICS:
            raise ValueError(f"unknown distance metric {self.metric!r}; use one of {DISTANCE_METRICS}")
        if self.sort_order not in SORT_ORDERS:
            raise ValueError(f"unknown sort order {self.sort_order!r}; use one of {SORT_ORDERS}")
        self.k = int(self.k)


@dataclass
class EaConfig:
    population_size: int = 20
    mutation_scale: float = 0.1
    novelty_k: int = 10

    def __post_init__(self) -> None:
        if int(self.population_size) < 2:
            raise ValueError("population_size must be >= 2")
        if not 0.0 < float(self.mutation_scale) <= 1.0:
            raise ValueError("mutation_scale must lie in (0, 1]")
        if int(self.novelty_k) < 1:
            raise ValueError("novelty_k must be >= 1")


@dataclass
class SearchSettings:
    kernel_family: str = "matern52"
    coupling: str = "icm"
    hyper_restarts: int = 3
    refit_every: int = 1
    noise_floor: float = 1e-6

    num_features: int = 1024
    acquisition_restarts: int = 10

    novelty_k: int = 10
    metric: str = "euclidean"
    dedup: bool = False
    sort_order: str = "ascending"

    forbidden_bins: List[int] = field(default_factory=list)
    forbid_observed: bool = False
    constraint_mode: str = "hard"
    soft_penalty: float = 1e3

    population_size: int = 20
    mutation_scale: float = 0.1

    def __post_init__(self) -> None:
        if self.kernel_family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.kernel_family!r}; use one of {KERNEL_FAMILIES}")
        if self.coupling not in COUPLING_MODES:
            raise ValueError(f"unknown coupling {self.coupling!r}; use one of {COUPLING_MODES}")
        if self.constraint_mode not in CONSTRAINT_MODES:
            raise ValueError(f"unknown constraint mode {self.constraint_mode!r}")
        if int(self.hyper_restarts) < 1 or int(self.acquisition_restarts) < 1:
            raise ValueError("restart counts must be >= 1")
        if int(self.refit_every) < 1:
            raise ValueError("refit_every must be >= 1")
        if int(self.num_features) < 1:
            raise ValueError("num_features must be >= 1")
        if float(self.noise_floor) <= 0.0:
            raise ValueError("noise_floor must be positive")

    def novelty(self) -> NoveltyConfig:
        return NoveltyConfig(
            k=self.novelty_k,
            metric=self.metric,
            dedup=self.dedup,
            sort_order=self.sort_order,
        )

    def evolution(self) -> EaConfig:
        return EaConfig(
            population_size=self.population_size,
            mutation_scale=self.mutation_scale,
            novelty_k=self.novelty_k,
        )


def setting_names() -> List[str]:
    return [f.name for f in fields(SearchSettings)]


def build_search_settings(base: SearchSettings, overrides: Mapping[str, Any] | None) -> SearchSettings:
    data = dict(base.__dict__)
    allowed = set(setting_names())
    for key, value in (overrides or {}).items():
        if key not in allowed:
            raise KeyError(key)
        data[key] = value
    data["forbidden_bins"] = [int(b) for b in data.get("forbidden_bins") or []]
    return SearchSettings(**data)
