"""Outcome boxes, behavior binning and the behavior-gap / reachability metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .errors import DimensionError


BinId = int


@dataclass(frozen=True)
class OutcomeBox:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self) -> None:
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        if len(lower) < 1:
            raise DimensionError("outcome box needs at least one dimension")
        if len(lower) != len(upper):
            raise DimensionError(f"lower has {len(lower)} entries but upper has {len(upper)}")
        for i, (lo, hi) in enumerate(zip(lower, upper)):
            if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
                raise ValueError(f"invalid outcome range on dimension {i}: [{lo}, {hi}]")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return len(self.lower)


@dataclass(frozen=True)
class BehaviorSpace:
    box: OutcomeBox
    bins_per_dim: Tuple[int, ...]

    def __post_init__(self) -> None:
        bins = tuple(int(b) for b in self.bins_per_dim)
        if len(bins) != self.box.dim:
            raise DimensionError(
                f"bins_per_dim has {len(bins)} entries for a {self.box.dim}-dimensional outcome box"
            )
        if any(b < 1 for b in bins):
            raise ValueError("bins_per_dim entries must be positive")
        object.__setattr__(self, "bins_per_dim", bins)

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def num_bins(self) -> int:
        return int(np.prod(self.bins_per_dim))

    def _cell_indices(self, Y: np.ndarray) -> np.ndarray:
        lower = np.asarray(self.box.lower)
        upper = np.asarray(self.box.upper)
        bins = np.asarray(self.bins_per_dim)
        scaled = np.floor(bins * (Y - lower) / (upper - lower))
        return np.clip(scaled, 0, bins - 1).astype(np.int64)

    def project_many(self, Y: Any) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if Y.shape[1] != self.dim:
            raise DimensionError(f"outcome dimension {Y.shape[1]} does not match space dimension {self.dim}")
        if not np.all(np.isfinite(Y)):
            raise ValueError("outcomes must be finite to be projected onto a behavior bin")
        cells = self._cell_indices(Y)
        return np.ravel_multi_index(tuple(cells.T), self.bins_per_dim).astype(np.int64)

    def project(self, y: Any) -> BinId:
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape[0] != self.dim:
            raise DimensionError(f"outcome dimension {y.shape[0]} does not match space dimension {self.dim}")
        return int(self.project_many(y[None, :])[0])

    def bin_center(self, bin_id: BinId) -> np.ndarray:
        if not 0 <= int(bin_id) < self.num_bins:
            raise ValueError(f"bin {bin_id} outside [0, {self.num_bins})")
        cells = np.asarray(np.unravel_index(int(bin_id), self.bins_per_dim), dtype=float)
        lower = np.asarray(self.box.lower)
        width = (np.asarray(self.box.upper) - lower) / np.asarray(self.bins_per_dim)
        return lower + (cells + 0.5) * width

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lower": list(self.box.lower),
            "upper": list(self.box.upper),
            "bins_per_dim": list(self.bins_per_dim),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BehaviorSpace":
        return cls(
            box=OutcomeBox(lower=tuple(data["lower"]), upper=tuple(data["upper"])),
            bins_per_dim=tuple(data["bins_per_dim"]),
        )


@dataclass(frozen=True)
class ReachRecord:
    iteration: int
    distinct_bins: int
    behavior_gap: float
    reachability: float


def project(space: BehaviorSpace, y: Any) -> BinId:
    return space.project(y)


def behavior_gap(observed_bins: Iterable[BinId], space: BehaviorSpace) -> float:
    distinct = len(set(int(b) for b in observed_bins))
    return 1.0 - distinct / space.num_bins


def reachability_curve(trace: Sequence[BinId], space: BehaviorSpace) -> List[ReachRecord]:
    if len(trace) == 0:
        raise ValueError("reachability curve needs at least one observation")
    seen = set()
    records: List[ReachRecord] = []
    for t, bin_id in enumerate(trace, start=1):
        seen.add(int(bin_id))
        gap = 1.0 - len(seen) / space.num_bins
        records.append(
            ReachRecord(
                iteration=t,
                distinct_bins=len(seen),
                behavior_gap=gap,
                reachability=len(seen) / space.num_bins,
            )
        )
    return records


def cumulative_behavior_gap(curve: Sequence[ReachRecord]) -> float:
    return float(sum(record.behavior_gap for record in curve))
