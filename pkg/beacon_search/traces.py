"""Per-replicate trace files: one JSON header line followed by one JSON line per query."""

from __future__ import annotations

import json
import os
import re
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional


TRACE_FORMAT = 1


@dataclass
class TraceRow:
    iteration: int
    input: List[float]
    noisy: List[float]
    noiseless: Optional[List[float]]
    bin: int
    noisy_bin: int
    distinct: int
    reachability: float
    index: Optional[int] = None
    flags: List[str] = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TraceRow":
        return cls(**data)


@dataclass
class RunTrace:
    label: str
    algorithm: str
    replicate: int
    seed: int
    config_hash: str
    problem: str
    num_bins: int
    n_init: int
    iterations: int
    # position of the algorithm in its experiment config; reports list labels in this order
    order: int = 0
    rows: List[TraceRow] = field(default_factory=list)
    hyperparameters: List[Dict[str, Any]] = field(default_factory=list)

    def header(self) -> Dict[str, Any]:
        return {
            "format": TRACE_FORMAT,
            "label": self.label,
            "algorithm": self.algorithm,
            "replicate": self.replicate,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "problem": self.problem,
            "num_bins": self.num_bins,
            "n_init": self.n_init,
            "iterations": self.iterations,
            "order": self.order,
            "hyperparameters": self.hyperparameters,
        }

    def bins(self) -> List[int]:
        return [row.bin for row in self.rows]

    def reachability(self) -> List[float]:
        return [row.reachability for row in self.rows]

    @property
    def complete(self) -> bool:
        return len(self.rows) == self.n_init + self.iterations

    @property
    def final_reachability(self) -> float:
        return self.rows[-1].reachability if self.rows else 0.0


def _sanitize_label(label: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9._-]+", "_", str(label))
    return cleaned.strip("_") or "algorithm"


def trace_path(output_dir: str, label: str, replicate: int) -> str:
    return os.path.join(output_dir, "traces", _sanitize_label(label), f"replicate_{replicate:03d}.jsonl")


def dumps_trace(trace: RunTrace) -> str:
    lines = [json.dumps(trace.header(), separators=(",", ":"))]
    lines.extend(json.dumps(asdict(row), separators=(",", ":")) for row in trace.rows)
    return "\n".join(lines) + "\n"


def write_trace(path: str, trace: RunTrace) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as handle:
        handle.write(dumps_trace(trace))
    os.replace(tmp, path)


def read_trace(path: str) -> RunTrace:
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line for line in handle.read().splitlines() if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty trace file")
    header = json.loads(lines[0])
    if header.get("format") != TRACE_FORMAT:
        raise ValueError(f"{path}: unsupported trace format {header.get('format')!r}")
    header.pop("format")
    rows = [TraceRow.from_dict(json.loads(line)) for line in lines[1:]]
    return RunTrace(rows=rows, **header)


def list_trace_files(root: str) -> List[str]:
    """All trace files below root (an output directory or its traces/ folder), sorted."""
    base = os.path.join(root, "traces") if os.path.isdir(os.path.join(root, "traces")) else root
    found = []
    for current, _, files in os.walk(base):
        for name in files:
            if name.endswith(".jsonl"):
                found.append(os.path.join(current, name))
    return sorted(found)
