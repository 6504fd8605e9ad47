from __future__ import annotations

import json
import os
import threading
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from typing import Dict, List, Tuple


STATUSES = ("completed", "skipped", "failed")


@dataclass
class ReplicateStatus:
    label: str
    replicate: int
    status: str
    wall_seconds: float = 0.0
    detail: str = ""


class RunStatusStore:
    """Thread-safe record of how each (label, replicate) pair finished."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._entries: Dict[Tuple[str, int], ReplicateStatus] = {}

    def record(
        self,
        label: str,
        replicate: int,
        status: str,
        wall_seconds: float = 0.0,
        detail: str = "",
    ) -> None:
        if status not in STATUSES:
            raise ValueError(f"unknown replicate status {status!r}")
        entry = ReplicateStatus(label, int(replicate), status, round(float(wall_seconds), 3), detail)
        with self._lock:
            self._entries[(label, int(replicate))] = entry

    def snapshot(self) -> List[ReplicateStatus]:
        with self._lock:
            return [self._entries[key] for key in sorted(self._entries)]

    def failures(self) -> List[ReplicateStatus]:
        return [entry for entry in self.snapshot() if entry.status == "failed"]

    def counts(self) -> Dict[str, int]:
        out = {status: 0 for status in STATUSES}
        for entry in self.snapshot():
            out[entry.status] += 1
        return out

    def write(self, path: str, config_hash: str = "") -> None:
        payload = {
            "config_hash": config_hash,
            "counts": self.counts(),
            "replicates": [asdict(entry) for entry in self.snapshot()],
        }
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True)
            handle.write("\n")
        os.replace(tmp, path)


def log_timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def format_failure(exc: BaseException) -> str:
    return f"ERROR: {exc.__class__.__name__}: {exc}"
