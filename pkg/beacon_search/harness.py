"""Replicated experiment execution and aggregation of reachability curves."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from beacon_models.behavior import BehaviorSpace
from beacon_models.problems import Problem

from .algorithms import ReplicateError, run_replicate
from .catalog import ProblemCatalog, build_problem, build_space, load_catalog, resolve_catalog_path
from .config import AlgorithmConfig, ExperimentConfig
from .run_state import RunStatusStore, format_failure, log_timestamp
from .traces import RunTrace, dumps_trace, list_trace_files, read_trace, trace_path, write_trace


logger = logging.getLogger("beacon.harness")

RUN_STATUS_FILE = "run_status.json"


@dataclass
class ExperimentResult:
    output_dir: str
    config_hash: str
    traces: List[RunTrace] = field(default_factory=list)
    status: RunStatusStore = field(default_factory=RunStatusStore)

    @property
    def failed(self) -> bool:
        return bool(self.status.failures())


@dataclass
class AggregateReport:
    labels: List[str]
    length: int
    mean: Dict[str, np.ndarray]
    std: Dict[str, np.ndarray]
    replicates: Dict[str, int]
    config_hash: str
    num_bins: int

    def iterations(self) -> np.ndarray:
        return np.arange(1, self.length + 1)

    def final_rows(self) -> List[Tuple[str, float, float, int]]:
        return [
            (label, float(self.mean[label][-1]), float(self.std[label][-1]), self.replicates[label])
            for label in self.labels
        ]


def _load_existing(path: str, config_hash: str) -> Optional[RunTrace]:
    if not os.path.exists(path):
        return None
    try:
        trace = read_trace(path)
    except (ValueError, TypeError, KeyError) as exc:
        logger.warning("Ignoring unreadable trace %s (%s).", path, exc)
        return None
    if trace.config_hash != config_hash or not trace.complete:
        logger.warning("Regenerating %s: stale config hash or incomplete rows.", path)
        return None
    return trace


def _run_job(
    config: ExperimentConfig,
    problem: Problem,
    space: BehaviorSpace,
    algorithm: AlgorithmConfig,
    replicate: int,
    config_hash: str,
    store: RunStatusStore,
) -> Optional[RunTrace]:
    path = trace_path(config.output_dir, algorithm.label, replicate)
    existing = _load_existing(path, config_hash)
    if existing is not None:
        store.record(algorithm.label, replicate, "skipped")
        logger.info("Skipping %s replicate=%s (already persisted).", algorithm.label, replicate)
        return existing

    seed = config.run.seed + replicate
    logger.info("Starting %s replicate=%s seed=%s ts=%s", algorithm.label, replicate, seed, log_timestamp())
    started = time.perf_counter()
    try:
        trace = run_replicate(
            algorithm.name,
            problem,
            space,
            config.search_settings(algorithm),
            iterations=config.run.iterations,
            n_init=config.run.n_init,
            seed=seed,
            replicate=replicate,
            label=algorithm.label,
            config_hash=config_hash,
            progress_every=config.run.progress_every,
            order=config.labels().index(algorithm.label),
        )
    except ReplicateError as exc:
        elapsed = time.perf_counter() - started
        partial = os.path.splitext(path)[0] + ".partial"
        os.makedirs(os.path.dirname(partial), exist_ok=True)
        with open(partial, "w", encoding="utf-8") as handle:
            handle.write(dumps_trace(exc.trace))
        store.record(algorithm.label, replicate, "failed", elapsed, format_failure(exc.__cause__ or exc))
        logger.error("%s replicate=%s failed: %s ts=%s", algorithm.label, replicate, exc, log_timestamp())
        return None
    elapsed = time.perf_counter() - started
    write_trace(path, trace)
    store.record(algorithm.label, replicate, "completed", elapsed)
    logger.info(
        "Finished %s replicate=%s reach=%.3f wall=%.1fs ts=%s",
        algorithm.label,
        replicate,
        trace.final_reachability,
        elapsed,
        log_timestamp(),
    )
    return trace


def run_experiment(
    config: ExperimentConfig,
    catalog: Optional[ProblemCatalog] = None,
    workers: Optional[int] = None,
) -> ExperimentResult:
    """Run every (algorithm, replicate) pair, persisting each trace as it completes.

    Replicates whose trace file already exists with the same config hash are
    skipped, so an interrupted experiment resumes where it stopped.
    """
    catalog = catalog or load_catalog(resolve_catalog_path())
    problem = build_problem(config.problem, catalog, config.space)
    space = build_space(config.space, problem)
    config_hash = config.config_hash()
    result = ExperimentResult(output_dir=config.output_dir, config_hash=config_hash)
    os.makedirs(config.output_dir, exist_ok=True)

    jobs = [(algorithm, r) for algorithm in config.algorithms for r in range(config.run.replicates)]
    max_workers = workers or config.run.workers or os.cpu_count() or 1
    logger.info(
        "Running %s jobs on %s (bins=%s, workers=%s, hash=%s) ts=%s",
        len(jobs),
        problem.name,
        space.num_bins,
        max_workers,
        config_hash[:12],
        log_timestamp(),
    )
    finished: Dict[Tuple[str, int], RunTrace] = {}
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = {
            pool.submit(_run_job, config, problem, space, algorithm, r, config_hash, result.status): (algorithm.label, r)
            for algorithm, r in jobs
        }
        for future in as_completed(futures):
            key = futures[future]
            try:
                trace = future.result()
            except Exception as exc:
                result.status.record(key[0], key[1], "failed", detail=format_failure(exc))
                logger.error("%s replicate=%s crashed: %s", key[0], key[1], exc)
                continue
            if trace is not None:
                finished[key] = trace
    order = {label: i for i, label in enumerate(config.labels())}
    result.traces = [finished[key] for key in sorted(finished, key=lambda k: (order[k[0]], k[1]))]
    result.status.write(os.path.join(config.output_dir, RUN_STATUS_FILE), config_hash)
    return result


def load_traces(root: str) -> List[RunTrace]:
    return [read_trace(path) for path in list_trace_files(root)]


def aggregate(traces: Sequence[RunTrace]) -> AggregateReport:
    if not traces:
        raise ValueError("no traces to aggregate")
    first = traces[0]
    for trace in traces:
        if trace.config_hash != first.config_hash:
            raise ValueError(
                f"traces come from different configs ({first.config_hash[:12]} vs {trace.config_hash[:12]})"
            )
        shape = (trace.problem, trace.num_bins, trace.n_init, trace.iterations)
        if shape != (first.problem, first.num_bins, first.n_init, first.iterations):
            raise ValueError(f"trace {trace.label}/{trace.replicate} has a different problem, space or budget")
        if not trace.complete:
            raise ValueError(f"trace {trace.label}/{trace.replicate} is incomplete")

    first_seen = list(dict.fromkeys(t.label for t in traces))
    order = {t.label: t.order for t in traces}
    labels = sorted(first_seen, key=lambda label: (order[label], first_seen.index(label)))
    curves: Dict[str, List[List[float]]] = {label: [] for label in labels}
    for trace in sorted(traces, key=lambda t: t.replicate):
        curves[trace.label].append(trace.reachability())

    mean: Dict[str, np.ndarray] = {}
    std: Dict[str, np.ndarray] = {}
    counts: Dict[str, int] = {}
    for label in labels:
        values = np.asarray(curves[label], dtype=float)
        mean[label] = values.mean(axis=0)
        spread = values.std(axis=0, ddof=1) if values.shape[0] > 1 else np.zeros(values.shape[1])
        # identical replicates must report exactly zero, not rounding residue
        spread[np.ptp(values, axis=0) == 0] = 0.0
        std[label] = spread
        counts[label] = values.shape[0]
    return AggregateReport(
        labels=labels,
        length=first.n_init + first.iterations,
        mean=mean,
        std=std,
        replicates=counts,
        config_hash=first.config_hash,
        num_bins=first.num_bins,
    )
