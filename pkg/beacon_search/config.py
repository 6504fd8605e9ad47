from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional

import yaml

from beacon_models.config import SearchSettings, build_search_settings, setting_names

from .catalog import ProblemCatalog, load_catalog, resolve_catalog_path


_ENV_PATTERN = re.compile(r"\$\{([A-Z0-9_]+)\}")

ALGORITHM_NAMES = ("beacon", "ug-beacon", "rs", "sobol", "maxvar", "ns-ea")
POOL_PROBLEM = "pool"

# Keys that change neither the problem nor any trace row.
_HASH_EXCLUDED = {"output_dir": None, "run": ("replicates", "workers", "progress_every"), "logging": None}


class ConfigError(ValueError):
    pass


def _interpolate_env(value: Any) -> Any:
    if isinstance(value, str):
        def _replace(match: re.Match) -> str:
            var = match.group(1)
            return os.environ.get(var, "")
        return _ENV_PATTERN.sub(_replace, value)
    if isinstance(value, list):
        return [_interpolate_env(v) for v in value]
    if isinstance(value, dict):
        return {k: _interpolate_env(v) for k, v in value.items()}
    return value


@dataclass
class ProblemConfig:
    name: str = ""
    dim: Optional[int] = None
    bounds: Optional[List[float]] = None
    noise_std: Any = None
    pool_path: str = ""
    input_dim: int = 0
    outcome_dim: int = 1
    size: int = 0
    seed: int = 0


@dataclass
class SpaceConfig:
    bins_per_dim: Optional[List[int]] = None
    range: Any = None
    sample_count: int = 100_000
    seed: int = 0


@dataclass
class AlgorithmConfig:
    name: str = ""
    label: str = ""
    settings: Dict[str, Any] = field(default_factory=dict)


@dataclass
class RunConfig:
    iterations: int = 90
    n_init: int = 10
    replicates: int = 20
    seed: int = 0
    workers: int = 0
    progress_every: int = 10


@dataclass
class LoggingConfig:
    level: str = "INFO"


@dataclass
class ExperimentConfig:
    problem: ProblemConfig
    space: SpaceConfig
    algorithms: List[AlgorithmConfig]
    run: RunConfig
    logging: LoggingConfig
    output_dir: str
    base_dir: str = ""

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop("base_dir", None)
        return data

    def hashable_dict(self) -> Dict[str, Any]:
        data = self.to_dict()
        for key, sub in _HASH_EXCLUDED.items():
            if sub is None:
                data.pop(key, None)
            else:
                for inner in sub:
                    data[key].pop(inner, None)
        return data

    def config_hash(self) -> str:
        canonical = json.dumps(self.hashable_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def search_settings(self, algorithm: AlgorithmConfig) -> SearchSettings:
        return build_search_settings(SearchSettings(), algorithm.settings)

    def labels(self) -> List[str]:
        return [a.label for a in self.algorithms]


def _load_section(data: Dict[str, Any], key: str, cls):
    section = data.get(key, {})
    if section is None:
        return cls()
    if not isinstance(section, dict):
        raise ConfigError(f"{key}: expected a mapping")
    allowed = {f.name for f in fields(cls)}
    for name in section:
        if name not in allowed:
            raise ConfigError(f"{key}.{name}: unknown key")
    return cls(**section)


def _as_int(value: Any, dotted: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{dotted}: expected an integer, got {value!r}")
    try:
        number = int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{dotted}: expected an integer, got {value!r}") from exc
    if number != value and not (isinstance(value, str) and value.strip().lstrip("-").isdigit()):
        raise ConfigError(f"{dotted}: expected an integer, got {value!r}")
    if minimum is not None and number < minimum:
        raise ConfigError(f"{dotted}: must be >= {minimum}")
    return number


def _load_algorithms(raw: Any) -> List[AlgorithmConfig]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("algorithms: at least one algorithm is required")
    allowed = {f.name for f in fields(AlgorithmConfig)}
    out: List[AlgorithmConfig] = []
    seen = set()
    for i, item in enumerate(raw):
        if isinstance(item, str):
            item = {"name": item}
        if not isinstance(item, dict):
            raise ConfigError(f"algorithms[{i}]: expected a name or a mapping")
        for key in item:
            if key not in allowed:
                raise ConfigError(f"algorithms[{i}].{key}: unknown key")
        name = str(item.get("name") or "").strip()
        if name not in ALGORITHM_NAMES:
            raise ConfigError(f"algorithms[{i}].name: unknown algorithm {name!r}; use one of {ALGORITHM_NAMES}")
        label = str(item.get("label") or name).strip()
        if label in seen:
            raise ConfigError(f"algorithms[{i}].label: duplicate label {label!r}")
        seen.add(label)
        settings = item.get("settings") or {}
        if not isinstance(settings, dict):
            raise ConfigError(f"algorithms[{i}].settings: expected a mapping")
        try:
            build_search_settings(SearchSettings(), settings)
        except KeyError as exc:
            known = ", ".join(setting_names())
            raise ConfigError(f"algorithms[{i}].settings.{exc.args[0]}: unknown setting; known: {known}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"algorithms[{i}].settings: {exc}") from exc
        out.append(AlgorithmConfig(name=name, label=label, settings=dict(settings)))
    return out


def _resolve_problem(
    problem: ProblemConfig, space: SpaceConfig, catalog: ProblemCatalog, base_dir: str
) -> None:
    if not problem.name:
        raise ConfigError("problem.name: required")
    if problem.name == POOL_PROBLEM:
        if not problem.pool_path:
            raise ConfigError("problem.pool_path: required for pool problems")
        if not os.path.isabs(problem.pool_path):
            problem.pool_path = os.path.normpath(os.path.join(base_dir, problem.pool_path))
        problem.input_dim = _as_int(problem.input_dim, "problem.input_dim", 1)
        problem.outcome_dim = _as_int(problem.outcome_dim, "problem.outcome_dim", 1)
        if problem.noise_std is None:
            problem.noise_std = 0.0
        if space.bins_per_dim is None:
            raise ConfigError("space.bins_per_dim: required for pool problems")
        if space.range is None:
            space.range = "auto"
        return
    entry = catalog.problems.get(problem.name)
    if entry is None:
        known = ", ".join(sorted(catalog.problems) + [POOL_PROBLEM])
        raise ConfigError(f"problem.name: unknown problem {problem.name!r}; known: {known}")
    if problem.dim is None:
        problem.dim = entry.dim
    problem.dim = _as_int(problem.dim, "problem.dim", 1)
    if entry.kind == "function" and problem.bounds is None:
        problem.bounds = list(entry.bounds)
    if problem.bounds is not None:
        if len(problem.bounds) != 2 or not float(problem.bounds[0]) < float(problem.bounds[1]):
            raise ConfigError("problem.bounds: expected [lower, upper] with lower < upper")
        problem.bounds = [float(v) for v in problem.bounds]
    if problem.noise_std is None:
        problem.noise_std = entry.noise_std
    if entry.kind == "synthetic_pool" and not problem.size:
        problem.size = entry.size
    if space.bins_per_dim is None:
        space.bins_per_dim = list(entry.bins_per_dim)
    if space.range is None:
        space.range = entry.range


def _check_space(space: SpaceConfig) -> int:
    if not isinstance(space.bins_per_dim, list) or not space.bins_per_dim:
        raise ConfigError("space.bins_per_dim: expected a nonempty list")
    space.bins_per_dim = [_as_int(b, f"space.bins_per_dim[{i}]", 1) for i, b in enumerate(space.bins_per_dim)]
    if isinstance(space.range, str):
        if space.range != "auto":
            raise ConfigError(f"space.range: expected 'auto' or a list of [lo, hi] pairs, got {space.range!r}")
    elif isinstance(space.range, list):
        if len(space.range) != len(space.bins_per_dim):
            raise ConfigError("space.range: needs one [lo, hi] pair per outcome dimension")
        for i, pair in enumerate(space.range):
            if not isinstance(pair, list) or len(pair) != 2 or not float(pair[0]) < float(pair[1]):
                raise ConfigError(f"space.range[{i}]: expected [lo, hi] with lo < hi")
    else:
        raise ConfigError("space.range: expected 'auto' or a list of [lo, hi] pairs")
    space.sample_count = _as_int(space.sample_count, "space.sample_count", 1)
    space.seed = _as_int(space.seed, "space.seed", 0)
    num_bins = 1
    for b in space.bins_per_dim:
        num_bins *= b
    return num_bins


def _check_noise(value: Any) -> None:
    if isinstance(value, str):
        if value != "auto":
            raise ConfigError(f"problem.noise_std: expected 'auto' or a number, got {value!r}")
        return
    values = value if isinstance(value, list) else [value]
    for v in values:
        try:
            ok = float(v) >= 0.0
        except (TypeError, ValueError):
            ok = False
        if not ok:
            raise ConfigError(f"problem.noise_std: expected a non-negative number, got {v!r}")


def parse_config(raw: Dict[str, Any], base_dir: str = "", catalog: Optional[ProblemCatalog] = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    raw = _interpolate_env(raw)
    allowed = {"problem", "space", "algorithms", "run", "logging", "output_dir"}
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"{key}: unknown key")
    catalog = catalog or load_catalog(resolve_catalog_path())
    base_dir = base_dir or os.getcwd()

    problem = _load_section(raw, "problem", ProblemConfig)
    space = _load_section(raw, "space", SpaceConfig)
    run = _load_section(raw, "run", RunConfig)
    logging_config = _load_section(raw, "logging", LoggingConfig)
    algorithms = _load_algorithms(raw.get("algorithms"))

    _resolve_problem(problem, space, catalog, base_dir)
    _check_noise(problem.noise_std)
    num_bins = _check_space(space)

    run.iterations = _as_int(run.iterations, "run.iterations", 1)
    run.n_init = _as_int(run.n_init, "run.n_init", 1)
    run.replicates = _as_int(run.replicates, "run.replicates", 1)
    run.seed = _as_int(run.seed, "run.seed", 0)
    run.workers = _as_int(run.workers, "run.workers", 0)
    run.progress_every = _as_int(run.progress_every, "run.progress_every", 0)

    if not isinstance(logging.getLevelName(str(logging_config.level).upper()), int):
        raise ConfigError(f"logging.level: unknown level {logging_config.level!r}")

    pool_like = problem.name == POOL_PROBLEM or catalog.problems[problem.name].kind == "synthetic_pool"
    for i, algorithm in enumerate(algorithms):
        if algorithm.name == "ns-ea" and pool_like:
            raise ConfigError(f"algorithms[{i}].name: ns-ea does not support pool problems")
        settings = build_search_settings(SearchSettings(), algorithm.settings)
        if settings.kernel_family == "tanimoto" and not pool_like:
            raise ConfigError(f"algorithms[{i}].settings.kernel_family: tanimoto needs a pool problem")
        bad = [b for b in settings.forbidden_bins if not 0 <= b < num_bins]
        if bad:
            raise ConfigError(f"algorithms[{i}].settings.forbidden_bins: {bad} outside [0, {num_bins})")

    output_dir = str(raw.get("output_dir") or "results")
    if not os.path.isabs(output_dir):
        output_dir = os.path.normpath(os.path.join(base_dir, output_dir))
    return ExperimentConfig(
        problem=problem,
        space=space,
        algorithms=algorithms,
        run=run,
        logging=logging_config,
        output_dir=output_dir,
        base_dir=base_dir,
    )


def load_config(path: str, catalog: Optional[ProblemCatalog] = None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = yaml.safe_load(handle) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from exc
    try:
        return parse_config(raw, os.path.dirname(os.path.abspath(path)), catalog)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def apply_overrides(
    config: ExperimentConfig,
    seed: Optional[int] = None,
    replicates: Optional[int] = None,
    output: Optional[str] = None,
) -> ExperimentConfig:
    run = config.run
    if seed is not None:
        run = replace(run, seed=_as_int(seed, "--seed", 0))
    if replicates is not None:
        run = replace(run, replicates=_as_int(replicates, "--replicates", 1))
    output_dir = os.path.abspath(output) if output else config.output_dir
    return replace(config, run=run, output_dir=output_dir)
