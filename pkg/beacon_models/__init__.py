from .behavior import BehaviorSpace, OutcomeBox, ReachRecord, behavior_gap, project, reachability_curve
from .config import NoveltyConfig, SearchSettings, build_search_settings
from .gp import Dataset, FittedGP, fit_hyperparameters, fit_posterior
from .kernels import KernelSpec
from .sampling import PathSample, draw_path, exact_joint_sample

__all__ = [
    "BehaviorSpace",
    "Dataset",
    "FittedGP",
    "KernelSpec",
    "NoveltyConfig",
    "OutcomeBox",
    "PathSample",
    "ReachRecord",
    "SearchSettings",
    "behavior_gap",
    "build_search_settings",
    "draw_path",
    "exact_joint_sample",
    "fit_hyperparameters",
    "fit_posterior",
    "project",
    "reachability_curve",
]
