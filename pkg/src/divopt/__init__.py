"""Discrepancy-guided evolutionary diversity optimization for TSP instances and images."""

from .discrepancy import min_removal_scan, star_discrepancy
from .diversity import (
    DiversityOptimizer,
    FeatureScaler,
    FeatureSpec,
    Individual,
    InitializationError,
    run_ea,
    scale_features,
    survivor_selection,
    weighted_contributions,
)
from .harness import ExperimentConfig, load_config, run_experiment, summarize
from .image import ImageDomain, ImageFeatureExtractor, WalkParams
from .tsp import TspDomain, TspFeatureExtractor

__version__ = "0.1.0"

__all__ = [
    "DiversityOptimizer",
    "ExperimentConfig",
    "FeatureScaler",
    "FeatureSpec",
    "ImageDomain",
    "ImageFeatureExtractor",
    "Individual",
    "InitializationError",
    "TspDomain",
    "TspFeatureExtractor",
    "WalkParams",
    "load_config",
    "min_removal_scan",
    "run_ea",
    "run_experiment",
    "scale_features",
    "star_discrepancy",
    "summarize",
    "survivor_selection",
    "weighted_contributions",
]
