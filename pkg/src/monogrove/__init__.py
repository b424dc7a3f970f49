"""Monotone grove additive models: grouped subnets with certified monotonicity."""

from .certifier import CertificationReport, certify, certify_discrete, detect_dme, proposition1_guard
from .grove import GroveModel, init_model, predict, scores
from .penalty import PenaltyGrid, Penalties
from .schema import Feature, FeatureSchema, GroveArchitecture, MonotoneSpec, derive_groups, validate
from .separability import SeparabilityVerdict, test_separability
from .trainer import TrainConfig, fit

__version__ = "0.1.0"

__all__ = [
    "CertificationReport",
    "Feature",
    "FeatureSchema",
    "GroveArchitecture",
    "GroveModel",
    "MonotoneSpec",
    "Penalties",
    "PenaltyGrid",
    "SeparabilityVerdict",
    "TrainConfig",
    "certify",
    "certify_discrete",
    "derive_groups",
    "detect_dme",
    "fit",
    "init_model",
    "predict",
    "proposition1_guard",
    "scores",
    "test_separability",
    "validate",
]
