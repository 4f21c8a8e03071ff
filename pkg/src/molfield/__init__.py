"""Collective molecular signals at a spherical receiver inside a Poisson field of point transmitters."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ConfigError,
    ConvergenceError,
    Deployment,
    DetectorMode,
    DetectorSpec,
    DomainError,
    EmissionProtocol,
    ExperimentConfig,
    LinkParams,
    Medium,
    ReceiverKind,
    ReceiverSpec,
    load_config,
    validate,
)

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "Deployment",
    "DetectorMode",
    "DetectorSpec",
    "DomainError",
    "EmissionProtocol",
    "ExperimentConfig",
    "LinkParams",
    "Medium",
    "ReceiverKind",
    "ReceiverSpec",
    "load_config",
    "validate",
]
