"""Domain types, unit handling and configuration validation.

Internal units are micrometres and seconds throughout: D in um^2/s,
densities in um^-3, k_d in 1/s. SI values are accepted only at the
configuration boundary.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

M2_TO_UM2 = 1e12


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConvergenceError(RuntimeError):
    """Numerical procedure failed to reach its tolerance.

    The best available estimate is kept in ``partial`` so callers can
    still report it.
    """

    def __init__(self, message: str, partial=None, error=None):
        super().__init__(message)
        self.partial = partial
        self.error = error


class ReceiverKind(str, enum.Enum):
    ABSORBING = "absorbing"
    PASSIVE = "passive"


class DetectorMode(str, enum.Enum):
    FIXED = "fixed"
    DFD = "dfd"


@dataclass(frozen=True)
class Medium:
    D: float
    k_d: float = 0.0

    def __post_init__(self):
        if not (self.D > 0 and math.isfinite(self.D)):
            raise ConfigError("medium.D", f"diffusion coefficient must be > 0, got {self.D}")
        if not (self.k_d >= 0 and math.isfinite(self.k_d)):
            raise ConfigError("medium.k_d", f"degradation rate must be >= 0, got {self.k_d}")

    @classmethod
    def from_half_life(cls, D: float, half_life: float) -> "Medium":
        return cls(D=D, k_d=math.log(2.0) / half_life)

    @property
    def half_life(self) -> float:
        return math.inf if self.k_d == 0 else math.log(2.0) / self.k_d

    def with_k_d(self, k_d: float) -> "Medium":
        return Medium(self.D, k_d)


@dataclass(frozen=True)
class ReceiverSpec:
    kind: ReceiverKind
    r_r: float

    def __post_init__(self):
        object.__setattr__(self, "kind", ReceiverKind(self.kind))
        if not (self.r_r > 0 and math.isfinite(self.r_r)):
            raise ConfigError("receiver.r_r", f"receiver radius must be > 0, got {self.r_r}")

    @property
    def volume(self) -> float:
        return 4.0 * math.pi * self.r_r**3 / 3.0


@dataclass(frozen=True)
class Deployment:
    """Transmitter density plus the truncation radius used by simulations.

    ``R_max`` only matters for sampling; analytic integrals run to infinity.
    ``R_max == r_r`` is allowed here (it yields empty fields) but rejected by
    :func:`validate`.
    """

    lambda_a: float
    R_max: float = 100.0

    def __post_init__(self):
        if not (self.lambda_a > 0 and math.isfinite(self.lambda_a)):
            raise ConfigError("deployment.lambda_a", f"density must be > 0, got {self.lambda_a}")
        if not self.R_max > 0:
            raise ConfigError("deployment.R_max", f"truncation radius must be > 0, got {self.R_max}")

    def with_density(self, lambda_a: float) -> "Deployment":
        return Deployment(lambda_a, self.R_max)

    def mean_count(self, r_r: float) -> float:
        return self.lambda_a * 4.0 * math.pi / 3.0 * (self.R_max**3 - r_r**3)


@dataclass(frozen=True)
class EmissionProtocol:
    """ON/OFF keying: bit-1 emits ``N_tx`` molecules, bit-0 emits nothing.

    ``bits`` is an explicit prefix; bits beyond it are drawn i.i.d. with
    probability ``P1`` of a one.
    """

    N_tx: int
    T_b: float
    T_ss: Optional[float] = None
    bits: Optional[tuple] = None
    P1: float = 0.5

    def __post_init__(self):
        if self.T_ss is None:
            object.__setattr__(self, "T_ss", self.T_b)
        if self.bits is not None:
            object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if int(self.N_tx) != self.N_tx or self.N_tx < 1:
            raise ConfigError("protocol.N_tx", f"molecules per pulse must be an integer >= 1, got {self.N_tx}")
        object.__setattr__(self, "N_tx", int(self.N_tx))
        if not self.T_b > 0:
            raise ConfigError("protocol.T_b", f"bit interval must be > 0, got {self.T_b}")
        if not self.T_ss > 0:
            raise ConfigError("protocol.T_ss", f"sampling interval must be > 0, got {self.T_ss}")
        if self.T_ss > self.T_b:
            raise ConfigError("protocol.T_ss", "sampling interval exceeds bit interval")
        if self.bits is not None and any(b not in (0, 1) for b in self.bits):
            raise ConfigError("protocol.bits", "bits must be 0 or 1")
        if not 0.0 <= self.P1 <= 1.0:
            raise ConfigError("protocol.P1", f"prior must lie in [0, 1], got {self.P1}")

    @property
    def P0(self) -> float:
        return 1.0 - self.P1

    def draw_bits(self, n_bits: int, rng: np.random.Generator) -> np.ndarray:
        """Explicit prefix followed by i.i.d. bits drawn from ``rng``."""
        prefix = list(self.bits or ())[:n_bits]
        rest = n_bits - len(prefix)
        drawn = (rng.random(rest) < self.P1).astype(np.int64) if rest > 0 else np.zeros(0, np.int64)
        return np.concatenate([np.asarray(prefix, dtype=np.int64), drawn])


@dataclass(frozen=True)
class DetectorSpec:
    mode: DetectorMode = DetectorMode.FIXED
    N_th: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", DetectorMode(self.mode))
        if int(self.N_th) != self.N_th:
            raise ConfigError("detector.N_th", f"threshold must be an integer, got {self.N_th}")
        object.__setattr__(self, "N_th", int(self.N_th))
        if self.mode is DetectorMode.FIXED and self.N_th < 1:
            raise ConfigError("detector.N_th", "fixed-threshold detection needs N_th >= 1")


@dataclass(frozen=True)
class LinkParams:
    """Everything a channel/observation model needs apart from geometry."""

    medium: Medium
    receiver: ReceiverSpec
    protocol: EmissionProtocol

    @property
    def kind(self) -> ReceiverKind:
        return self.receiver.kind

    @property
    def r_r(self) -> float:
        return self.receiver.r_r


@dataclass(frozen=True)
class ExperimentConfig:
    medium: Medium
    receiver: ReceiverSpec
    deployment: Deployment
    protocol: EmissionProtocol
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    seed: int = 0

    @property
    def link(self) -> LinkParams:
        return LinkParams(self.medium, self.receiver, self.protocol)

    def to_dict(self) -> dict:
        """JSON-ready dict in internal units; ``validate`` maps it back to ``self``."""
        protocol: dict[str, Any] = {
            "N_tx": self.protocol.N_tx,
            "T_b_s": self.protocol.T_b,
            "T_ss_s": self.protocol.T_ss,
            "P1": self.protocol.P1,
        }
        if self.protocol.bits is not None:
            protocol["bits"] = list(self.protocol.bits)
        return {
            "medium": {"D_um2_per_s": self.medium.D, "k_d_per_s": self.medium.k_d},
            "receiver": {"kind": self.receiver.kind.value, "r_r_um": self.receiver.r_r},
            "deployment": {"lambda_per_um3": self.deployment.lambda_a, "R_max_um": self.deployment.R_max},
            "protocol": protocol,
            "detector": {"mode": self.detector.mode.value, "N_th": self.detector.N_th},
            "seed": self.seed,
        }


def _section(raw: Mapping, name: str) -> Mapping:
    sec = raw.get(name)
    if not isinstance(sec, Mapping):
        raise ConfigError(name, "missing section")
    return sec


def _number(sec: Mapping, key: str, path: str, default=None) -> float:
    if key not in sec:
        if default is not None:
            return default
        raise ConfigError(path, "missing value")
    value = sec[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def validate(config) -> ExperimentConfig:
    """Check a raw JSON-like mapping (or an existing config) and convert units.

    ``medium.D_m2_per_s`` is scaled by 1e12 to um^2/s; ``D_um2_per_s`` is
    taken as-is. Raises :class:`ConfigError` naming the first bad field.
    """
    if isinstance(config, ExperimentConfig):
        config = config.to_dict()
    if not isinstance(config, Mapping):
        raise ConfigError("config", "expected a mapping")

    med = _section(config, "medium")
    if "D_um2_per_s" in med:
        D = _number(med, "D_um2_per_s", "medium.D_um2_per_s")
    elif "D_m2_per_s" in med:
        D = _number(med, "D_m2_per_s", "medium.D_m2_per_s") * M2_TO_UM2
    else:
        raise ConfigError("medium.D", "give D_um2_per_s or D_m2_per_s")
    medium = Medium(D, _number(med, "k_d_per_s", "medium.k_d_per_s", 0.0))

    rec = _section(config, "receiver")
    kind = rec.get("kind")
    try:
        kind = ReceiverKind(str(kind).lower())
    except ValueError:
        raise ConfigError("receiver.kind", f"expected 'absorbing' or 'passive', got {kind!r}") from None
    receiver = ReceiverSpec(kind, _number(rec, "r_r_um", "receiver.r_r_um"))

    dep = _section(config, "deployment")
    deployment = Deployment(
        _number(dep, "lambda_per_um3", "deployment.lambda_per_um3"),
        _number(dep, "R_max_um", "deployment.R_max_um", 100.0),
    )
    if deployment.R_max <= receiver.r_r:
        raise ConfigError("deployment.R_max_um", "truncation radius must exceed the receiver radius")

    pro = _section(config, "protocol")
    bits = pro.get("bits")
    if bits is not None and (not isinstance(bits, Sequence) or isinstance(bits, str)):
        raise ConfigError("protocol.bits", "expected a list of 0/1")
    T_b = _number(pro, "T_b_s", "protocol.T_b_s")
    protocol = EmissionProtocol(
        N_tx=_number(pro, "N_tx", "protocol.N_tx"),
        T_b=T_b,
        T_ss=_number(pro, "T_ss_s", "protocol.T_ss_s", T_b),
        bits=tuple(bits) if bits is not None else None,
        P1=_number(pro, "P1", "protocol.P1", 0.5),
    )

    det = config.get("detector", {})
    try:
        mode = DetectorMode(str(det.get("mode", "fixed")).lower())
    except ValueError:
        raise ConfigError("detector.mode", f"expected 'fixed' or 'dfd', got {det.get('mode')!r}") from None
    detector = DetectorSpec(mode, _number(det, "N_th", "detector.N_th", 1))

    seed = config.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", f"expected a non-negative integer, got {seed!r}")

    return ExperimentConfig(medium, receiver, deployment, protocol, detector, seed)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON in {path}: {exc}") from None
    return validate(raw)
