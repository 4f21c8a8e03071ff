"""Homogeneous Poisson fields of transmitters outside the receiver ball."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .core import Deployment


class Point3(NamedTuple):
    x: float
    y: float
    z: float

    @property
    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


@dataclass(frozen=True)
class TxField:
    """One realization of transmitter positions, shape ``(n, 3)`` in um.

    Radial distances are always derived from the stored positions.
    """

    points: np.ndarray
    deployment: Optional[Deployment] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self):
        return (Point3(*p) for p in self.points)

    @property
    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)

    def nearest_distance(self) -> float:
        return float(self.distances.min()) if len(self) else math.inf

    @classmethod
    def from_points(cls, points, deployment: Optional[Deployment] = None) -> "TxField":
        return cls(np.asarray(points, dtype=float), deployment)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x_um", "y_um", "z_um"])
            for p in self.points:
                writer.writerow([repr(float(v)) for v in p])

    @classmethod
    def from_csv(cls, path, deployment: Optional[Deployment] = None) -> "TxField":
        rows = []
        with open(Path(path), newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#") or row[0].startswith("x"):
                    continue
                rows.append([float(v) for v in row[:3]])
        return cls(np.array(rows, dtype=float).reshape(-1, 3), deployment)


def sample_radii(n: int, r_r: float, R_max: float, rng: np.random.Generator) -> np.ndarray:
    """Radii of points uniform in the shell r_r <= r <= R_max (inverse CDF)."""
    u = rng.random(n)
    return np.cbrt(u * (R_max**3 - r_r**3) + r_r**3)


def sample_field(deployment: Deployment, r_r: float, rng: np.random.Generator) -> TxField:
    """Draw a Poisson number of transmitters uniformly in the shell around the receiver."""
    R_max = deployment.R_max
    mean = deployment.lambda_a * 4.0 * math.pi / 3.0 * max(R_max**3 - r_r**3, 0.0)
    n = int(rng.poisson(mean))
    r = sample_radii(n, r_r, R_max, rng)
    direction = rng.normal(size=(n, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return TxField(direction * r[:, None], deployment)


def nearest_distance_pdf(x, lambda_a: float, r_r: float):
    """Density of the distance to the nearest transmitter (3D)."""
    x = np.asarray(x, dtype=float)
    c = 4.0 * math.pi * lambda_a / 3.0
    with np.errstate(over="ignore"):
        pdf = 4.0 * lambda_a * math.pi * x**2 * np.exp(-c * (x**3 - r_r**3))
    pdf = np.where(x >= r_r, pdf, 0.0)
    return float(pdf) if pdf.ndim == 0 else pdf


def nearest_distance_cdf(x, lambda_a: float, r_r: float):
    x = np.asarray(x, dtype=float)
    c = 4.0 * math.pi * lambda_a / 3.0
    cdf = np.where(x >= r_r, -np.expm1(-c * (np.maximum(x, r_r) ** 3 - r_r**3)), 0.0)
    return float(cdf) if cdf.ndim == 0 else cdf


def nearest_distance_quantile(q, lambda_a: float, r_r: float):
    q = np.asarray(q, dtype=float)
    x = np.cbrt(r_r**3 - 3.0 * np.log1p(-q) / (4.0 * math.pi * lambda_a))
    return float(x) if x.ndim == 0 else x


def nearest_distance_pdf_2d(x, lambda_a: float, r_r: float):
    """Nearest-transmitter distance density in the plane; ``lambda_a`` is the 2D density."""
    x = np.asarray(x, dtype=float)
    pdf = 2.0 * lambda_a * math.pi * x * np.exp(-lambda_a * math.pi * (x**2 - r_r**2))
    pdf = np.where(x >= r_r, pdf, 0.0)
    return float(pdf) if pdf.ndim == 0 else pdf


def nearest_distance_cdf_2d(x, lambda_a: float, r_r: float):
    x = np.asarray(x, dtype=float)
    cdf = np.where(x >= r_r, -np.expm1(-lambda_a * math.pi * (np.maximum(x, r_r) ** 2 - r_r**2)), 0.0)
    return float(cdf) if cdf.ndim == 0 else cdf


def sample_nearest_distance(lambda_a: float, r_r: float, rng: np.random.Generator, size=None):
    """Draw nearest-transmitter distances by inverting their CDF."""
    return nearest_distance_quantile(rng.random(size), lambda_a, r_r)
