"""Localization quality metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sync import landmark_align, DegenerateConfigurationError


class UndefinedMetricError(ValueError):
    """True coordinates all coincident; the error ratio has no denominator."""


@dataclass
class CoordSet:
    """A 2 x n coordinate matrix; the center is always recomputed."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim != 2:
            raise ValueError("coords must be 2-D")
        if c.shape[0] != 2 and c.shape[1] == 2:
            c = c.T
        self.coords = c

    @property
    def n(self):
        return self.coords.shape[1]

    @property
    def center(self):
        return self.coords.mean(axis=1)

    def centered(self):
        return self.coords - self.center[:, None]


def localization_error(truth: CoordSet, estimate: CoordSet) -> float:
    """Frobenius error ratio after centering both sets at their own means.

    Dimensionless; translation-insensitive by construction but NOT
    scale-invariant (scaling the centered estimate scales the numerator).
    """
    if truth.n != estimate.n or truth.n < 2:
        raise ValueError("coordinate sets must share n >= 2 points")
    tc = truth.centered()
    denom = float(np.linalg.norm(tc))
    if denom == 0:
        raise UndefinedMetricError("true coordinates are all coincident")
    return float(np.linalg.norm(tc - estimate.centered())) / denom


def procrustes_align(truth: CoordSet, estimate: CoordSet):
    """Best rigid alignment (rotation+reflection+translation) of the
    estimate onto the truth; returns (aligned CoordSet, RMS in meters).

    Degenerate estimates fall back to translation-only alignment.
    """
    if truth.n != estimate.n or truth.n < 2:
        raise ValueError("coordinate sets must share n >= 2 points")
    X = estimate.coords.T
    Y = truth.coords.T
    try:
        fit = landmark_align(X, Y, fix_scale=True, allow_reflection=True)
        aligned = fit.apply(X)
    except DegenerateConfigurationError:
        aligned = X - X.mean(axis=0) + Y.mean(axis=0)
    rms = float(np.sqrt(np.mean(np.sum((aligned - Y) ** 2, axis=1))))
    return CoordSet(coords=aligned.T), rms


def per_node_residuals(truth: CoordSet, estimate: CoordSet):
    """Euclidean residual per node after rigid alignment (meters)."""
    aligned, _ = procrustes_align(truth, estimate)
    return np.linalg.norm(aligned.coords - truth.coords, axis=0)
