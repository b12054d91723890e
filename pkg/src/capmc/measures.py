"""Finite atomic measures: points in R^d with nonnegative weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WeightedMeasure:
    """Atomic measure sum_i w_i * delta(x_i) on R^dim.

    `points` has shape (n_atoms, dim), `weights` shape (n_atoms,).
    Immutable after construction; total mass is the (pairwise) sum of the
    weights.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or len(w) != len(pts):
            raise ValueError("weights must be one per point")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def normalized(self) -> "WeightedMeasure":
        """Same atoms, rescaled to a probability measure."""
        mass = self.total_mass
        if mass <= 0:
            raise ValueError("cannot normalize a measure of zero mass")
        return WeightedMeasure(self.points, self.weights / mass)
