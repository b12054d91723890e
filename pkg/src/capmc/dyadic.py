"""Hierarchical dyadic-cube histograms and a grid nearest-distance index.

A point x in [0,1)^d lies in the level-n cube with integer coordinates
j_k = floor(x_k * 2^n).  Histograms are stored sparsely per level as sorted
Morton codes with masses; the finest level is built by direct indexing and
coarser levels by aggregating children, so the parent mass is exactly the
sum of its children's masses.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .measures import WeightedMeasure


class BinningError(ValueError):
    """Points outside the unit cube or an invalid level request."""


def _interleave(j: np.ndarray, n_bits: int) -> np.ndarray:
    """Morton codes of integer coordinates, shape (N, d) -> (N,)."""
    d = j.shape[1]
    codes = np.zeros(len(j), dtype=np.int64)
    for b in range(n_bits):
        for k in range(d):
            codes |= ((j[:, k] >> b) & 1) << (b * d + k)
    return codes


def _deinterleave(codes: np.ndarray, n_bits: int, d: int) -> np.ndarray:
    j = np.zeros((len(codes), d), dtype=np.int64)
    for b in range(n_bits):
        for k in range(d):
            j[:, k] |= ((codes >> (b * d + k)) & 1) << b
    return j


def _run_starts(sorted_codes: np.ndarray) -> np.ndarray:
    """Start offsets of the runs of equal values in a sorted array."""
    if len(sorted_codes) == 0:
        return np.zeros(0, dtype=np.int64)
    breaks = np.flatnonzero(np.diff(sorted_codes)) + 1
    return np.concatenate(([0], breaks)).astype(np.int64)


@dataclass
class DyadicHistogram:
    """Per-level maps (sorted Morton code -> mass) plus the finest-level
    atom lists, retained for the accelerated pairwise evaluators."""

    dim: int
    n_max: int
    level_codes: list = field(repr=False)   # [n] -> int64 Morton codes, sorted
    level_masses: list = field(repr=False)  # [n] -> float64 masses
    total_mass: float
    sorted_points: np.ndarray = field(repr=False)
    sorted_weights: np.ndarray = field(repr=False)
    atom_cell_start: np.ndarray = field(repr=False)  # CSR into sorted atoms per finest cell

    def level(self, n: int):
        if not 0 <= n <= self.n_max:
            raise BinningError(f"level {n} out of range [0, {self.n_max}]")
        return self.level_codes[n], self.level_masses[n]

    def cell_coords(self, n: int) -> np.ndarray:
        """Integer cube coordinates (count, dim) of the occupied level-n cubes."""
        codes, _ = self.level(n)
        return _deinterleave(codes, n, self.dim)

    def dump_csv(self, path) -> None:
        """Debug dump: rows level,j1,...,jd,mass."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["level"] + [f"j{k + 1}" for k in range(self.dim)] + ["mass"])
            for n in range(self.n_max + 1):
                coords = self.cell_coords(n)
                for row, mass in zip(coords, self.level_masses[n]):
                    writer.writerow([n] + [int(c) for c in row] + [repr(float(mass))])


def bin_measure(m: WeightedMeasure, n_max: int) -> DyadicHistogram:
    """Bin an atomic measure supported in [0,1)^d into dyadic cubes down to
    level n_max.  Points outside the unit cube are rejected with the index
    of the first offender."""
    if n_max < 0:
        raise BinningError(f"n_max must be >= 0, got {n_max}")
    pts, w = m.points, m.weights
    d = m.dim
    if d * max(n_max, 1) > 62:
        raise BinningError(f"dim {d} at level {n_max} exceeds the 62-bit code budget")
    bad = np.flatnonzero(np.any((pts < 0.0) | (pts >= 1.0), axis=1))
    if len(bad) > 0:
        i = int(bad[0])
        raise BinningError(f"point index {i} at {pts[i]} lies outside [0,1)^{d}")

    scale = float(2 ** n_max)
    j = np.floor(pts * scale).astype(np.int64)
    np.clip(j, 0, 2 ** n_max - 1, out=j)  # guard the x*2^n == 2^n rounding edge
    codes = _interleave(j, n_max)
    order = np.argsort(codes, kind="stable")
    codes = codes[order]
    sorted_pts = pts[order]
    sorted_w = w[order]

    starts = _run_starts(codes)
    cell_codes = codes[starts] if len(starts) else codes[:0]
    masses = (
        np.add.reduceat(sorted_w, starts) if len(starts) else np.zeros(0)
    )
    level_codes = [None] * (n_max + 1)
    level_masses = [None] * (n_max + 1)
    level_codes[n_max] = cell_codes
    level_masses[n_max] = masses
    for n in range(n_max - 1, -1, -1):
        parents = level_codes[n + 1] >> d
        starts_n = _run_starts(parents)
        level_codes[n] = parents[starts_n] if len(starts_n) else parents[:0]
        level_masses[n] = (
            np.add.reduceat(level_masses[n + 1], starts_n)
            if len(starts_n)
            else np.zeros(0)
        )

    atom_cell_start = np.concatenate((starts, [len(codes)])).astype(np.int64)
    hist = DyadicHistogram(
        dim=d,
        n_max=n_max,
        level_codes=level_codes,
        level_masses=level_masses,
        total_mass=float(np.sum(sorted_w)),
        sorted_points=np.ascontiguousarray(sorted_pts),
        sorted_weights=np.ascontiguousarray(sorted_w),
        atom_cell_start=atom_cell_start,
    )
    _assert_consistent(hist)
    return hist


def _assert_consistent(h: DyadicHistogram) -> None:
    """Parent mass == sum of child masses, exactly, at every level."""
    for n in range(h.n_max, 0, -1):
        parents = h.level_codes[n] >> h.dim
        starts = _run_starts(parents)
        agg = np.add.reduceat(h.level_masses[n], starts) if len(starts) else np.zeros(0)
        if not np.array_equal(agg, h.level_masses[n - 1]):
            raise AssertionError(f"parent-child mass mismatch between levels {n - 1} and {n}")


def box_count(h: DyadicHistogram, n: int) -> int:
    """Number of level-n dyadic cubes carrying strictly positive mass."""
    _, masses = h.level(n)
    return int(np.count_nonzero(masses > 0.0))


def sum_squares(h: DyadicHistogram, n: int) -> float:
    """Sum of squared cube masses at level n."""
    _, masses = h.level(n)
    return float(np.dot(masses, masses))


class NearestDistanceIndex:
    """Uniform-grid index over a finite point set for cutoff distance queries.

    Cells have side cutoff/2; a query scans the grid cells within Chebyshev
    radius 2 of the query's cell and refines exactly over the candidate
    points, so any point within `cutoff` of the query is found.
    """

    def __init__(self, points: np.ndarray, cutoff: float):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if len(points) == 0:
            raise ValueError("nearest-distance index needs a nonempty point set")
        if not cutoff > 0:
            raise ValueError(f"cutoff must be positive, got {cutoff}")
        self.points = points
        self.cutoff = float(cutoff)
        self.side = self.cutoff / 2.0
        self.origin = points.min(axis=0)
        cells = np.floor((points - self.origin) / self.side).astype(np.int64)
        self._buckets: dict = {}
        for idx, key in enumerate(map(tuple, cells)):
            self._buckets.setdefault(key, []).append(idx)
        self._buckets = {k: np.array(v, dtype=np.int64) for k, v in self._buckets.items()}
        d = points.shape[1]
        ranges = [np.arange(-2, 3)] * d
        self._offsets = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, d)

    def nearest_distance(self, x) -> float:
        """Exact min Euclidean distance from x to the point set if it is
        <= cutoff, else math.inf (exceedance)."""
        x = np.asarray(x, dtype=float).reshape(-1)
        base = np.floor((x - self.origin) / self.side).astype(np.int64)
        best = math.inf
        for off in self._offsets:
            bucket = self._buckets.get(tuple(base + off))
            if bucket is None:
                continue
            diffs = self.points[bucket] - x
            dist = math.sqrt(float(np.min(np.einsum("ij,ij->i", diffs, diffs))))
            if dist < best:
                best = dist
        return best if best <= self.cutoff else math.inf


def nearest_distance(points: np.ndarray, x, cutoff: float) -> float:
    """One-shot nearest-distance query (builds a throwaway index)."""
    return NearestDistanceIndex(points, cutoff).nearest_distance(x)
