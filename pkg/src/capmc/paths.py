"""Brownian and symmetric alpha-stable path simulation on uniform time grids,
zero-set extraction, local-time profiles, and occupation measures.

Samplers are pure functions of (parameters, seed); every derived seed comes
from `seeding.mix_seed`, so replicas are reproducible under any parallel
schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .measures import WeightedMeasure
from .seeding import mix_seed


@dataclass(frozen=True)
class PathSample:
    """Time-indexed positions on the uniform grid of [0, horizon]."""

    dim: int
    n_steps: int
    horizon: float
    positions: np.ndarray  # (n_steps + 1, dim); positions[0] == start
    start: np.ndarray
    seed: int
    process: str  # "brownian" | "stable"
    alpha: Optional[float] = None

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps

    def dump_csv(self, path) -> None:
        """Debug dump: one row per grid point, columns t,x1,...,xd."""
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"x{k + 1}" for k in range(self.dim)])
            for t, row in zip(self.times, self.positions):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def _check_common(dim: int, n_steps: int, horizon: float) -> None:
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")


def sample_brownian(
    dim: int, n_steps: int, horizon: float = 1.0, seed: int = 0, start=None
) -> PathSample:
    """Brownian path with independent centered Gaussian increments of
    per-coordinate variance horizon/n_steps."""
    _check_common(dim, n_steps, horizon)
    start = np.zeros(dim) if start is None else np.asarray(start, dtype=float)
    rng = np.random.default_rng(seed)
    dt = horizon / n_steps
    incs = rng.standard_normal((n_steps, dim)) * math.sqrt(dt)
    positions = np.empty((n_steps + 1, dim))
    positions[0] = start
    np.cumsum(incs, axis=0, out=positions[1:])
    positions[1:] += start
    return PathSample(dim, n_steps, horizon, positions, start, seed, "brownian")


def sample_positive_stable(beta: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Chambers-Mallows-Stuck draws of the positive beta-stable law with
    Laplace transform E exp(-u S) = exp(-u^beta), 0 < beta < 1."""
    if not 0 < beta < 1:
        raise ValueError(f"positive-stable index must be in (0,1), got {beta}")
    u = rng.uniform(0.0, math.pi, size)
    w = rng.standard_exponential(size)
    sin_u = np.sin(u)
    a = (np.sin(beta * u) / sin_u) ** (beta / (1.0 - beta)) * (np.sin((1.0 - beta) * u) / sin_u)
    return (a / w) ** ((1.0 - beta) / beta)


def sample_stable(
    alpha: float,
    dim: int,
    n_steps: int,
    horizon: float = 1.0,
    start=None,
    seed: int = 0,
) -> PathSample:
    """Symmetric alpha-stable path normalized so that
    E exp(i lam . (X_t - x)) = exp(-|lam|^alpha t).

    Increments are realized by subordination X = B'(2 S_t) where S is the
    (alpha/2)-stable subordinator with E exp(-u S_t) = exp(-t u^(alpha/2));
    isotropy is exact by construction.  alpha = 2 uses the deterministic
    clock S_t = t.
    """
    if not 0 < alpha <= 2:
        raise ValueError(f"alpha must be in (0, 2], got {alpha}")
    _check_common(dim, n_steps, horizon)
    start = np.zeros(dim) if start is None else np.asarray(start, dtype=float)
    rng = np.random.default_rng(seed)
    dt = horizon / n_steps
    normals = rng.standard_normal((n_steps, dim))
    if alpha == 2:
        ds = np.full(n_steps, dt)
    else:
        ds = dt ** (2.0 / alpha) * sample_positive_stable(alpha / 2.0, n_steps, rng)
    incs = np.sqrt(2.0 * ds)[:, None] * normals
    positions = np.empty((n_steps + 1, dim))
    positions[0] = start
    np.cumsum(incs, axis=0, out=positions[1:])
    positions[1:] += start
    return PathSample(dim, n_steps, horizon, positions, start, seed, "stable", float(alpha))


def stable_increments(
    alpha: float, dim: int, n_steps: int, dt: float, rng: np.random.Generator
) -> np.ndarray:
    """Increment block (n_steps, dim) of the symmetric alpha-stable process
    over time steps dt, in the exp(-|lam|^alpha t) normalization.  Shared by
    sample_stable-style walkers that generate paths segment by segment."""
    normals = rng.standard_normal((n_steps, dim))
    if alpha == 2:
        ds = np.full(n_steps, dt)
    else:
        ds = dt ** (2.0 / alpha) * sample_positive_stable(alpha / 2.0, n_steps, rng)
    return np.sqrt(2.0 * ds)[:, None] * normals


@dataclass(frozen=True)
class ZeroSetSample:
    """Zero set of a one-dimensional path: detected zero times plus the
    maximal open excursion intervals of their complement in [0, horizon]."""

    zero_times: np.ndarray
    intervals: np.ndarray  # (k, 2) sorted disjoint open intervals
    horizon: float

    @property
    def interval_lengths(self) -> np.ndarray:
        if len(self.intervals) == 0:
            return np.zeros(0)
        return self.intervals[:, 1] - self.intervals[:, 0]


def zero_set(path: PathSample) -> ZeroSetSample:
    """Zero times of a dim-1 path: grid times with an exact zero plus
    linear-interpolation crossing times at sign changes."""
    if path.dim != 1:
        raise ValueError(f"zero_set needs a one-dimensional path, got dim={path.dim}")
    v = path.positions[:, 0]
    t = path.times
    dt = path.step
    exact = t[v == 0.0]
    prod = v[:-1] * v[1:]
    cross = prod < 0.0
    v0 = v[:-1][cross]
    v1 = v[1:][cross]
    tau = t[:-1][cross] + dt * v0 / (v0 - v1)
    zeros = np.unique(np.concatenate((exact, tau)))

    horizon = path.horizon
    if len(zeros) == 0:
        intervals = np.array([[0.0, horizon]])
    else:
        bounds = [0.0] + list(zeros) + [horizon]
        pairs = [
            (a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b - a > 0.0
        ]
        intervals = np.array(pairs) if pairs else np.zeros((0, 2))
    return ZeroSetSample(zeros, intervals, horizon)


def excursion_count(zs: ZeroSetSample, delta: float) -> int:
    """Number of excursion intervals of length strictly greater than delta."""
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    return int(np.count_nonzero(zs.interval_lengths > delta))


@dataclass(frozen=True)
class LocalTimeProfile:
    """Occupation-band estimate of local time at zero on the path grid."""

    times: np.ndarray
    values: np.ndarray  # nondecreasing, values[0] == 0
    bandwidth: float

    def value_at(self, t) -> float:
        return float(np.interp(t, self.times, self.values))


def local_time_profile(path: PathSample, bandwidth: Optional[float] = None) -> LocalTimeProfile:
    """l_hat(t) = (1 / 2h) * time measure of {s <= t : |B_s| <= h} on the
    grid.  Default bandwidth is the diffusive scale sqrt(horizon/n_steps)."""
    if path.dim != 1:
        raise ValueError(f"local time needs a one-dimensional path, got dim={path.dim}")
    h = math.sqrt(path.step) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    in_band = np.abs(path.positions[1:, 0]) <= h
    values = np.empty(path.n_steps + 1)
    values[0] = 0.0
    np.cumsum(in_band, out=values[1:])
    values[1:] *= path.step / (2.0 * h)
    return LocalTimeProfile(path.times, values, h)


def occupation_measure(path: PathSample) -> WeightedMeasure:
    """One atom of weight horizon/n_steps per grid sample, at
    positions[1..n_steps] (left-open Riemann convention): total mass equals
    the horizon exactly."""
    w = np.full(path.n_steps, path.horizon / path.n_steps)
    return WeightedMeasure(path.positions[1:], w)


def local_time_measure(lt: LocalTimeProfile) -> WeightedMeasure:
    """Atomic measure on [0, horizon) with the profile's increments as
    weights (the discretized local-time measure, supported near the zero
    set)."""
    incs = np.diff(lt.values)
    mask = incs > 0
    pts = lt.times[1:][mask]
    return WeightedMeasure(pts[:, None], incs[mask])


def replica_seed(master_seed: int, replica: int) -> int:
    """Seed of replica `replica` under master seed `master_seed`."""
    return mix_seed(master_seed, replica)
