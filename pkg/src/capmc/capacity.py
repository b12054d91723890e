"""Capacity bounds and estimates.

Capacity of a set with respect to a kernel is the reciprocal of the minimal
energy over probability measures on it.  This module provides the general
box-count upper bound, closed-form reference capacities of the unit square
and the middle-half Cantor set, an equilibrium-measure solver (pairwise
Frank-Wolfe on the simplex, duality-gap certified), the sausage-capacity
bracket via smoothed kernels, and hitting-probability brackets.

Absolute constants in the comparison statements are unknown; every
operation either sets them to 1 (documented) or returns two-sided brackets,
and downstream tests check exponents, monotonicity, and ratios, never
absolute constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .dyadic import DyadicHistogram, box_count
from .energy import dyadic_energy
from .kernels import Kernel, scaled_increment, smooth
from .measures import WeightedMeasure

_OVERFLOW = 1e300


@dataclass(frozen=True)
class CapacityEstimate:
    """A capacity value (1/energy units) with its provenance."""

    value: float
    method: str  # upper-bound | equilibrium | reference-square | reference-cantor | sausage
    kernel: str
    diagnostics: dict = field(default_factory=dict)


def capacity_upper_bound(
    box_counts: Sequence[int],
    k: Kernel,
    n_range: tuple[int, int],
    scale: float = 1.0,
) -> CapacityEstimate:
    """General capacity upper bound from box counts:

        value = [ sum_n (f(s 2^-n) - f(s 2^(1-n))) / N_n ]^(-1)

    over n in the inclusive level range (the comparison constant is set
    to 1).  `box_counts[i]` is the count at level n_range[0] + i."""
    n_lo, n_hi = n_range
    if n_hi < n_lo:
        raise ValueError(f"empty level range {n_range}")
    counts = [int(c) for c in box_counts]
    if len(counts) != n_hi - n_lo + 1:
        raise ValueError(
            f"need {n_hi - n_lo + 1} box counts for range {n_range}, got {len(counts)}"
        )
    if any(c < 1 for c in counts):
        raise ValueError("box counts must be >= 1")
    total = 0.0
    for n, cnt in zip(range(n_lo, n_hi + 1), counts):
        total += scaled_increment(k, n, scale) / cnt
    value = math.inf if total == 0.0 else (0.0 if total > _OVERFLOW else 1.0 / total)
    return CapacityEstimate(
        value,
        "upper-bound",
        k.describe(),
        {"energy_sum": total, "n_lo": n_lo, "n_hi": n_hi, "scale": scale},
    )


def _reference_capacity(k: Kernel, n_max: int, weight_exp2: float, method: str) -> CapacityEstimate:
    """Shared reference-capacity sum with per-level weights 2^(-n*weight_exp2)."""
    if n_max < 0:
        raise ValueError(f"n_max must be >= 0, got {n_max}")
    total = 0.0
    prev_term = None
    last_term = 0.0
    ratio = 0.0
    for n in range(n_max + 1):
        term = scaled_increment(k, n, 1.0) * 2.0 ** (-n * weight_exp2)
        if math.isinf(term):
            total = math.inf
            last_term = math.inf
            ratio = math.inf
            break
        if prev_term is not None and prev_term > 0.0:
            ratio = term / prev_term
        prev_term = term
        last_term = term
        total += term
    # A non-vanishing tail ratio marks a diverging partial-sum series; the
    # capacity is then 0 in the limit even if the truncated value is finite.
    diverging = bool(last_term > 0.0 and ratio >= 0.98) or not math.isfinite(total)
    if total == 0.0:
        value = math.inf
    elif total > _OVERFLOW:
        value = 0.0
    else:
        value = 1.0 / total
    return CapacityEstimate(
        value,
        method,
        k.describe(),
        {
            "energy_sum": total,
            "n_max": n_max,
            "diverging": diverging,
            "last_term": last_term,
            "tail_ratio": ratio,
        },
    )


def reference_square_capacity(k: Kernel, n_max: int) -> CapacityEstimate:
    """Reference capacity of the unit square: [sum_n incr(n) 4^-n]^(-1)."""
    return _reference_capacity(k, n_max, 2.0, "reference-square")


def reference_cantor_capacity(k: Kernel, n_max: int) -> CapacityEstimate:
    """Reference capacity of the middle-half Cantor set:
    [sum_n incr(n) 2^(-n/2)]^(-1)."""
    return _reference_capacity(k, n_max, 0.5, "reference-cantor")


def cantor_points(level: int) -> np.ndarray:
    """The 2^level left endpoints of the level-`level` middle-half Cantor
    approximation: sums of b_n 4^-n with digits b_n in {0, 3}."""
    pts = np.zeros(1)
    for n in range(1, level + 1):
        pts = np.concatenate((pts, pts + 3.0 * 4.0 ** (-n)))
    return np.sort(pts)


@dataclass(frozen=True)
class EquilibriumResult:
    weights: np.ndarray
    energy: float
    gap: float
    iterations: int
    converged: bool
    min_rayleigh: float


def equilibrium_measure(
    points: np.ndarray,
    k: Kernel,
    tol: float = 1e-6,
    max_iters: int = 50_000,
) -> EquilibriumResult:
    """Minimize the quadratic energy w -> sum_ij w_i w_j f(|x_i - x_j|) over
    the probability simplex (pairwise Frank-Wolfe steps with exact line
    search).

    Divergent kernels are rejected: smooth them at the grid scale first.
    The returned duality gap certifies energy - minimum <= gap; on
    non-convergence the best iterate is returned with converged=False.
    The smallest Rayleigh quotient seen along step directions is reported
    so indefiniteness of the kernel matrix is observable.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if n == 0:
        raise ValueError("equilibrium solver needs at least one point")
    if not math.isfinite(k.value_at_zero):
        raise ValueError(
            "kernel diverges at 0; smooth it at the grid scale before solving"
        )
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    off_diag = dist[~np.eye(n, dtype=bool)]
    if n > 1 and np.min(off_diag) == 0.0:
        raise ValueError("equilibrium solver needs distinct points")
    g_mat = k.eval(dist)

    w = np.full(n, 1.0 / n)
    if n == 1:
        e = float(g_mat[0, 0])
        return EquilibriumResult(w, e, 0.0, 0, True, math.inf)

    gw = g_mat @ w
    energy = float(w @ gw)
    min_rayleigh = math.inf
    gap = math.inf
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        grad = 2.0 * gw
        i_fw = int(np.argmin(grad))
        grad_masked = np.where(w > 0.0, grad, -math.inf)
        i_aw = int(np.argmax(grad_masked))
        gap = float(grad @ w - grad[i_fw])
        if gap <= tol * max(energy, 1e-300):
            converged = True
            break
        if i_fw == i_aw:
            converged = True  # single-vertex optimum
            break
        curv = float(g_mat[i_fw, i_fw] + g_mat[i_aw, i_aw] - 2.0 * g_mat[i_fw, i_aw])
        min_rayleigh = min(min_rayleigh, curv / 2.0)
        slope = float(grad[i_fw] - grad[i_aw])
        gamma_max = float(w[i_aw])
        if curv > 0.0:
            gamma = min(max(-slope / (2.0 * curv), 0.0), gamma_max)
        else:
            gamma = gamma_max
        if gamma == 0.0:
            break
        w[i_fw] += gamma
        w[i_aw] = max(w[i_aw] - gamma, 0.0)
        gw += gamma * (g_mat[:, i_fw] - g_mat[:, i_aw])
        if it % 256 == 0:
            gw = g_mat @ w  # refresh accumulated drift
        energy = float(w @ gw)
    return EquilibriumResult(w, energy, gap, it, converged, min_rayleigh)


def equilibrium_capacity(
    points: np.ndarray, k: Kernel, tol: float = 1e-6, max_iters: int = 50_000
) -> CapacityEstimate:
    """Capacity estimate 1/(minimal energy) from the equilibrium solver."""
    res = equilibrium_measure(points, k, tol=tol, max_iters=max_iters)
    value = math.inf if res.energy == 0.0 else 1.0 / res.energy
    return CapacityEstimate(
        value,
        "equilibrium",
        k.describe(),
        {
            "iterations": res.iterations,
            "gap": res.gap,
            "converged": res.converged,
            "min_rayleigh": res.min_rayleigh,
        },
    )


class SausageBracket(NamedTuple):
    lower: CapacityEstimate
    upper: CapacityEstimate


def sausage_capacity(
    h: DyadicHistogram, k: Kernel, eps: float, scale: float = 1.0
) -> SausageBracket:
    """Two-sided bracket for the capacity of the eps-sausage of a
    histogrammed set, via the eps-smoothed kernel.

    Lower end: reciprocal dyadic energy of the mass-normalized histogram in
    smooth(k, eps) (the occupation-measure route).  Upper end: the general
    box-count bound over levels with physical side >= eps.  `scale` is the
    physical side of the level-0 box."""
    if not eps >= 2.0 * scale * 2.0 ** (-h.n_max):
        raise ValueError(
            f"eps={eps} below histogram resolution 2*{scale}*2^-{h.n_max}"
        )
    k_eps = smooth(k, eps, h.dim)
    mass = h.total_mass
    if mass <= 0:
        raise ValueError("histogram carries no mass")
    energy = dyadic_energy(h, k_eps, scale)
    e_norm = energy.value / (mass * mass)
    lower = CapacityEstimate(
        0.0 if math.isinf(e_norm) else (math.inf if e_norm == 0.0 else 1.0 / e_norm),
        "sausage",
        k_eps.describe(),
        {"eps": eps, "scale": scale, "truncated": energy.truncated, "route": "energy"},
    )
    n_hi = min(h.n_max, max(0, int(math.floor(math.log2(scale / eps)))))
    counts = [max(box_count(h, n), 1) for n in range(n_hi + 1)]
    upper = capacity_upper_bound(counts, k_eps, (0, n_hi), scale)
    upper = CapacityEstimate(
        upper.value,
        "sausage",
        k_eps.describe(),
        dict(upper.diagnostics, eps=eps, route="box-count"),
    )
    return SausageBracket(lower, upper)


class HitBracket(NamedTuple):
    lower: float
    upper: float
    clamped: bool


def hitting_probability_bracket(
    cap: CapacityEstimate, k_lo: float, k_hi: float
) -> HitBracket:
    """Bracket for the hitting probability of a set by a transient stable
    process: (k_lo * cap, min(1, k_hi * cap)), where k_lo and k_hi bound
    the potential kernel over the target set from the start point.

    k_hi = inf (start on the set) clamps the upper end to 1 with a flag."""
    if not (0 < k_lo <= k_hi):
        raise ValueError(f"need 0 < k_lo <= k_hi, got k_lo={k_lo}, k_hi={k_hi}")
    if not math.isfinite(k_lo):
        raise ValueError("k_lo must be finite")
    lower = k_lo * cap.value
    if math.isinf(k_hi):
        return HitBracket(lower, 1.0, True)
    upper = k_hi * cap.value
    return HitBracket(lower, min(1.0, upper), upper > 1.0)
