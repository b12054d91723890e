"""Jitted inner loops: cell-list Gaussian pair sums and stable-path walks.

Reductions are organized as fixed per-cell (or per-path) partials combined
in a fixed order by the caller, so results are bit-identical regardless of
thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _lower_bound(keys, target):
    lo, hi = 0, len(keys)
    while lo < hi:
        mid = (lo + hi) // 2
        if keys[mid] < target:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True, inline="always")
def _cross_cell_sum(pts, w, a0, a1, b0, b1, inv_two_sigma2):
    d = pts.shape[1]
    acc = 0.0
    for a in range(a0, a1):
        wa = w[a]
        for b in range(b0, b1):
            r2 = 0.0
            for k in range(d):
                diff = pts[a, k] - pts[b, k]
                r2 += diff * diff
            acc += wa * w[b] * np.exp(-r2 * inv_two_sigma2)
    return acc


@njit(cache=True, parallel=True, fastmath=True)
def cell_pair_gaussian_sums(
    pts, w, cell_keys, cell_jc, cell_a0, cell_a1, prefixes, c, grid_size, inv_two_sigma2
):
    """Per-cell partial sums of w_a w_b exp(-|x_a-x_b|^2 / (2 sigma^2)) over
    unordered atom pairs whose cells differ by at most `c` (Chebyshev).

    Cells are sorted by the lexicographic ravel key of their integer
    coordinates, so for a fixed offset of the leading d-1 coordinates the
    neighbors along the last axis occupy one contiguous key range;
    `prefixes` enumerates the lexicographically positive half of the
    leading-offset stencil (pair deduplication).  Returns one partial per
    cell; the caller combines them and the diagonal in a fixed order.
    """
    n_cells = len(cell_keys)
    d = pts.shape[1]
    n_pref = prefixes.shape[0]
    partials = np.zeros(n_cells)
    for ci in prange(n_cells):
        a0 = cell_a0[ci]
        a1 = cell_a1[ci]
        acc = 0.0
        # within-cell unordered pairs
        for a in range(a0, a1):
            wa = w[a]
            for b in range(a + 1, a1):
                r2 = 0.0
                for k in range(d):
                    diff = pts[a, k] - pts[b, k]
                    r2 += diff * diff
                acc += wa * w[b] * np.exp(-r2 * inv_two_sigma2)
        j_last = cell_jc[ci, d - 1]
        key_ci = cell_keys[ci]
        # same leading coordinates: forward run along the last axis
        hi_step = min(c, grid_size - 1 - j_last)
        if hi_step >= 1:
            idx = ci + 1
            hi_key = key_ci + hi_step
            while idx < n_cells and cell_keys[idx] <= hi_key:
                acc += _cross_cell_sum(
                    pts, w, a0, a1, cell_a0[idx], cell_a1[idx], inv_two_sigma2
                )
                idx += 1
        # strictly positive leading-offset prefixes: one contiguous range each
        for p in range(n_pref):
            ok = True
            key = 0
            for k in range(d - 1):
                jj = cell_jc[ci, k] + prefixes[p, k]
                if jj < 0 or jj >= grid_size:
                    ok = False
                    break
                key = key * grid_size + jj
            if not ok:
                continue
            lo_last = j_last - c
            if lo_last < 0:
                lo_last = 0
            hi_last = j_last + c
            if hi_last > grid_size - 1:
                hi_last = grid_size - 1
            lo_key = key * grid_size + lo_last
            hi_key = key * grid_size + hi_last
            idx = _lower_bound(cell_keys, lo_key)
            while idx < n_cells and cell_keys[idx] <= hi_key:
                acc += _cross_cell_sum(
                    pts, w, a0, a1, cell_a0[idx], cell_a1[idx], inv_two_sigma2
                )
                idx += 1
        partials[ci] = acc
    return partials


@njit(cache=True)
def grid_min_dist2(x, cloud, cell_point_start, cell_point_idx, dims, lo, side, cap2):
    """Min squared distance from x to the cloud, exact when <= cap2, else
    a value > cap2.  Scans the Chebyshev-2 cell neighborhood (cell side is
    half the cap radius)."""
    d = x.shape[0]
    best = cap2 * 4.0 + 1.0
    for k in range(d):
        if x[k] < lo[k] - 2.0 * side or x[k] > lo[k] + (dims[k] + 2.0) * side:
            return best
    base = np.empty(d, dtype=np.int64)
    for k in range(d):
        base[k] = np.int64(np.floor((x[k] - lo[k]) / side))
    # iterate the 5^d neighborhood with an odometer
    off = np.full(d, -2, dtype=np.int64)
    while True:
        ok = True
        key = 0
        for k in range(d):
            jj = base[k] + off[k]
            if jj < 0 or jj >= dims[k]:
                ok = False
                break
            key = key * dims[k] + jj
        if ok:
            p0 = cell_point_start[key]
            p1 = cell_point_start[key + 1]
            for pi in range(p0, p1):
                pt = cell_point_idx[pi]
                r2 = 0.0
                for k in range(d):
                    diff = x[k] - cloud[pt, k]
                    r2 += diff * diff
                if r2 < best:
                    best = r2
        k = d - 1
        while k >= 0:
            off[k] += 1
            if off[k] <= 2:
                break
            off[k] = -2
            k -= 1
        if k < 0:
            break
    return best


@njit(cache=True)
def approach_walk_segment(
    pos,
    incs,
    cloud,
    cell_point_start,
    cell_point_idx,
    near_mask,
    dims,
    lo,
    side,
    center,
    escape2,
    eps_min2,
    eps_max2,
    min_d2,
):
    """Advance one stable path through a segment of pre-scaled increments.

    Tracks the running min squared distance to the cloud (capped at
    eps_max2).  Returns (min_d2, steps_used, status) with status 0 = alive
    at segment end, 1 = escaped, 2 = min distance already below the finest
    epsilon (nothing left to resolve)."""
    n_steps, d = incs.shape
    status = 0
    used = 0
    for s in range(n_steps):
        for k in range(d):
            pos[k] += incs[s, k]
        used = s + 1
        # cheap dilated-occupancy gate before the exact cell scan
        inside = True
        key = 0
        for k in range(d):
            jj = np.int64(np.floor((pos[k] - lo[k]) / side))
            if jj < 0 or jj >= dims[k]:
                inside = False
                break
            key = key * dims[k] + jj
        if inside and near_mask[key]:
            d2 = grid_min_dist2(
                pos, cloud, cell_point_start, cell_point_idx, dims, lo, side, eps_max2
            )
            if d2 < min_d2:
                min_d2 = d2
                if min_d2 < eps_min2:
                    status = 2
                    break
        r2 = 0.0
        for k in range(d):
            diff = pos[k] - center[k]
            r2 += diff * diff
        if r2 > escape2:
            status = 1
            break
    return min_d2, used, status
