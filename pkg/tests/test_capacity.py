import math

import numpy as np
import pytest

from capmc.capacity import (
    cantor_points,
    capacity_upper_bound,
    equilibrium_capacity,
    equilibrium_measure,
    hitting_probability_bracket,
    reference_cantor_capacity,
    reference_square_capacity,
    sausage_capacity,
)
from capmc.dyadic import bin_measure
from capmc.energy import direct_energy
from capmc.kernels import riesz_kernel, smooth, stable_potential_kernel
from capmc.measures import WeightedMeasure
from capmc.paths import occupation_measure, sample_brownian
from capmc.experiments import normalize_box


def test_upper_bound_single_point_telescopes():
    # N_n = 1 over levels [1, M]: energy sum telescopes to f(2^-M) - f(1)
    k = smooth(riesz_kernel(1), 2.0 ** -8, 2)
    M = 6
    est = capacity_upper_bound([1] * M, k, (1, M))
    expected = 1.0 / (k.eval(2.0 ** -M) - k.eval(1.0))
    assert est.value == pytest.approx(expected, rel=1e-12)


def test_upper_bound_square_counts_match_geometric_series():
    # N_n = 4^n with riesz(alpha), alpha < 2: sum_n (1 - 2^-a) 2^(n(a-2))
    alpha = 1.3
    k = riesz_kernel(alpha)
    M = 30
    est = capacity_upper_bound([4 ** n for n in range(M + 1)], k, (0, M))
    x = 2.0 ** (alpha - 2.0)
    series = (1.0 - 2.0 ** -alpha) * (1.0 - x ** (M + 1)) / (1.0 - x)
    assert est.value == pytest.approx(1.0 / series, rel=1e-12)


def test_upper_bound_linear_in_counts():
    k = riesz_kernel(1.0)
    counts = [2, 5, 9, 17]
    a = capacity_upper_bound(counts, k, (0, 3))
    b = capacity_upper_bound([2 * c for c in counts], k, (0, 3))
    assert b.value == pytest.approx(2.0 * a.value, rel=1e-12)
    with pytest.raises(ValueError):
        capacity_upper_bound([], k, (3, 2))
    with pytest.raises(ValueError):
        capacity_upper_bound([1, 0], k, (0, 1))


def test_reference_square_riesz1_is_exactly_one():
    est = reference_square_capacity(riesz_kernel(1), 48)
    assert abs(est.value - 1.0) < 1e-12
    assert not est.diagnostics["diverging"]


def test_reference_square_riesz2_diverges():
    # term at every level is 3/4: linear divergence, capacity -> 0
    for n_max in (10, 20, 40):
        est = reference_square_capacity(riesz_kernel(2), n_max)
        assert est.diagnostics["diverging"]
        assert est.diagnostics["energy_sum"] == pytest.approx(0.75 * (n_max + 1), rel=1e-12)
    sums = [
        reference_square_capacity(riesz_kernel(2), n).diagnostics["energy_sum"]
        for n in (10, 20, 40)
    ]
    assert sums[0] < sums[1] < sums[2]


def test_reference_capacity_positivity_thresholds():
    # positive iff alpha < 2 on the square, alpha < 1/2 on the Cantor set
    for alpha in (0.5, 1.0, 1.9):
        assert not reference_square_capacity(riesz_kernel(alpha), 40).diagnostics["diverging"]
    for alpha in (2.0, 2.5):
        assert reference_square_capacity(riesz_kernel(alpha), 40).diagnostics["diverging"]
    for alpha in (0.25, 0.4):
        assert not reference_cantor_capacity(riesz_kernel(alpha), 40).diagnostics["diverging"]
    for alpha in (0.5, 0.8):
        assert reference_cantor_capacity(riesz_kernel(alpha), 40).diagnostics["diverging"]


def test_reference_cantor_riesz_quarter_positive():
    n_max = 60
    est = reference_cantor_capacity(riesz_kernel(0.25), n_max)
    # geometric series with ratio 2^(alpha - 1/2) = 2^-1/4
    x = 2.0 ** -0.25
    series = (1.0 - 2.0 ** -0.25) * (1.0 - x ** (n_max + 1)) / (1.0 - x)
    assert est.value == pytest.approx(1.0 / series, rel=1e-9)
    assert not est.diagnostics["diverging"]


def test_equilibrium_two_points():
    k = smooth(riesz_kernel(1), 1.0 / 16, 2)
    pts = np.array([[0.0, 0.0], [0.5, 0.0]])
    res = equilibrium_measure(pts, k, tol=1e-10)
    assert np.allclose(res.weights, [0.5, 0.5], atol=1e-8)
    expected = (k.value_at_zero + k.eval(0.5)) / 2.0
    assert res.energy == pytest.approx(expected, rel=1e-8)
    assert res.converged
    assert res.gap <= 1e-10 * res.energy * (1 + 1e-9) + 1e-300


def _simplex_grid_search(g_mat, resolution=1e-3):
    # brute-force oracle over the 3-point probability simplex
    best = (math.inf, None)
    steps = int(round(1.0 / resolution))
    w1 = np.arange(steps + 1) / steps
    for a in w1:
        b = np.arange(int(round((1.0 - a) / resolution)) + 1) * resolution
        c = 1.0 - a - b
        keep = c >= -1e-12
        b, c = b[keep], np.clip(c[keep], 0.0, None)
        ws = np.stack([np.full(len(b), a), b, c], axis=1)
        vals = np.einsum("ki,ij,kj->k", ws, g_mat, ws)
        i = int(np.argmin(vals))
        if vals[i] < best[0]:
            best = (float(vals[i]), ws[i])
    return best


def test_equilibrium_three_points_vs_grid_oracle():
    # collinear points on a line in the plane (riesz(1) has no finite
    # spherical average in dimension 1)
    k = smooth(riesz_kernel(1), 1.0 / 16, 2)
    pts = np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]])
    diff = pts[:, None, :] - pts[None, :, :]
    g_mat = k.eval(np.sqrt((diff ** 2).sum(axis=2)))
    res = equilibrium_measure(pts, k, tol=1e-10)
    _, w_star = _simplex_grid_search(g_mat)
    assert np.all(np.abs(res.weights - w_star) <= 5e-3)
    assert res.gap <= 1e-10 * res.energy + 1e-300


def test_equilibrium_beats_uniform_and_is_invariant():
    rng = np.random.default_rng(10)
    pts = rng.random((40, 2))
    k = smooth(riesz_kernel(0.8), 0.02, 2)
    res = equilibrium_measure(pts, k, tol=1e-8)
    uniform = WeightedMeasure(pts, np.full(40, 1.0 / 40))
    assert res.energy <= direct_energy(uniform, k) * (1 + 1e-12)
    # relabeling invariance
    perm = rng.permutation(40)
    res2 = equilibrium_measure(pts[perm], k, tol=1e-8)
    assert res2.energy == pytest.approx(res.energy, rel=1e-10)
    # rigid motion invariance
    theta = 0.7
    rot = np.array([[math.cos(theta), -math.sin(theta)],
                    [math.sin(theta), math.cos(theta)]])
    res3 = equilibrium_measure(pts @ rot.T + 3.0, k, tol=1e-8)
    assert res3.energy == pytest.approx(res.energy, rel=1e-10)


def test_equilibrium_rejects_divergent_kernel_and_duplicates():
    with pytest.raises(ValueError, match="smooth"):
        equilibrium_measure(np.array([[0.0], [1.0]]), riesz_kernel(1))
    k = smooth(riesz_kernel(0.5), 0.1, 1)
    with pytest.raises(ValueError, match="distinct"):
        equilibrium_measure(np.array([[0.5], [0.5]]), k)


def test_equilibrium_capacity_vs_reference_square():
    # 64x64 grid with matching eps-smoothed kernel: factor-8 agreement
    side = 64
    xs = (np.arange(side) + 0.5) / side
    pts = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1).reshape(-1, 2)
    k = smooth(riesz_kernel(1), 1.0 / side, 2)
    eq = equilibrium_capacity(pts, k, tol=1e-5, max_iters=200_000)
    ref = reference_square_capacity(k, 12)
    ratio = eq.value / ref.value
    assert 1.0 / 8.0 <= ratio <= 8.0, ratio


def test_equilibrium_capacity_vs_reference_cantor():
    pts = cantor_points(8)[:, None]  # 256 points
    k = smooth(riesz_kernel(0.25), 4.0 ** -8, 1)
    eq = equilibrium_capacity(pts, k, tol=1e-6, max_iters=200_000)
    ref = reference_cantor_capacity(k, 16)
    ratio = eq.value / ref.value
    assert 1.0 / 8.0 <= ratio <= 8.0, ratio


def test_cantor_points_structure():
    pts = cantor_points(3)
    assert len(pts) == 8
    # digits in {0,3}: smallest gap is 3 * 4^-3, largest coordinate sums 3/4 + 3/16 + 3/64
    assert pts[0] == 0.0
    assert pts[-1] == pytest.approx(3 / 4 + 3 / 16 + 3 / 64, rel=1e-15)


def test_sausage_capacity_flat_set():
    # eps at the set diameter: both bracket ends within a factor 4 of
    # 1/fbar(eps) for a probability measure
    rng = np.random.default_rng(11)
    pts = 0.45 + 0.02 * rng.random((200, 3))
    m = WeightedMeasure(pts, np.full(200, 1.0 / 200))
    h = bin_measure(m, 8)
    k = riesz_kernel(1)
    eps = 0.05
    bracket = sausage_capacity(h, k, eps)
    from capmc.kernels import smoothed_value

    target = 1.0 / smoothed_value(k, eps, 3)
    for end in (bracket.lower.value, bracket.upper.value):
        assert target / 4.0 <= end <= target * 4.0
    assert bracket.lower.value <= bracket.upper.value * 1.05


def test_sausage_capacity_monotone_in_eps():
    path = sample_brownian(3, 2 ** 16, 1.0, seed=3)
    mu = WeightedMeasure(normalize_box(path.positions[1:]), np.full(2 ** 16, 2.0 ** -16))
    h = bin_measure(mu, 10)
    k = stable_potential_kernel(1, 3)
    scale = 8.0
    lowers, uppers = [], []
    for eps in (0.5, 0.25, 0.125, 0.0625):
        bracket = sausage_capacity(h, k, eps, scale)
        lowers.append(bracket.lower.value)
        uppers.append(bracket.upper.value)
    # box-count end is exactly monotone (fewer levels for larger eps)
    assert all(a >= b * (1 - 1e-12) for a, b in zip(uppers, uppers[1:]))
    # energy end is monotone up to the smoothing plateau's local wiggle
    assert all(a >= b * 0.9 for a, b in zip(lowers, lowers[1:]))


def test_sausage_capacity_resolution_guard():
    m = WeightedMeasure(np.array([[0.5, 0.5]]), np.array([1.0]))
    h = bin_measure(m, 4)
    with pytest.raises(ValueError, match="resolution"):
        sausage_capacity(h, riesz_kernel(1), 2.0 ** -6)


def test_hitting_probability_bracket():
    from capmc.capacity import CapacityEstimate

    cap = CapacityEstimate(0.0, "sausage", "riesz:alpha=1")
    assert hitting_probability_bracket(cap, 0.5, 2.0) == (0.0, 0.0, False)
    cap2 = CapacityEstimate(0.3, "sausage", "riesz:alpha=1")
    lo, hi, clamped = hitting_probability_bracket(cap2, 0.7, 0.7)
    assert lo == hi == pytest.approx(0.21, rel=1e-12)
    assert not clamped
    lo, hi, clamped = hitting_probability_bracket(cap2, 0.5, math.inf)
    assert hi == 1.0 and clamped
    lo, hi, clamped = hitting_probability_bracket(cap2, 5.0, 6.0)
    assert hi == 1.0 and clamped
    with pytest.raises(ValueError):
        hitting_probability_bracket(cap2, 0.0, 1.0)
