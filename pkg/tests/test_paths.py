import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from capmc.measures import WeightedMeasure
from capmc.paths import (
    excursion_count,
    local_time_measure,
    local_time_profile,
    occupation_measure,
    sample_brownian,
    sample_positive_stable,
    sample_stable,
    zero_set,
)
from capmc.seeding import mix_seed


def test_brownian_determinism():
    a = sample_brownian(3, 100, 1.0, seed=123)
    b = sample_brownian(3, 100, 1.0, seed=123)
    assert np.array_equal(a.positions, b.positions)
    c = sample_brownian(3, 100, 1.0, seed=124)
    assert not np.array_equal(a.positions, c.positions)


def test_brownian_shape_and_start():
    p = sample_brownian(2, 7, 2.0, seed=0, start=[1.0, -1.0])
    assert p.positions.shape == (8, 2)
    assert np.array_equal(p.positions[0], [1.0, -1.0])
    assert p.times[0] == 0.0 and p.times[-1] == 2.0


def test_brownian_single_step_variance():
    # n_steps=1: exactly one Gaussian increment of variance = horizon
    vals = np.array(
        [sample_brownian(1, 1, 3.0, seed=s).positions[1, 0] for s in range(4000)]
    )
    assert np.var(vals) == pytest.approx(3.0, rel=0.1)


def test_brownian_endpoint_second_moment():
    # E |B_1|^2 = d; Monte Carlo oracle over 10,000 paths
    total = 0.0
    n = 10_000
    for s in range(n):
        p = sample_brownian(3, 4, 1.0, seed=s)
        total += float(np.dot(p.positions[-1], p.positions[-1]))
    assert total / n == pytest.approx(3.0, abs=0.1)


def test_brownian_scaling_in_law():
    # horizon-4 path scaled by 1/2: |B_horizon|^2 / horizon averages to d
    total = 0.0
    n = 10_000
    for s in range(n):
        p = sample_brownian(2, 4, 4.0, seed=100_000 + s)
        total += float(np.dot(p.positions[-1], p.positions[-1])) / 4.0
    assert total / n == pytest.approx(2.0, rel=0.05)


def test_positive_stable_laplace_transform():
    # CMS sampler against the defining transform E e^{-uS} = e^{-u^beta}
    rng = np.random.default_rng(77)
    n = 200_000
    for beta in (0.3, 0.5, 0.75):
        s = sample_positive_stable(beta, n, rng)
        for u in (0.5, 2.0):
            mc = float(np.mean(np.exp(-u * s)))
            assert mc == pytest.approx(math.exp(-(u ** beta)), abs=4.0 / math.sqrt(n))


def test_positive_stable_half_matches_levy():
    # beta = 1/2 has the closed form S = 1/(2 N^2)
    rng = np.random.default_rng(78)
    n = 100_000
    s = sample_positive_stable(0.5, n, rng)
    ref = 1.0 / (2.0 * rng.standard_normal(n) ** 2)
    assert ks_2samp(s, ref).statistic < 0.01


def test_stable_determinism_and_alpha2_variance():
    a = sample_stable(1.3, 2, 50, 1.0, seed=9)
    b = sample_stable(1.3, 2, 50, 1.0, seed=9)
    assert np.array_equal(a.positions, b.positions)
    # alpha = 2 normalization e^{-t |lam|^2} means Var X_1 = 2
    vals = np.array(
        [sample_stable(2, 1, 4, 1.0, seed=s).positions[-1, 0] for s in range(10_000)]
    )
    assert np.var(vals) == pytest.approx(2.0, abs=0.1)


def test_stable_alpha1_is_cauchy():
    # alpha = 1 with e^{-t|lam|} is Cauchy(scale 1): median |X_1| = 1
    vals = np.array(
        [abs(sample_stable(1, 1, 4, 1.0, seed=s).positions[-1, 0]) for s in range(10_000)]
    )
    assert np.median(vals) == pytest.approx(1.0, abs=0.05)


def test_stable_rejects_bad_alpha():
    with pytest.raises(ValueError):
        sample_stable(0.0, 1, 10)
    with pytest.raises(ValueError):
        sample_stable(2.5, 1, 10)


def _make_path(values, horizon=1.0):
    from capmc.paths import PathSample

    values = np.asarray(values, dtype=float)[:, None]
    return PathSample(
        dim=1, n_steps=len(values) - 1, horizon=horizon, positions=values,
        start=values[0], seed=0, process="brownian",
    )


def test_zero_set_hand_crossings():
    zs = zero_set(_make_path([1.0, -1.0, 1.0]))
    assert np.allclose(zs.zero_times, [0.25, 0.75])
    assert np.allclose(zs.intervals, [[0.0, 0.25], [0.25, 0.75], [0.75, 1.0]])


def test_zero_set_positive_path():
    zs = zero_set(_make_path([0.5, 1.0, 0.7]))
    assert len(zs.zero_times) == 0
    assert np.allclose(zs.intervals, [[0.0, 1.0]])
    # starting at zero adds the single zero time {0}
    zs2 = zero_set(_make_path([0.0, 1.0, 0.7]))
    assert np.allclose(zs2.zero_times, [0.0])
    assert np.allclose(zs2.intervals, [[0.0, 1.0]])


def test_zero_set_alternating():
    values = [1.0 if i % 2 == 0 else -1.0 for i in range(9)]
    zs = zero_set(_make_path(values))
    assert len(zs.zero_times) == 8  # one crossing per step


def test_zero_set_tiles_complement():
    path = sample_brownian(1, 4096, 1.0, seed=5)
    zs = zero_set(path)
    lengths = zs.interval_lengths
    assert np.all(lengths > 0)
    starts = zs.intervals[:, 0]
    ends = zs.intervals[:, 1]
    assert np.all(starts[1:] >= ends[:-1] - 1e-15)  # disjoint, sorted
    assert abs(lengths.sum() - 1.0) < 1e-12  # zeros carry no length
    inner = zs.zero_times[(zs.zero_times > 0) & (zs.zero_times < 1)]
    for t in inner[:50]:
        assert not np.any((starts < t) & (t < ends))


def test_excursion_count_thresholds():
    zs = zero_set(_make_path([1.0, -1.0, 1.0, -1.0]))
    # intervals: (0,1/6),(1/6,1/2),(1/2,5/6),(5/6,1)
    assert excursion_count(zs, 0.2) == 2
    assert excursion_count(zs, 10.0) == 0
    assert excursion_count(zs, 0.0) == 4


def test_local_time_trivials():
    # constant path at 0: l(t) = t / (2h)
    lt = local_time_profile(_make_path([0.0] * 11), bandwidth=0.25)
    assert np.allclose(lt.values, lt.times / 0.5)
    # path never in the band after time 0: identically 0
    lt2 = local_time_profile(_make_path([0.0, 5.0, 6.0, 7.0]), bandwidth=0.1)
    assert np.all(lt2.values == 0.0)
    assert lt2.values[0] == 0.0
    path = sample_brownian(1, 2048, 1.0, seed=11)
    lt3 = local_time_profile(path)
    assert np.all(np.diff(lt3.values) >= 0.0)


def _band_and_max_chunk(c0: int, chunk: int = 20, n_steps: int = 2 ** 20):
    # band-count estimator of l(1) and the running max from the same paths
    h = n_steps ** -0.5
    dt = 1.0 / n_steps
    rng = np.random.default_rng(mix_seed(987654321, c0))
    b = np.cumsum(rng.standard_normal((chunk, n_steps)) * math.sqrt(dt), axis=1)
    ells = (np.abs(b) <= h).sum(axis=1) * dt / (2 * h)
    return ells, b.max(axis=1)


def test_local_time_matches_running_max_in_law():
    # Levy's identity: l(1) has the law of max_{t<=1} B_t.  The band
    # estimator at the diffusive bandwidth h = n_steps^-1/2 must match the
    # running-max sample within KS distance 0.05 over 5,000 paths.
    from concurrent.futures import ProcessPoolExecutor

    n_paths = 5000
    chunk = 20
    with ProcessPoolExecutor(max_workers=2) as ex:
        parts = list(ex.map(_band_and_max_chunk, range(0, n_paths, chunk)))
    ells = np.concatenate([p[0] for p in parts])
    maxes = np.concatenate([p[1] for p in parts])
    # the inline formula is exactly the estimator (spot-check 3 paths)
    for s in (1, 2, 3):
        path = sample_brownian(1, 4096, 1.0, seed=s)
        lt = local_time_profile(path)
        manual = (np.abs(path.positions[1:, 0]) <= lt.bandwidth).sum() / 4096.0 / (
            2 * lt.bandwidth
        )
        assert lt.values[-1] == pytest.approx(manual, rel=1e-12)
    assert ks_2samp(ells, maxes).statistic < 0.05


def test_occupation_measure_mass():
    path = sample_brownian(3, 4, 1.0, seed=3)
    mu = occupation_measure(path)
    assert mu.n_atoms == 4
    assert np.allclose(mu.weights, 0.25)
    assert mu.total_mass == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(mu.points, path.positions[1:])
    path2 = sample_brownian(2, 1000, 2.0, seed=4)
    assert occupation_measure(path2).total_mass == pytest.approx(2.0, abs=1e-12)


def test_local_time_measure_mass():
    path = sample_brownian(1, 2 ** 14, 1.0, seed=21)
    lt = local_time_profile(path)
    m = local_time_measure(lt)
    assert m.total_mass == pytest.approx(lt.values[-1], rel=1e-12)
    assert np.all((m.points >= 0) & (m.points <= 1))


def test_zero_set_requires_dim1():
    with pytest.raises(ValueError):
        zero_set(sample_brownian(2, 10, 1.0, seed=0))
