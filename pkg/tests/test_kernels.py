import math

import mpmath
import numpy as np
import pytest

from capmc.kernels import (
    Kernel,
    KernelError,
    KernelSpecError,
    NonCapacitableKernelError,
    constant_kernel,
    dyadic_increment,
    log_adjusted,
    parse_kernel_spec,
    riesz_kernel,
    smooth,
    smoothed_value,
    stable_potential_kernel,
    table_kernel,
)


def test_riesz_evaluations():
    assert riesz_kernel(1).eval(0.5) == pytest.approx(2.0, rel=1e-14)
    assert riesz_kernel(2).eval(1.0) == pytest.approx(1.0, rel=1e-14)
    assert riesz_kernel(0.5).eval(0.25) == pytest.approx(2.0, rel=1e-14)
    assert math.isinf(riesz_kernel(1).eval(0.0))


def test_riesz_rejects_bad_alpha():
    with pytest.raises(KernelError):
        riesz_kernel(0.0)
    with pytest.raises(KernelError):
        riesz_kernel(-1.0)


def _mpmath_stable_constant(alpha, d):
    # independent arbitrary-precision evaluation of the potential-density
    # normalization Gamma((d-a)/2) / (2^a pi^(d/2) Gamma(a/2))
    with mpmath.workdps(40):
        val = mpmath.gamma((d - alpha) / 2) / (
            2 ** alpha * mpmath.pi ** (d / 2) * mpmath.gamma(alpha / 2)
        )
        return float(val)


def test_stable_potential_constant_against_gamma_oracle():
    # alpha=1, d=3 reduces to 1/(2 pi^2); the oracle pins it
    k = stable_potential_kernel(1, 3)
    expected = _mpmath_stable_constant(1, 3)
    assert expected == pytest.approx(1.0 / (2.0 * math.pi ** 2), rel=1e-14)
    assert k.eval(1.0) == pytest.approx(expected, rel=1e-12)
    for alpha, d in [(0.5, 3), (1.5, 4), (2.0, 5), (1.0, 5)]:
        k = stable_potential_kernel(alpha, d)
        assert k.params["c"] == pytest.approx(_mpmath_stable_constant(alpha, d), rel=1e-12)


def test_stable_potential_homogeneity():
    k = stable_potential_kernel(1, 3)
    for r in (0.1, 0.37, 2.5):
        assert k.eval(r) / k.eval(2 * r) == pytest.approx(2.0 ** (3 - 1), rel=1e-12)
    k = stable_potential_kernel(2, 5)
    # exponent alpha - d = -3
    assert k.eval(0.5) / k.eval(1.0) == pytest.approx(8.0, rel=1e-12)


def test_stable_potential_rejects_bad_params():
    with pytest.raises(KernelError):
        stable_potential_kernel(0.0, 3)
    with pytest.raises(KernelError):
        stable_potential_kernel(2.5, 5)
    with pytest.raises(KernelError):
        stable_potential_kernel(1.0, 2)


def test_log_adjusted_values():
    la = log_adjusted(riesz_kernel(1))
    assert la.eval(math.exp(-1)) == pytest.approx(math.e, rel=1e-14)
    assert la.eval(1.0) == 0.0
    assert la.eval(2.7) == 0.0  # clamped beyond r = 1
    la2 = log_adjusted(riesz_kernel(0.5))
    assert la2.eval(0.25) == pytest.approx(2.0 * math.log(4.0), rel=1e-13)


def test_smoothed_value_power_law_closed_forms():
    # riesz: the defining integral gives (d/(d-alpha)) eps^-alpha
    assert smoothed_value(riesz_kernel(1), 0.5, 3) == pytest.approx(3.0, rel=1e-12)
    # constant kernel averages to itself
    assert smoothed_value(constant_kernel(2.5), 0.3, 3) == pytest.approx(2.5, rel=1e-10)


def _fbar_power_oracle(amplitude: float, power: float, eps: float, d: int) -> float:
    # independent adaptive quadrature of eps^-d * d * int_0^eps A s^-p s^(d-1) ds,
    # entirely in arbitrary precision (float64 overflows at the quadrature's
    # extreme nodes for near-critical exponents)
    with mpmath.workdps(40):
        a, p, e = mpmath.mpf(amplitude), mpmath.mpf(power), mpmath.mpf(eps)
        val = mpmath.quad(lambda s: a * s ** (d - 1 - p), [0, e / 7, e])
        return float(d * e ** (-d) * val)


def test_smoothed_value_matches_quadrature_oracle():
    # exponents stay >= 0.3 away from the critical alpha = d, where the
    # oracle's own tanh-sinh rule loses accuracy
    rng = np.random.default_rng(20240601)
    for _ in range(50):
        d = int(rng.integers(1, 6))
        alpha = float(rng.uniform(0.1, d - 0.3)) if d > 1 else float(rng.uniform(0.1, 0.7))
        eps = float(rng.uniform(0.02, 1.5))
        k = riesz_kernel(alpha)
        assert smoothed_value(k, eps, d) == pytest.approx(
            _fbar_power_oracle(1.0, alpha, eps, d), rel=1e-10
        )
    # stable-potential family: fbar = (d c(alpha) / alpha) eps^(alpha-d)
    for alpha, d in [(1.0, 3), (1.5, 4), (0.7, 3)]:
        k = stable_potential_kernel(alpha, d)
        eps = 0.25
        got = smoothed_value(k, eps, d)
        assert got == pytest.approx(
            _fbar_power_oracle(k.params["c"], d - alpha, eps, d), rel=1e-10
        )
        assert got == pytest.approx(d * k.params["c"] / alpha * eps ** (alpha - d), rel=1e-12)


def test_smoothed_value_general_path_uses_quadrature():
    # log-adjusted riesz has no stored power law; production takes the
    # quadrature path, checked against the arbitrary-precision oracle
    k = log_adjusted(riesz_kernel(0.5))
    d, eps = 2, 0.3
    with mpmath.workdps(40):
        e = mpmath.mpf(eps)
        val = mpmath.quad(
            lambda s: s ** mpmath.mpf(-0.5) * mpmath.log(1 / s) * s ** (d - 1),
            [0, e / 7, e],
        )
        oracle = float(d * e ** (-d) * val)
    assert smoothed_value(k, eps, d) == pytest.approx(oracle, rel=1e-9)


def test_smoothed_value_divergent_rejected():
    with pytest.raises(NonCapacitableKernelError):
        smoothed_value(riesz_kernel(3), 0.5, 3)
    with pytest.raises(NonCapacitableKernelError):
        smoothed_value(riesz_kernel(2), 0.5, 2)


def test_smooth_piecewise():
    sm = smooth(riesz_kernel(1), 0.5, 3)
    assert sm.eval(0.75) == pytest.approx(4.0 / 3.0, rel=1e-14)
    assert sm.eval(0.0) == sm.eval(0.25) == sm.eval(0.4999)
    assert sm.value_at_zero == pytest.approx(3.0, rel=1e-12)
    # exact agreement with the base kernel above eps
    base = riesz_kernel(1)
    for r in np.linspace(0.5, 3.0, 23):
        assert sm.eval(r) == base.eval(r)


def test_smooth_monotone_on_grid():
    sm = smooth(riesz_kernel(1), 0.5, 3)
    grid = np.linspace(0.0, 4.0, 1000)
    vals = sm.eval(grid)
    assert np.all(np.diff(vals) <= 1e-12)


def test_dyadic_increments():
    assert dyadic_increment(riesz_kernel(1), 1) == pytest.approx(1.0, rel=1e-14)
    assert dyadic_increment(constant_kernel(3.0), 5) == 0.0
    assert dyadic_increment(riesz_kernel(2), 2) == pytest.approx(12.0, rel=1e-14)
    with pytest.raises(KernelError):
        dyadic_increment(riesz_kernel(1), -1)


def test_increment_telescoping():
    # partial sums from level m to M telescope to f(2^-M) - f(2^(1-m))
    for alpha in (0.4, 1.0, 1.7):
        k = riesz_kernel(alpha)
        for m, M in [(0, 12), (2, 20), (5, 9)]:
            total = sum(dyadic_increment(k, n) for n in range(m, M + 1))
            expected = k.eval(2.0 ** -M) - k.eval(2.0 ** (1 - m))
            assert total == pytest.approx(expected, rel=1e-9)


def test_monotone_decreasing_on_random_grids():
    rng = np.random.default_rng(7)
    zoo = [
        riesz_kernel(0.7),
        stable_potential_kernel(1.2, 4),
        log_adjusted(riesz_kernel(1.0)),
        smooth(riesz_kernel(1.5), 0.1, 3),
        constant_kernel(2.0),
        table_kernel([0.0, 0.5, 1.0], [3.0, 1.0, 0.25]),
    ]
    for k in zoo:
        for _ in range(20):
            grid = np.sort(rng.uniform(1e-4, 4.0, size=64))
            vals = k.eval(grid)
            assert np.all(vals >= 0.0)
            assert np.all(np.diff(vals) <= 1e-12)


def test_table_kernel_validation():
    with pytest.raises(KernelError):
        table_kernel([0.1, 0.5], [1.0, 0.5])  # must start at 0
    with pytest.raises(KernelError):
        table_kernel([0.0, 0.5], [1.0, 2.0])  # increasing values


def test_parse_kernel_specs():
    assert parse_kernel_spec("riesz:alpha=0.5").params["alpha"] == 0.5
    k = parse_kernel_spec("stable:alpha=1,d=3")
    assert k.family == "stable-potential" and k.params["d"] == 3
    k = parse_kernel_spec("logadj:riesz:alpha=1")
    assert k.family == "log-adjusted"
    k = parse_kernel_spec("smooth:eps=0.01:riesz:alpha=1", dim=3)
    assert k.family == "smoothed" and k.params["eps"] == 0.01
    # describe() round-trips through the parser
    k2 = parse_kernel_spec(k.describe(), dim=3)
    assert k2.params["fbar"] == pytest.approx(k.params["fbar"], rel=1e-14)


def test_parse_kernel_spec_errors_name_the_token():
    with pytest.raises(KernelSpecError, match="frobnitz"):
        parse_kernel_spec("frobnitz:alpha=1")
    with pytest.raises(KernelSpecError, match="alpha"):
        parse_kernel_spec("riesz:alpha=abc")
    with pytest.raises(KernelSpecError, match="smooth"):
        parse_kernel_spec("smooth:riesz:alpha=1", dim=3)
    with pytest.raises(KernelSpecError, match="dimension"):
        parse_kernel_spec("smooth:eps=0.1:riesz:alpha=1")
