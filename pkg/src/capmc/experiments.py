"""End-to-end experiments verifying the quantitative laws at desk scale.

Each runner simulates replicas, computes estimates next to their reference
values, and returns an ExperimentResult table.  Replicas are independent
tasks over (master seed, replica id); outputs are merged in replica order,
so results are identical regardless of worker count.

Resolution guards are enforced up front: no experiment silently evaluates
below the path discretization scale.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad

from . import __version__
from ._engine import approach_walk_segment
from .capacity import (
    capacity_upper_bound,
    hitting_probability_bracket,
    reference_cantor_capacity,
    reference_square_capacity,
    sausage_capacity,
)
from .dyadic import bin_measure, box_count
from .energy import dyadic_energy, gaussian_energy_fast
from .kernels import Kernel, log_adjusted, riesz_kernel, smooth, stable_potential_kernel
from .measures import WeightedMeasure
from .paths import (
    excursion_count,
    local_time_measure,
    local_time_profile,
    occupation_measure,
    sample_brownian,
    stable_increments,
    zero_set,
)
from .records import ExperimentRecord, ExperimentResult
from .seeding import mix_seed

BOX_HALF_WIDTH = 4.0  # paths are affinely mapped from [-L, L]^d into [0,1)^d


class GuardError(ValueError):
    """A resolution or geometry guard failed; the message names the
    required inequality."""


class ReplicaAbort(RuntimeError):
    """One replica was discarded (recorded, never silent)."""

    def __init__(self, replica: int, reason: str):
        super().__init__(f"replica {replica}: {reason}")
        self.replica = replica
        self.reason = reason


def require(cond: bool, message: str) -> None:
    if not cond:
        raise GuardError(message)


def normalize_box(points: np.ndarray, box_half_width: float = BOX_HALF_WIDTH) -> np.ndarray:
    """Map raw coordinates from [-L, L]^d into [0,1)^d; raise on escape."""
    scaled = (points + box_half_width) / (2.0 * box_half_width)
    if np.any(scaled < 0.0) or np.any(scaled >= 1.0):
        raise ValueError("box escape: sample left [-L, L]^d")
    return scaled


def _map_replicas(worker, args_list, workers: int):
    if workers <= 1:
        return [worker(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(worker, args_list))


# ---------------------------------------------------------------------------
# Moment quadratures


def expected_S_quadrature(sigma: float, d: int) -> float:
    """E S_sigma = 2 * integral_0^1 (1-s) (sigma^2/(sigma^2+s))^(d/2) ds by
    adaptive quadrature (relative accuracy 1e-10) after the exact
    substitution s = sigma^2 (e^u - 1) that flattens the s=0 peak."""
    require(sigma > 0, "sigma must be positive")
    require(d >= 2, "dimension must be >= 2")
    s2 = sigma * sigma
    u_max = math.log1p(1.0 / s2)
    a = 1.0 - d / 2.0

    def integrand(u):
        return (1.0 - s2 * math.expm1(u)) * math.exp(a * u)

    val, _ = quad(integrand, 0.0, u_max, epsabs=0.0, epsrel=1e-12, limit=400)
    return 2.0 * s2 * val


def expected_S_closed_form_d3(sigma: float) -> float:
    """Antiderivative form of E S_sigma in dimension 3."""
    s = float(sigma)
    return 4.0 * s * s + 8.0 * s ** 4 - 8.0 * s ** 3 * math.sqrt(1.0 + s * s)


def expected_S_discrete(sigma: float, d: int, m: int) -> float:
    """Exact mean of the grid estimator of S_sigma on m uniform time steps
    (atoms at positions[1..m], diagonal included):

        (1/m^2) [ m + 2 sum_k (m-k) (sigma^2/(sigma^2+k/m))^(d/2) ]

    Used to pin the time-discretization bias of subsampled evaluations."""
    k = np.arange(1, m)
    s2 = sigma * sigma
    terms = (m - k) * (s2 / (s2 + k / m)) ** (d / 2.0)
    return (m + 2.0 * float(np.sum(terms))) / (m * m)


def second_moment_I1_quadrature(sigma: float, d: int, triangle: str = "full") -> float:
    """Leading second-moment integral

        I1 = sigma^(2d) * II_{s1+s3<=1} ((1-s1-s3)^2/2)
             (sigma^2+s1)^(-d/2) (sigma^2+s3)^(-d/2) ds1 ds3

    by nested adaptive quadrature over the triangle (both axes under the
    peak-flattening substitution).  triangle="half" integrates over
    s3 <= s1 only (for the symmetry cross-check)."""
    require(sigma > 0, "sigma must be positive")
    if triangle not in ("full", "half"):
        raise ValueError(f"triangle must be 'full' or 'half', got {triangle!r}")
    s2 = sigma * sigma
    a = 1.0 - d / 2.0
    u_max = math.log1p(1.0 / s2)

    def inner(u1):
        s1 = s2 * math.expm1(u1)
        rem = 1.0 - s1
        if rem <= 0.0:
            return 0.0
        hi = math.log1p(rem / s2)
        if triangle == "half":
            hi = min(hi, u1)
        if hi <= 0.0:
            return 0.0

        def f(u3):
            s3 = s2 * math.expm1(u3)
            base = rem - s3
            return 0.5 * base * base * math.exp(a * u3)

        val, _ = quad(f, 0.0, hi, epsabs=0.0, epsrel=1e-13, limit=400)
        return val * math.exp(a * u1)

    val, _ = quad(inner, 0.0, u_max, epsabs=0.0, epsrel=1e-12, limit=400)
    return s2 * s2 * val


# ---------------------------------------------------------------------------
# Strong law for approximate self-intersections


def _pow2_stride(n_steps: int, m_target: int) -> int:
    """Largest power-of-two stride keeping at least m_target samples."""
    stride = 1
    while n_steps % (2 * stride) == 0 and n_steps // (2 * stride) >= m_target:
        stride *= 2
    return stride


def _strong_law_ratio(s_value: float, sigma: float, d: int) -> float:
    if d >= 3:
        return s_value / (sigma * sigma)
    return s_value / (sigma * sigma * math.log(1.0 / sigma))


def _strong_law_replica(args):
    (d, n_steps, sigmas, master_seed, replica, eval_factor, cutoff, box_l) = args
    rs = mix_seed(master_seed, replica)
    path = sample_brownian(d, n_steps, 1.0, rs)
    try:
        norm = normalize_box(path.positions[1:], box_l)
    except ValueError as exc:
        return ("abort", replica, str(exc))
    rows = []
    for sigma in sigmas:
        m_target = int(math.ceil(eval_factor / (sigma * sigma)))
        stride = _pow2_stride(n_steps, m_target)
        pts = norm[stride - 1 :: stride]
        m_eval = len(pts)
        sub = WeightedMeasure(pts, np.full(m_eval, 1.0 / m_eval))
        sig_norm = sigma / (2.0 * box_l)
        n_max = int(math.floor(-math.log2(sig_norm))) + 1
        hist = bin_measure(sub, n_max)
        s_val, bound = gaussian_energy_fast(hist, sig_norm, cutoff=cutoff)
        rows.append((sigma, s_val, bound, m_eval, rs))
    return ("ok", replica, rows)


def run_strong_law(
    d: int,
    n_steps: int,
    sigma_grid: Sequence[float],
    replicas: int,
    seed: int,
    eval_factor: int = 16,
    cutoff: int = 6,
    workers: int = 1,
    box_half_width: float = BOX_HALF_WIDTH,
) -> ExperimentResult:
    """Normalized self-intersection ratios S_sigma/sigma^2 (d >= 3) or
    S_sigma/(sigma^2 log(1/sigma)) (d = 2) per replica and sigma, with the
    cross-replica mean next to the first-moment quadrature.

    Each sigma is evaluated on the coarsest power-of-two subgrid keeping at
    least eval_factor/sigma^2 samples (eval_factor >= 16 keeps the stated
    resolution guard with margin; the time-discretization bias of the grid
    estimator cancels to O(1/(eval_factor^2)) relative)."""
    require(d >= 2, "dimension must be >= 2")
    sigmas = sorted((float(s) for s in sigma_grid), reverse=True)
    require(len(sigmas) > 0, "sigma grid must be nonempty")
    require(
        min(sigmas) >= 4.0 * n_steps ** -0.5,
        f"sigma_min must be >= 4*n_steps^-1/2 = {4.0 * n_steps ** -0.5:g}",
    )
    require(max(sigmas) < box_half_width, "sigma_max must be < box half-width")
    require(eval_factor >= 16, "eval_factor must be >= 16 (resolution guard)")
    target = 4.0 / (d - 2) if d >= 3 else 4.0

    args = [
        (d, n_steps, sigmas, seed, r, eval_factor, cutoff, box_half_width)
        for r in range(replicas)
    ]
    outcomes = _map_replicas(_strong_law_replica, args, workers)

    records, aborts = [], []
    ratios = {s: [] for s in sigmas}
    for outcome in outcomes:
        if outcome[0] == "abort":
            aborts.append((outcome[1], outcome[2]))
            continue
        _, replica, rows = outcome
        for sigma, s_val, bound, m_eval, rs in rows:
            ratio = _strong_law_ratio(s_val, sigma, d)
            ratios[sigma].append(ratio)
            records.append(
                ExperimentRecord(
                    "strong-law",
                    replica,
                    sigma,
                    ratio,
                    target,
                    {
                        "s_sigma": s_val,
                        "error_bound": bound,
                        "m_eval": m_eval,
                    },
                    rs,
                )
            )
    for sigma in sigmas:
        if not ratios[sigma]:
            continue
        mean_ratio = float(np.mean(ratios[sigma]))
        ref = _strong_law_ratio(expected_S_quadrature(sigma, d), sigma, d)
        records.append(
            ExperimentRecord(
                "strong-law-mean",
                -1,
                sigma,
                mean_ratio,
                ref,
                {"n_replicas": len(ratios[sigma])},
                seed,
            )
        )
    metadata = {
        "experiment": "strong-law",
        "dim": d,
        "n_steps": n_steps,
        "sigma_grid": sigmas,
        "replicas": replicas,
        "master_seed": seed,
        "eval_factor": eval_factor,
        "cutoff": cutoff,
        "box_half_width": box_half_width,
        "guards": {"sigma_min >= 4*n_steps^-1/2": 4.0 * n_steps ** -0.5},
        "version": __version__,
    }
    return ExperimentResult(records, metadata, aborts)


def run_moments(
    d: int,
    sigma_grid: Sequence[float],
    seed: int,
    n_steps: int = 0,
    replicas: int = 0,
    eval_factor: int = 16,
    cutoff: int = 6,
    workers: int = 1,
    box_half_width: float = BOX_HALF_WIDTH,
) -> ExperimentResult:
    """First- and second-moment quadrature table, optionally next to the
    Monte Carlo mean of S_sigma over replicas.

    Per sigma: E S_sigma by adaptive quadrature (with the d = 3 closed form
    and the leading-order I1 ratio as diagnostics); with replicas > 0, also
    the cross-replica mean and its distance from quadrature in standard
    errors."""
    require(d >= 2, "dimension must be >= 2")
    sigmas = sorted((float(s) for s in sigma_grid), reverse=True)
    require(len(sigmas) > 0, "sigma grid must be nonempty")
    records = []
    for sigma in sigmas:
        es = expected_S_quadrature(sigma, d)
        diag = {
            "leading_term": 4.0 / (d - 2) * sigma * sigma if d >= 3 else math.nan,
            "i1": second_moment_I1_quadrature(sigma, d),
        }
        if d == 3:
            diag["closed_form_d3"] = expected_S_closed_form_d3(sigma)
        if d >= 3:
            diag["i1_ratio"] = 8.0 * diag["i1"] / (4.0 / (d - 2) * sigma * sigma) ** 2
        records.append(
            ExperimentRecord("moment-quadrature", -1, sigma, es, "n/a", diag, seed)
        )
    aborts = []
    if replicas > 0:
        require(n_steps >= 1, "n_steps must be >= 1 when replicas > 0")
        require(
            min(sigmas) >= 4.0 * n_steps ** -0.5,
            f"sigma_min must be >= 4*n_steps^-1/2 = {4.0 * n_steps ** -0.5:g}",
        )
        args = [
            (d, n_steps, sigmas, seed, r, eval_factor, cutoff, box_half_width)
            for r in range(replicas)
        ]
        outcomes = _map_replicas(_strong_law_replica, args, workers)
        s_values = {s: [] for s in sigmas}
        for outcome in outcomes:
            if outcome[0] == "abort":
                aborts.append((outcome[1], outcome[2]))
                continue
            _, replica, rows = outcome
            for sigma, s_val, bound, m_eval, rs in rows:
                s_values[sigma].append(s_val)
                records.append(
                    ExperimentRecord(
                        "moments", replica, sigma, s_val, "n/a",
                        {"error_bound": bound, "m_eval": m_eval}, rs,
                    )
                )
        for sigma in sigmas:
            vals = np.array(s_values[sigma])
            if len(vals) == 0:
                continue
            mean = float(np.mean(vals))
            stderr = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan
            ref = expected_S_quadrature(sigma, d)
            z = (mean - ref) / stderr if stderr and stderr > 0 else math.nan
            records.append(
                ExperimentRecord(
                    "moments-mean", -1, sigma, mean, ref,
                    {"stderr": stderr, "z_score": z, "n_replicas": len(vals)},
                    seed,
                )
            )
    metadata = {
        "experiment": "moments",
        "dim": d,
        "sigma_grid": sigmas,
        "n_steps": n_steps,
        "replicas": replicas,
        "master_seed": seed,
        "eval_factor": eval_factor,
        "cutoff": cutoff,
        "version": __version__,
    }
    return ExperimentResult(records, metadata, aborts)


# ---------------------------------------------------------------------------
# Wiener-sausage box counts


def _sausage_replica(args):
    (d, n_steps, n_lo, n_hi, master_seed, replica, box_l) = args
    rs = mix_seed(master_seed, replica)
    path = sample_brownian(d, n_steps, 1.0, rs)
    try:
        norm = normalize_box(path.positions[1:], box_l)
    except ValueError as exc:
        return ("abort", replica, str(exc))
    mu = WeightedMeasure(norm, np.full(n_steps, 1.0 / n_steps))
    hist = bin_measure(mu, n_hi)
    counts = [box_count(hist, n) for n in range(n_lo, n_hi + 1)]
    return ("ok", replica, rs, counts)


def run_sausage_counts(
    d: int,
    n_steps: int,
    n_range: tuple[int, int],
    replicas: int,
    seed: int,
    workers: int = 1,
    box_half_width: float = BOX_HALF_WIDTH,
) -> ExperimentResult:
    """Box-count law N_n * 4^-n (d >= 3; the extra factor n for d = 2) for
    Brownian traces, per replica and level, plus per-replica band ratios."""
    n_lo, n_hi = n_range
    require(0 <= n_lo <= n_hi, "need 0 <= n_lo <= n_hi")
    require(
        2 ** n_hi <= math.sqrt(n_steps),
        f"2^n_max must be <= n_steps^1/2 = {math.sqrt(n_steps):g}",
    )
    args = [(d, n_steps, n_lo, n_hi, seed, r, box_half_width) for r in range(replicas)]
    outcomes = _map_replicas(_sausage_replica, args, workers)
    records, aborts = [], []
    for outcome in outcomes:
        if outcome[0] == "abort":
            aborts.append((outcome[1], outcome[2]))
            continue
        _, replica, rs, counts = outcome
        values = []
        for n, cnt in zip(range(n_lo, n_hi + 1), counts):
            val = cnt * 4.0 ** (-n) * (n if d == 2 else 1.0)
            values.append(val)
            records.append(
                ExperimentRecord(
                    "sausage", replica, n, val, "n/a", {"box_count": cnt}, rs
                )
            )
        band = max(values) / min(values) if min(values) > 0 else math.inf
        records.append(
            ExperimentRecord(
                "sausage-band",
                replica,
                n_hi,
                band,
                "n/a",
                {"n_lo": n_lo, "n_hi": n_hi},
                rs,
            )
        )
    metadata = {
        "experiment": "sausage",
        "dim": d,
        "n_steps": n_steps,
        "n_range": [n_lo, n_hi],
        "replicas": replicas,
        "master_seed": seed,
        "box_half_width": box_half_width,
        "guards": {"2^n_max <= n_steps^1/2": math.sqrt(n_steps)},
        "version": __version__,
    }
    return ExperimentResult(records, metadata, aborts)


# ---------------------------------------------------------------------------
# Capacity equivalence across kernels


def _cap_equiv_replica(args):
    (d, n_steps, alphas, n_max, plain, master_seed, replica, box_l) = args
    rs = mix_seed(master_seed, replica)
    path = sample_brownian(d, n_steps, 1.0, rs)
    try:
        norm = normalize_box(path.positions[1:], box_l)
    except ValueError as exc:
        return ("abort", replica, str(exc))
    mu = WeightedMeasure(norm, np.full(n_steps, 1.0 / n_steps))
    hist = bin_measure(mu, n_max)
    eps_res = math.sqrt(d) * 2.0 ** (-n_max)
    rows = []
    for alpha in alphas:
        base = riesz_kernel(alpha)
        if d == 2 and not plain:
            base = log_adjusted(base)
        k = smooth(base, eps_res, d)
        energy = dyadic_energy(hist, k).value
        ref = reference_square_capacity(k, n_max)
        ratio = (1.0 / energy) / ref.value if energy > 0 and ref.value > 0 else math.nan
        rows.append((alpha, ratio, energy, ref.value, bool(ref.diagnostics["diverging"])))
    return ("ok", replica, rs, rows)


def run_capacity_equivalence(
    d: int,
    n_steps: int,
    replicas: int,
    seed: int,
    alphas: Sequence[float] = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75),
    n_max: int = 12,
    plain: bool = False,
    workers: int = 1,
    box_half_width: float = BOX_HALF_WIDTH,
) -> ExperimentResult:
    """Ratios R(f) of the occupation-energy capacity route to the reference
    square capacity across a kernel grid, per replica.

    Capacity equivalence manifests as R(f) confined to a band across all
    kernels simultaneously for each fixed path; `plain=True` in d = 2 drops
    the log adjustment (negative control: the band blows up)."""
    require(d >= 2, "dimension must be >= 2")
    alphas = [float(a) for a in alphas]
    require(
        all(abs(a - 2.0) >= 0.1 for a in alphas),
        "kernel grid must avoid the critical alpha=2 by >= 0.1",
    )
    require(
        2.0 ** n_max <= box_half_width * 2 * math.sqrt(n_steps),
        f"2^n_max must be <= 2L*n_steps^1/2 = {box_half_width * 2 * math.sqrt(n_steps):g}",
    )
    args = [
        (d, n_steps, alphas, n_max, plain, seed, r, box_half_width)
        for r in range(replicas)
    ]
    outcomes = _map_replicas(_cap_equiv_replica, args, workers)
    records, aborts = [], []
    for outcome in outcomes:
        if outcome[0] == "abort":
            aborts.append((outcome[1], outcome[2]))
            continue
        _, replica, rs, rows = outcome
        ratios = []
        for alpha, ratio, energy, ref_value, diverging in rows:
            ratios.append(ratio)
            records.append(
                ExperimentRecord(
                    "cap-equiv",
                    replica,
                    alpha,
                    ratio,
                    "n/a",
                    {
                        "energy": energy,
                        "ref_capacity": ref_value,
                        "ref_diverging": diverging,
                    },
                    rs,
                )
            )
        finite = [r for r in ratios if math.isfinite(r) and r > 0]
        spread = max(finite) / min(finite) if finite else math.inf
        records.append(
            ExperimentRecord(
                "cap-equiv-spread",
                replica,
                0,
                spread,
                "n/a",
                {"n_kernels": len(finite), "plain": plain},
                rs,
            )
        )
    metadata = {
        "experiment": "cap-equiv",
        "dim": d,
        "n_steps": n_steps,
        "alphas": alphas,
        "n_max": n_max,
        "plain": plain,
        "replicas": replicas,
        "master_seed": seed,
        "box_half_width": box_half_width,
        "guards": {"|alpha - 2| >= 0.1": 0.1},
        "version": __version__,
    }
    return ExperimentResult(records, metadata, aborts)


# ---------------------------------------------------------------------------
# Zero-set laws


def _zero_set_replica(args):
    (n_steps, deltas, n_lo, n_hi, energy_alphas, master_seed, replica) = args
    rs = mix_seed(master_seed, replica)
    path = sample_brownian(1, n_steps, 1.0, rs)
    zs = zero_set(path)
    lt = local_time_profile(path)
    ell1 = float(lt.values[-1])
    degenerate = len(zs.zero_times) <= 1 or ell1 == 0.0

    levy_rows = []
    for delta in deltas:
        count = excursion_count(zs, delta)
        levy_rows.append((delta, math.sqrt(delta) * count, count))

    count_rows = []
    if len(zs.zero_times) > 0:
        ztimes = np.minimum(zs.zero_times, np.nextafter(1.0, 0.0))
        zmeasure = WeightedMeasure(ztimes[:, None], np.full(len(ztimes), 1.0 / len(ztimes)))
        zhist = bin_measure(zmeasure, n_hi)
        for n in range(n_lo, n_hi + 1):
            cnt = box_count(zhist, n)
            count_rows.append((n, 2.0 ** (-n / 2.0) * cnt, cnt))
    else:
        count_rows = [(n, 0.0, 0) for n in range(n_lo, n_hi + 1)]

    from .energy import quadratic_variation

    qv_rows = []
    for delta in deltas:
        l_delta = quadratic_variation(lt, delta)
        qv_rows.append((delta, l_delta))

    energy_rows = []
    if not degenerate:
        lmeasure = local_time_measure(lt).normalized()
        n_max_lt = min(int(math.floor(math.log2(n_steps / 10.0))), 40)
        lhist = bin_measure(lmeasure, n_max_lt)
        eps_res = 2.0 ** (1 - n_max_lt)
        for alpha in energy_alphas:
            k = smooth(riesz_kernel(alpha), eps_res, 1)
            energy = dyadic_energy(lhist, k).value
            ref_sum = 1.0 / reference_cantor_capacity(k, n_max_lt).value
            energy_rows.append((alpha, energy, ref_sum))
    return ("ok", replica, rs, ell1, degenerate, levy_rows, count_rows, qv_rows, energy_rows)


def run_zero_set(
    n_steps: int,
    delta_grid: Sequence[float],
    n_range: tuple[int, int],
    replicas: int,
    seed: int,
    energy_alphas: Sequence[float] = (0.25,),
    workers: int = 1,
) -> ExperimentResult:
    """Zero-set laws per replica: excursion counts against Levy's limit,
    dyadic counts of the zero set against local time, quadratic variation
    scaling, and the local-time energy against the Cantor reference sum."""
    deltas = sorted((float(x) for x in delta_grid), reverse=True)
    require(len(deltas) > 0, "delta grid must be nonempty")
    require(
        min(deltas) >= 10.0 / n_steps,
        f"delta_min must be >= 10/n_steps = {10.0 / n_steps:g}",
    )
    n_lo, n_hi = n_range
    require(0 <= n_lo <= n_hi, "need 0 <= n_lo <= n_hi")
    require(
        2.0 ** (-n_hi) >= 10.0 / n_steps,
        f"2^-n_max must be >= 10/n_steps = {10.0 / n_steps:g}",
    )
    args = [
        (n_steps, deltas, n_lo, n_hi, tuple(energy_alphas), seed, r)
        for r in range(replicas)
    ]
    outcomes = _map_replicas(_zero_set_replica, args, workers)
    records, aborts = [], []
    for outcome in outcomes:
        (_, replica, rs, ell1, degenerate, levy_rows, count_rows, qv_rows, energy_rows) = outcome
        flag = {"degenerate": degenerate, "ell1": ell1}
        for delta, est, cnt in levy_rows:
            ref = math.sqrt(2.0 / math.pi) * ell1
            records.append(
                ExperimentRecord(
                    "zero-set-levy", replica, delta, est, ref,
                    dict(flag, count=cnt), rs,
                )
            )
        for n, est, cnt in count_rows:
            records.append(
                ExperimentRecord(
                    "zero-set-counts", replica, n, est, ell1,
                    dict(flag, count=cnt), rs,
                )
            )
        log_pts = [
            (math.log(delta), math.log(lv)) for delta, lv in qv_rows if lv > 0
        ]
        for delta, lv in qv_rows:
            records.append(
                ExperimentRecord(
                    "zero-set-qv", replica, delta, lv / math.sqrt(delta), "n/a",
                    dict(flag, l_delta=lv), rs,
                )
            )
        if len(log_pts) >= 2:
            xs, ys = zip(*log_pts)
            slope = float(np.polyfit(xs, ys, 1)[0])
        else:
            slope = math.nan
        records.append(
            ExperimentRecord(
                "zero-set-qv-slope", replica, 0, slope, 0.5, dict(flag), rs
            )
        )
        for alpha, energy, ref_sum in energy_rows:
            records.append(
                ExperimentRecord(
                    "zero-set-energy", replica, alpha, energy, ref_sum,
                    dict(flag, ratio=energy / ref_sum if ref_sum > 0 else math.nan), rs,
                )
            )
        if degenerate and not energy_rows:
            records.append(
                ExperimentRecord(
                    "zero-set-energy", replica, float(energy_alphas[0]) if energy_alphas else 0.0,
                    math.nan, "n/a", dict(flag, note="empty zero set"), rs,
                )
            )
    metadata = {
        "experiment": "zero-set",
        "n_steps": n_steps,
        "delta_grid": deltas,
        "n_range": [n_lo, n_hi],
        "replicas": replicas,
        "energy_alphas": list(energy_alphas),
        "master_seed": seed,
        "guards": {"delta_min >= 10/n_steps": 10.0 / n_steps},
        "version": __version__,
    }
    return ExperimentResult(records, metadata, aborts)


# ---------------------------------------------------------------------------
# epsilon-approach probabilities of a stable process toward a Brownian trace


def _build_cloud_grid(cloud: np.ndarray, side: float):
    """Dense raveled-grid CSR over the cloud plus a Chebyshev-2 dilated
    occupancy mask (the cheap gate for distance queries)."""
    lo = cloud.min(axis=0) - 1e-9
    hi = cloud.max(axis=0) + 1e-9
    dims = np.maximum(np.ceil((hi - lo) / side).astype(np.int64) + 1, 1)
    d = cloud.shape[1]
    cells = np.floor((cloud - lo) / side).astype(np.int64)
    keys = cells[:, 0].copy()
    for k in range(1, d):
        keys = keys * dims[k] + cells[:, k]
    total = int(np.prod(dims))
    order = np.argsort(keys, kind="stable")
    keys_sorted = keys[order]
    counts = np.bincount(keys_sorted, minlength=total)
    start = np.zeros(total + 1, dtype=np.int64)
    np.cumsum(counts, out=start[1:])
    occ = counts.reshape(dims) > 0
    mask = occ.copy()
    for axis in range(d):
        shifted = mask.copy()
        for off in (1, 2):
            pad = np.zeros_like(mask)
            sl_src = [slice(None)] * d
            sl_dst = [slice(None)] * d
            sl_src[axis] = slice(off, None)
            sl_dst[axis] = slice(None, -off)
            pad[tuple(sl_dst)] = mask[tuple(sl_src)]
            shifted |= pad
            pad = np.zeros_like(mask)
            sl_src[axis] = slice(None, -off)
            sl_dst[axis] = slice(off, None)
            pad[tuple(sl_dst)] = mask[tuple(sl_src)]
            shifted |= pad
        mask = shifted
    return (
        np.ascontiguousarray(cloud),
        start,
        np.ascontiguousarray(order.astype(np.int64)),
        mask.reshape(-1).astype(np.uint8),
        dims,
        lo,
        (lo + hi) / 2.0,
    )


def run_approach(
    d: int,
    alpha: float,
    n_steps: int,
    eps_grid: Sequence[float],
    x_start: Sequence[float],
    mc_paths: int,
    seed: int,
    dt: Optional[float] = None,
    t_max: Optional[float] = None,
    escape_factor: float = 20.0,
    segment_steps: int = 1024,
    hist_n_max: Optional[int] = None,
    box_half_width: float = BOX_HALF_WIDTH,
    workers: int = 1,
) -> ExperimentResult:
    """Monte Carlo epsilon-approach probabilities of a stable process
    toward one conditioning Brownian trace, next to the capacity-route
    bracket, with the fitted exponent of log P against log eps.

    At alpha = d-2 the logarithmic normalization is emitted instead of an
    exponent target (not resolvable at desk scale).  Escape radius is
    escape_factor times the trace diameter; paths still inside at t_max
    are reported as censored, never silently dropped.
    """
    require(d >= 3, "dimension must be >= 3")
    require(0 < alpha <= 2, "need 0 < alpha <= 2")
    require(alpha <= d - 2, "need alpha <= d-2 (transient approach regime)")
    regime = "log" if alpha == d - 2 else "power"
    eps = sorted((float(e) for e in eps_grid), reverse=True)
    require(len(eps) > 0, "eps grid must be nonempty")
    eps_min, eps_max = eps[-1], eps[0]
    if dt is None:
        dt = (eps_min / 4.0) ** alpha
    resolution = dt ** (1.0 / alpha)
    require(
        eps_min >= 4.0 * resolution,
        f"eps_min must be >= 4*dt^(1/alpha) = {4.0 * resolution:g}",
    )
    require(
        eps_min >= 4.0 * n_steps ** -0.5,
        f"eps_min must be >= 4*n_steps^-1/2 = {4.0 * n_steps ** -0.5:g}",
    )

    rs_b = mix_seed(seed, 0)
    bpath = sample_brownian(d, n_steps, 1.0, rs_b)
    cloud = bpath.positions
    x0 = np.asarray(x_start, dtype=float)
    require(len(x0) == d, "x_start must have length d")
    diffs = cloud - x0
    dist0 = np.sqrt(np.einsum("ij,ij->i", diffs, diffs))
    m_dist = float(dist0.min())
    big_m = float(dist0.max())
    require(m_dist >= 0.1, f"x_start must be at distance >= 0.1 from the trace, got {m_dist:g}")

    extent = cloud.max(axis=0) - cloud.min(axis=0)
    diam = float(np.sqrt(np.dot(extent, extent)))
    r_escape = escape_factor * diam
    if t_max is None:
        t_max = 4.0 * r_escape ** alpha
    max_steps = int(math.ceil(t_max / dt))

    side = eps_max / 2.0
    (cpts, cell_start, cell_idx, mask, dims, lo, center) = _build_cloud_grid(cloud, side)
    escape2 = r_escape * r_escape
    eps_min2 = eps_min * eps_min
    eps_max2 = eps_max * eps_max

    min_dist = np.empty(mc_paths)
    outcome = np.empty(mc_paths, dtype=np.int8)  # 0 censored, 1 escaped, 2 resolved-hit
    for i in range(mc_paths):
        rng = np.random.default_rng(mix_seed(seed, 1 + i))
        pos = x0.copy()
        min_d2 = eps_max2 * 4.0 + 1.0
        steps = 0
        status = 0
        while status == 0 and steps < max_steps:
            seg = min(segment_steps, max_steps - steps)
            incs = stable_increments(alpha, d, seg, dt, rng)
            min_d2, used, status = approach_walk_segment(
                pos, incs, cpts, cell_start, cell_idx, mask, dims, lo, side,
                center, escape2, eps_min2, eps_max2, min_d2,
            )
            steps += used
        min_dist[i] = math.sqrt(min_d2)
        outcome[i] = status

    # capacity route on the occupation histogram, in raw units
    scale = 2.0 * box_half_width
    try:
        norm = normalize_box(bpath.positions[1:], box_half_width)
    except ValueError as exc:
        return ExperimentResult(
            [], {"experiment": "approach", "master_seed": seed, "version": __version__},
            [(0, str(exc))],
        )
    mu = WeightedMeasure(norm, np.full(n_steps, 1.0 / n_steps))
    if hist_n_max is None:
        hist_n_max = min(int(math.floor(math.log2(scale * math.sqrt(n_steps)))), 62 // d)
    hist = bin_measure(mu, hist_n_max)
    kern = stable_potential_kernel(alpha, d)
    k_lo = kern.eval(big_m)
    k_hi = kern.eval(m_dist)

    records = []
    log_pts = []
    for e in eps:
        phat = float(np.mean(min_dist < e))
        censored = float(np.mean((outcome == 0) & (min_dist >= e)))
        bracket = sausage_capacity(hist, kern, e, scale)
        p_lo = hitting_probability_bracket(bracket.lower, k_lo, k_hi)
        p_hi = hitting_probability_bracket(bracket.upper, k_lo, k_hi)
        lower_p, upper_p = p_lo.lower, p_hi.upper
        if regime == "power":
            normalized = phat / (alpha * (d - alpha - 2) * e ** (d - alpha - 2))
        else:
            normalized = phat * math.log(1.0 / e) / (d - 2)
        if phat > 0:
            log_pts.append((math.log(e), math.log(phat)))
        records.append(
            ExperimentRecord(
                "approach",
                0,
                e,
                phat,
                "n/a",
                {
                    "normalized": normalized,
                    "bracket_lower": lower_p,
                    "bracket_upper": upper_p,
                    "contained": bool(lower_p <= phat <= upper_p),
                    "censored_fraction": censored,
                    "cap_lower": bracket.lower.value,
                    "cap_upper": bracket.upper.value,
                },
                rs_b,
            )
        )
    if len(log_pts) >= 2:
        xs, ys = zip(*log_pts)
        slope = float(np.polyfit(xs, ys, 1)[0])
    else:
        slope = math.nan
    records.append(
        ExperimentRecord(
            "approach-exponent",
            -1,
            0,
            slope,
            float(d - alpha - 2) if regime == "power" else "n/a",
            {
                "regime": regime,
                "n_points": len(log_pts),
                "escaped_fraction": float(np.mean(outcome == 1)),
                "censored_fraction": float(np.mean(outcome == 0)),
            },
            seed,
        )
    )
    metadata = {
        "experiment": "approach",
        "dim": d,
        "alpha": alpha,
        "n_steps": n_steps,
        "eps_grid": eps,
        "x_start": [float(v) for v in x0],
        "mc_paths": mc_paths,
        "master_seed": seed,
        "dt": dt,
        "t_max": t_max,
        "escape_radius": r_escape,
        "escape_factor": escape_factor,
        "hist_n_max": hist_n_max,
        "m_dist": m_dist,
        "M_dist": big_m,
        "regime": regime,
        "guards": {
            "eps_min >= 4*dt^(1/alpha)": 4.0 * resolution,
            "x_start distance >= 0.1": 0.1,
        },
        "version": __version__,
    }
    return ExperimentResult(records, metadata, [])
