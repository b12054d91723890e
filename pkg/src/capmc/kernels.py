"""Decreasing kernel functions of distance and their derived forms.

A kernel is a weakly decreasing function f : [0, inf) -> [0, inf] used to
weight point pairs in an energy sum.  Supported families:

* ``riesz``            f(r) = r^-alpha
* ``stable-potential`` f(r) = c(alpha) r^(alpha - d), the potential density
                       of the symmetric alpha-stable process normalized so
                       that E exp(i lam . X_t) = exp(-|lam|^alpha t)
* ``log-adjusted``     f(r) = base(r) * max(ln(1/r), 0)
* ``smoothed``         base(r) flattened below eps at its spherical average
* ``table-defined``    piecewise-constant decreasing table (includes
                       constant kernels)

Kernels are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln


class KernelError(ValueError):
    """Invalid kernel parameters."""


class KernelSpecError(KernelError):
    """Malformed kernel specification string."""


class NonCapacitableKernelError(KernelError):
    """The spherical average of the kernel diverges (whole-space capacity 0)."""


@dataclass(frozen=True)
class Kernel:
    family: str
    params: dict
    value_at_zero: float
    _eval_positive: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    # (amplitude, exponent) when f(r) = A * r^-p globally, else None.
    power_law: Optional[Tuple[float, float]] = field(default=None, repr=False)

    def eval(self, r):
        """Evaluate the kernel at distance(s) r >= 0 (scalar or array)."""
        arr = np.asarray(r, dtype=float)
        if np.any(arr < 0):
            raise KernelError("kernel argument must be nonnegative")
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        out = np.empty_like(arr)
        pos = arr > 0
        out[pos] = self._eval_positive(arr[pos])
        out[~pos] = self.value_at_zero
        return float(out[0]) if scalar else out

    def describe(self) -> str:
        """Spec string of the kernel, parseable by parse_kernel_spec."""
        p = self.params
        if self.family == "riesz":
            return f"riesz:alpha={p['alpha']:g}"
        if self.family == "stable-potential":
            return f"stable:alpha={p['alpha']:g},d={p['d']}"
        if self.family == "log-adjusted":
            return f"logadj:{p['base'].describe()}"
        if self.family == "smoothed":
            return f"smooth:eps={p['eps']:g}:{p['base'].describe()}"
        return f"table:{len(p['radii'])} knots"


def riesz_kernel(alpha: float) -> Kernel:
    """Riesz kernel f(r) = r^-alpha."""
    if not alpha > 0:
        raise KernelError(f"riesz kernel needs alpha > 0, got {alpha}")
    a = float(alpha)
    return Kernel(
        family="riesz",
        params={"alpha": a},
        value_at_zero=math.inf,
        _eval_positive=lambda r: r ** (-a),
        power_law=(1.0, a),
    )


def stable_potential_constant(alpha: float, d: int) -> float:
    """c(alpha) = Gamma((d-alpha)/2) / (2^alpha pi^(d/2) Gamma(alpha/2))."""
    return math.exp(
        gammaln((d - alpha) / 2.0)
        - alpha * math.log(2.0)
        - (d / 2.0) * math.log(math.pi)
        - gammaln(alpha / 2.0)
    )


def stable_potential_kernel(alpha: float, d: int) -> Kernel:
    """Potential density c(alpha) r^(alpha-d) of the symmetric alpha-stable
    process in R^d (transient regime: alpha < d, d >= 3)."""
    if not (0 < alpha <= 2):
        raise KernelError(f"stable potential needs 0 < alpha <= 2, got {alpha}")
    if d < 3:
        raise KernelError(f"stable potential needs ambient dimension >= 3, got {d}")
    if not alpha < d:
        raise KernelError(f"stable potential needs alpha < d, got alpha={alpha}, d={d}")
    c = stable_potential_constant(alpha, d)
    p = float(d - alpha)
    return Kernel(
        family="stable-potential",
        params={"alpha": float(alpha), "d": int(d), "c": c},
        value_at_zero=math.inf,
        _eval_positive=lambda r: c * r ** (-p),
        power_law=(c, p),
    )


def log_adjusted(base: Kernel) -> Kernel:
    """f(r) = base(r) * max(ln(1/r), 0).

    The clamp at r = 1 keeps the kernel nonnegative and decreasing; only the
    coarsest dyadic increment is affected for sets of diameter <= sqrt(2).
    """
    base_eval = base._eval_positive
    vaz = 0.0 if base.value_at_zero == 0.0 else math.inf

    def _eval(r):
        return base_eval(r) * np.maximum(np.log(1.0 / r), 0.0)

    return Kernel(
        family="log-adjusted",
        params={"base": base},
        value_at_zero=vaz,
        _eval_positive=_eval,
    )


def table_kernel(radii, values) -> Kernel:
    """Piecewise-constant decreasing kernel: f(r) = values[i] on
    [radii[i], radii[i+1]), constant beyond the last knot."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if radii.ndim != 1 or radii.shape != values.shape or len(radii) == 0:
        raise KernelError("table kernel needs matching 1-d radii and values")
    if radii[0] != 0.0 or np.any(np.diff(radii) <= 0):
        raise KernelError("table radii must start at 0 and increase")
    if np.any(values < 0) or np.any(np.diff(values) > 0):
        raise KernelError("table values must be nonnegative and non-increasing")

    def _eval(r):
        idx = np.searchsorted(radii, r, side="right") - 1
        return values[idx]

    return Kernel(
        family="table-defined",
        params={"radii": radii, "values": values},
        value_at_zero=float(values[0]),
        _eval_positive=_eval,
    )


def constant_kernel(c: float) -> Kernel:
    """Kernel identically equal to c >= 0."""
    if c < 0:
        raise KernelError(f"constant kernel needs c >= 0, got {c}")
    return table_kernel([0.0], [float(c)])


def smoothed_value(base: Kernel, eps: float, d: int) -> float:
    """Spherical average of `base` over the ball of radius eps in R^d:

        fbar(eps) = eps^-d * d * integral_0^eps f(s) s^(d-1) ds

    Closed form for power-law families, adaptive quadrature otherwise
    (relative accuracy 1e-10).  Raises NonCapacitableKernelError when the
    integral diverges.
    """
    if not eps > 0:
        raise KernelError(f"smoothing radius must be positive, got {eps}")
    if d < 1:
        raise KernelError(f"ambient dimension must be >= 1, got {d}")
    if base.power_law is not None:
        amp, p = base.power_law
        if p >= d:
            raise NonCapacitableKernelError(
                f"spherical average of r^-{p:g} diverges in dimension {d}"
            )
        return amp * d / (d - p) * eps ** (-p)
    if math.isfinite(base.value_at_zero):
        # Bounded kernel: integrand f(s) s^(d-1) is bounded, plain quadrature.
        val, _ = quad(lambda s: base.eval(s) * s ** (d - 1), 0.0, eps,
                      epsabs=0.0, epsrel=1e-12, limit=200)
        return d * eps ** (-d) * val

    # Singular at 0: integrate over dyadic shells [eps 2^-k-1, eps 2^-k].
    # Shell masses of a convergent integral decay geometrically; a
    # non-vanishing tail ratio marks divergence.
    def shell(k: int) -> float:
        lo, hi = eps * 2.0 ** (-k - 1), eps * 2.0 ** (-k)
        val, _ = quad(lambda s: base.eval(s) * s ** (d - 1), lo, hi,
                      epsabs=0.0, epsrel=1e-12, limit=200)
        return val

    total = 0.0
    prev = math.inf
    ratio = math.inf
    tail = math.inf
    for k in range(400):
        term = shell(k)
        if not math.isfinite(term):
            raise NonCapacitableKernelError("spherical average integral diverges")
        total += term
        ratio = term / prev if prev > 0 else 0.0
        prev = term
        if term == 0.0:
            tail = 0.0
        elif k >= 1 and ratio < 0.999:
            tail = term * ratio / (1.0 - ratio)
        else:
            tail = math.inf
        if tail <= 1e-13 * total:
            break
    if not math.isfinite(tail) or ratio >= 0.999:
        raise NonCapacitableKernelError(
            f"spherical average integral does not converge (shell ratio {ratio:.6f})"
        )
    return d * eps ** (-d) * (total + tail)


def smooth(base: Kernel, eps: float, d: int) -> Kernel:
    """Kernel equal to `base` for r >= eps and flat at fbar(eps) below."""
    fbar = smoothed_value(base, eps, d)
    base_eval = base._eval_positive
    e = float(eps)

    def _eval(r):
        return np.where(r >= e, base_eval(np.maximum(r, e)), fbar)

    return Kernel(
        family="smoothed",
        params={"base": base, "eps": e, "d": int(d), "fbar": fbar},
        value_at_zero=fbar,
        _eval_positive=_eval,
    )


def dyadic_increment(k: Kernel, n: int) -> float:
    """f(2^-n) - f(2^(1-n)); +inf when f(2^-n) is infinite."""
    if n < 0:
        raise KernelError(f"dyadic level must be >= 0, got {n}")
    hi = k.eval(2.0 ** (-n))
    if math.isinf(hi):
        return math.inf
    return max(hi - k.eval(2.0 ** (1 - n)), 0.0)


def scaled_increment(k: Kernel, n: int, scale: float = 1.0) -> float:
    """f(scale * 2^-n) - f(scale * 2^(1-n)), the dyadic increment of the
    kernel on a box of physical side `scale` (scale = 1 reproduces
    dyadic_increment)."""
    if n < 0:
        raise KernelError(f"dyadic level must be >= 0, got {n}")
    hi = k.eval(scale * 2.0 ** (-n))
    if math.isinf(hi):
        return math.inf
    return max(hi - k.eval(scale * 2.0 ** (1 - n)), 0.0)


def _parse_params(token: str, spec: str) -> dict:
    out = {}
    for part in token.split(","):
        if "=" not in part:
            raise KernelSpecError(f"bad parameter token {part!r} in kernel spec {spec!r}")
        key, _, val = part.partition("=")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise KernelSpecError(
                f"non-numeric value {val!r} for {key!r} in kernel spec {spec!r}"
            ) from None
    return out


def parse_kernel_spec(spec: str, dim: Optional[int] = None) -> Kernel:
    """Parse a CLI kernel spec, left to right.

    Grammar: ``riesz:alpha=A`` | ``stable:alpha=A,d=D`` | ``logadj:<spec>``
    | ``smooth:eps=E:<spec>``.  `dim` supplies the ambient dimension for
    ``smooth`` averages.
    """
    head, sep, rest = spec.partition(":")
    head = head.strip()
    if head == "riesz":
        if not sep:
            raise KernelSpecError(f"missing parameters after 'riesz' in {spec!r}")
        params = _parse_params(rest, spec)
        if set(params) != {"alpha"}:
            raise KernelSpecError(f"riesz takes exactly alpha=..., got {rest!r}")
        return riesz_kernel(params["alpha"])
    if head == "stable":
        if not sep:
            raise KernelSpecError(f"missing parameters after 'stable' in {spec!r}")
        params = _parse_params(rest, spec)
        if set(params) != {"alpha", "d"}:
            raise KernelSpecError(f"stable takes alpha=...,d=..., got {rest!r}")
        return stable_potential_kernel(params["alpha"], int(params["d"]))
    if head == "logadj":
        if not sep:
            raise KernelSpecError(f"missing base kernel after 'logadj' in {spec!r}")
        return log_adjusted(parse_kernel_spec(rest, dim=dim))
    if head == "smooth":
        eps_token, sep2, base_spec = rest.partition(":")
        if not sep or not sep2:
            raise KernelSpecError(f"'smooth' needs eps=... and a base kernel in {spec!r}")
        params = _parse_params(eps_token, spec)
        if set(params) != {"eps"}:
            raise KernelSpecError(f"smooth takes eps=... before the base kernel, got {eps_token!r}")
        if dim is None:
            raise KernelSpecError(
                f"kernel spec {spec!r} needs an ambient dimension for 'smooth'"
            )
        return smooth(parse_kernel_spec(base_spec, dim=dim), params["eps"], dim)
    raise KernelSpecError(f"unknown kernel family {head!r} in spec {spec!r}")
