"""Integer-order Bessel functions, derivatives and the zero tables used by
the closed-form Neumann spectra of circular domains.

Function values come from ``scipy.special`` (Cephes/AMOS); everything
built on top of them (derivative recurrences, zero bracketing, refinement
and table validation) lives here.  Validated range: ``m <= 200``,
``0 <= x <= 1e4``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .errors import ConvergenceError, DomainError

SCAN_STEP = math.pi / 8
BISECT_TOL = 1e-13
MAX_SCAN_X = 1e5


def _check_order(m) -> int:
    if isinstance(m, (bool, np.bool_)) or int(m) != m or m < 0:
        raise DomainError(f"order must be a non-negative integer, got {m!r}")
    return int(m)


def _as_float(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _ret(arr, scalar):
    return float(arr) if scalar else arr


def bessel_j(m, x):
    """Bessel function of the first kind J_m(x) for x >= 0."""
    m = _check_order(m)
    arr, scalar = _as_float(x)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("bessel_j is defined here for x >= 0 only")
    return _ret(special.jv(m, arr), scalar)


def bessel_y(m, x):
    """Bessel function of the second kind Y_m(x).

    Y_m is singular at the origin: ``x == 0`` returns ``-inf`` and
    negative arguments raise :class:`DomainError`.
    """
    m = _check_order(m)
    arr, scalar = _as_float(x)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("bessel_y requires x > 0")
    out = np.where(arr == 0, -np.inf, special.yv(m, np.where(arr == 0, 1.0, arr)))
    return _ret(out, scalar)


def _deriv(base: Callable, m: int, x):
    if m == 0:
        return -base(1, x)
    return 0.5 * (base(m - 1, x) - base(m + 1, x))


def bessel_j_prime(m, x):
    """J_m'(x) via f_m' = (f_{m-1} - f_{m+1})/2 and J_0' = -J_1."""
    m = _check_order(m)
    return _deriv(bessel_j, m, x)


def bessel_y_prime(m, x):
    """Y_m'(x); ``+inf`` at the origin, where every Y_m' blows up upwards."""
    m = _check_order(m)
    arr, scalar = _as_float(x)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("bessel_y_prime requires x > 0")
    safe = np.where(arr == 0, 1.0, arr)
    out = np.where(arr == 0, np.inf, _deriv(bessel_y, m, safe))
    return _ret(out, scalar)


def _second_derivative(f, fp, m, x):
    # Bessel's equation: x^2 f'' + x f' + (x^2 - m^2) f = 0
    return -fp / x - (1.0 - (m * m) / (x * x)) * f


@dataclass(frozen=True)
class BesselZeroTable:
    """Ascending positive zeros of ``J_m'`` or of the annulus cross-product."""

    kind: str
    order: int
    zeros: tuple[float, ...]
    ratio: float | None = None
    residuals: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("jprime", "annulus_cross"):
            raise ValueError(f"unknown zero-table kind {self.kind!r}")
        if self.kind == "annulus_cross" and self.ratio is None:
            raise ValueError("annulus_cross tables need a ratio")
        z = np.asarray(self.zeros)
        if z.size and (np.any(z <= 0) or np.any(np.diff(z) <= 0)):
            raise ValueError("zeros must be positive and strictly increasing")

    def __len__(self):
        return len(self.zeros)

    def __getitem__(self, k):
        return self.zeros[k]

    def __iter__(self):
        return iter(self.zeros)

    def target(self, x):
        if self.kind == "jprime":
            return bessel_j_prime(self.order, x)
        return annulus_cross(self.order, self.ratio, x)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "m": self.order, "ratio": self.ratio, "zeros": list(self.zeros)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "BesselZeroTable":
        return cls(kind=data["kind"], order=int(data["m"]), zeros=tuple(data["zeros"]),
                   ratio=data.get("ratio"))

    @classmethod
    def from_json(cls, text: str) -> "BesselZeroTable":
        return cls.from_dict(json.loads(text))


def annulus_cross(m, ratio, x):
    """xi -> J_m'(ratio*xi) Y_m'(xi) - J_m'(xi) Y_m'(ratio*xi)."""
    x = np.asarray(x, dtype=float)
    rx = ratio * x
    out = np.asarray(bessel_j_prime(m, rx) * bessel_y_prime(m, x)
                     - bessel_j_prime(m, x) * bessel_y_prime(m, rx))
    return float(out) if out.ndim == 0 else out


def _annulus_cross_prime(m, ratio, x):
    rx = ratio * x
    jr, jpr = bessel_j(m, rx), bessel_j_prime(m, rx)
    jx, jpx = bessel_j(m, x), bessel_j_prime(m, x)
    yr, ypr = bessel_y(m, rx), bessel_y_prime(m, rx)
    yx, ypx = bessel_y(m, x), bessel_y_prime(m, x)
    jppr = _second_derivative(jr, jpr, m, rx)
    jppx = _second_derivative(jx, jpx, m, x)
    yppr = _second_derivative(yr, ypr, m, rx)
    yppx = _second_derivative(yx, ypx, m, x)
    return ratio * jppr * ypx + jpr * yppx - jppx * ypr - ratio * jpx * yppr


def _jprime_prime(m, x):
    return _second_derivative(bessel_j(m, x), bessel_j_prime(m, x), m, x)


def _refine(f, fprime, lo, hi):
    flo = f(lo)
    if flo == 0.0:
        return lo
    fhi = f(hi)
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise ConvergenceError("no sign change in bracket", bracket=(lo, hi))
    for _ in range(200):
        if hi - lo <= BISECT_TOL * max(1.0, abs(lo)):
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    else:
        raise ConvergenceError("bisection did not reach tolerance", bracket=(lo, hi))
    z = 0.5 * (lo + hi)
    d = fprime(z)
    if d != 0 and np.isfinite(d):
        z_new = z - f(z) / d
        if lo - BISECT_TOL <= z_new <= hi + BISECT_TOL and abs(f(z_new)) <= abs(f(z)):
            z = z_new
    return z


def _scan_zeros(f, fprime, start, count, step=SCAN_STEP):
    zeros, residuals = [], []
    x0 = start
    f0 = f(x0)
    while len(zeros) < count:
        x1 = x0 + step
        if x1 > MAX_SCAN_X:
            raise ConvergenceError(f"only {len(zeros)} of {count} zeros below {MAX_SCAN_X}",
                                   bracket=(start, x1))
        f1 = f(x1)
        if f1 == 0.0:
            zeros.append(x1)
            residuals.append(0.0)
            x0, f0 = x1, f(x1 + 1e-3 * step)
            continue
        if f0 == 0.0:
            f0 = f(x0 + 1e-3 * step)
        if np.sign(f0) != np.sign(f1):
            z = _refine(f, fprime, x0, x1)
            res = abs(f(z))
            scale = max(1.0, abs(fprime(z)) * z)
            if res >= 1e-12 * scale:
                raise ConvergenceError(f"zero residual {res:.3e} too large", bracket=(x0, x1))
            zeros.append(z)
            residuals.append(res)
        x0, f0 = x1, f1
    return tuple(zeros), tuple(residuals)


def jprime_zeros(m, count) -> BesselZeroTable:
    """First ``count`` positive zeros of J_m'.

    For ``m = 0`` these are the positive zeros of J_1.  Every zero of
    J_m' exceeds ``m``, which is where the scan starts.
    """
    m = _check_order(m)
    if count < 1:
        raise ValueError("count must be >= 1")
    start = max(float(m), 0.5) if m else 0.5
    zeros, res = _scan_zeros(lambda x: bessel_j_prime(m, x), lambda x: _jprime_prime(m, x),
                             start, count)
    return BesselZeroTable("jprime", m, zeros, residuals=res)


def annulus_cross_zeros(m, ratio, count) -> BesselZeroTable:
    """First ``count`` positive zeros of :func:`annulus_cross`.

    The scan starts at ``max(m, 1e-3)``: the angular term bounds the
    Rayleigh quotient from below by m^2, so no zero lies under m.
    """
    m = _check_order(m)
    if not 0.0 < ratio < 1.0:
        raise DomainError("ratio must lie in (0, 1)")
    if count < 1:
        raise ValueError("count must be >= 1")
    start = max(float(m), 1e-3)
    zeros, res = _scan_zeros(lambda x: annulus_cross(m, ratio, x),
                             lambda x: _annulus_cross_prime(m, ratio, x), start, count)
    return BesselZeroTable("annulus_cross", m, zeros, ratio=float(ratio), residuals=res)
