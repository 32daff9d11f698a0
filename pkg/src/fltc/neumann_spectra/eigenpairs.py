"""Closed-form Neumann eigenpairs with exhaustive ordered enumeration."""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .. import special_functions as sf
from .domains import DomainSpec

TIE_RTOL = 1e-10
MAX_COUNT = 2000

_zero_cache: dict = {}
_zero_lock = threading.Lock()


@dataclass(frozen=True)
class EigenPair:
    """One Neumann eigenpair.

    ``index`` is ``(j_1, ..., j_d)`` on a rectangle, ``(m, k, parity)`` on
    a disk or annulus (parity 0 for m = 0, 1 for cosine, 2 for sine) and
    ``(m, k)`` on a sector.  The all-zero index is the constant function.
    ``zero`` is the Bessel-type zero fixing the radial factor and
    ``scale`` multiplies the raw closed form.
    """

    eigenvalue: float
    index: tuple
    l2_norm_sq: float
    normalization: str
    scale: float = 1.0
    zero: float | None = None

    @property
    def is_constant(self) -> bool:
        return all(i == 0 for i in self.index)

    @property
    def angular_order(self) -> int:
        return self.index[0]

    def to_dict(self) -> dict:
        return {"lambda": self.eigenvalue, "index": list(self.index),
                "l2_norm_sq": self.l2_norm_sq, "normalization": self.normalization}


def default_normalization(domain: DomainSpec) -> str:
    return "max" if domain.shape == "rectangle" else "orthonormal"


def bessel_order(domain: DomainSpec, m: int) -> int:
    return domain.q * m if domain.shape == "sector" else m


def _zeros_upto(domain: DomainSpec, nu: int, xmax: float) -> tuple:
    """All table zeros <= xmax for Bessel order ``nu`` (cached, grown by doubling)."""
    ratio = domain.ratio
    key = (nu, ratio)
    with _zero_lock:
        table = _zero_cache.get(key, ())
    while not table or table[-1] <= xmax:
        n = max(8, 2 * len(table))
        if ratio is None:
            table = sf.jprime_zeros(nu, n).zeros
        else:
            table = sf.annulus_cross_zeros(nu, ratio, n).zeros
        with _zero_lock:
            _zero_cache[key] = table
    return tuple(z for z in table if z <= xmax)


def _rect_raw_norm(betas, index) -> float:
    return float(np.prod([b if j == 0 else 0.5 * b for b, j in zip(betas, index)]))


def _polar_raw_norm(domain: DomainSpec, m: int, z: float) -> float:
    R = domain.R
    nu = bessel_order(domain, m)
    if domain.shape == "annulus":
        rho = domain.ratio
        A, B = sf.bessel_y_prime(nu, z), sf.bessel_j_prime(nu, z)

        def Z(x):
            return sf.bessel_j(nu, x) * A - B * sf.bessel_y(nu, x)

        radial = (0.5 * R ** 2 * (1 - nu ** 2 / z ** 2) * Z(z) ** 2
                  - 0.5 * domain.r0 ** 2 * (1 - nu ** 2 / (rho * z) ** 2) * Z(rho * z) ** 2)
    else:
        radial = 0.5 * R ** 2 * (1 - nu ** 2 / z ** 2) * sf.bessel_j(nu, z) ** 2
    if domain.shape == "sector":
        angular = domain.opening if m == 0 else 0.5 * domain.opening
    else:
        angular = 2 * math.pi if m == 0 else math.pi
    return float(radial * angular)


def _make(domain, lam, index, raw_norm, normalization, zero=None) -> EigenPair:
    if normalization == "orthonormal":
        return EigenPair(float(lam), tuple(index), 1.0, normalization, 1.0 / math.sqrt(raw_norm), zero)
    return EigenPair(float(lam), tuple(index), float(raw_norm), normalization, 1.0, zero)


def _enumerate(domain: DomainSpec, cutoff: float, normalization: str) -> list:
    """Every eigenpair with eigenvalue <= cutoff, in index order."""
    out = []
    if domain.shape == "rectangle":
        ranges = [range(int(math.floor(b * math.sqrt(cutoff) / math.pi)) + 1) for b in domain.betas]
        inv = [1.0 / b ** 2 for b in domain.betas]
        for idx in itertools.product(*ranges):
            lam = math.pi ** 2 * sum(j * j * w for j, w in zip(idx, inv))
            if lam <= cutoff:
                out.append(_make(domain, lam, idx, _rect_raw_norm(domain.betas, idx), normalization))
        return out
    R = domain.R
    const_norm = domain.volume
    const_index = (0, 0) if domain.shape == "sector" else (0, 0, 0)
    out.append(_make(domain, 0.0, const_index, const_norm, normalization))
    xmax = R * math.sqrt(cutoff)
    m = 0
    # every zero of order nu exceeds nu, so families with nu > xmax are empty
    while bessel_order(domain, m) <= xmax:
        nu = bessel_order(domain, m)
        for k, z in enumerate(_zeros_upto(domain, nu, xmax), start=1):
            lam = (z / R) ** 2
            norm = _polar_raw_norm(domain, m, z)
            if domain.shape == "sector":
                out.append(_make(domain, lam, (m, k), norm, normalization, z))
            elif m == 0:
                out.append(_make(domain, lam, (0, k, 0), norm, normalization, z))
            else:
                out.append(_make(domain, lam, (m, k, 1), norm, normalization, z))
                out.append(_make(domain, lam, (m, k, 2), norm, normalization, z))
        m += 1
    return out


def _initial_cutoff(domain: DomainSpec, count: int) -> float:
    # Weyl: N(lam) ~ |E| lam^(d/2) / ((4 pi)^(d/2) Gamma(d/2 + 1))
    d = domain.dim
    c = domain.volume / ((4 * math.pi) ** (d / 2) * math.gamma(d / 2 + 1))
    return 1.5 * (count / c) ** (2 / d) + 1.0


@lru_cache(maxsize=128)
def _spectrum(domain: DomainSpec, count: int, normalization: str) -> tuple:
    cutoff = _initial_cutoff(domain, count)
    while True:
        pairs = sorted(_enumerate(domain, cutoff, normalization), key=lambda p: p.eigenvalue)
        # everything below the cutoff is present, so a tie class ending
        # strictly below it is complete
        if len(pairs) >= count and pairs[count - 1].eigenvalue * (1 + 10 * TIE_RTOL) < cutoff:
            last = pairs[count - 1].eigenvalue
            n = count
            while n < len(pairs) and same_eigenvalue(pairs[n].eigenvalue, last):
                n += 1
            return tuple(pairs[:n])
        cutoff *= 2.0


def same_eigenvalue(a: float, b: float) -> bool:
    return abs(a - b) <= TIE_RTOL * max(1.0, abs(a), abs(b))


def eigenpairs(domain: DomainSpec, count: int, normalization: str | None = None,
               limit: int = MAX_COUNT) -> list:
    """The ``count`` smallest eigenpairs, sorted by eigenvalue.

    If ``count`` splits a multiplicity class, the class is completed, so
    the result can be longer than ``count``.
    """
    if int(count) != count or count < 1:
        raise ValueError("count must be a positive integer")
    if count > limit:
        raise ValueError(f"count must be <= {limit}")
    normalization = normalization or default_normalization(domain)
    if normalization not in ("orthonormal", "max"):
        raise ValueError(f"unknown normalization {normalization!r}")
    if normalization == "max" and domain.shape != "rectangle":
        raise ValueError("max normalization needs a common maximizer; only rectangles have one")
    return list(_spectrum(domain, int(count), normalization))


def eigenpairs_below(domain: DomainSpec, cutoff: float, normalization: str | None = None) -> list:
    """All eigenpairs with eigenvalue <= cutoff, sorted."""
    normalization = normalization or default_normalization(domain)
    return sorted(_enumerate(domain, cutoff, normalization), key=lambda p: p.eigenvalue)


def multiplicity_classes(pairs) -> list:
    """Group consecutive pairs with equal eigenvalues; returns lists of positions."""
    groups = []
    for i, p in enumerate(pairs):
        if groups and same_eigenvalue(pairs[groups[-1][0]].eigenvalue, p.eigenvalue):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


# ---- evaluation -------------------------------------------------------------

def radial_factor(domain: DomainSpec, pair: EigenPair, r, derivative: bool = False):
    """Raw radial factor of a polar eigenfunction, or its r-derivative."""
    r = np.asarray(r, dtype=float)
    if pair.zero is None:
        return np.zeros_like(r) if derivative else np.ones_like(r)
    nu = bessel_order(domain, pair.angular_order)
    z, R = pair.zero, domain.R
    x = np.clip(z * r / R, 0.0, None)
    if domain.shape == "annulus":
        A, B = sf.bessel_y_prime(nu, z), sf.bessel_j_prime(nu, z)
        if derivative:
            return (z / R) * (sf.bessel_j_prime(nu, x) * A - B * sf.bessel_y_prime(nu, x))
        return sf.bessel_j(nu, x) * A - B * sf.bessel_y(nu, x)
    if derivative:
        return (z / R) * sf.bessel_j_prime(nu, x)
    return sf.bessel_j(nu, x)


def _angular(domain: DomainSpec, pair: EigenPair, theta):
    m = pair.angular_order
    if domain.shape == "sector":
        nu = domain.q * m
        return np.cos(nu * theta), -nu * np.sin(nu * theta)
    parity = pair.index[2]
    if parity == 0:
        return np.ones_like(theta), np.zeros_like(theta)
    if parity == 1:
        return np.cos(m * theta), -m * np.sin(m * theta)
    return np.sin(m * theta), m * np.cos(m * theta)


def _points(domain: DomainSpec, point, check: bool):
    p = np.asarray(point, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if check:
        domain.require_inside(p)
    return p, single


def eval_pair(pair: EigenPair, domain: DomainSpec, point, check: bool = True):
    """Value of the eigenfunction at one point (d,) or many points (N, d)."""
    p, single = _points(domain, point, check)
    if domain.shape == "rectangle":
        b = np.asarray(domain.betas)
        j = np.asarray(pair.index, dtype=float)
        vals = pair.scale * np.prod(np.cos(math.pi * j * p / b), axis=1)
    else:
        r, theta = domain.polar(p)
        vals = pair.scale * radial_factor(domain, pair, r) * _angular(domain, pair, theta)[0]
    return float(vals[0]) if single else vals


def eval_gradient(pair: EigenPair, domain: DomainSpec, point, check: bool = True):
    """Cartesian gradient, shape (d,) or (N, d); polar forms use the chart rule."""
    p, single = _points(domain, point, check)
    if domain.shape == "rectangle":
        b = np.asarray(domain.betas)
        k = math.pi * np.asarray(pair.index, dtype=float) / b
        c = np.cos(k * p)
        s = -k * np.sin(k * p)
        grads = np.empty_like(p)
        for a in range(p.shape[1]):
            others = np.prod(np.delete(c, a, axis=1), axis=1) if p.shape[1] > 1 else 1.0
            grads[:, a] = s[:, a] * others
        grads *= pair.scale
    else:
        r, theta = domain.polar(p)
        f = radial_factor(domain, pair, r)
        fp = radial_factor(domain, pair, r, derivative=True)
        g, gp = _angular(domain, pair, theta)
        safe_r = np.where(r > 0, r, 1.0)
        ct, st = np.cos(theta), np.sin(theta)
        gx = fp * g * ct - f * gp / safe_r * st
        gy = fp * g * st + f * gp / safe_r * ct
        grads = pair.scale * np.stack([gx, gy], axis=1)
        origin = r == 0
        if np.any(origin):
            grads[origin] = _origin_gradient(domain, pair)
    return grads[0] if single else grads


def _origin_gradient(domain: DomainSpec, pair: EigenPair) -> np.ndarray:
    # only order-one Bessel factors have a nonzero slope at the centre: J_1(x) ~ x/2
    nu = bessel_order(domain, pair.angular_order)
    if nu != 1 or pair.zero is None:
        return np.zeros(2)
    slope = pair.scale * 0.5 * pair.zero / domain.R
    if domain.shape == "sector" or pair.index[2] == 1:
        return np.array([slope, 0.0])
    return np.array([0.0, slope])


def eval_matrix(pairs, domain: DomainSpec, points, check: bool = True) -> np.ndarray:
    """Values of many eigenfunctions at many points, shape (J, N)."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if check:
        domain.require_inside(p)
    out = np.empty((len(pairs), p.shape[0]))
    if domain.shape == "rectangle":
        b = np.asarray(domain.betas)
        cache = {}
        for i, pair in enumerate(pairs):
            row = np.full(p.shape[0], pair.scale)
            for a, j in enumerate(pair.index):
                key = (a, j)
                if key not in cache:
                    cache[key] = np.cos(math.pi * j * p[:, a] / b[a])
                row = row * cache[key]
            out[i] = row
        return out
    r, theta = domain.polar(p)
    radial = {}
    for i, pair in enumerate(pairs):
        key = (pair.angular_order, pair.zero)
        if key not in radial:
            radial[key] = radial_factor(domain, pair, r)
        out[i] = pair.scale * radial[key] * _angular(domain, pair, theta)[0]
    return out
