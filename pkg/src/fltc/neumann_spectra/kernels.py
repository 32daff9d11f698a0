"""Truncated heat-kernel and product-formula kernel sums with tail control."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import TailToleranceError
from ..grid import Grid
from .domains import DomainSpec
from .eigenpairs import (EigenPair, bessel_order, default_normalization, eigenpairs_below,
                         eval_matrix, multiplicity_classes, radial_factor)

TAIL_TOL = 1e-9
MAX_TERMS = 20000
RADIAL_SAMPLES = 2000


@dataclass(frozen=True)
class KernelSeries:
    """Truncated sum  sum_j w_j phi_j(x_1) ... phi_j(x_p)  with w_j = exp(-lam_j t)/|phi_j|^2.

    ``power`` is 2 for the heat kernel and 3 for the product-formula
    kernel.  ``tail_bound`` bounds the dropped part uniformly in the
    arguments (exact for rectangles, an estimate for polar domains).
    """

    domain: DomainSpec
    t: float
    power: int
    pairs: tuple
    weights: np.ndarray
    tail_bound: float

    @property
    def count(self) -> int:
        return len(self.pairs)

    def values(self, points, check: bool = True) -> np.ndarray:
        return eval_matrix(self.pairs, self.domain, points, check)

    def __call__(self, *args):
        if len(args) != self.power:
            raise TypeError(f"expected {self.power} arguments")
        arrays = [np.asarray(a, dtype=float) for a in args]
        single = all(a.ndim == 1 for a in arrays)
        vals = [self.values(np.atleast_2d(a)) for a in arrays]
        n = max(v.shape[1] for v in vals)
        vals = np.stack([np.broadcast_to(v, (v.shape[0], n)) for v in vals])
        # sorting the factors makes the product independent of argument order
        prod = np.prod(np.sort(vals, axis=0), axis=0)
        out = self.weights @ prod
        return float(out[0]) if single else out

    def matrix(self, xs, ys) -> np.ndarray:
        """Heat-kernel values for every pair (x_i, y_k); power 2 only."""
        if self.power != 2:
            raise ValueError("matrix() is defined for the heat kernel")
        a = self.values(xs)
        b = a if ys is xs else self.values(ys)
        return (a * self.weights[:, None]).T @ b


def _rect_axis_sum(beta: float, t: float, exponent: float) -> float:
    total, n = 0.0, 0
    while True:
        c = 1.0 if n == 0 else 0.5
        term = math.exp(-(math.pi * n / beta) ** 2 * t) * (beta * c) ** (-exponent)
        total += term
        if n > 0 and term < 1e-20 * total:
            return total
        n += 1


def _rect_terms(domain: DomainSpec, pairs, t: float, power: int, normalization: str):
    # term_j = exp(-lam t) M_j^p / |phi_j|^2 factorizes over the axes
    exponent = 1.0 if normalization == "max" else power / 2
    full = 1.0
    for b in domain.betas:
        full *= _rect_axis_sum(b, t, exponent)
    terms = np.empty(len(pairs))
    for i, p in enumerate(pairs):
        raw = float(np.prod([b if j == 0 else 0.5 * b for b, j in zip(domain.betas, p.index)]))
        terms[i] = math.exp(-p.eigenvalue * t) * raw ** (-exponent)
    return terms, full


@lru_cache(maxsize=4096)
def _radial_sup(domain: DomainSpec, m: int, zero: float | None) -> float:
    """Grid max of the raw radial factor plus a Lipschitz allowance."""
    if zero is None:
        return 1.0
    inner = domain.r0 if domain.shape == "annulus" else 0.0
    r = np.linspace(inner, domain.R, RADIAL_SAMPLES)
    probe = EigenPair(0.0, (m, 1, 1), 1.0, "raw", 1.0, zero)
    f = np.abs(radial_factor(domain, probe, r))
    step = r[1] - r[0]
    if domain.shape == "annulus":
        slope = 1.5 * float(np.max(np.abs(radial_factor(domain, probe, r, derivative=True))))
    else:
        # |J_nu'| <= 1
        slope = zero / domain.R
    return float(f.max() + 0.5 * slope * step)


def sup_bound(domain: DomainSpec, pair: EigenPair) -> float:
    if domain.shape == "rectangle":
        return pair.scale
    if pair.zero is None:
        return pair.scale
    return pair.scale * _radial_sup(domain, pair.angular_order, pair.zero)


def _polar_terms(domain: DomainSpec, pairs, t: float, power: int):
    terms = np.array([math.exp(-p.eigenvalue * t) * sup_bound(domain, p) ** power / p.l2_norm_sq
                      for p in pairs])
    return terms


def _cutoff_for(domain: DomainSpec, t: float, tol: float) -> float:
    return max(50.0, (math.log(1.0 / tol) + 60.0) / t)


def kernel_series(domain: DomainSpec, t: float, power: int = 2, count: int | None = None,
                  tail_tol: float = TAIL_TOL, normalization: str | None = None) -> KernelSeries:
    """Build the truncated series; ``count=None`` picks the shortest adequate one."""
    if not t > 0:
        raise ValueError("t must be positive")
    normalization = normalization or default_normalization(domain)
    return _series(domain, float(t), int(power), count, float(tail_tol), normalization)


@lru_cache(maxsize=256)
def _series(domain, t, power, count, tail_tol, normalization) -> KernelSeries:
    cutoff = _cutoff_for(domain, t, tail_tol)
    if count is not None:
        cutoff = max(cutoff, 1.0)
    while True:
        pairs = eigenpairs_below(domain, cutoff, normalization)
        if len(pairs) > MAX_TERMS:
            raise TailToleranceError(
                f"t={t} needs more than {MAX_TERMS} terms for tail {tail_tol}", tail_bound=math.inf)
        if count is None or len(pairs) > count:
            break
        cutoff *= 2.0
    if domain.shape == "rectangle":
        terms, full = _rect_terms(domain, pairs, t, power, normalization)
        listed = float(np.sum(terms))
        rest = max(full - listed, 0.0) + 8 * np.finfo(float).eps * full
    else:
        terms = _polar_terms(domain, pairs, t, power)
        # remainder beyond the enumerated range: Weyl density times the largest weight ratio
        ratios = terms * np.exp(np.array([p.eigenvalue for p in pairs]) * t)
        top = float(np.max(ratios[-max(1, len(ratios) // 10):]))
        rest = top * 2 * domain.volume / (4 * math.pi) * math.exp(-cutoff * t) * (cutoff + 1 / t)
    tails = np.concatenate([np.cumsum(terms[::-1])[::-1][1:], [0.0]]) + rest
    classes = multiplicity_classes(pairs)
    ends = [c[-1] + 1 for c in classes]
    if count is None:
        n = next((e for e in ends if tails[e - 1] < tail_tol), None)
        if n is None:
            raise TailToleranceError("tail tolerance not reached", tail_bound=float(tails[-1]))
    else:
        n = next(e for e in ends if e >= count)
        if tails[n - 1] >= tail_tol:
            raise TailToleranceError(
                f"count={count} leaves tail {tails[n - 1]:.3e} >= {tail_tol:.1e} at t={t}",
                tail_bound=float(tails[n - 1]))
    chosen = tuple(pairs[:n])
    weights = np.array([math.exp(-p.eigenvalue * t) / p.l2_norm_sq for p in chosen])
    return KernelSeries(domain, t, power, chosen, weights, float(tails[n - 1]))


def heat_kernel(domain: DomainSpec, t: float, x, y, count: int | None = None,
                tail_tol: float = TAIL_TOL):
    """Neumann heat kernel p_t(x, y) for the generator Laplacian (rate exp(-lam t))."""
    return kernel_series(domain, t, 2, count, tail_tol)(x, y)


def kernel_q(domain: DomainSpec, t: float, x, y, xi, count: int | None = None,
             tail_tol: float = TAIL_TOL):
    """Product-formula kernel q_t(x, y, xi); rectangles use max-normalized cosines."""
    return kernel_series(domain, t, 3, count, tail_tol)(x, y, xi)


@dataclass(frozen=True)
class PositivityScan:
    min_value: float
    argmin: tuple
    argmin_index: tuple
    tail_bound: float
    count: int

    @property
    def certified_negative(self) -> bool:
        return self.min_value < -self.tail_bound

    def to_dict(self) -> dict:
        return {"min_value": self.min_value, "argmin": [list(map(float, p)) for p in self.argmin],
                "argmin_index": list(self.argmin_index), "tail_bound": self.tail_bound,
                "count": self.count, "certified_negative": self.certified_negative}


def positivity_scan(domain: DomainSpec, t: float, grid: Grid | None = None,
                    count: int | None = None, tail_tol: float = TAIL_TOL,
                    max_points: int = 41) -> PositivityScan:
    """Exact minimum of the truncated q_t over grid^3."""
    grid = grid if grid is not None else domain.grid(41 if domain.dim == 1 else 7)
    if grid.size > max_points:
        raise ValueError(f"grid has {grid.size} points; at most {max_points} fit grid^3 scanning")
    series = kernel_series(domain, t, 3, count, tail_tol)
    phi = series.values(grid.points)
    wphi = phi * series.weights[:, None]
    G = grid.size
    best, arg = math.inf, (0, 0, 0)
    for i in range(G):
        block = np.einsum("j,jy,jz->yz", wphi[:, i], phi, phi)
        k = int(np.argmin(block))
        if block.flat[k] < best:
            best, arg = float(block.flat[k]), (i, k // G, k % G)
    pts = tuple(tuple(grid.points[a]) for a in arg)
    return PositivityScan(best, pts, arg, series.tail_bound, series.count)
