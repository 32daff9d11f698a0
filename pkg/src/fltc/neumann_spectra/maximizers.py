"""Near-maximizers of eigenfunctions and the common-maximizer test."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ..grid import Grid
from .domains import DomainSpec
from .eigenpairs import (EigenPair, bessel_order, eigenpairs, eval_gradient, eval_matrix,
                         eval_pair, multiplicity_classes, radial_factor)

MAX_TOL = 0.02
ROTATIONS = 8
MAX_SEEDS = 16


def _check_tol(tol: float):
    if not 0 < tol <= 0.1:
        raise ValueError("tol must lie in (0, 0.1]")


def _ascend(pair: EigenPair, domain: DomainSpec, seed: np.ndarray) -> tuple:
    """Maximize |phi| from a seed, staying in the closed domain."""
    sign = 1.0 if eval_pair(pair, domain, seed, check=False) >= 0 else -1.0
    if domain.shape == "rectangle":
        bounds = [(0.0, b) for b in domain.betas]

        def f(x):
            x = np.clip(x, 0.0, domain.betas)
            return -sign * eval_pair(pair, domain, x, check=False), \
                -sign * eval_gradient(pair, domain, x, check=False)

        res = minimize(f, seed, jac=True, method="L-BFGS-B", bounds=bounds)
        x = np.clip(res.x, 0.0, domain.betas)
        return x, abs(eval_pair(pair, domain, x, check=False))
    inner = domain.r0 if domain.shape == "annulus" else 0.0
    r0, th0 = domain.polar(seed)
    if domain.shape == "sector":
        th0 = float(np.clip(th0, 0.0, domain.opening))
        tb = (0.0, domain.opening)
    else:
        tb = (None, None)

    def cart(z):
        return np.array([z[0] * math.cos(z[1]), z[0] * math.sin(z[1])])

    def f(z):
        p = cart(z)
        g = eval_gradient(pair, domain, p, check=False)
        dr = g[0] * math.cos(z[1]) + g[1] * math.sin(z[1])
        dth = z[0] * (-g[0] * math.sin(z[1]) + g[1] * math.cos(z[1]))
        return -sign * eval_pair(pair, domain, p, check=False), -sign * np.array([dr, dth])

    res = minimize(f, np.array([float(r0), float(th0)]), jac=True, method="L-BFGS-B",
                   bounds=[(inner, domain.R), tb])
    z = np.array([min(max(res.x[0], inner), domain.R), res.x[1]])
    x = cart(z)
    return x, abs(eval_pair(pair, domain, x, check=False))


@dataclass(frozen=True)
class MaximizerSet:
    """Grid points and refined points where |phi| >= (1 - tol) * max|phi|."""

    points: np.ndarray
    mask: np.ndarray
    refined: np.ndarray
    max_value: float
    tol: float


def maximizer_set(pair: EigenPair, domain: DomainSpec, grid: Grid | None = None,
                  tol: float = MAX_TOL, values: np.ndarray | None = None) -> MaximizerSet:
    _check_tol(tol)
    grid = grid if grid is not None else domain.grid()
    vals = np.abs(values if values is not None else eval_matrix([pair], domain, grid.points, False)[0])
    gmax = float(vals.max())
    if pair.is_constant or gmax == 0.0:
        return MaximizerSet(grid.points.copy(), np.ones(grid.size, bool), grid.points[:0].copy(),
                            gmax, tol)
    seeds = np.argsort(vals)[::-1][:MAX_SEEDS]
    refined, best = [], gmax
    for s in seeds:
        x, v = _ascend(pair, domain, grid.points[s])
        refined.append((x, v))
        best = max(best, v)
    cut = (1 - tol) * best
    mask = vals >= cut
    extra = [x for x, v in refined if v >= cut]
    extra = _dedupe(np.array(extra).reshape(-1, domain.dim), grid)
    points = np.concatenate([grid.points[mask], extra])
    return MaximizerSet(points, mask, extra, best, tol)


def _dedupe(points: np.ndarray, grid: Grid) -> np.ndarray:
    scale = max(s for s in grid.spacing if s > 0) * 1e-6
    keep = []
    for p in points:
        if all(np.linalg.norm(p - q) > scale for q in keep):
            keep.append(p)
    return np.array(keep).reshape(-1, grid.dim)


def locate_maximizers(pair: EigenPair, domain: DomainSpec, grid: Grid | None = None,
                      tol: float = MAX_TOL) -> np.ndarray:
    """Every grid point with |phi| >= (1 - tol) max|phi|, followed by refined maxima.

    The max is refined by bounded gradient ascent from the best grid
    points; symmetry orbits are kept, not collapsed.
    """
    return maximizer_set(pair, domain, grid, tol).points


def radial_law_radius(domain: DomainSpec, pair: EigenPair) -> float | None:
    """Radius of the maximizing circle for disk and sector families of order >= 1."""
    if domain.shape not in ("disk", "sector") or pair.zero is None or pair.angular_order == 0:
        return None
    from .eigenpairs import _zeros_upto
    nu = bessel_order(domain, pair.angular_order)
    first = _zeros_upto(domain, nu, pair.zero)[0]
    return first / pair.zero * domain.R


@dataclass
class CommonMaximizerReport:
    exists: bool
    candidates: np.ndarray
    witness: tuple | None
    witness_position: int | None
    witness_pair: tuple | None
    per_basis_exists: bool
    rotated_exists: bool
    radial_law: list = field(default_factory=list)
    evidence: str = ""

    def to_dict(self) -> dict:
        return {"exists": self.exists, "evidence": self.evidence,
                "candidates": self.candidates.tolist(),
                "witness": list(self.witness) if self.witness else None,
                "witness_pair": [list(w) for w in self.witness_pair] if self.witness_pair else None,
                "per_basis_exists": self.per_basis_exists, "rotated_exists": self.rotated_exists,
                "radial_law": self.radial_law}


def _class_band(domain: DomainSpec, pair: EigenPair, grid: Grid, tol: float) -> np.ndarray:
    """Points where some rotation of a two-dimensional class is near-maximal."""
    r, _ = domain.polar(grid.points)
    inner = domain.r0 if domain.shape == "annulus" else 0.0
    fine = np.linspace(inner, domain.R, 4001)
    fmax = float(np.max(np.abs(radial_factor(domain, pair, fine))))
    return np.abs(radial_factor(domain, pair, r)) >= (1 - tol) * fmax


def _intersect(masks, labels):
    """Running intersection; first label that empties it and the first disjoint pair."""
    running = np.ones_like(masks[0])
    witness = None
    for i, m in enumerate(masks):
        nxt = running & m
        if not nxt.any():
            witness = i
            break
        running = nxt
    disjoint = None
    for i in range(len(masks)):
        for j in range(i):
            if not (masks[i] & masks[j]).any():
                disjoint = (labels[j], labels[i])
                break
        if disjoint:
            break
    return running, witness, disjoint


def common_maximizer_check(domain: DomainSpec, count: int, tol: float = MAX_TOL,
                           grid: Grid | None = None) -> CommonMaximizerReport:
    """Intersect the near-maximizer sets of the first ``count`` eigenpairs.

    Rectangles use their max-normalized cosines.  On polar domains every
    two-dimensional eigenspace contributes the band where some rotation of
    it is near-maximal, which is basis independent; per-basis and
    ``ROTATIONS`` rotated combinations are reported alongside.
    """
    _check_tol(tol)
    if count < 1:
        raise ValueError("count must be >= 1")
    grid = grid if grid is not None else domain.grid()
    pairs = eigenpairs(domain, count)
    if count == 1:
        pairs = pairs[:1]
    values = eval_matrix(pairs, domain, grid.points, check=False)
    sets = [maximizer_set(p, domain, grid, tol, values[i]) for i, p in enumerate(pairs)]
    basis_masks = [s.mask for s in sets]
    labels = [p.index for p in pairs]
    running, w_basis, disjoint = _intersect(basis_masks, labels)
    per_basis_exists = w_basis is None

    invariant_masks, rotated_masks, inv_labels = [], [], []
    for cls in multiplicity_classes(pairs):
        group = [pairs[i] for i in cls]
        if domain.is_polar and len(group) == 2 and not group[0].is_constant:
            invariant_masks.append(_class_band(domain, group[0], grid, tol))
            inv_labels.append(group[0].index)
            for a in range(ROTATIONS):
                alpha = math.pi * a / ROTATIONS
                v = math.cos(alpha) * values[cls[0]] + math.sin(alpha) * values[cls[1]]
                rotated_masks.append(np.abs(v) >= (1 - tol) * np.abs(v).max())
        else:
            for i in cls:
                invariant_masks.append(basis_masks[i])
                inv_labels.append(pairs[i].index)
                rotated_masks.append(basis_masks[i])
    rotated_exists = _intersect(rotated_masks, list(range(len(rotated_masks))))[1] is None

    if domain.is_polar:
        final, w_inv, disjoint_inv = _intersect(invariant_masks, inv_labels)
        exists = w_inv is None
        witness = inv_labels[w_inv] if w_inv is not None else None
        disjoint = disjoint_inv or disjoint
        evidence = "rotation-invariant maximizer bands of each eigenspace"
        candidates = grid.points[final] if exists else grid.points[:0]
    else:
        exists = per_basis_exists
        witness = labels[w_basis] if w_basis is not None else None
        evidence = "max-normalized cosine basis"
        candidates = grid.points[running] if exists else grid.points[:0]
    position = next((i for i, p in enumerate(pairs) if p.index == witness), None)

    radial = []
    seen = set()
    spacing = grid.spacing[0]
    for p, s in zip(pairs, sets):
        target = radial_law_radius(domain, p)
        key = (p.angular_order, p.zero)
        if target is None or key in seen:
            continue
        seen.add(key)
        r_found = domain.polar(s.refined)[0] if len(s.refined) else domain.polar(s.points)[0]
        dev = float(np.max(np.abs(r_found - target)))
        radial.append({"index": list(p.index), "target_radius": target,
                       "max_deviation": dev, "grid_cells": dev / spacing})
    return CommonMaximizerReport(exists, candidates, witness, position,
                                 disjoint if not exists else None, per_basis_exists,
                                 rotated_exists, radial, evidence)
