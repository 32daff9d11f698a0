"""Model domains: rectangles, disks, circular sectors and annuli."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import PointOutsideDomainError
from ..grid import Grid

SHAPES = ("rectangle", "disk", "sector", "annulus")


@dataclass(frozen=True)
class DomainSpec:
    shape: str
    betas: tuple = ()
    R: float | None = None
    r0: float | None = None
    q: int | None = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.shape == "rectangle":
            if len(self.betas) < 1 or any(not b > 0 for b in self.betas):
                raise ValueError("rectangle side lengths must be positive")
            return
        if self.R is None or not self.R > 0:
            raise ValueError("radius must be positive")
        if self.shape == "annulus" and (self.r0 is None or not 0 < self.r0 < self.R):
            raise ValueError("annulus needs 0 < r0 < R")
        if self.shape == "sector" and (self.q is None or int(self.q) != self.q or self.q < 1):
            raise ValueError("sector opening pi/q needs a positive integer q")

    @classmethod
    def rectangle(cls, betas) -> "DomainSpec":
        return cls("rectangle", betas=tuple(float(b) for b in np.atleast_1d(betas)))

    @classmethod
    def disk(cls, R: float = 1.0) -> "DomainSpec":
        return cls("disk", R=float(R))

    @classmethod
    def sector(cls, q: int, R: float = 1.0) -> "DomainSpec":
        return cls("sector", R=float(R), q=int(q))

    @classmethod
    def annulus(cls, r0: float, R: float = 1.0) -> "DomainSpec":
        return cls("annulus", R=float(R), r0=float(r0))

    @classmethod
    def from_dict(cls, data: dict) -> "DomainSpec":
        shape = data["shape"]
        if shape == "rectangle":
            return cls.rectangle(data["beta"])
        if shape == "disk":
            return cls.disk(data.get("R", 1.0))
        if shape == "sector":
            return cls.sector(data["q"], data.get("R", 1.0))
        if shape == "annulus":
            return cls.annulus(data["r0"], data.get("R", 1.0))
        raise ValueError(f"unknown shape {shape!r}")

    def to_dict(self) -> dict:
        if self.shape == "rectangle":
            return {"shape": "rectangle", "beta": list(self.betas)}
        out = {"shape": self.shape, "R": self.R}
        if self.shape == "sector":
            out["q"] = self.q
        if self.shape == "annulus":
            out["r0"] = self.r0
        return out

    @property
    def dim(self) -> int:
        return len(self.betas) if self.shape == "rectangle" else 2

    @property
    def is_polar(self) -> bool:
        return self.shape != "rectangle"

    @property
    def ratio(self) -> float | None:
        return self.r0 / self.R if self.shape == "annulus" else None

    @property
    def opening(self) -> float:
        """Angular extent of a polar domain."""
        return math.pi / self.q if self.shape == "sector" else 2 * math.pi

    @property
    def volume(self) -> float:
        if self.shape == "rectangle":
            return float(np.prod(self.betas))
        inner = self.r0 if self.shape == "annulus" else 0.0
        return 0.5 * self.opening * (self.R ** 2 - inner ** 2)

    @property
    def corner(self) -> np.ndarray | None:
        return np.zeros(self.dim) if self.shape == "rectangle" else None

    def polar(self, points):
        """(r, theta) of Cartesian points; sector angles lie in (-pi, pi]."""
        p = np.asarray(points, dtype=float)
        r = np.hypot(p[..., 0], p[..., 1])
        theta = np.arctan2(p[..., 1], p[..., 0])
        if self.shape != "sector":
            theta = np.mod(theta, 2 * math.pi)
        return r, theta

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if p.shape[-1] != self.dim:
            raise PointOutsideDomainError(f"points must have {self.dim} coordinates")
        if self.shape == "rectangle":
            b = np.asarray(self.betas)
            return np.all((p >= -tol * b) & (p <= b * (1 + tol)), axis=-1)
        r, theta = self.polar(p)
        ok = r <= self.R * (1 + tol)
        if self.shape == "annulus":
            ok &= r >= self.r0 * (1 - tol)
        if self.shape == "sector":
            ang = (theta >= -tol) & (theta <= self.opening + tol)
            ok &= ang | (r <= tol * self.R)
        return ok

    def require_inside(self, points, tol: float = 1e-9) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        inside = self.contains(p, tol)
        if not np.all(inside):
            bad = np.atleast_2d(p)[~inside][0]
            raise PointOutsideDomainError(f"point {bad.tolist()} lies outside the {self.shape}")
        return p

    def grid(self, n: int = 41, n_theta: int | None = None) -> Grid:
        """Natural-chart tensor grid with boundary points included.

        Polar grids use ``n`` radii and ``n_theta`` angles (periodic for
        disk and annulus, endpoint-inclusive for the sector).
        """
        if self.shape == "rectangle":
            return Grid.uniform(self.betas, n)
        inner = self.r0 if self.shape == "annulus" else 0.0
        radii = np.linspace(inner, self.R, n)
        if self.shape == "sector":
            angles = np.linspace(0.0, self.opening, n_theta or n)
            return Grid.polar(radii, angles, periodic=False)
        k = n_theta or 128
        angles = np.arange(k) * (2 * math.pi / k)
        return Grid.polar(radii, angles, periodic=True)

    def sample_interior(self, n: int, rng: np.random.Generator, margin: float = 0.05) -> np.ndarray:
        if self.shape == "rectangle":
            b = np.asarray(self.betas)
            return b * (margin + (1 - 2 * margin) * rng.random((n, self.dim)))
        inner = self.r0 if self.shape == "annulus" else 0.0
        span = self.R - inner
        r = inner + span * (margin + (1 - 2 * margin) * rng.random(n))
        th = self.opening * (margin + (1 - 2 * margin) * rng.random(n))
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)

    def sample_boundary(self, n: int, rng: np.random.Generator):
        """Random boundary points away from corners, with outward unit normals."""
        if self.shape == "rectangle":
            b = np.asarray(self.betas)
            d = self.dim
            pts = b * (0.05 + 0.9 * rng.random((n, d)))
            normals = np.zeros((n, d))
            axis = rng.integers(0, d, n)
            side = rng.integers(0, 2, n)
            rows = np.arange(n)
            pts[rows, axis] = side * b[axis]
            normals[rows, axis] = np.where(side == 1, 1.0, -1.0)
            return pts, normals
        th = self.opening * (0.05 + 0.9 * rng.random(n))
        radial = np.stack([np.cos(th), np.sin(th)], axis=1)
        pts = self.R * radial
        normals = radial.copy()
        if self.shape == "annulus":
            inner = rng.random(n) < 0.5
            pts[inner] = self.r0 * radial[inner]
            normals[inner] = -radial[inner]
        if self.shape == "sector":
            edge = rng.random(n) < 0.5
            rr = self.R * (0.05 + 0.9 * rng.random(n))
            on_zero = rng.random(n) < 0.5
            ang = np.where(on_zero, 0.0, self.opening)
            pts[edge] = np.stack([rr * np.cos(ang), rr * np.sin(ang)], axis=1)[edge]
            nz = np.stack([np.sin(ang), -np.cos(ang)], axis=1)
            nz[~on_zero] *= -1
            normals[edge] = nz[edge]
        return pts, normals
