"""Finite sample grids carrying points, a chart and quadrature weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def trapezoid_weights(axis: np.ndarray) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    if axis.size == 1:
        return np.ones(1)
    d = np.diff(axis)
    w = np.zeros_like(axis)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    """Tensor grid over a domain's natural chart.

    ``points`` are Cartesian, shape (G, d), flattened row-major over
    ``axes``.  ``weights`` are positive trapezoid weights (with the polar
    Jacobian for polar charts), so ``weights @ f(points)`` approximates
    the integral of f.
    """

    points: np.ndarray
    weights: np.ndarray
    axes: tuple
    chart: str = "cartesian"

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def spacing(self) -> tuple:
        return tuple(float(a[1] - a[0]) if len(a) > 1 else 0.0 for a in self.axes)

    def __len__(self):
        return self.size

    def index_of(self, point, tol: float = 1e-9) -> int:
        point = np.atleast_1d(np.asarray(point, dtype=float))
        d = np.linalg.norm(self.points - point, axis=1)
        i = int(np.argmin(d))
        if d[i] > tol * max(1.0, float(np.max(np.abs(self.points)))):
            raise KeyError(f"{point.tolist()} is not a grid point")
        return i

    def same_as(self, other: "Grid") -> bool:
        return other is self or (
            self.points.shape == other.points.shape and np.array_equal(self.points, other.points)
        )

    def to_dict(self) -> dict:
        return {"chart": self.chart, "axes": [np.asarray(a).tolist() for a in self.axes],
                "points": self.points.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Grid":
        return cls(points=np.asarray(data["points"], dtype=float),
                   weights=np.asarray(data["weights"], dtype=float),
                   axes=tuple(np.asarray(a, dtype=float) for a in data["axes"]),
                   chart=data.get("chart", "cartesian"))

    @classmethod
    def cartesian(cls, axes) -> "Grid":
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=1)
        w = trapezoid_weights(axes[0])
        for a in axes[1:]:
            w = np.multiply.outer(w, trapezoid_weights(a))
        return cls(points=points, weights=np.ravel(w), axes=axes, chart="cartesian")

    @classmethod
    def uniform(cls, betas, n) -> "Grid":
        """Uniform grid on [0, b1] x ... x [0, bd] with n points per axis."""
        betas = tuple(float(b) for b in np.atleast_1d(betas))
        ns = (n,) * len(betas) if np.ndim(n) == 0 else tuple(n)
        return cls.cartesian([np.linspace(0.0, b, k) for b, k in zip(betas, ns)])

    @classmethod
    def polar(cls, radii, angles, periodic: bool) -> "Grid":
        radii = np.asarray(radii, dtype=float)
        angles = np.asarray(angles, dtype=float)
        rr, tt = np.meshgrid(radii, angles, indexing="ij")
        points = np.stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()], axis=1)
        wr = trapezoid_weights(radii) * radii
        if periodic:
            wt = np.full(angles.size, 2 * np.pi / angles.size)
        else:
            wt = trapezoid_weights(angles)
        w = np.multiply.outer(wr, wt).ravel()
        return cls(points=points, weights=w, axes=(radii, angles), chart="polar")
