"""Uniform eigenfunction expansions of a function and of its gradient on a rectangle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import QuadratureError
from ..grid import Grid
from .domains import DomainSpec
from .eigenpairs import eigenpairs

DEFAULT_COUNTS = (50, 100, 200, 400)
NOISE = 1e-9


class EigenPolynomial:
    """Finite combination sum_j c_j omega_j of orthonormal rectangle eigenfunctions."""

    def __init__(self, domain: DomainSpec, coefficients: dict):
        if domain.shape != "rectangle":
            raise ValueError("expansions are implemented on rectangles")
        self.domain = domain
        self.coefficients = {tuple(k): float(v) for k, v in coefficients.items()}
        self._b = np.asarray(domain.betas)

    @classmethod
    def from_positions(cls, domain: DomainSpec, coefficients: dict) -> "EigenPolynomial":
        """Coefficients keyed by 1-based position in the sorted spectrum."""
        top = max(coefficients)
        pairs = eigenpairs(domain, top, "orthonormal")
        return cls(domain, {pairs[i - 1].index: c for i, c in coefficients.items()})

    @property
    def support_box(self):
        return [(0.0, b) for b in self.domain.betas]

    def _terms(self, x):
        for idx, c in self.coefficients.items():
            k = math.pi * np.asarray(idx, dtype=float) / self._b
            scale = c / math.sqrt(np.prod([b if j == 0 else b / 2 for b, j in zip(self._b, idx)]))
            yield k, scale

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.zeros(x.shape[0])
        for k, s in self._terms(x):
            out += s * np.prod(np.cos(k * x), axis=1)
        return out

    def gradient(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.zeros_like(x)
        for k, s in self._terms(x):
            c = np.cos(k * x)
            for a in range(x.shape[1]):
                rest = np.prod(np.delete(c, a, axis=1), axis=1)
                out[:, a] += -s * k[a] * np.sin(k[a] * x[:, a]) * rest
        return out


class SmoothBump:
    """h(x) = A exp(-1/(1 - s^2)) with s = |x - c|/rho, zero for s >= 1.

    The support must sit inside the rectangle, which makes h satisfy
    Neumann conditions of every order.
    """

    def __init__(self, domain: DomainSpec, center, radius: float, amplitude: float = 1.0):
        c = np.asarray(center, dtype=float)
        b = np.asarray(domain.betas)
        if np.any(c - radius <= 0) or np.any(c + radius >= b):
            raise ValueError("bump support must lie in the interior")
        self.domain, self.center, self.radius, self.amplitude = domain, c, float(radius), amplitude

    @property
    def support_box(self):
        return [(c - self.radius, c + self.radius) for c in self.center]

    def _s2(self, x):
        return np.sum((np.atleast_2d(x) - self.center) ** 2, axis=1) / self.radius ** 2

    def __call__(self, x) -> np.ndarray:
        s2 = self._s2(x)
        inside = s2 < 1
        out = np.zeros_like(s2)
        out[inside] = self.amplitude * np.exp(-1.0 / (1.0 - s2[inside]))
        return out

    def gradient(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        s2 = self._s2(x)
        inside = s2 < 1
        out = np.zeros_like(x)
        u = 1.0 - s2[inside]
        h = self.amplitude * np.exp(-1.0 / u)
        out[inside] = (h * (-2.0 / u ** 2))[:, None] * (x[inside] - self.center) / self.radius ** 2
        return out


def _coefficients(domain: DomainSpec, h, max_index, nodes: int) -> np.ndarray:
    """<h, omega_j> for all multi-indices up to ``max_index`` by tensor Gauss-Legendre."""
    axes, wts = [], []
    g, w = np.polynomial.legendre.leggauss(nodes)
    for lo, hi in h.support_box:
        axes.append(lo + (hi - lo) * (g + 1) / 2)
        wts.append(w * (hi - lo) / 2)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    H = h(pts).reshape([nodes] * len(axes))
    for w in wts:
        H = H * w.reshape([-1] + [1] * (H.ndim - 1)) if H.ndim else H
        H = np.moveaxis(H, 0, -1)
    # H now carries all weights with axes back in order
    out = H
    for a, (x, b) in enumerate(zip(axes, domain.betas)):
        n = max_index[a] + 1
        j = np.arange(n)
        norm = np.where(j == 0, 1.0 / math.sqrt(b), math.sqrt(2.0 / b))
        C = norm[:, None] * np.cos(math.pi * np.outer(j, x) / b)
        out = np.tensordot(C, out, axes=([1], [0]))
        out = np.moveaxis(out, 0, -1)
    return out


def expansion_coefficients(domain: DomainSpec, h, pairs, nodes: int = 128,
                           rtol: float = 1e-10) -> np.ndarray:
    """Inner products with the orthonormal pairs; raises if doubling the nodes moves them."""
    top = np.max(np.array([p.index for p in pairs]), axis=0)
    a = _coefficients(domain, h, top, nodes)
    b = _coefficients(domain, h, top, 2 * nodes)
    scale = max(1.0, float(np.max(np.abs(b))))
    if np.max(np.abs(a - b)) > rtol * scale:
        raise QuadratureError(f"coefficients moved by {np.max(np.abs(a - b)):.2e} when doubling nodes")
    return np.array([b[p.index] for p in pairs])


@dataclass
class ExpansionReport:
    counts: list
    max_value_error: list
    max_gradient_error: list
    monotone: bool
    steepest_point: list
    exact_gradient: list
    partial_gradients: list = field(default_factory=list)
    coefficients: np.ndarray | None = None

    @property
    def steepest_errors(self) -> list:
        g = np.asarray(self.exact_gradient)
        return [float(np.linalg.norm(np.asarray(p) - g)) for p in self.partial_gradients]

    @property
    def gradient_converges_nonzero(self) -> bool:
        """Partial gradients at the steepest point approach the nonzero exact gradient."""
        g = float(np.linalg.norm(self.exact_gradient))
        e = self.steepest_errors
        shrinking = all(e[i + 1] <= e[i] + NOISE for i in range(len(e) - 1))
        return bool(g > 0 and shrinking and e[-1] < 0.05 * g)

    def to_dict(self) -> dict:
        return {"counts": self.counts, "max_value_error": self.max_value_error,
                "max_gradient_error": self.max_gradient_error, "monotone": self.monotone,
                "steepest_point": self.steepest_point, "exact_gradient": self.exact_gradient,
                "partial_gradients": self.partial_gradients,
                "steepest_errors": self.steepest_errors,
                "gradient_converges_nonzero": self.gradient_converges_nonzero}


def gradient_expansion_check(domain: DomainSpec, h, counts=DEFAULT_COUNTS,
                             grid: Grid | None = None, nodes: int = 128) -> ExpansionReport:
    """Sup errors of partial sums of h and grad h over a sample grid.

    Errors must not increase along ``counts`` beyond ``NOISE``.  The
    partial-sum gradient is also tracked at the sample point where
    |grad h| is largest.
    """
    if domain.shape != "rectangle":
        raise ValueError("gradient expansions are implemented on rectangles")
    counts = sorted(counts)
    grid = grid if grid is not None else domain.grid(41)
    pairs = eigenpairs(domain, counts[-1], "orthonormal")
    coef = expansion_coefficients(domain, h, pairs, nodes)
    x = grid.points
    b = np.asarray(domain.betas)
    k = math.pi * np.array([p.index for p in pairs], dtype=float) / b
    scale = np.array([p.scale for p in pairs])
    cos = np.cos(k[:, None, :] * x[None, :, :])
    sin = np.sin(k[:, None, :] * x[None, :, :])
    vals = scale[:, None] * np.prod(cos, axis=2)
    grads = np.empty((len(pairs), x.shape[0], x.shape[1]))
    for a in range(x.shape[1]):
        rest = np.prod(np.delete(cos, a, axis=2), axis=2)
        grads[:, :, a] = -scale[:, None] * k[:, a, None] * sin[:, :, a] * rest
    hv, hg = h(x), h.gradient(x)
    steep = int(np.argmax(np.linalg.norm(hg, axis=1)))
    ve, ge, partial = [], [], []
    for n in counts:
        n_eff = n
        while n_eff < len(pairs) and pairs[n_eff].eigenvalue == pairs[n - 1].eigenvalue:
            n_eff += 1
        c = coef[:n_eff]
        sv = c @ vals[:n_eff]
        sg = np.einsum("j,jnd->nd", c, grads[:n_eff])
        ve.append(float(np.max(np.abs(sv - hv))))
        ge.append(float(np.max(np.linalg.norm(sg - hg, axis=1))))
        partial.append(sg[steep].tolist())
    monotone = all(ve[i + 1] <= ve[i] + NOISE and ge[i + 1] <= ge[i] + NOISE
                   for i in range(len(counts) - 1))
    return ExpansionReport(list(counts), ve, ge, monotone, x[steep].tolist(), hg[steep].tolist(),
                           partial, coef)
