"""Regular Sturm-Liouville operators -(1/r)(p u')' on [a, b] with Neumann ends.

Eigenvalues are bracketed by Pruefer-angle oscillation counting on a
piecewise-constant-coefficient model (exact for constant coefficients,
Richardson-extrapolated otherwise) and, for variable coefficients,
polished by adaptive shooting on the boundary residual (p w')(b).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import (BracketMissError, DomainError, IntegratorError, SignedMeasureError,
                     TailToleranceError)
from .grid import Grid

POSITIVITY_SAMPLES = 1000
MAX_EIGEN = 500
ODE_RTOL = 1e-10
ODE_ATOL = 1e-12
MESH_CELLS = 2000
POLISH_LIMIT = 10
TAIL_TOL = 1e-9


@dataclass(frozen=True)
class SLProblem:
    """Interval [a, b] with positive coefficients p and r (callables).

    ``constant`` marks p and r as constant, which makes the
    piecewise-constant model exact.  Smoothness of p and r is the
    caller's assertion.
    """

    a: float
    b: float
    p: Callable = field(compare=False)
    r: Callable = field(compare=False)
    constant: bool = False
    description: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b) and self.a < self.b):
            raise DomainError("need a finite interval a < b")
        xs = np.linspace(self.a, self.b, POSITIVITY_SAMPLES)
        for name, fn in (("p", self.p), ("r", self.r)):
            v = np.asarray(fn(xs), dtype=float) * np.ones_like(xs)
            if not np.all(np.isfinite(v)) or np.min(v) <= 0:
                raise DomainError(f"{name} must be finite and positive on [a, b]")

    @property
    def length(self) -> float:
        return self.b - self.a

    def pv(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.p(x), dtype=float) * np.ones_like(x)

    def rv(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.r(x), dtype=float) * np.ones_like(x)

    @classmethod
    def constant_coefficients(cls, a: float, b: float, p: float = 1.0, r: float = 1.0) -> "SLProblem":
        return cls(a, b, lambda x: p + 0 * np.asarray(x, dtype=float),
                   lambda x: r + 0 * np.asarray(x, dtype=float), constant=True,
                   description={"interval": [a, b], "coefficient": {"kind": "constant", "p": p, "r": r}})

    @classmethod
    def cosine(cls, beta: float = 1.0) -> "SLProblem":
        return cls.constant_coefficients(0.0, beta)

    @classmethod
    def from_config(cls, config: dict) -> "SLProblem":
        """Build from ``{"interval": [a, b], "coefficient": {"kind": ...}}``.

        Kinds: ``constant`` (p, r numbers), ``polynomial`` (p, r as
        coefficient lists c0 + c1 x + ...), ``jacobi-like`` (alpha, beta;
        p = (1-x)^(alpha+1) (1+x)^(beta+1), r = (1-x)^alpha (1+x)^beta, interval inside (-1, 1)).
        """
        a, b = (float(v) for v in config["interval"])
        coef = config.get("coefficient", {"kind": "constant"})
        kind = coef.get("kind", "constant")
        if kind == "constant":
            out = cls.constant_coefficients(a, b, float(coef.get("p", 1.0)), float(coef.get("r", 1.0)))
            return out
        if kind == "polynomial":
            pc = np.asarray(coef.get("p", [1.0]), dtype=float)
            rc = np.asarray(coef.get("r", [1.0]), dtype=float)
            const = pc.size == 1 and rc.size == 1
            return cls(a, b, lambda x: np.polynomial.polynomial.polyval(x, pc),
                       lambda x: np.polynomial.polynomial.polyval(x, rc), constant=const,
                       description=config)
        if kind == "jacobi-like":
            al, be = float(coef["alpha"]), float(coef["beta"])
            if not -1 < a < b < 1:
                raise DomainError("jacobi-like coefficients need [a, b] inside (-1, 1)")
            return cls(a, b, lambda x: (1 - x) ** (al + 1) * (1 + x) ** (be + 1),
                       lambda x: (1 - x) ** al * (1 + x) ** be, description=config)
        raise ValueError(f"unknown coefficient kind {kind!r}")

    @classmethod
    def from_json(cls, text: str) -> "SLProblem":
        return cls.from_config(json.loads(text))


# ---- adaptive shooting -------------------------------------------------------

def _shoot(problem: SLProblem, lam: float, xs: np.ndarray, rtol: float, atol: float):
    def rhs(x, y):
        return [y[1] / problem.pv(x), -lam * problem.rv(x) * y[0]]

    order = np.argsort(xs)
    sx = xs[order]
    if sx.size and sx[-1] >= problem.b:
        sx = np.minimum(sx, problem.b)
    sol = solve_ivp(rhs, (problem.a, problem.b), [1.0, 0.0], method="DOP853", rtol=rtol,
                    atol=atol, t_eval=sx, dense_output=False)
    if not sol.success:
        raise IntegratorError(f"integration failed at lambda={lam}: {sol.message}")
    out = np.empty((2, xs.size))
    out[:, order] = sol.y
    return out


def solve_w(problem: SLProblem, lam: float, xs, rtol: float = ODE_RTOL,
            atol: float = ODE_ATOL) -> np.ndarray:
    """w_lam at xs, where (p w')' = -lam r w, w(a) = 1, (p w')(a) = 0."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if np.any(xs < problem.a - 1e-12) or np.any(xs > problem.b + 1e-12):
        raise DomainError("evaluation points must lie in [a, b]")
    if lam == 0:
        return np.ones_like(xs)
    return _shoot(problem, float(lam), np.clip(xs, problem.a, problem.b), rtol, atol)[0]


def shooting_residual(problem: SLProblem, lam: float, rtol: float = ODE_RTOL,
                      atol: float = ODE_ATOL) -> float:
    """(p w_lam')(b); its zeros are the Neumann eigenvalues."""
    if lam == 0:
        return 0.0
    return float(_shoot(problem, float(lam), np.array([problem.b]), rtol, atol)[1, 0])


# ---- piecewise-constant transfer model ---------------------------------------

class _Mesh:
    """Cells with coefficients frozen at their midpoints; one cell if constant."""

    def __init__(self, problem: SLProblem, cells: int):
        n = 1 if problem.constant else cells
        self.problem = problem
        self.edges = np.linspace(problem.a, problem.b, n + 1)
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        self.h = np.diff(self.edges)
        self.p = problem.pv(mid)
        self.r = problem.rv(mid)
        self._edge_key, self._edge_cache = None, None

    def angle(self, lams: np.ndarray) -> np.ndarray:
        """Lifted Pruefer angle at b for each lam > 0, starting from pi/2 at a."""
        lams = np.asarray(lams, dtype=float)
        root = np.sqrt(lams)
        u = np.ones_like(lams)
        v = np.zeros_like(lams)  # (p w') / sigma
        psi = np.full_like(lams, 0.5 * math.pi)
        ratio = np.sqrt(self.p * self.r)
        phase = np.sqrt(self.r / self.p) * self.h
        jump = np.concatenate([[1.0], ratio[:-1] / ratio[1:]])
        for i in range(phase.size):
            f = jump[i]
            if f != 1.0:
                # rescaling v by f > 0 keeps the quadrant; the angle moves by
                # atan2(u v (1 - f), f v^2 + u^2), which lies in (-pi/2, pi/2)
                psi = psi + np.arctan2(u * v * (1.0 - f), f * v * v + u * u)
                v = v * f
            kh = root * phase[i]
            c, s = np.cos(kh), np.sin(kh)
            u, v = u * c + v * s, v * c - u * s
            psi = psi + kh
            # keep the state bounded without changing its angle
            n = np.hypot(u, v)
            u, v = u / n, v / n
        return psi

    def count_below(self, lams: np.ndarray) -> np.ndarray:
        """Number of model eigenvalues strictly below each lam."""
        lams = np.asarray(lams, dtype=float)
        out = np.ones(lams.shape, dtype=int)
        pos = lams > 0
        out[~pos] = 0
        if np.any(pos):
            psi = self.angle(lams[pos])
            out[pos] = np.floor((psi - 0.5 * math.pi) / math.pi + 1e-12).astype(int) + 1
        return out

    def eigenvalues(self, count: int) -> np.ndarray:
        """First ``count`` model eigenvalues.

        The lifted angle at b is continuous and increasing in lam and
        equals pi/2 + j pi at the j-th eigenvalue.  In z = sqrt(lam) it
        grows with slope close to the travel time int sqrt(r/p), so each
        root is found by secant steps from the WKB guess j pi / travel,
        falling back to bisection on the oscillation count if they stall.
        """
        if count == 1:
            return np.zeros(1)
        j = np.arange(1, count, dtype=float)
        travel = float(np.sum(np.sqrt(self.r / self.p) * self.h))
        goal = 0.5 * math.pi + j * math.pi
        z_prev = j * math.pi / travel
        f_prev = self.angle(z_prev ** 2) - goal
        z = z_prev - f_prev / travel
        step_cap = 0.25 * math.pi / travel
        for _ in range(60):
            f = self.angle(z ** 2) - goal
            if np.all(np.abs(f) <= 1e-13 * goal):
                return np.concatenate([[0.0], z * z])
            denom = f - f_prev
            slope = np.where(np.abs(denom) > 0, denom / np.where(denom == 0, 1, z - z_prev), travel)
            slope = np.where((slope > 0) & np.isfinite(slope), slope, travel)
            step = np.clip(f / slope, -step_cap, step_cap)
            z_prev, f_prev = z, f
            z = z - np.where(np.abs(f) <= 1e-13 * goal, 0.0, step)
        return self._bisect(count)

    def _bisect(self, count: int) -> np.ndarray:
        target = np.arange(1, count)
        hi_val = 1.0
        while self.count_below(np.array([hi_val]))[0] < count:
            hi_val *= 2.0
        lo = np.zeros(count - 1)
        hi = np.full(count - 1, hi_val)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            above = self.count_below(mid) >= target + 1
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
            if np.all(hi - lo <= 4 * np.finfo(float).eps * hi):
                break
        return np.concatenate([[0.0], 0.5 * (lo + hi)])

    def edge_states(self, lams: np.ndarray):
        """(w, p w') at every cell edge for each positive lam; shapes (J, cells + 1).

        The largest set of lams seen so far is cached; any prefix of it is
        served by slicing, since kernels evaluate leading eigenvalues at
        many points.
        """
        lams = np.ascontiguousarray(lams, dtype=float)
        held = self._edge_key
        if held is not None and lams.size <= held.size and np.array_equal(held[:lams.size], lams):
            W, PW = self._edge_cache
            return W[:lams.size], PW[:lams.size]
        lp = lams[:, None]
        n = self.h.size
        W = np.empty((lams.size, n + 1))
        PW = np.empty((lams.size, n + 1))
        w = np.ones((lams.size, 1))
        pw = np.zeros((lams.size, 1))
        W[:, :1], PW[:, :1] = w, pw
        for i in range(n):
            k = np.sqrt(lp * self.r[i] / self.p[i])
            sig = np.sqrt(lp * self.p[i] * self.r[i])
            c, s = np.cos(k * self.h[i]), np.sin(k * self.h[i])
            w, pw = w * c + pw / sig * s, -w * sig * s + pw * c
            W[:, i + 1:i + 2], PW[:, i + 1:i + 2] = w, pw
        self._edge_key, self._edge_cache = lams.copy(), (W, PW)
        return W, PW

    def states(self, lams: np.ndarray, xs: np.ndarray):
        """(w, p w') of the model solution at xs for each lam; shapes (J, N)."""
        lams = np.asarray(lams, dtype=float)
        xs = np.asarray(xs, dtype=float)
        J, N = lams.size, xs.size
        W = np.ones((J, N))
        PW = np.zeros((J, N))
        pos = lams > 0
        if not np.any(pos):
            return W, PW
        lp = lams[pos][:, None]
        EW, EP = self.edge_states(lams[pos])
        cell = np.clip(np.searchsorted(self.edges, xs, side="right") - 1, 0, self.h.size - 1)
        # partial cell: coefficients at the midpoint of [edge, x]
        d = xs - self.edges[cell]
        if self.problem.constant:
            pm, rm = self.p[cell], self.r[cell]
        else:
            mid = self.edges[cell] + 0.5 * d
            pm, rm = self.problem.pv(mid), self.problem.rv(mid)
        k = np.sqrt(lp * rm / pm)
        sig = np.sqrt(lp * pm * rm)
        c, s = np.cos(k * d), np.sin(k * d)
        w0, p0 = EW[:, cell], EP[:, cell]
        W[pos] = w0 * c + p0 / sig * s
        PW[pos] = -w0 * sig * s + p0 * c
        return W, PW

    def norms(self, lams: np.ndarray) -> np.ndarray:
        """Exact model integrals of w^2 r over [a, b]."""
        lams = np.asarray(lams, dtype=float)
        out = np.empty(lams.size)
        zero = lams == 0
        out[zero] = float(np.sum(self.h * self.r))
        lp = lams[~zero][:, None]
        if lp.size == 0:
            return out
        w = np.ones((lp.shape[0], 1))
        pw = np.zeros((lp.shape[0], 1))
        total = np.zeros((lp.shape[0], 1))
        for h, p, r in zip(self.h, self.p, self.r):
            k = np.sqrt(lp * r / p)
            sig = np.sqrt(lp * p * r)
            A, B = w, pw / sig
            # integral over the cell of (A cos kx + B sin kx)^2
            kh = k * h
            s2, c2 = np.sin(2 * kh), np.cos(2 * kh)
            total += r * (0.5 * (A ** 2 + B ** 2) * h + (A ** 2 - B ** 2) * s2 / (4 * k)
                          + A * B * (1 - c2) / (2 * k))
            c, s = np.cos(kh), np.sin(kh)
            w, pw = w * c + pw / sig * s, -w * sig * s + pw * c
        out[~zero] = total[:, 0]
        return out


def _richardson(coarse, fine):
    return (4.0 * fine - coarse) / 3.0


# ---- spectrum ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SLSpectrum:
    """Ascending Neumann eigenvalues, L2(r) norms of w_lam, and evaluation helpers.

    The spectral measure puts mass 1/norm_j at eigenvalue j.
    """

    problem: SLProblem
    eigenvalues: np.ndarray
    norms: np.ndarray
    cells: int = MESH_CELLS
    polished: int = 0

    @property
    def count(self) -> int:
        return self.eigenvalues.size

    @property
    def weights(self) -> np.ndarray:
        return 1.0 / self.norms

    @cached_property
    def _models(self):
        if self.problem.constant:
            return (_Mesh(self.problem, 1),)
        return _Mesh(self.problem, self.cells), _Mesh(self.problem, 2 * self.cells)

    def states(self, xs, count: int | None = None):
        """(w, p w') at xs for the first ``count`` eigenfunctions, each (J, N)."""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        if np.any(xs < self.problem.a - 1e-12) or np.any(xs > self.problem.b + 1e-12):
            raise DomainError("evaluation points must lie in [a, b]")
        xs = np.clip(xs, self.problem.a, self.problem.b)
        lams = self.eigenvalues[:count]
        models = self._models
        if len(models) == 1:
            return models[0].states(lams, xs)
        (w1, p1), (w2, p2) = (m.states(lams, xs) for m in models)
        return _richardson(w1, w2), _richardson(p1, p2)

    def w(self, xs, count: int | None = None) -> np.ndarray:
        return self.states(xs, count)[0]

    @cached_property
    def _default_sup(self) -> np.ndarray:
        return self._sup(2001)

    def sup_bounds(self, samples: int = 2001) -> np.ndarray:
        """max |w_j| over a fine grid, with a slope allowance for the gaps."""
        return self._default_sup if samples == 2001 else self._sup(samples)

    def _sup(self, samples: int) -> np.ndarray:
        xs = np.linspace(self.problem.a, self.problem.b, samples)
        W, PW = self.states(xs)
        slope = np.max(np.abs(PW), axis=1) / float(np.min(self.problem.pv(xs)))
        return np.max(np.abs(W), axis=1) + 0.5 * slope * (xs[1] - xs[0])

    def cell_integrals(self, edges, count: int | None = None) -> np.ndarray:
        """Integral of w_j r over each interval [edges[k], edges[k+1]], shape (J, K)."""
        edges = np.asarray(edges, dtype=float)
        lams = self.eigenvalues[:count]
        _, PW = self.states(edges, count)
        out = np.empty((lams.size, edges.size - 1))
        pos = lams > 0
        # (p w')' = -lam r w integrates exactly over any interval
        out[pos] = -np.diff(PW[pos], axis=1) / lams[pos, None]
        if np.any(~pos):
            fine = [np.linspace(lo, hi, 65) for lo, hi in zip(edges[:-1], edges[1:])]
            out[~pos] = [np.trapezoid(self.problem.rv(f), f) if not self.problem.constant
                         else float(self.problem.rv(0.5 * (f[0] + f[-1]))) * (f[-1] - f[0])
                         for f in fine]
        return out


def neumann_eigenvalues(problem: SLProblem, count: int, cells: int = MESH_CELLS,
                        polish: int | None = None) -> SLSpectrum:
    """First ``count`` Neumann eigenvalues with their norms.

    Variable-coefficient problems are solved on ``cells`` and ``2*cells``
    piecewise-constant meshes and Richardson-extrapolated; the first
    ``polish`` eigenvalues are then refined by bracketed root finding on
    the adaptive shooting residual.
    """
    if int(count) != count or not 1 <= count <= MAX_EIGEN:
        raise ValueError(f"count must be an integer in [1, {MAX_EIGEN}]")
    count = int(count)
    if problem.constant:
        mesh = _Mesh(problem, 1)
        lams = mesh.eigenvalues(count)
        spec = SLSpectrum(problem, lams, mesh.norms(lams), cells=1)
        _verify_counts(mesh, lams)
        return spec
    coarse, fine = _Mesh(problem, cells), _Mesh(problem, 2 * cells)
    l1, l2 = coarse.eigenvalues(count), fine.eigenvalues(count)
    _verify_counts(fine, l2)
    lams = _richardson(l1, l2)
    lams[0] = 0.0
    n_polish = min(count, POLISH_LIMIT if polish is None else polish)
    for j in range(1, n_polish):
        lams[j] = _polish(problem, lams, j)
    norms = _richardson(coarse.norms(lams), fine.norms(lams))
    return SLSpectrum(problem, lams, norms, cells=cells, polished=n_polish)


def _verify_counts(mesh: _Mesh, lams: np.ndarray):
    if lams.size < 2:
        return
    mids = 0.5 * (lams[1:] + lams[:-1])
    got = mesh.count_below(mids)
    want = np.arange(1, lams.size)
    if not np.array_equal(got, want):
        bad = int(np.nonzero(got != want)[0][0])
        raise BracketMissError("oscillation count disagrees with eigenvalue ordering",
                               bracket=(float(lams[bad]), float(lams[bad + 1])),
                               diagnostics={"expected": int(want[bad]), "counted": int(got[bad])})


def _polish(problem: SLProblem, lams: np.ndarray, j: int) -> float:
    lam = lams[j]
    gap_lo = lam - lams[j - 1]
    gap_hi = (lams[j + 1] - lam) if j + 1 < lams.size else gap_lo
    for frac in (1e-6, 1e-4, 1e-2, 0.45):
        lo, hi = lam - frac * gap_lo, lam + frac * gap_hi
        flo, fhi = shooting_residual(problem, lo), shooting_residual(problem, hi)
        if np.sign(flo) != np.sign(fhi):
            return brentq(lambda x: shooting_residual(problem, x), lo, hi,
                          xtol=1e-300, rtol=1e-12)
    raise BracketMissError(f"no sign change of the shooting residual around eigenvalue {j}",
                           bracket=(lam - 0.45 * gap_lo, lam + 0.45 * gap_hi),
                           diagnostics={"index": j, "model_eigenvalue": float(lam)})


# ---- kernels -----------------------------------------------------------------

def _tail_estimate(spectrum: SLSpectrum, t: float, term_last: float) -> float:
    """Dropped-tail estimate using Weyl growth of sqrt(lam_j) past the last eigenvalue."""
    pr = spectrum.problem
    xs = np.linspace(pr.a, pr.b, 2001)
    L = float(np.trapezoid(np.sqrt(pr.rv(xs) / pr.pv(xs)), xs))
    root = math.sqrt(spectrum.eigenvalues[-1])
    lam_last = spectrum.eigenvalues[-1]
    total, n = 0.0, 1
    while True:
        lam_n = (root + n * math.pi / L) ** 2
        term = term_last * math.exp(-(lam_n - lam_last) * t)
        total += term
        if term < 1e-18 * max(total, 1e-300) or n > 10 ** 6:
            return total
        n += 1


@dataclass(frozen=True, eq=False)
class SLKernel:
    """Truncated sum of exp(-lam_j t) w_j(x_1)...w_j(x_p) / norm_j."""

    spectrum: SLSpectrum
    t: float
    power: int
    count: int
    tail_bound: float

    @property
    def weights(self) -> np.ndarray:
        s = self.spectrum
        return np.exp(-s.eigenvalues[:self.count] * self.t) / s.norms[:self.count]

    def __call__(self, *args):
        if len(args) != self.power:
            raise TypeError(f"expected {self.power} arguments")
        arrays = [np.atleast_1d(np.asarray(a, dtype=float)) for a in args]
        single = all(np.ndim(a) == 0 for a in args)
        n = max(a.size for a in arrays)
        vals = np.stack([np.broadcast_to(self.spectrum.w(a, self.count), (self.count, n))
                         for a in arrays])
        prod = np.prod(np.sort(vals, axis=0), axis=0)
        out = self.weights @ prod
        return float(out[0]) if single else out


def sl_kernel(problem: SLProblem, spectrum: SLSpectrum, t: float, power: int = 3,
              tail_tol: float = TAIL_TOL) -> SLKernel:
    if not t > 0:
        raise ValueError("t must be positive")
    if spectrum.problem is not problem and spectrum.problem != problem:
        raise ValueError("spectrum belongs to a different problem")
    M = spectrum.sup_bounds()
    terms = np.exp(-spectrum.eigenvalues * t) * M ** power / spectrum.norms
    tails = np.concatenate([np.cumsum(terms[::-1])[::-1][1:], [0.0]])
    tails = tails + _tail_estimate(spectrum, t, float(terms[-1]))
    ok = np.nonzero(tails < tail_tol)[0]
    if ok.size == 0:
        raise TailToleranceError(
            f"{spectrum.count} eigenvalues leave tail {tails[-1]:.3e} at t={t}",
            tail_bound=float(tails[-1]))
    n = int(ok[0]) + 1
    return SLKernel(spectrum, float(t), power, n, float(tails[n - 1]))


def kernel_q_sl(problem: SLProblem, spectrum: SLSpectrum, t: float, x, y, xi,
                tail_tol: float = TAIL_TOL):
    """q_t(x, y, xi) = sum_j exp(-lam_j t) w_j(x) w_j(y) w_j(xi) / |w_j|^2."""
    return sl_kernel(problem, spectrum, t, 3, tail_tol)(x, y, xi)


def heat_kernel_sl(problem: SLProblem, spectrum: SLSpectrum, t: float, x, y,
                   tail_tol: float = TAIL_TOL):
    """Transition density p_t(x, y) with respect to r(y) dy."""
    return sl_kernel(problem, spectrum, t, 2, tail_tol)(x, y)


# ---- product-formula measures ------------------------------------------------

def default_schedule() -> list:
    return [0.1 * 2.0 ** (-i) for i in range(21)]


def dual_cells(grid_points: np.ndarray, a: float, b: float) -> np.ndarray:
    """Edges of the cells around each grid point (midpoints, closed by a and b)."""
    pts = np.asarray(grid_points, dtype=float)
    return np.concatenate([[a], 0.5 * (pts[1:] + pts[:-1]), [b]])


@dataclass
class ProductMeasure:
    grid: Grid
    weights: np.ndarray
    t: float
    residual: float
    history: list
    negative_mass: bool
    min_weight: float
    tail_estimate: float

    def to_csv(self) -> str:
        lines = ["xi,weight"]
        lines += [f"{format(float(x), '.17g')},{format(float(w), '.17g')}"
                  for x, w in zip(self.grid.points[:, 0], self.weights)]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"xi": self.grid.points[:, 0].tolist(), "weights": self.weights.tolist(),
                "t": self.t, "residual": self.residual, "history": self.history,
                "negative_mass": self.negative_mass, "min_weight": self.min_weight,
                "tail_estimate": self.tail_estimate}


def product_measure(problem: SLProblem, spectrum: SLSpectrum, x: float, y: float,
                    grid: Grid | None = None, t_schedule=None, j_check: int = 10,
                    strict: bool = False) -> ProductMeasure:
    """Discrete nu_{x,y} from nu_t(d xi) = q_t(x, y, xi) r(xi) d xi as t decreases.

    Each grid point receives the exact mass of its dual cell.  The
    schedule stops once the product-formula residual
    max_{j <= j_check} |sum_k nu_k w_j(xi_k) - w_j(x) w_j(y)| stops
    decreasing, or once the spectrum no longer resolves t.  Negative
    cell masses are reported (``strict`` raises instead).
    """
    grid = grid if grid is not None else Grid.cartesian([np.linspace(problem.a, problem.b, 21)])
    if grid.dim != 1:
        raise ValueError("product measures live on one-dimensional grids")
    xi = grid.points[:, 0]
    if xi[0] < problem.a - 1e-12 or xi[-1] > problem.b + 1e-12:
        raise DomainError("grid must lie in [a, b]")
    for v in (x, y):
        if not problem.a - 1e-12 <= v <= problem.b + 1e-12:
            raise DomainError("x and y must lie in [a, b]")
    schedule = sorted(t_schedule or default_schedule(), reverse=True)
    edges = dual_cells(xi, problem.a, problem.b)
    cells = spectrum.cell_integrals(edges)
    wxy = spectrum.w(np.array([x, y]))
    coef = wxy[:, 0] * wxy[:, 1] / spectrum.norms
    jc = min(j_check, spectrum.count)
    check_vals = spectrum.w(xi, jc)
    target = coef[:jc] * spectrum.norms[:jc]
    best, history = None, []
    for t in schedule:
        decay = np.exp(-spectrum.eigenvalues * t)
        last_term = float(decay[-1] * abs(coef[-1]) * np.max(np.abs(cells[-1])))
        tail = _tail_estimate(spectrum, t, last_term) if last_term > 0 else 0.0
        if tail > 1e-10:
            break
        masses = (decay * coef) @ cells
        resid = float(np.max(np.abs(check_vals @ masses - target)))
        history.append({"t": t, "residual": resid, "min_weight": float(masses.min()),
                        "tail_estimate": tail})
        # plateaus at large t are not a stop signal; only a genuine rise is
        if best is not None and resid > best[2] * (1 + 1e-6) + 1e-15:
            break
        if best is None or resid < best[2]:
            best = (t, masses, resid, tail)
    if best is None:
        raise TailToleranceError("spectrum too short for the largest t in the schedule",
                                 tail_bound=math.inf)
    t, masses, resid, tail = best
    neg = bool(masses.min() < -max(tail, 1e-12))
    if neg and strict:
        raise SignedMeasureError(f"negative cell mass {masses.min():.3e} at t={t}")
    return ProductMeasure(grid, masses, t, resid, history, neg, float(masses.min()), tail)


def cosine_two_point_law(beta: float, x: float, y: float, xi: np.ndarray) -> np.ndarray:
    """Weights of (delta_|x-y| + delta_(beta - |beta - x - y|))/2 on grid points xi."""
    out = np.zeros(xi.size)
    for target in (abs(x - y), beta - abs(beta - x - y)):
        out[int(np.argmin(np.abs(xi - target)))] += 0.5
    return out
