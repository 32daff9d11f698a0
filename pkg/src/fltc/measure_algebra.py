"""Signed measures on a finite grid and the convolution algebra of a product table."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.stats import poisson as poisson_dist

from .errors import GridMismatchError, GridNotClosedError, SignedMeasureError
from .grid import Grid
from .neumann_spectra import DomainSpec, eigenpairs, eval_matrix
from .neumann_spectra.kernels import kernel_series

PROB_NEG_TOL = 1e-12
PROB_SUM_TOL = 1e-10
CLIP_LIMIT = 1e-8
POISSON_TAIL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    grid: Grid
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.grid.size,):
            raise GridMismatchError(f"expected {self.grid.size} weights, got {w.shape}")
        object.__setattr__(self, "weights", w)

    @classmethod
    def delta(cls, grid: Grid, index: int) -> "DiscreteMeasure":
        w = np.zeros(grid.size)
        w[index] = 1.0
        return cls(grid, w)

    @classmethod
    def zero(cls, grid: Grid) -> "DiscreteMeasure":
        return cls(grid, np.zeros(grid.size))

    @property
    def norm(self) -> float:
        """Total variation sum |w_k|."""
        return float(np.sum(np.abs(self.weights)))

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    @cached_property
    def is_probability(self) -> bool:
        return bool(np.all(self.weights >= -PROB_NEG_TOL) and abs(self.mass - 1) <= PROB_SUM_TOL)

    def integrate(self, values) -> np.ndarray:
        """mu(f) for f given by its grid values; rows of a 2-D array are separate functions."""
        return np.asarray(values) @ self.weights

    def tv_distance(self, other: "DiscreteMeasure") -> float:
        _same(self.grid, other.grid)
        return float(np.sum(np.abs(self.weights - other.weights)))

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        _same(self.grid, other.grid)
        return DiscreteMeasure(self.grid, self.weights + other.weights)

    def __sub__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        _same(self.grid, other.grid)
        return DiscreteMeasure(self.grid, self.weights - other.weights)

    def __mul__(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.grid, c * self.weights)

    __rmul__ = __mul__

    def to_csv(self) -> str:
        lines = ["index,weight"] + [f"{i},{format(float(w), '.17g')}"
                                    for i, w in enumerate(self.weights)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, grid: Grid, text: str) -> "DiscreteMeasure":
        w = np.zeros(grid.size)
        for line in text.strip().splitlines()[1:]:
            i, v = line.split(",")
            w[int(i)] = float(v)
        return cls(grid, w)


def _same(g1: Grid, g2: Grid):
    if not g1.same_as(g2):
        raise GridMismatchError("measures live on different grids")


def clip_negatives(weights: np.ndarray, limit: float = CLIP_LIMIT):
    """Zero tiny negative weights and renormalize; larger negativity is left in place.

    Returns (weights, clipped_mass, clipped) so the caller can record it.
    """
    w = np.asarray(weights, dtype=float).copy()
    neg = w < -PROB_NEG_TOL
    clipped_mass = float(-np.sum(w[neg]))
    if clipped_mass == 0.0 or clipped_mass >= limit:
        return w, clipped_mass, False
    total = w.sum()
    w[neg] = 0.0
    w *= total / w.sum()
    return w, clipped_mass, True


@dataclass(frozen=True, eq=False)
class ConvolutionTable:
    """Sparse kernel K with row i*G + j holding the probability vector nu_{x_i, x_j}."""

    grid: Grid
    kernel: sparse.csr_matrix
    identity_index: int

    @property
    def size(self) -> int:
        return self.grid.size

    def row(self, i: int, j: int) -> np.ndarray:
        return self.kernel[i * self.size + j].toarray().ravel()

    def convolve(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> DiscreteMeasure:
        _same(mu.grid, self.grid)
        _same(nu.grid, self.grid)
        i = np.nonzero(mu.weights)[0]
        j = np.nonzero(nu.weights)[0]
        if i.size == 0 or j.size == 0:
            return DiscreteMeasure.zero(self.grid)
        rows = (i[:, None] * self.size + j[None, :]).ravel()
        coef = np.outer(mu.weights[i], nu.weights[j]).ravel()
        out = self.kernel[rows].T @ coef
        return DiscreteMeasure(self.grid, np.asarray(out).ravel())

    def identity(self) -> DiscreteMeasure:
        return DiscreteMeasure.delta(self.grid, self.identity_index)

    def to_dict(self) -> dict:
        k = self.kernel
        rows = [[[int(c), float(v)] for c, v in zip(k.indices[k.indptr[r]:k.indptr[r + 1]],
                                                   k.data[k.indptr[r]:k.indptr[r + 1]])]
                for r in range(k.shape[0])]
        return {"grid": self.grid.to_dict(), "rows": rows, "identity_index": self.identity_index}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "ConvolutionTable":
        grid = Grid.from_dict(data["grid"])
        r, c, v = [], [], []
        for i, row in enumerate(data["rows"]):
            for col, w in row:
                r.append(i)
                c.append(col)
                v.append(w)
        G = grid.size
        K = sparse.csr_matrix((v, (r, c)), shape=(G * G, G))
        return cls(grid, K, int(data["identity_index"]))

    @classmethod
    def from_json(cls, text: str) -> "ConvolutionTable":
        return cls.from_dict(json.loads(text))


def convolve(table: ConvolutionTable, mu: DiscreteMeasure, nu: DiscreteMeasure) -> DiscreteMeasure:
    return table.convolve(mu, nu)


def _axis_images(axis: np.ndarray, beta: float) -> tuple:
    """Grid indices of |x - y| and beta - |beta - x - y| for all pairs on one axis."""
    x = axis[:, None]
    y = axis[None, :]
    lookup = []
    tol = 1e-9 * beta
    for target in (np.abs(x - y), beta - np.abs(beta - x - y)):
        idx = np.clip(np.searchsorted(axis, target.ravel()), 0, axis.size - 1)
        lower = np.clip(idx - 1, 0, axis.size - 1)
        pick = np.where(np.abs(axis[lower] - target.ravel()) < np.abs(axis[idx] - target.ravel()),
                        lower, idx)
        miss = np.abs(axis[pick] - target.ravel()) > tol
        if np.any(miss):
            bad = int(np.nonzero(miss)[0][0])
            raise GridNotClosedError(
                f"reflection image {target.ravel()[bad]:.6g} is not a grid point of the axis")
        lookup.append(pick)
    return tuple(lookup)


def rectangle_table(betas, grid: Grid | None = None, n: int = 21) -> ConvolutionTable:
    """Product of the interval tables delta_x * delta_y = (delta_|x-y| + delta_(b-|b-x-y|))/2.

    The identity is the corner (0, ..., 0).  Every axis of ``grid`` must
    contain 0, its beta, and all reflection images of its point pairs.
    """
    betas = tuple(float(b) for b in np.atleast_1d(betas))
    grid = grid if grid is not None else Grid.uniform(betas, n)
    if grid.chart != "cartesian" or grid.dim != len(betas):
        raise GridMismatchError("rectangle tables need a Cartesian grid of matching dimension")
    axes = grid.axes
    for a, b in zip(axes, betas):
        if abs(a[0]) > 1e-12 or abs(a[-1] - b) > 1e-9 * b:
            raise GridNotClosedError("each axis must run from 0 to its side length")
    images = [_axis_images(a, b) for a, b in zip(axes, betas)]
    shape = grid.shape
    G = grid.size
    multi = np.array(np.unravel_index(np.arange(G), shape))  # (d, G)
    # pair (I, J) -> per-axis pair index i_a * n_a + j_a
    pair_axis = [(multi[a][:, None] * shape[a] + multi[a][None, :]).ravel() for a in range(len(shape))]
    rows = np.arange(G * G)
    r_all, c_all = [], []
    for choice in itertools.product((0, 1), repeat=len(shape)):
        coords = [images[a][c][pair_axis[a]] for a, c in enumerate(choice)]
        r_all.append(rows)
        c_all.append(np.ravel_multi_index(coords, shape))
    r = np.concatenate(r_all)
    c = np.concatenate(c_all)
    v = np.full(r.size, 0.5 ** len(shape))
    K = sparse.csr_matrix((v, (r, c)), shape=(G * G, G))
    K.sum_duplicates()
    return ConvolutionTable(grid, K, 0)


def nfold(table: ConvolutionTable, nu: DiscreteMeasure, n: int) -> DiscreteMeasure:
    """nu convolved with itself n times (binary exponentiation); n = 0 gives the identity."""
    if int(n) != n or n < 0:
        raise ValueError("n must be a non-negative integer")
    result = table.identity()
    base = nu
    n = int(n)
    first = True
    while n:
        if n & 1:
            result = base if first else table.convolve(result, base)
            first = False
        n >>= 1
        if n:
            base = table.convolve(base, base)
    return result


def poisson(table: ConvolutionTable, nu: DiscreteMeasure, tail: float = POISSON_TAIL) -> DiscreteMeasure:
    """exp(-|nu|) sum_n nu^n / n!, truncated once the TV tail bound drops below ``tail``."""
    if np.any(nu.weights < 0):
        raise SignedMeasureError("the Poisson exponential needs a positive measure")
    c = nu.norm
    if c == 0:
        return table.identity()
    N = 0
    while poisson_dist.sf(N, c) >= tail:
        N += 1
    term = table.identity()
    total = term.weights.copy()
    for k in range(1, N + 1):
        term = table.convolve(term, nu) * (1.0 / k)
        total += term.weights
    return DiscreteMeasure(table.grid, math.exp(-c) * total)


@dataclass(frozen=True, eq=False)
class TrivializingFamily:
    """Matrix of grid values phi_j(x_i), constant first row, equal to 1 at the identity."""

    values: np.ndarray
    eigenvalues: np.ndarray
    identity_index: int

    def __post_init__(self):
        v = self.values
        if not np.allclose(v[0], 1.0, atol=1e-12, rtol=0):
            raise ValueError("the first function must be the constant 1")
        if np.max(np.abs(v)) > 1 + 1e-10:
            raise ValueError("family functions must be bounded by 1")
        if not np.allclose(v[:, self.identity_index], 1.0, atol=1e-10, rtol=0):
            raise ValueError("family functions must equal 1 at the identity")

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def transform(self, mu: DiscreteMeasure) -> np.ndarray:
        return self.values @ mu.weights

    @classmethod
    def rectangle(cls, domain: DomainSpec, grid: Grid, count: int) -> "TrivializingFamily":
        pairs = eigenpairs(domain, count, "max")[:count]
        vals = eval_matrix(pairs, domain, grid.points)
        return cls(vals, np.array([p.eigenvalue for p in pairs]), 0)


def heat_row(domain: DomainSpec, grid: Grid, t: float, x, tail_tol: float = 1e-12):
    """Discretized transition law p_{t,x}: trapezoid weight times the heat kernel.

    Returns (measure, clipped_mass, negative_finding).
    """
    series = kernel_series(domain, t, 2, tail_tol=tail_tol, normalization="max")
    vals = series(np.broadcast_to(np.asarray(x, dtype=float), grid.points.shape), grid.points)
    w, clipped_mass, clipped = clip_negatives(grid.weights * vals)
    negative = bool(np.min(w) < -PROB_NEG_TOL)
    return DiscreteMeasure(grid, w), clipped_mass, negative


def semigroup_measure(domain: DomainSpec, grid: Grid, t: float) -> DiscreteMeasure:
    """gamma_t = p_{t,a} at the identity corner."""
    return heat_row(domain, grid, t, grid.points[0])[0]


def transition_oracle(domain: DomainSpec, grid: Grid):
    """(t, i) -> discretized p_{t, x_i}, cached."""
    cache = {}

    def oracle(t: float, i: int) -> DiscreteMeasure:
        key = (float(t), int(i))
        if key not in cache:
            cache[key] = heat_row(domain, grid, t, grid.points[i])[0]
        return cache[key]

    return oracle


def levy_khintchine_check(table: ConvolutionTable, family: TrivializingFamily,
                          nu: DiscreteMeasure) -> dict:
    """Compare e(nu)(phi_j) with exp(int (phi_j - 1) d nu) for every family member."""
    if nu.weights[table.identity_index] != 0:
        raise ValueError("the Levy measure must not charge the identity point")
    lhs = family.transform(poisson(table, nu))
    rhs = np.exp(family.values @ nu.weights - nu.mass)
    err = np.abs(lhs - rhs)
    return {"max_error": float(err.max()), "errors": err.tolist(), "lhs": lhs.tolist(),
            "rhs": rhs.tolist()}


def invariance_check(table: ConvolutionTable, m: DiscreteMeasure, indices=None) -> float:
    """max over x of |delta_x * m - m|_TV."""
    idx = range(table.size) if indices is None else indices
    worst = 0.0
    for i in idx:
        out = table.convolve(DiscreteMeasure.delta(table.grid, i), m)
        worst = max(worst, out.tv_distance(m))
    return worst


@dataclass
class AxiomReport:
    deviations: dict
    rank: int
    rank_target: int
    tol: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> dict:
        out = {k: bool(v < self.tol) for k, v in self.deviations.items()}
        out["injectivity"] = self.rank >= self.rank_target
        return out

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {"deviations": self.deviations, "passed": self.passed, "rank": self.rank,
                "rank_target": self.rank_target, "tol": self.tol, "details": self.details}


def _random_probability(rng, G: int, support: int | None = None) -> np.ndarray:
    w = np.zeros(G)
    idx = rng.choice(G, size=support or G, replace=False)
    w[idx] = rng.random(idx.size)
    return w / w.sum()


def check_fltc_axioms(table: ConvolutionTable, family: TrivializingFamily, semigroup,
                      transition, tol: float = 1e-6, triples: int = 50, rank_slack: int = 0,
                      seed: int = 0) -> AxiomReport:
    """Measure every algebra, probability, trivialization and semigroup axiom on the grid.

    ``semigroup`` is a list of (t, gamma_t); ``transition(t, i)`` returns
    the discretized p_{t, x_i}.  Deviations are findings; nothing raises.
    """
    rng = np.random.default_rng(seed)
    G = table.size
    K = table.kernel
    dev, details = {}, {}

    perm = (np.arange(G)[:, None] * G + np.arange(G)[None, :]).T.ravel()
    dev["commutativity"] = float(abs(K - K[perm]).max()) if K.nnz else 0.0

    worst = 0.0
    for _ in range(triples):
        mu, nu, la = (DiscreteMeasure(table.grid, _random_probability(rng, G, min(G, 8)))
                      for _ in range(3))
        left = table.convolve(table.convolve(mu, nu), la)
        right = table.convolve(mu, table.convolve(nu, la))
        worst = max(worst, left.tv_distance(right))
    dev["associativity"] = worst

    a = table.identity_index
    eye = sparse.identity(G, format="csr")
    left_rows = K[np.arange(G) * G + a]
    right_rows = K[a * G + np.arange(G)]
    dev["identity"] = float(max(abs(left_rows - eye).max(), abs(right_rows - eye).max()))

    sums = np.asarray(K.sum(axis=1)).ravel()
    neg = float(max(0.0, -K.data.min())) if K.nnz else 0.0
    dev["probability"] = float(max(np.max(np.abs(sums - 1.0)), neg))

    phi = family.values
    lhs = np.asarray((K @ phi.T))
    rhs = (phi[:, :, None] * phi[:, None, :]).reshape(phi.shape[0], G * G).T
    dev["trivialization"] = float(np.max(np.abs(lhs - rhs)))

    weighted = phi * table.grid.weights[None, :]
    rank = int(np.linalg.matrix_rank(weighted))
    target = min(phi.shape[0], G) - rank_slack

    sg = {float(t): g for t, g in semigroup}
    worst, pairs = 0.0, []
    for t, s in itertools.combinations_with_replacement(sorted(sg), 2):
        prod = table.convolve(sg[t], sg[s])
        d = transition(t + s, a).tv_distance(prod)
        pairs.append({"t": t, "s": s, "tv": d})
        worst = max(worst, d)
    dev["semigroup"] = worst
    details["semigroup"] = pairs

    worst = 0.0
    for t, g in sg.items():
        for i in range(G):
            out = table.convolve(g, DiscreteMeasure.delta(table.grid, i))
            worst = max(worst, transition(t, i).tv_distance(out))
    dev["transition"] = worst
    return AxiomReport(dev, rank, target, tol, details)
