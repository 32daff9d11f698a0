"""Markov chains with transition laws gamma_t * delta_x and their martingale diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse, stats

from .errors import NonProbabilityRowError
from .measure_algebra import (PROB_NEG_TOL, PROB_SUM_TOL, ConvolutionTable, DiscreteMeasure,
                              TrivializingFamily, poisson, semigroup_measure)
from .neumann_spectra import DomainSpec

PATH_CHUNK = 20000


@dataclass(frozen=True, eq=False)
class SemigroupSpec:
    """Either the heat semigroup of a rectangle or the Poisson semigroup e(t nu)."""

    kind: str
    domain: DomainSpec | None = None
    nu: DiscreteMeasure | None = None

    def __post_init__(self):
        if self.kind == "heat" and self.domain is None:
            raise ValueError("heat semigroups need a domain")
        if self.kind == "poisson" and self.nu is None:
            raise ValueError("Poisson semigroups need a jump measure")
        if self.kind not in ("heat", "poisson"):
            raise ValueError(f"unknown semigroup kind {self.kind!r}")

    @classmethod
    def heat(cls, domain: DomainSpec) -> "SemigroupSpec":
        return cls("heat", domain=domain)

    @classmethod
    def poisson(cls, nu: DiscreteMeasure) -> "SemigroupSpec":
        return cls("poisson", nu=nu)

    def gamma(self, table: ConvolutionTable, t: float) -> DiscreteMeasure:
        if t == 0:
            return table.identity()
        return _gamma(self, table, float(t))

    def psi(self, table: ConvolutionTable, family: TrivializingFamily) -> np.ndarray:
        """Exponents psi_j with gamma_t(phi_j) = exp(-t psi_j).

        Heat: -log gamma_1(phi_j), with a shorter time for members that
        gamma_1 damps below 1e-10.  Poisson: |nu| - nu(phi_j).
        """
        if self.kind == "poisson":
            return self.nu.mass - family.values @ self.nu.weights
        out = np.empty(family.size)
        todo = np.arange(family.size)
        tau = 1.0
        while todo.size:
            v = family.values[todo] @ self.gamma(table, tau).weights
            ok = v > 1e-10
            out[todo[ok]] = -np.log(v[ok]) / tau
            todo = todo[~ok]
            tau /= 4.0
        return out


@lru_cache(maxsize=64)
def _gamma(spec: SemigroupSpec, table: ConvolutionTable, t: float) -> DiscreteMeasure:
    if spec.kind == "heat":
        return semigroup_measure(spec.domain, table.grid, t)
    return poisson(table, spec.nu * t)


def transition_matrix(table: ConvolutionTable, nu: DiscreteMeasure) -> np.ndarray:
    """Dense G x G matrix with row x equal to nu * delta_x."""
    G = table.size
    k = np.nonzero(nu.weights)[0]
    rows = (k[:, None] * G + np.arange(G)[None, :]).ravel()
    mix = sparse.kron(sparse.csr_matrix(nu.weights[k][None, :]), sparse.identity(G), format="csr")
    P = mix @ table.kernel[rows]
    return P.toarray()


def _check_rows(P: np.ndarray):
    neg = P.min(axis=1)
    sums = P.sum(axis=1)
    bad = np.nonzero((neg < -PROB_NEG_TOL) | (np.abs(sums - 1) > PROB_SUM_TOL))[0]
    if bad.size:
        i = int(bad[0])
        raise NonProbabilityRowError(
            f"row {i} is not a probability vector (min {neg[i]:.3e}, sum {sums[i]:.12f})")


@lru_cache(maxsize=64)
def _cumulative(spec: SemigroupSpec, table: ConvolutionTable, t: float) -> np.ndarray:
    P = transition_matrix(table, spec.gamma(table, t))
    _check_rows(P)
    c = np.cumsum(np.clip(P, 0.0, None), axis=1)
    return c / c[:, -1:]


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, path_index)."""
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(path_index)))


def _uniforms(seed: int, paths: np.ndarray, n_steps: int) -> np.ndarray:
    return np.stack([path_rng(seed, p).random(n_steps) for p in paths])


def _step(cum: np.ndarray, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    rows = cum[x]
    return np.minimum((rows < u[:, None]).sum(axis=1), cum.shape[1] - 1)


def transition(table: ConvolutionTable, spec: SemigroupSpec, t_step: float, x_index: int,
               rng: np.random.Generator) -> int:
    """One draw from gamma_t * delta_x by inverse CDF."""
    if not t_step > 0:
        raise ValueError("t_step must be positive")
    cum = _cumulative(spec, table, float(t_step))
    return int(np.searchsorted(cum[x_index], rng.random(), side="right").clip(0, table.size - 1))


@dataclass(frozen=True, eq=False)
class PathSample:
    times: np.ndarray
    states: np.ndarray  # (n_paths, n_steps + 1)
    seed: int
    paths: np.ndarray

    def to_csv(self, grid) -> str:
        single = self.states.shape[0] == 1
        d = grid.dim
        head = (["t", "index"] if single else ["path", "t", "index"]) + [f"x{i}" for i in range(d)]
        lines = [",".join(head)]
        for p, row in zip(self.paths, self.states):
            for t, s in zip(self.times, row):
                coords = [format(float(c), ".17g") for c in grid.points[s]]
                lead = [] if single else [str(int(p))]
                lines.append(",".join(lead + [format(float(t), ".17g"), str(int(s))] + coords))
        return "\n".join(lines) + "\n"


def simulate_paths(table: ConvolutionTable, spec: SemigroupSpec, horizon: float, n_steps: int,
                   x0: int, seed: int, n_paths: int = 1, first_path: int = 0) -> PathSample:
    """Independent chains with step horizon/n_steps; path p uses stream (seed, p)."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    times = np.linspace(0.0, horizon, n_steps + 1)
    paths = np.arange(first_path, first_path + n_paths)
    states = np.empty((n_paths, n_steps + 1), dtype=np.int64)
    states[:, 0] = x0
    if horizon == 0:
        states[:] = x0
        return PathSample(times, states, seed, paths)
    cum = _cumulative(spec, table, horizon / n_steps)
    for start in range(0, n_paths, PATH_CHUNK):
        sl = slice(start, min(n_paths, start + PATH_CHUNK))
        u = _uniforms(seed, paths[sl], n_steps)
        x = states[sl, 0].copy()
        for k in range(n_steps):
            x = _step(cum, x, u[:, k])
            states[sl, k + 1] = x
    return PathSample(times, states, seed, paths)


def simulate_path(table: ConvolutionTable, spec: SemigroupSpec, horizon: float, n_steps: int,
                  x0: int, seed: int) -> PathSample:
    return simulate_paths(table, spec, horizon, n_steps, x0, seed, 1)


def feller_operator(table: ConvolutionTable, nu: DiscreteMeasure, f) -> np.ndarray:
    """(T f)(x) = integral of f against nu * delta_x."""
    if not nu.is_probability:
        raise NonProbabilityRowError("the Feller operator needs a probability measure")
    return transition_matrix(table, nu) @ np.asarray(f, dtype=float)


def chi_square_gof(counts: np.ndarray, probs: np.ndarray, min_expected: float = 5.0) -> dict:
    """Pearson test after merging bins (in grid order) until each expects >= min_expected."""
    counts = np.asarray(counts, dtype=float)
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    probs = probs / probs.sum()
    n = counts.sum()
    merged_c, merged_e = [], []
    acc_c = acc_e = 0.0
    for c, p in zip(counts, probs):
        acc_c += c
        acc_e += n * p
        if acc_e >= min_expected:
            merged_c.append(acc_c)
            merged_e.append(acc_e)
            acc_c = acc_e = 0.0
    if acc_e > 0 or acc_c > 0:
        if merged_e:
            merged_c[-1] += acc_c
            merged_e[-1] += acc_e
        else:
            merged_c.append(acc_c)
            merged_e.append(acc_e)
    res = stats.chisquare(merged_c, merged_e)
    return {"statistic": float(res.statistic), "p_value": float(res.pvalue), "bins": len(merged_c)}


def marginal_gof(table: ConvolutionTable, spec: SemigroupSpec, horizon: float, n_steps: int,
                 x0: int, n_paths: int, seed: int, target: DiscreteMeasure) -> dict:
    sample = simulate_paths(table, spec, horizon, n_steps, x0, seed, n_paths)
    counts = np.bincount(sample.states[:, -1], minlength=table.size)
    return chi_square_gof(counts, target.weights)


def martingale_check(table: ConvolutionTable, spec: SemigroupSpec, family: TrivializingFamily,
                     j: int, x0: int, t: float, n_samples: int = 10000, seed: int = 0) -> dict:
    """Monte Carlo E[exp(psi_j t) phi_j(X_t) | X_0 = x0] against phi_j(x0); j is 1-based."""
    if not 1 <= j <= family.size:
        raise ValueError(f"j must lie in [1, {family.size}]")
    if n_samples < 10 ** 4:
        raise ValueError("n_samples must be >= 1e4")
    phi = family.values[j - 1]
    psi = float(spec.psi(table, family)[j - 1])
    sample = simulate_paths(table, spec, t, 1, x0, seed, n_samples)
    vals = math.exp(psi * t) * phi[sample.states[:, -1]]
    est = float(vals.mean())
    err = float(vals.std(ddof=1) / math.sqrt(n_samples))
    target = float(phi[x0])
    ok = abs(est - target) <= 1e-12 if err == 0 else abs(est - target) < 4 * err
    return {"j": j, "t": t, "psi": psi, "estimate": est, "stderr": err, "target": target,
            "pass": bool(ok)}


def compensated_martingale_check(table: ConvolutionTable, spec: SemigroupSpec,
                                 family: TrivializingFamily, j: int, x0: int, horizon: float,
                                 n_steps: int, n_samples: int = 10000, seed: int = 0) -> dict:
    """Increments of phi_j(X_t) - phi_j(X_0) + psi_j int_0^t phi_j(X_s) ds (left Riemann sum).

    Each increment mean must lie within 4 standard errors of zero.
    """
    phi = family.values[j - 1]
    psi = float(spec.psi(table, family)[j - 1])
    sample = simulate_paths(table, spec, horizon, n_steps, x0, seed, n_samples)
    h = horizon / n_steps
    vals = phi[sample.states]
    inc = vals[:, 1:] - vals[:, :-1] + psi * h * vals[:, :-1]
    means = inc.mean(axis=0)
    errs = inc.std(axis=0, ddof=1) / math.sqrt(n_samples)
    # Degenerate increments (constant member) carry roundoff-sized spread only.
    live = errs > 1e-12
    z = np.where(live, np.abs(means) / np.where(live, errs, 1.0),
                 np.where(np.abs(means) > 1e-12, np.inf, 0.0))
    return {"j": j, "step": h, "psi": psi, "max_abs_z": float(z.max()),
            "increment_means": means.tolist(), "increment_stderr": errs.tolist(),
            "pass": bool(np.all(z < 4))}
