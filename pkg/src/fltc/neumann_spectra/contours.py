"""Contour data: one CSV of eigenfunction values per eigenpair plus a JSON manifest."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .domains import DomainSpec
from .eigenpairs import eigenpairs, eval_matrix
from .maximizers import MAX_TOL, maximizer_set


def maximizer_location(domain: DomainSpec, radii: np.ndarray, cell: float) -> str:
    """Coarse label for where the maxima sit: centre, inner or outer circle, or interior."""
    if radii.size == 0:
        return "everywhere"
    r = float(np.median(radii))
    if domain.shape == "rectangle":
        return "boundary"
    if r >= domain.R - cell:
        return "outer"
    if domain.shape == "annulus" and r <= domain.r0 + cell:
        return "inner"
    if r <= cell:
        return "center"
    return "interior"


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_contours(domain: DomainSpec, count: int, out_dir, n: int = 101, n_theta: int = 181,
                   tol: float = MAX_TOL) -> dict:
    """Write the first ``count`` eigenfunctions on the natural grid.

    Files are named ``eigen_<index>.csv`` with header ``x,y,value`` in
    row-major grid order; ``manifest.json`` lists each file with its
    eigenvalue, normalization and maximizer annotation.
    """
    if domain.dim != 2:
        raise ValueError("contour output needs a planar domain")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pairs = eigenpairs(domain, count)[:count]
    grid = domain.grid(n, n_theta) if domain.is_polar else domain.grid(n)
    values = eval_matrix(pairs, domain, grid.points, check=False)
    cell = max(grid.spacing[0], 1e-12)
    entries = []
    for pair, row in zip(pairs, values):
        name = "eigen_" + "_".join(str(i) for i in pair.index) + ".csv"
        lines = ["x,y,value"]
        lines += [f"{_fmt(x)},{_fmt(y)},{_fmt(v)}" for (x, y), v in zip(grid.points, row)]
        (out / name).write_text("\n".join(lines) + "\n")
        if pair.is_constant:
            annotation = {"location": "everywhere", "points": [], "radii": []}
        else:
            ms = maximizer_set(pair, domain, grid, tol, row)
            pts = ms.refined if len(ms.refined) else ms.points
            radii = domain.polar(pts)[0] if domain.is_polar else np.zeros(0)
            annotation = {"location": maximizer_location(domain, radii, cell)
                          if domain.is_polar else "corner",
                          "points": pts.tolist(), "radii": radii.tolist(),
                          "max_abs_value": ms.max_value}
        entries.append({"file": name, "index": list(pair.index), "lambda": pair.eigenvalue,
                        "normalization": pair.normalization, "maximizers": annotation})
    manifest = {"domain": domain.to_dict(), "grid": {"chart": grid.chart, "shape": list(grid.shape)},
                "tol": tol, "eigenfunctions": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest
