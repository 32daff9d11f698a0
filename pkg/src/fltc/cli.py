"""Batch command-line front end.

Every subcommand writes its data files, a ``report.json`` validated against
the bundled schema, and a ``manifest.json`` listing the files.  Only the
manifest carries a timestamp, so everything else is a pure function of the
configuration and seed.  Scientific negatives (a positivity failure, no
common maximizer) are results and exit with status 0; configuration and
numerical failures exit with status 2.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import levy_process as lp
from . import measure_algebra as ma
from . import sturm_liouville as sl
from .grid import Grid
from .neumann_spectra import (DomainSpec, EigenPolynomial, SmoothBump, common_maximizer_check,
                              eigenpairs, gradient_expansion_check, multiplicity_classes,
                              positivity_scan, write_contours)

OUTPUT_ENV = "FLTC_OUTPUT_ROOT"
EXIT_OPERATIONAL = 2
COMMANDS = ("eigen", "kernel-scan", "maximizers", "convolve", "axioms", "simulate",
            "expand-gradient")


class ConfigError(ValueError):
    pass


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _floats(v, name: str) -> list:
    if v is None:
        return []
    if isinstance(v, (int, float)):
        return [float(v)]
    if isinstance(v, str):
        parts = [p for p in v.replace(" ", "").split(",") if p]
    else:
        parts = list(v)
    try:
        return [float(p) for p in parts]
    except (TypeError, ValueError):
        raise ConfigError(f"--{name} expects comma-separated numbers, got {v!r}") from None


def _ints(v, name: str) -> list:
    vals = _floats(v, name)
    if any(x != int(x) for x in vals):
        raise ConfigError(f"--{name} expects integers, got {v!r}")
    return [int(x) for x in vals]


def _positive(value, name: str) -> float:
    value = float(value)
    if not value > 0 or not math.isfinite(value):
        raise ConfigError(f"--{name} must be positive, got {value}")
    return value


def _clean(obj):
    """JSON-safe copy: numpy to Python, tuples to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def report_schema() -> dict:
    text = resources.files("fltc").joinpath("schemas/report.schema.json").read_text()
    return json.loads(text)


# ---- configuration ---------------------------------------------------------

def _domain(args) -> DomainSpec:
    shape = args.domain
    if shape == "rectangle":
        betas = _floats(args.beta, "beta")
        if not betas:
            raise ConfigError("rectangles need --beta")
        for b in betas:
            _positive(b, "beta")
        return DomainSpec.rectangle(betas)
    R = _positive(args.R, "R")
    if shape == "disk":
        return DomainSpec.disk(R)
    if shape == "sector":
        if args.q is None or int(args.q) < 1:
            raise ConfigError("sectors need --q >= 1")
        return DomainSpec.sector(int(args.q), R)
    if shape == "annulus":
        r0 = _positive(args.r0, "r0")
        if r0 >= R:
            raise ConfigError("--r0 must be smaller than --R")
        return DomainSpec.annulus(r0, R)
    raise ConfigError(f"unknown domain {shape!r}")


def _grid_for(domain: DomainSpec, n, n_theta=None) -> Grid:
    n = int(n)
    if n < 2:
        raise ConfigError("--grid must be >= 2")
    if domain.is_polar:
        return domain.grid(n, int(n_theta) if n_theta else None)
    return domain.grid(n)


def _point(grid: Grid, value, name: str) -> int:
    coords = _floats(value, name)
    if len(coords) != grid.dim:
        raise ConfigError(f"--{name} needs {grid.dim} coordinates")
    try:
        return grid.index_of(coords, tol=1e-9 + 1e-6 * max(grid.spacing))
    except KeyError:
        raise ConfigError(f"--{name} {coords} is not a grid point") from None


def _config_echo(args) -> dict:
    skip = {"func", "config", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ---- commands --------------------------------------------------------------

def cmd_eigen(args, out: Path) -> dict:
    domain = _domain(args)
    count = int(args.count)
    if count < 1:
        raise ConfigError("--count must be >= 1")
    pairs = eigenpairs(domain, count)
    classes = multiplicity_classes(pairs)
    mult = {}
    for cls in classes:
        for i in cls:
            mult[i] = len(cls)
    files = []
    lines = ["index,lambda,multiplicity"]
    for i, p in enumerate(pairs[:count]):
        label = "_".join(str(k) for k in p.index)
        lines.append(f"{label},{_fmt(p.eigenvalue)},{mult[i]}")
    (out / "eigenvalues.csv").write_text("\n".join(lines) + "\n")
    files.append("eigenvalues.csv")
    results = {"domain": domain.to_dict(), "count": count,
               "eigenvalues": [p.eigenvalue for p in pairs[:count]],
               "indices": [list(p.index) for p in pairs[:count]]}
    if domain.dim == 2:
        tol = _positive(args.tol, "tol")
        contour = write_contours(domain, count, out, n=int(args.grid),
                                 n_theta=int(args.n_theta) if args.n_theta else 181, tol=tol)
        results["contours"] = contour
        files += [e["file"] for e in contour["eigenfunctions"]]
        return {"results": results, "findings": [], "files": files, "manifest": contour}
    return {"results": results, "findings": [], "files": files}


def _scan_sl(args, out: Path, times) -> dict:
    config = json.loads(Path(args.sl_config).read_text())
    problem = sl.SLProblem.from_config(config)
    spectrum = sl.neumann_eigenvalues(problem, int(args.eigen_count))
    n = int(args.grid)
    xs = np.linspace(problem.a, problem.b, n)
    grid = Grid.cartesian([xs])
    scans, findings, files = [], [], []
    for t in times:
        kern = sl.sl_kernel(problem, spectrum, t, 3, _positive(args.tail_tol, "tail-tol"))
        w = spectrum.w(xs, kern.count) * kern.weights[:, None]
        phi = spectrum.w(xs, kern.count)
        cube = np.einsum("ja,jb,jc->abc", w, phi, phi)
        k = int(np.argmin(cube))
        a, b, c = np.unravel_index(k, cube.shape)
        entry = {"t": t, "min_value": float(cube.flat[k]),
                 "argmin": [float(xs[a]), float(xs[b]), float(xs[c])],
                 "tail_bound": kern.tail_bound, "count": kern.count}
        if entry["min_value"] < -kern.tail_bound:
            findings.append(f"q_t takes negative values at t={t}")
        scans.append(entry)
    measures = []
    if args.x is not None and args.y is not None:
        for k, (x, y) in enumerate(zip(_floats(args.x, "x"), _floats(args.y, "y"))):
            pm = sl.product_measure(problem, spectrum, x, y, grid)
            name = f"nu_{k}.csv"
            (out / name).write_text(pm.to_csv())
            files.append(name)
            d = pm.to_dict()
            d.update({"x": x, "y": y, "file": name})
            measures.append(d)
            if pm.negative_mass:
                findings.append(f"product measure at ({x}, {y}) has negative mass")
    results = {"problem": {"interval": [problem.a, problem.b], "config": config},
               "eigenvalues": spectrum.eigenvalues[:20].tolist(), "scans": scans,
               "product_measures": measures}
    return {"results": results, "findings": findings, "files": files}


def cmd_kernel_scan(args, out: Path) -> dict:
    times = [_positive(t, "times") for t in _floats(args.times, "times")]
    if not times:
        raise ConfigError("--times is required")
    if args.sl_config:
        return _scan_sl(args, out, times)
    domain = _domain(args)
    grid = _grid_for(domain, args.grid, args.n_theta)
    tail_tol = _positive(args.tail_tol, "tail-tol")
    scans, findings = [], []
    for t in times:
        scan = positivity_scan(domain, t, grid, tail_tol=tail_tol, max_points=int(args.max_points))
        scans.append({"t": t, **scan.to_dict()})
        if scan.certified_negative:
            findings.append(f"q_t takes negative values at t={t}")
    return {"results": {"domain": domain.to_dict(), "grid_size": grid.size, "scans": scans},
            "findings": findings, "files": []}


def cmd_maximizers(args, out: Path) -> dict:
    domain = _domain(args)
    tol = _positive(args.tol, "tol")
    grid = _grid_for(domain, args.grid, args.n_theta) if args.grid else None
    rep = common_maximizer_check(domain, int(args.count), tol, grid)
    findings = [] if rep.exists else ["no common maximizer among the listed eigenfunctions"]
    return {"results": {"domain": domain.to_dict(), **rep.to_dict()}, "findings": findings,
            "files": []}


def _rectangle(args) -> DomainSpec:
    if args.domain != "rectangle":
        raise ConfigError(f"{args.command} runs on rectangles only")
    return _domain(args)


def cmd_convolve(args, out: Path) -> dict:
    domain = _rectangle(args)
    table = ma.rectangle_table(domain.betas, n=int(args.grid))
    g = table.grid
    i, j = _point(g, args.x, "x"), _point(g, args.y, "y")
    m = table.convolve(ma.DiscreteMeasure.delta(g, i), ma.DiscreteMeasure.delta(g, j))
    (out / "convolution.csv").write_text(m.to_csv())
    files = ["convolution.csv"]
    if args.save_table:
        (out / "table.json").write_text(table.to_json())
        files.append("table.json")
    atoms = [{"index": int(k), "point": g.points[k].tolist(), "weight": float(m.weights[k])}
             for k in np.nonzero(m.weights)[0]]
    return {"results": {"domain": domain.to_dict(), "x": g.points[i].tolist(),
                        "y": g.points[j].tolist(), "atoms": atoms, "mass": m.mass},
            "findings": [], "files": files}


def cmd_axioms(args, out: Path) -> dict:
    domain = _rectangle(args)
    table = ma.rectangle_table(domain.betas, n=int(args.grid))
    family = ma.TrivializingFamily.rectangle(domain, table.grid, int(args.count))
    times = [_positive(t, "times") for t in _floats(args.times, "times")]
    semigroup = [(t, ma.semigroup_measure(domain, table.grid, t)) for t in times]
    rep = ma.check_fltc_axioms(table, family, semigroup, ma.transition_oracle(domain, table.grid),
                               tol=_positive(args.tol, "tol"), triples=int(args.triples),
                               seed=int(args.seed))
    findings = [f"axiom deviation above tolerance: {k}" for k, ok in rep.passed.items() if not ok]
    return {"results": {"domain": domain.to_dict(), "all_passed": rep.all_passed, **rep.to_dict()},
            "findings": findings, "files": []}


def _semigroup(args, domain: DomainSpec, table) -> lp.SemigroupSpec:
    if args.kind == "heat":
        return lp.SemigroupSpec.heat(domain)
    idx = _ints(args.nu_index, "nu-index")
    mass = _floats(args.nu_mass, "nu-mass")
    if not idx or len(idx) != len(mass):
        raise ConfigError("Poisson runs need matching --nu-index and --nu-mass lists")
    w = np.zeros(table.size)
    for i, m in zip(idx, mass):
        if not 0 <= i < table.size or m < 0:
            raise ConfigError("jump measure indices must be grid indices and masses >= 0")
        w[i] += m
    return lp.SemigroupSpec.poisson(ma.DiscreteMeasure(table.grid, w))


def cmd_simulate(args, out: Path) -> dict:
    domain = _rectangle(args)
    table = ma.rectangle_table(domain.betas, n=int(args.grid))
    g = table.grid
    x0 = _point(g, args.x0, "x0") if args.x0 is not None else g.size // 2
    spec = _semigroup(args, domain, table)
    horizon = _positive(args.horizon, "horizon")
    steps, paths = int(args.steps), int(args.paths)
    if steps < 1 or paths < 1:
        raise ConfigError("--steps and --paths must be >= 1")
    sample = lp.simulate_paths(table, spec, horizon, steps, x0, int(args.seed), paths)
    (out / "paths.csv").write_text(sample.to_csv(g))
    results = {"domain": domain.to_dict(), "x0": g.points[x0].tolist(), "x0_index": x0,
               "kind": spec.kind, "final_states": sample.states[:, -1].tolist()[:1000]}
    findings = []
    if paths >= 1000:
        target = table.convolve(spec.gamma(table, horizon), ma.DiscreteMeasure.delta(g, x0))
        counts = np.bincount(sample.states[:, -1], minlength=g.size)
        gof = lp.chi_square_gof(counts, target.weights)
        results["gof"] = gof
        if gof["p_value"] <= 0.01:
            findings.append("simulated marginal rejected by chi-square at 1%")
    return {"results": results, "findings": findings, "files": ["paths.csv"]}


def cmd_expand_gradient(args, out: Path) -> dict:
    domain = _rectangle(args)
    if args.h == "bump":
        center = _floats(args.center, "center") or [b / 2 for b in domain.betas]
        h = SmoothBump(domain, center, _positive(args.radius, "radius"), float(args.amplitude))
        label = {"kind": "bump", "center": center, "radius": float(args.radius)}
    else:
        terms = {}
        for part in str(args.terms).split(","):
            pos, _, c = part.partition(":")
            try:
                terms[int(pos)] = float(c)
            except ValueError:
                raise ConfigError(f"--terms expects position:coefficient pairs, got {part!r}") from None
        h = EigenPolynomial.from_positions(domain, terms)
        label = {"kind": "poly", "terms": terms}
    counts = _ints(args.counts, "counts")
    rep = gradient_expansion_check(domain, h, counts, domain.grid(int(args.grid)))
    results = {"domain": domain.to_dict(), "function": label, **rep.to_dict(),
               "gradient_converges_nonzero": rep.gradient_converges_nonzero}
    findings = [] if rep.monotone else ["errors do not decrease monotonically"]
    return {"results": results, "findings": findings, "files": []}


# ---- parser ----------------------------------------------------------------

def _add_domain(p, domain="rectangle", beta="1,1"):
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    p.add_argument("--domain", default=domain, choices=["rectangle", "disk", "sector", "annulus"])
    p.add_argument("--beta", default=beta, help="rectangle side lengths, comma separated")
    p.add_argument("--R", default=1.0, type=float)
    p.add_argument("--r0", default=0.3, type=float)
    p.add_argument("--q", default=None, type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fltc", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file whose keys mirror the flags")
    parser.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV}/<command>)")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("eigen", help="eigenvalues and contour data")
    _add_domain(p)
    p.add_argument("--count", default=12, type=int)
    p.add_argument("--grid", default=101, type=int)
    p.add_argument("--n-theta", default=None, type=int)
    p.add_argument("--tol", default=0.02, type=float)
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("kernel-scan", help="positivity of the product-formula kernel")
    _add_domain(p, beta="1")
    p.add_argument("--times", default="0.05,0.2")
    p.add_argument("--grid", default=21, type=int)
    p.add_argument("--n-theta", default=None, type=int)
    p.add_argument("--tail-tol", default=1e-9, type=float)
    p.add_argument("--max-points", default=41, type=int)
    p.add_argument("--sl-config", default=None, help="Sturm-Liouville problem JSON")
    p.add_argument("--eigen-count", default=200, type=int)
    p.add_argument("--x", default=None)
    p.add_argument("--y", default=None)
    p.set_defaults(func=cmd_kernel_scan)

    p = sub.add_parser("maximizers", help="common-maximizer check")
    _add_domain(p, domain="disk")
    p.add_argument("--count", default=30, type=int)
    p.add_argument("--tol", default=0.02, type=float)
    p.add_argument("--grid", default=None, type=int)
    p.add_argument("--n-theta", default=None, type=int)
    p.set_defaults(func=cmd_maximizers)

    p = sub.add_parser("convolve", help="delta_x * delta_y on a rectangle grid")
    _add_domain(p)
    p.add_argument("--grid", default=21, type=int)
    p.add_argument("--x", required=False, default="0.3,0.4")
    p.add_argument("--y", required=False, default="0.4,0.2")
    p.add_argument("--save-table", action="store_true")
    p.set_defaults(func=cmd_convolve)

    p = sub.add_parser("axioms", help="measure-algebra axiom suite")
    _add_domain(p, beta="1,2")
    p.add_argument("--grid", default=21, type=int)
    p.add_argument("--times", default="0.1,0.2")
    p.add_argument("--count", default=25, type=int)
    p.add_argument("--triples", default=50, type=int)
    p.add_argument("--tol", default=1e-6, type=float)
    p.add_argument("--seed", default=0, type=int)
    p.set_defaults(func=cmd_axioms)

    p = sub.add_parser("simulate", help="sample paths of the hypergroup chain")
    _add_domain(p, beta="1,2")
    p.add_argument("--grid", default=21, type=int)
    p.add_argument("--kind", default="heat", choices=["heat", "poisson"])
    p.add_argument("--nu-index", default=None)
    p.add_argument("--nu-mass", default=None)
    p.add_argument("--horizon", default=0.5, type=float)
    p.add_argument("--steps", default=5, type=int)
    p.add_argument("--paths", default=10, type=int)
    p.add_argument("--x0", default=None)
    p.add_argument("--seed", default=0, type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("expand-gradient", help="uniform eigen-expansion of a function and its gradient")
    _add_domain(p, beta="1,2")
    p.add_argument("--h", default="bump", choices=["bump", "poly"])
    p.add_argument("--center", default="0.51,1.03")
    p.add_argument("--radius", default=0.45, type=float)
    p.add_argument("--amplitude", default=1.0, type=float)
    p.add_argument("--terms", default="5:1")
    p.add_argument("--counts", default="50,100,200,400")
    p.add_argument("--grid", default=41, type=int)
    p.set_defaults(func=cmd_expand_gradient)
    return parser


def _parse(argv) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    parser = build_parser()
    if not known.config:
        return parser.parse_args(argv)
    try:
        config = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {known.config}: {exc}") from None
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    config = {k.replace("-", "_"): v for k, v in config.items()}
    if not any(a in COMMANDS for a in rest):
        if "command" not in config:
            raise ConfigError("config needs a 'command' key")
        argv = list(argv) + [config["command"]]
    command = next(a for a in argv if a in COMMANDS)
    sub = parser._subparsers._group_actions[0].choices[command]
    known_dests = {a.dest for a in sub._actions}
    unknown = set(config) - known_dests - {"command", "out"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    sub.set_defaults(**{k: v for k, v in config.items() if k in known_dests})
    if "out" in config:
        parser.set_defaults(out=config["out"])
    return parser.parse_args(argv)


def _output_dir(args) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        out = Path(os.environ.get(OUTPUT_ENV, "fltc-runs")) / args.command
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _parse(argv)
        if not args.command:
            build_parser().print_help(sys.stderr)
            return EXIT_OPERATIONAL
        out = _output_dir(args)
        body = args.func(args, out)
        report = {"command": args.command, "config": _config_echo(args),
                  "results": body["results"], "diagnostics": {"findings": body["findings"]},
                  "files": body["files"] + ["report.json"]}
        report = _clean(report)
        jsonschema.validate(report, report_schema())
        (out / "report.json").write_text(_dumps(report))
        manifest = dict(body.get("manifest", {}))
        manifest.update({"command": args.command, "files": report["files"],
                         "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()})
        (out / "manifest.json").write_text(_dumps(manifest))
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_OPERATIONAL
    except Exception as exc:  # operational failures only; findings never raise
        print(f"fltc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_OPERATIONAL
    for f in body["findings"]:
        print(f"finding: {f}")
    print(f"wrote {len(report['files'])} files to {out}")
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
