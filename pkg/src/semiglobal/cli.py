"""Command-line experiment driver.

Subcommands ``solve``, ``convergence``, ``pattern`` and ``stability`` read a
TOML experiment file and write comma-separated results (plus PNG figures)
into an output directory. Files are staged in a hidden directory and moved
into place only when the whole command succeeds, so a failed run leaves no
partial output.

Config layout (``schema_version = 1``)::

    schema_version = 1
    problem = "burgers"          # burgers | tanh | differentiate | stability | pattern
    method = "taylor_multi"      # global | one_point | two_point | pseudo_multi
                                 # | taylor_multi | multi_interval
                                 # (stability: radial grid, default two_point)
    output_dir = "out"           # optional, --out wins

    [geometry]
    preset = "symmetric_overlap" # see GEOMETRY_PRESETS
    a = 0.0
    split = 0.5
    b = 1.0
    overlap_points = 5

    [resolution]
    n = 150                      # nodes per subdomain, or a list to sweep
    taylor_terms = 6             # or a list to sweep

    [problem_params]
    nu = 5e-3

    [solver]
    tol = 1e-8
    max_iter = 30
    linear_solver = "tsvd"
    initial_guess = "default"    # default | exact | ramp

    [output]
    figures = true
    threshold = 1e-12            # pattern: magnitude cut-off
    structural = false           # pattern: assembly mask instead of magnitudes

    [pattern]
    orders = [1, 2]              # pattern: derivative orders to export
"""

from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import bvp, geometry, stability
from .chebcore import Mapping, make_subdomain
from .overlap import (METHODS, GlobalOperator, OverlapSpec, assemble_subdomains, multi_interval_subdomains,
                      sparsity_pattern)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger("semiglobal")

SCHEMA_VERSION = 1
PROBLEMS = ("burgers", "tanh", "differentiate", "stability", "pattern")
GEOMETRY_PRESETS = ("global", "one_point", "tanh_pair", "two_point", "symmetric_overlap",
                    "pseudo_multipoint", "appendix_taylor", "multi_interval", "subdomains", "identity")
FUNCTIONS: dict[str, tuple[Callable, Callable]] = {
    "sin": (np.sin, np.cos),
    "cos": (np.cos, lambda y: -np.sin(y)),
    "exp": (np.exp, np.exp),
    "square": (lambda y: y * y, lambda y: 2 * y),
}


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    """Parsed experiment file."""

    problem: str
    method: str
    geometry: dict
    resolution: list[int]
    taylor_terms: list[int]
    problem_params: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    output_dir: str | None = None
    weight_a: float = 0.5
    orders: list[int] = field(default_factory=lambda: [1])


def _as_list(value: Any, name: str) -> list[int]:
    vals = value if isinstance(value, list) else [value]
    try:
        out = [int(v) for v in vals]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be an integer or a list of integers") from exc
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ConfigError(f"{name} sweep must be strictly increasing, got {out}")
    return out


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    """Read and validate a TOML experiment file."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    problem = raw.get("problem")
    if problem not in PROBLEMS:
        raise ConfigError(f"problem must be one of {PROBLEMS}, got {problem!r}")
    # the radial stability grid defaults to the two-point overlap
    method = raw.get("method", "two_point" if problem == "stability" else "global")
    if method not in METHODS + ("global",):
        raise ConfigError(f"method must be one of {METHODS + ('global',)}, got {method!r}")
    geo = dict(raw.get("geometry", {}))
    preset = geo.get("preset", "global")
    if preset not in GEOMETRY_PRESETS:
        raise ConfigError(f"geometry preset must be one of {GEOMETRY_PRESETS}, got {preset!r}")
    geo["preset"] = preset
    res = raw.get("resolution", {})
    if "n" not in res and preset not in ("subdomains", "identity"):
        raise ConfigError("resolution.n is required")
    resolution = _as_list(res.get("n", 0), "resolution.n")
    terms = _as_list(res.get("taylor_terms", 5), "resolution.taylor_terms")
    if any(t < 1 for t in terms):
        raise ConfigError("taylor_terms must be >= 1")
    orders = _as_list(raw.get("pattern", {}).get("orders", [1]), "pattern.orders")
    weight = float(raw.get("weight_a", 0.5))
    if not 0 < weight < 1:
        raise ConfigError("weight_a must lie in (0, 1)")
    return ExperimentConfig(problem, method, geo, resolution, terms, dict(raw.get("problem_params", {})),
                            dict(raw.get("solver", {})), dict(raw.get("output", {})), raw.get("output_dir"),
                            weight, orders)


def _g(geo: dict, key: str, default=None) -> Any:
    if key in geo:
        return geo[key]
    if default is None:
        raise ConfigError(f"geometry.{key} is required for preset {geo['preset']!r}")
    return default


def build_subdomains(cfg: ExperimentConfig, n: int, terms: int) -> list:
    """Subdomains for one resolution according to the geometry preset."""
    geo = cfg.geometry
    preset = geo["preset"]
    # donor rows need derivative matrices up to the Taylor order
    order = terms if cfg.method in ("taylor_multi", "multi_interval") else 1
    if preset == "global":
        return geometry.global_domain(_g(geo, "a", 0.0), _g(geo, "b", 1.0), n, order)
    if preset == "one_point":
        return geometry.one_point_pair(_g(geo, "a", 0.0), _g(geo, "split"), _g(geo, "b", 1.0), n,
                                       geo.get("n_b"), order)
    if preset == "tanh_pair":
        return geometry.tanh_pair(_g(geo, "length", 10.0), n, geo.get("n_b"), _g(geo, "r_c", 1.0),
                                  _g(geo, "interface", 1.0), _g(geo, "outer_b", 2.0), order)
    if preset == "two_point":
        return geometry.two_point_pair(_g(geo, "a", 0.0), _g(geo, "b", 1.0), n, geo.get("n_b"),
                                       geo.get("split"), order)
    if preset == "symmetric_overlap":
        return geometry.symmetric_overlap_pair(_g(geo, "a", 0.0), _g(geo, "split"), _g(geo, "b", 1.0), n,
                                               int(_g(geo, "overlap_points")), order)
    if preset == "pseudo_multipoint":
        return geometry.pseudo_multipoint_pair(n, int(geo.get("n_b", n)), _g(geo, "r_up", 1.0), _g(geo, "L", 2.0),
                                               _g(geo, "b", 1.25), int(_g(geo, "shift_index", 5)), order)
    if preset == "appendix_taylor":
        return geometry.appendix_taylor_pair(n, int(geo.get("n_b", max(4, n // 2))), max_order=order)
    if preset == "multi_interval":
        return multi_interval_subdomains(_g(geo, "a", 0.0), _g(geo, "b", 1.0), int(_g(geo, "n_sub")), n,
                                         float(_g(geo, "delta")), order)
    if preset == "subdomains":
        subs = []
        for item in _g(geo, "subdomains"):
            try:
                mapping = Mapping(item["mapping"], tuple(item["params"]))
                subs.append(make_subdomain(mapping, int(item.get("n", n)), order))
            except KeyError as exc:
                raise ConfigError(f"subdomain entry missing key {exc}") from exc
        return subs
    raise ConfigError(f"preset {preset!r} does not describe subdomains")


def build_operator(cfg: ExperimentConfig, n: int, terms: int) -> GlobalOperator:
    subs = build_subdomains(cfg, n, terms)
    method = cfg.method
    if len(subs) == 1:
        method = "global"
    elif method == "global":
        raise ConfigError("method 'global' needs a single-subdomain geometry")
    return assemble_subdomains(method, subs, OverlapSpec(weight_a=cfg.weight_a, taylor_terms=terms))


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


class Staging:
    """Collect output files in a hidden directory and publish them atomically."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.dir: Path | None = None

    def __enter__(self) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.dir = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out_dir))
        return self.dir

    def __exit__(self, exc_type, exc, tb):
        assert self.dir is not None
        try:
            if exc_type is None:
                for f in sorted(self.dir.iterdir()):
                    os.replace(f, self.out_dir / f.name)
        finally:
            shutil.rmtree(self.dir, ignore_errors=True)
        return False


def _figures(cfg: ExperimentConfig, args) -> bool:
    return bool(cfg.output.get("figures", True)) and not getattr(args, "no_figures", False)


def _solve_one(cfg: ExperimentConfig, n: int, terms: int):
    """Run a single solve; returns (operator, numeric, exact, report-or-None)."""
    op = build_operator(cfg, n, terms)
    pp = cfg.problem_params
    sv = cfg.solver
    tol = float(sv.get("tol", 1e-8))
    max_iter = int(sv.get("max_iter", 30))
    solver = sv.get("linear_solver", "tsvd")
    guess_kind = sv.get("initial_guess", "default")
    if cfg.problem == "burgers":
        p = bvp.BurgersProblem(float(pp.get("nu", 5e-3)), float(pp.get("alpha", 1.0)), float(pp.get("kappa", 2.0)))
        beta = bvp.burgers_beta(p.nu, p.alpha_bc, p.kappa)
        exact = bvp.burgers_exact(op.nodes, p.nu, beta)
        guess = {"default": None, "exact": exact, "ramp": p.alpha_bc * (1 - 2 * op.nodes)}.get(guess_kind, "bad")
        if isinstance(guess, str):
            raise ConfigError(f"unknown initial_guess {guess_kind!r}")
        rep = bvp.solve_burgers(op, p, guess, tol, max_iter, solver)
        return op, rep.solution, exact, rep
    if cfg.problem == "tanh":
        p = bvp.TanhProblem(float(pp.get("theta", 0.02)), float(pp.get("length", op.nodes[-1])),
                            float(pp.get("interface", 1.0)))
        exact = bvp.tanh_exact(op.nodes, p.theta)
        ramp = np.clip(op.nodes / (2 * p.interface_loc), 0.0, 1.0)
        guess = {"default": None, "exact": exact, "ramp": ramp}.get(guess_kind, "bad")
        if isinstance(guess, str):
            raise ConfigError(f"unknown initial_guess {guess_kind!r}")
        rep = bvp.solve_tanh(op, p, guess, tol, max_iter, solver)
        return op, rep.solution, exact, rep
    if cfg.problem == "differentiate":
        name = pp.get("function", "sin")
        if name not in FUNCTIONS:
            raise ConfigError(f"function must be one of {tuple(FUNCTIONS)}, got {name!r}")
        f, df = FUNCTIONS[name]
        return op, op.d1 @ f(op.nodes), df(op.nodes), None
    raise ConfigError(f"problem {cfg.problem!r} is not solvable with this command")


def cmd_solve(cfg: ExperimentConfig, out: Path, args) -> int:
    n, terms = cfg.resolution[0], cfg.taylor_terms[0]
    t0 = time.perf_counter()
    op, numeric, exact, rep = _solve_one(cfg, n, terms)
    max_err, l2 = bvp.error_norms(numeric, exact)
    logger.info("solve: N=%d max_abs_error=%.3e (%.2fs)", op.size, max_err, time.perf_counter() - t0)
    with Staging(out) as tmp:
        write_csv(tmp / "solution.csv", ["node", "numeric", "exact", "abs_error"],
                  zip(op.nodes, numeric, exact, np.abs(numeric - exact)))
        rows = [("problem", cfg.problem), ("method", op.method), ("N", op.size), ("taylor_terms", terms),
                ("max_abs_error", max_err), ("l2_error", l2)]
        if rep is not None:
            rows += [("iterations", rep.iterations), ("converged", rep.converged),
                     ("final_residual", float(rep.residual_history[-1]))]
            rows += [(f"residual_{i}", float(r)) for i, r in enumerate(rep.residual_history)]
        write_csv(tmp / "report.csv", ["quantity", "value"], rows)
        if _figures(cfg, args):
            from .plotting import solution_figure
            solution_figure(tmp / "solution.png", op.nodes, numeric, exact, f"{cfg.problem}, {op.method}, N={op.size}")
    if rep is not None and not rep.converged:
        print(f"warning: {rep.message}", file=sys.stderr)
        return 2
    return 0


def cmd_convergence(cfg: ExperimentConfig, out: Path, args) -> int:
    combos = [(n, t) for n in cfg.resolution for t in cfg.taylor_terms]

    def job(combo):
        n, t = combo
        op, numeric, exact, _ = _solve_one(cfg, n, t)
        max_err, l2 = bvp.error_norms(numeric, exact)
        logger.info("convergence: N=%d terms=%d max_abs_error=%.3e", op.size, t, max_err)
        return {"N": op.size, "taylor_terms": t, "max_abs_error": max_err, "l2_error": l2}

    threads = max(1, int(getattr(args, "threads", 1) or 1))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(job, combos))
    else:
        rows = [job(c) for c in combos]
    with Staging(out) as tmp:
        write_csv(tmp / "convergence.csv", ["N", "taylor_terms", "max_abs_error", "l2_error"],
                  ((r["N"], r["taylor_terms"], r["max_abs_error"], r["l2_error"]) for r in rows))
        if _figures(cfg, args):
            from .plotting import convergence_figure
            convergence_figure(tmp / "convergence.png", rows)
    return 0


def cmd_pattern(cfg: ExperimentConfig, out: Path, args) -> int:
    threshold = float(cfg.output.get("threshold", 1e-12))
    n, terms = cfg.resolution[0], cfg.taylor_terms[0]
    if cfg.geometry["preset"] == "identity":
        size = int(cfg.geometry.get("size", n))
        mats = {k: np.eye(size) for k in cfg.orders}
        title = "identity"
    else:
        op = build_operator(cfg, n, terms)
        size = op.size
        mats = {k: op.derivative(k) for k in cfg.orders}
        title = op.method
    with Staging(out) as tmp:
        structural = bool(cfg.output.get("structural", False)) and cfg.geometry["preset"] != "identity"
        for i, k in enumerate(cfg.orders):
            if structural and k == 1:
                pattern = sparsity_pattern(op, structural=True)
            else:
                pattern = sparsity_pattern(mats[k], threshold)
            stem = "pattern" if i == 0 else f"pattern_order{k}"
            write_csv(tmp / f"{stem}.csv", ["row", "col"], pattern)
            if _figures(cfg, args):
                from .plotting import pattern_figure
                pattern_figure(tmp / f"{stem}.png", pattern, size, title)
    return 0


def flow_params(pp: dict) -> stability.FlowParams:
    known = {f for f in stability.FlowParams.__dataclass_fields__}
    extra = set(pp) - known
    if extra:
        raise ConfigError(f"unknown stability parameters {sorted(extra)}")
    kw = dict(pp)
    if "axial_wavenumber" in kw:
        v = kw["axial_wavenumber"]
        kw["axial_wavenumber"] = complex(v[0], v[1]) if isinstance(v, list) else complex(v)
    return stability.FlowParams(**kw)


def run_stability(cfg: ExperimentConfig, n: int):
    params = flow_params(cfg.problem_params)
    if cfg.method == "global":
        op = assemble_subdomains("global", geometry.global_domain(0.0, 1.0, n, 2))
    else:
        op = stability.radial_operator(params, n, cfg.method, float(cfg.geometry.get("overlap_scale", 2.5)),
                                       cfg.taylor_terms[0])
    base = stability.solve_base_flow(op, params)
    system = stability.assemble_eigensystem(op, base, params)
    eigs = stability.solve_spectrum(system)
    kept = stability.filter_spurious(eigs, float(cfg.output.get("spurious_threshold", 1e3)))
    return op, base, kept


def cmd_stability(cfg: ExperimentConfig, out: Path, args) -> int:
    t0 = time.perf_counter()
    op, base, kept = run_stability(cfg, cfg.resolution[0])
    logger.info("stability: N=%d, %d modes kept (%.1fs)", op.size, len(kept), time.perf_counter() - t0)
    with Staging(out) as tmp:
        write_csv(tmp / "baseflow.csv", ["r", "c_bar", "mu", "v_bar", "dv_bar"],
                  zip(base.nodes, base.c_bar, base.mu_bar, base.v_bar, base.dv_bar))
        write_csv(tmp / "spectrum.csv", ["re_omega", "im_omega"], ((w.real, w.imag) for w, _ in kept))
        if _figures(cfg, args):
            from .plotting import baseflow_figure, spectrum_figure
            baseflow_figure(tmp / "baseflow.png", base.nodes, base.v_bar, base.dv_bar, base.c_bar)
            spectrum_figure(tmp / "spectrum.png", [w for w, _ in kept])
    return 0


COMMANDS = {"solve": cmd_solve, "convergence": cmd_convergence, "pattern": cmd_pattern,
            "stability": cmd_stability}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semiglobal", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML experiment file")
        p.add_argument("--out", help="output directory (overrides output_dir in the config)")
        p.add_argument("--threads", type=int, default=1, help="parallel jobs for sweeps")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        out = Path(args.out or cfg.output_dir or "out")
        if args.command == "stability" and cfg.problem != "stability":
            raise ConfigError("the stability command needs problem = 'stability'")
        if args.command == "pattern" and cfg.problem == "stability":
            raise ConfigError("pattern needs a geometry-based problem")
        return COMMANDS[args.command](cfg, out, args)
    except (ConfigError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
