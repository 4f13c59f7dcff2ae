"""Uniform and adaptive convergence studies, marking and CSV tables."""
from __future__ import annotations

import configparser
import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from .assembly import assemble
from .benchmarks import BENCHMARKS, Benchmark, make_benchmark
from .estimate import ErrorReport, estimate
from .mesh import MacroMesh, read_mesh, refine, refine_uniform
from .postprocess import enhance_local, oswald_average
from .solve import DEFAULT_TOL, solve_saddle

log = logging.getLogger(__name__)

MODES = ("uniform", "adaptive")
ESTIMATORS = ("hypercircle", "incompressible", "both")
ADAPTIVE_BENCHMARKS = ("lshape", "hole")
DEFAULT_BUDGET = 50000
DEFAULT_MAX_ITERATIONS = 25

UNIFORM_COLUMNS = ("N", "e0_sigma", "oc", "e0_u", "oc", "eC_sigma", "oc", "eC_Aeps", "oc",
                   "e_mean", "oc", "c_eff")
ADAPTIVE_COLUMNS = ("N", "e0_sigma", "eC_sigma", "eC_Aeps", "e_mean", "eta", "eta_inc", "c_eff")
ORDER_NOTE = "# oc: observed order in h = log(e_prev/e_next) / log(sqrt(N_next/N_prev)), h ~ N^(-1/2)"


class StudyError(RuntimeError):
    """A stage of a study failed; the message names the level."""


@dataclass
class StudyConfig:
    """Parameters of one study.

    ``levels`` counts uniform meshes (the base mesh is level 0); for
    adaptive runs the loop stops once ``N > budget`` or after
    ``max_iterations`` solves.
    """

    benchmark: str = "manufactured"
    nu: Sequence[float] = (0.3,)
    E: float = 1.0
    levels: int = 4
    mode: str = "uniform"
    estimator: str = "hypercircle"
    theta: float = 0.25
    tol: float = DEFAULT_TOL
    out: Optional[str] = None
    mesh_in: Optional[str] = None
    budget: int = DEFAULT_BUDGET
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    method: str = "JM"

    def __post_init__(self):
        if isinstance(self.nu, (int, float)):
            self.nu = (float(self.nu),)
        self.nu = tuple(float(v) for v in self.nu)
        self.validate()

    def validate(self) -> None:
        if self.benchmark not in BENCHMARKS:
            raise ValueError(f"benchmark must be one of {BENCHMARKS}, got {self.benchmark!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.levels < 1:
            raise ValueError("levels must be at least 1")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if not 0.0 < self.tol <= 1e-6:
            raise ValueError("tol must lie in (0, 1e-6]")
        if self.budget < 1 or self.max_iterations < 1:
            raise ValueError("budget and max_iterations must be positive")
        if not self.nu or any(not 0.0 <= v < 0.5 for v in self.nu):
            raise ValueError("every nu must lie in [0, 0.5)")
        if self.mode == "adaptive" and self.benchmark not in ADAPTIVE_BENCHMARKS:
            raise ValueError(f"adaptive mode needs one of {ADAPTIVE_BENCHMARKS}")
        if self.method.upper() != "JM":
            raise ValueError("only the JM method is available")


_CONFIG_TYPES = {"nu": "floats", "E": float, "levels": int, "theta": float, "tol": float,
                 "budget": int, "max_iterations": int}


def parse_config_text(text: str, section: str = "study") -> dict:
    """Key-value settings from an INI-style text (section ``[study]``)."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string(text if "[" in text else f"[{section}]\n{text}")
    if not cp.has_section(section):
        raise ValueError(f"config has no [{section}] section")
    out = {}
    for key, raw in cp.items(section):
        key = key.replace("-", "_")
        if key not in StudyConfig.__dataclass_fields__:
            raise ValueError(f"unknown config key {key!r}")
        kind = _CONFIG_TYPES.get(key, str)
        if kind == "floats":
            out[key] = tuple(float(v) for v in raw.replace(",", " ").split())
        else:
            out[key] = kind(raw)
    return out


def load_config(path, **overrides) -> StudyConfig:
    """Read a config file and apply non-None overrides."""
    values = parse_config_text(Path(path).read_text())
    values.update({k: v for k, v in overrides.items() if v is not None})
    return StudyConfig(**values)


# ----------------------------------------------------------------------
@dataclass
class LevelResult:
    mesh: MacroMesh
    solution: object
    u_star: object
    u_a: object
    report: ErrorReport
    solve_report: object = field(repr=False, default=None)


def solve_level(benchmark: Benchmark, mesh: MacroMesh, tol: float = DEFAULT_TOL) -> LevelResult:
    """Assemble, solve, postprocess and estimate on one mesh."""
    system = assemble(mesh, benchmark.material, benchmark.body_load, benchmark.traction)
    sol, srep = solve_saddle(system, tol)
    u_star = enhance_local(sol.u_local(), sol.stress_nodal(), sol.material, mesh)
    u_a = oswald_average(u_star)
    rep = estimate(sol, u_a, benchmark)
    return LevelResult(mesh, sol, u_star, u_a, rep, srep)


def _benchmark(config: StudyConfig, nu: float) -> tuple[Benchmark, MacroMesh]:
    b = make_benchmark(config.benchmark, config.E, nu)
    mesh = read_mesh(config.mesh_in) if config.mesh_in else b.base_mesh()
    return b, mesh


def _guarded(stage: str, fn, *args):
    try:
        return fn(*args)
    except Exception as exc:                      # re-raised with context
        raise StudyError(f"{stage}: {type(exc).__name__}: {exc}") from exc


def run_uniform(config: StudyConfig, nu: Optional[float] = None, keep: bool = False):
    """One report per uniform level; with ``keep`` also the :class:`LevelResult` list."""
    nu = config.nu[0] if nu is None else nu
    b, mesh = _benchmark(config, nu)
    reports, results = [], []
    for level in range(config.levels):
        if level:
            mesh = refine_uniform(mesh)
        res = _guarded(f"level {level} (N={mesh.n_triangles}, nu={nu})", solve_level, b, mesh,
                       config.tol)
        log.info("uniform level %d: N=%d e0_sigma=%.3e", level, mesh.n_triangles,
                 res.report.e0_sigma)
        reports.append(res.report)
        if keep:
            results.append(res)
    return (reports, results) if keep else reports


def mark(eta_K, theta: float = 0.25, eta_inc_K=None) -> np.ndarray:
    """Indices with ``eta(K) >= theta * max eta``; union with the second estimator if given."""
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    sets = []
    for vals in (eta_K, eta_inc_K):
        if vals is None:
            continue
        vals = np.asarray(vals, dtype=float)
        if vals.size == 0:
            raise ValueError("no element values to mark")
        sets.append(np.flatnonzero(vals >= theta * vals.max()))
    if not sets:
        raise ValueError("no element values to mark")
    return np.unique(np.concatenate(sets))


def run_adaptive(config: StudyConfig, nu: Optional[float] = None, keep_meshes: bool = False):
    """SOLVE, ESTIMATE, MARK, REFINE until ``N > budget`` or the iteration limit."""
    nu = config.nu[0] if nu is None else nu
    b, mesh = _benchmark(config, nu)
    reports, meshes = [], []
    for it in range(config.max_iterations):
        res = _guarded(f"iteration {it} (N={mesh.n_triangles}, nu={nu})", solve_level, b, mesh,
                       config.tol)
        reports.append(res.report)
        if keep_meshes:
            meshes.append(mesh)
        log.info("adaptive iteration %d: N=%d eta=%.3e", it, mesh.n_triangles, res.report.eta)
        if mesh.n_triangles > config.budget:
            break
        r = res.report
        if config.estimator == "hypercircle":
            marked = mark(r.eta_K, config.theta)
        elif config.estimator == "incompressible":
            marked = mark(r.eta_inc_K, config.theta)
        else:
            marked = mark(r.eta_K, config.theta, r.eta_inc_K)
        mesh = refine(mesh, marked)
    return (reports, meshes) if keep_meshes else reports


def run_study(config: StudyConfig) -> dict:
    """Reports for every ``nu`` of the config, keyed by ``nu``."""
    runner = run_uniform if config.mode == "uniform" else run_adaptive
    return {nu: runner(config, nu) for nu in config.nu}


# ----------------------------------------------------------------------
def observed_order(e_prev: float, e_next: float, n_prev: int, n_next: int) -> float:
    """Order in h with ``h ~ N^(-1/2)``."""
    return math.log(e_prev / e_next) / math.log(math.sqrt(n_next / n_prev))


def orders(reports: Sequence[ErrorReport], key: str, in_N: bool = False) -> np.ndarray:
    """Observed orders between consecutive reports (in h, or in N when ``in_N``)."""
    vals = [observed_order(getattr(a, key), getattr(b, key), a.N, b.N)
            for a, b in zip(reports[:-1], reports[1:])]
    return np.asarray(vals) / (2.0 if in_N else 1.0)


def fitted_order_in_N(reports: Sequence[ErrorReport], key: str) -> float:
    """Least-squares slope ``-d log e / d log N``."""
    N = np.log([r.N for r in reports])
    e = np.log([getattr(r, key) for r in reports])
    return float(-np.polyfit(N, e, 1)[0])


def _fmt(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6g}"


def table_rows(reports: Sequence[ErrorReport], mode: str = "uniform") -> list[list[str]]:
    rows = []
    for i, r in enumerate(reports):
        if mode == "uniform":
            row = [str(r.N)]
            for key in ("e0_sigma", "e0_u", "eC_sigma", "eC_Aeps", "e_mean"):
                row.append(_fmt(getattr(r, key)))
                if i == 0:
                    row.append("")
                else:
                    p = reports[i - 1]
                    try:
                        row.append(_fmt(observed_order(getattr(p, key), getattr(r, key), p.N, r.N)))
                    except (ValueError, ZeroDivisionError):
                        row.append("")
            row.append(_fmt(r.c_eff))
        else:
            row = [str(r.N)] + [_fmt(getattr(r, k)) for k in ADAPTIVE_COLUMNS[1:]]
        rows.append(row)
    return rows


def write_table(reports: Sequence[ErrorReport], fh: TextIO, mode: str = "uniform") -> None:
    """Write the CSV table to an open stream; the first line states the order convention."""
    if not reports:
        raise ValueError("no reports to write")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    header = UNIFORM_COLUMNS if mode == "uniform" else ADAPTIVE_COLUMNS
    fh.write(ORDER_NOTE + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    w.writerows(table_rows(reports, mode))


def emit_table(reports: Sequence[ErrorReport], path, mode: str = "uniform") -> Path:
    """Write the CSV table to ``path``."""
    if not reports:
        raise ValueError("no reports to write")
    path = Path(path)
    with path.open("w", newline="") as fh:
        write_table(reports, fh, mode)
    return path


def read_table(path) -> tuple[list[str], list[list[Optional[float]]]]:
    """Header and numeric rows of an emitted table (empty cells become None)."""
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    conv = [[float(c) if c != "" else None for c in row] for row in rows[1:]]
    return rows[0], conv


def output_paths(out, nus: Iterable[float]) -> dict:
    """One file per Poisson ratio; a suffix is added when there are several."""
    nus = list(nus)
    out = Path(out)
    if len(nus) == 1:
        return {nus[0]: out}
    return {nu: out.with_name(f"{out.stem}_nu{nu:g}{out.suffix or '.csv'}") for nu in nus}


def with_overrides(config: StudyConfig, **kw) -> StudyConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
