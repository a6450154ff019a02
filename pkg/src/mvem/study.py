"""Error measurement and convergence/conditioning sweeps over mesh families."""

from __future__ import annotations

import itertools
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .assembly import assemble_global, condition_number, divergence_defect, solve_direct
from .local import DofVariant, parse_stabilization
from .mesh import build_agglomerated_concave, build_cartesian, build_sine_distorted
from .problems import ProblemSpec, builtin_problem, stabilization_catalog

DIVERGENCE_TOL = 1e-10
ZERO_NORM = 1e-14

# base cell counts of the level-1 cartesian grid per problem
_BASE_GRID = {"test1": (4, 4), "test2": (5, 5), "test3": (8, 4)}
FAMILIES = ("cartesian", "distorted", "concave")


class DivergenceIdentityError(AssertionError):
    pass


@dataclass(frozen=True)
class ErrorReport:
    err_p: float
    err_u: float
    absolute_p: bool = False
    absolute_u: bool = False


def compute_errors(solution, system, problem: ProblemSpec) -> ErrorReport:
    """Relative L2 errors of the pressure and of the projected velocity.

    Integrals use each element's fine rule (order 2k+4). A reference norm below
    ``ZERO_NORM`` switches that error to its absolute value and sets the flag.
    """
    if problem.exact_p is None or problem.exact_u is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    ep = eu = rp = ru = 0.0
    for ctx, pc, uc in zip(system.contexts, solution.pressure, solution.projected):
        q = ctx.fine_quad
        ph = ctx.pressure_at(q.nodes) @ pc
        gx, gy = ctx.vector_at(q.nodes)
        p = problem.exact_p(q.nodes)
        u = np.asarray(problem.exact_u(q.nodes))
        ep += q.weights @ (p - ph) ** 2
        eu += q.weights @ ((u[:, 0] - gx @ uc) ** 2 + (u[:, 1] - gy @ uc) ** 2)
        rp += q.weights @ p**2
        ru += q.weights @ (u**2).sum(axis=1)
    rp, ru = np.sqrt(rp), np.sqrt(ru)
    abs_p, abs_u = rp < ZERO_NORM, ru < ZERO_NORM
    err_p = np.sqrt(ep) if abs_p else np.sqrt(ep) / rp
    err_u = np.sqrt(eu) if abs_u else np.sqrt(eu) / ru
    return ErrorReport(float(err_p), float(err_u), bool(abs_p), bool(abs_u))


def convergence_rate(h, err) -> Optional[float]:
    """Least-squares slope of log(err) against log(h); None with fewer than two usable points."""
    h, err = np.asarray(h, dtype=float), np.asarray(err, dtype=float)
    ok = np.isfinite(h) & np.isfinite(err) & (h > 0) & (err > 0)
    if ok.sum() < 2 or np.ptp(np.log(h[ok])) == 0:
        return None
    return float(np.polyfit(np.log(h[ok]), np.log(err[ok]), 1)[0])


def family_mesh(problem: str, family: str, level: int, domain, amplitude: float = 0.3):
    if level < 1:
        raise ValueError("refinement levels start at 1")
    if family == "concave":
        return build_agglomerated_concave(level, domain)
    nx0, ny0 = _BASE_GRID[problem]
    nx, ny = nx0 * 2 ** (level - 1), ny0 * 2 ** (level - 1)
    if family == "cartesian":
        return build_cartesian(nx, ny, domain)
    if family == "distorted":
        return build_sine_distorted(nx, ny, domain, amplitude)
    raise ValueError(f"unknown mesh family {family!r}")


@dataclass(frozen=True)
class RunConfig:
    problem: str
    params: dict = field(default_factory=dict)
    family: str = "cartesian"
    refinements: tuple = (1,)
    degrees: tuple = (1,)
    variants: tuple = (DofVariant.ORTHO_B,)
    stabilizations: Optional[tuple] = None  # None means the problem's catalogue
    amplitude: float = 0.3
    output: Optional[str] = None
    format: str = "csv"
    seed: int = 0
    condition: bool = True
    condition_max_rows: int = 4000
    timing: bool = False
    threads: int = 1

    def problem_for(self, level: int) -> ProblemSpec:
        params = dict(self.params)
        if self.problem == "test2" and params.get("bc") == "nearly-neumann":
            params["level"] = level
        return builtin_problem(self.problem, **params)

    def stabilization_list(self) -> list:
        if self.stabilizations is None:
            catalog_params = {k: v for k, v in self.params.items() if k in ("epsilon", "d_par")}
            return stabilization_catalog(self.problem, **catalog_params)
        return [parse_stabilization(s) for s in self.stabilizations]


@dataclass
class RunRow:
    problem: str
    mesh: str
    level: int
    h: float
    k: int
    variant: str
    stabilization: str
    err_p: Optional[float] = None
    err_u: Optional[float] = None
    cond_K: Optional[float] = None
    rate_p: Optional[float] = None
    rate_u: Optional[float] = None
    wall_ms: Optional[float] = None
    absolute_error: bool = False
    div_defect: Optional[float] = None
    error: Optional[str] = None

    @property
    def key(self):
        return (self.problem, self.variant, self.stabilization, self.k, self.level)


@dataclass
class RunReport:
    config: RunConfig
    rows: list

    @property
    def ok(self) -> bool:
        return all(r.error is None for r in self.rows)

    def group(self, **match) -> list:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]

    def as_dicts(self) -> list:
        return [asdict(r) for r in self.rows]


def _run_single(config: RunConfig, level: int, k: int, variant: DofVariant, stab) -> RunRow:
    problem = config.problem_for(level)
    mesh = family_mesh(config.problem, config.family, level, problem.domain, config.amplitude)
    row = RunRow(config.problem, mesh.name, level, float(mesh.mesh_size()), k, variant.label, stab.label)
    t0 = time.perf_counter()
    try:
        system = assemble_global(mesh, problem, k, variant, stab)
        solution = solve_direct(system)
        row.div_defect = divergence_defect(solution, system)
        if not row.div_defect <= DIVERGENCE_TOL:
            raise DivergenceIdentityError(f"divergence identity violated: defect {row.div_defect:.2e}")
        errs = compute_errors(solution, system, problem)
        row.err_p, row.err_u = errs.err_p, errs.err_u
        row.absolute_error = errs.absolute_p or errs.absolute_u
        if config.condition and system.K.shape[0] <= config.condition_max_rows:
            row.cond_K = condition_number(system, config.condition_max_rows)
    except Exception as exc:  # recorded per run, the sweep goes on
        row.error = f"{type(exc).__name__}: {exc}"
    if config.timing:
        row.wall_ms = round((time.perf_counter() - t0) * 1e3, 3)
    return row


def _run_packed(args):
    return _run_single(*args)


def sweep_items(config: RunConfig) -> list:
    return list(itertools.product(config.refinements, config.degrees, config.variants, config.stabilization_list()))


def run_convergence_study(config: RunConfig, threads: Optional[int] = None) -> RunReport:
    """Full sweep over levels, degrees, variants and stabilizations.

    Each (variant, stabilization, k) group gets one rate per error, fitted over
    its successful refinements and stored on every row of the group. Rows come
    out in a fixed order whatever the number of worker processes.
    """
    threads = threads or config.threads or 1
    jobs = [(config, level, k, DofVariant.parse(v), s) for level, k, v, s in sweep_items(config)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs), os.cpu_count() or 1)) as pool:
            rows = list(pool.map(_run_packed, jobs))
    else:
        rows = [_run_single(*job) for job in jobs]
    rows.sort(key=lambda r: (r.variant, r.stabilization, r.k, r.level))

    for _, grp in itertools.groupby(rows, key=lambda r: (r.variant, r.stabilization, r.k)):
        grp = [r for r in grp if r.error is None]
        h = [r.h for r in grp]
        rate_p = convergence_rate(h, [r.err_p for r in grp])
        rate_u = convergence_rate(h, [r.err_u for r in grp])
        for r in grp:
            r.rate_p, r.rate_u = rate_p, rate_u
    return RunReport(config, rows)


def quick_config(problem: str, **overrides) -> RunConfig:
    """RunConfig with the problem's default mesh family, handy for scripts and tests."""
    family = "concave" if problem == "test1" else "cartesian"
    return replace(RunConfig(problem, family=family), **overrides)
