"""End-to-end acceptance checks; each prints one ``ACCEPTANCE n: PASS|FAIL`` line."""

import time
from dataclasses import replace

import numpy as np
import pytest

from mvem.assembly import assemble_global, condition_number, solve_direct
from mvem.bases import build_vector_basis, orthonormalize_element_basis, orthonormalize_unit_interval_basis
from mvem.bases import scaled_monomial_vandermonde
from mvem.local import ALL_VARIANTS, DofiDofi, DRecipe, EdgeNormalDRecipe, element_context, interpolate_dofs
from mvem.local import l2_projector
from mvem.mesh import build_agglomerated_concave, build_sine_distorted
from mvem.problems import test1 as make_test1
from mvem.quadrature import gauss_legendre_unit_interval, polygon_quadrature
from mvem.study import RunConfig, compute_errors, family_mesh, run_convergence_study

from conftest import ELEMENTS, element_geometry, polynomial_problem, random_poly_field


@pytest.fixture
def verdict(capsys):
    def emit(label, ok, detail=""):
        with capsys.disabled():
            print(f"\nACCEPTANCE {label}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
        return ok

    return emit


def _sweep(**kw):
    report = run_convergence_study(RunConfig(condition=False, **kw))
    assert report.ok, [r.error for r in report.rows if r.error]
    return report


def _rates(report, attr):
    return {r.k: getattr(r, attr) for r in report.rows}


def test_orthonormal_bases(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for name in sorted(ELEMENTS):
        g = element_geometry(name)
        for k in range(9):
            q = polygon_quadrature(g.vertices, g.star_center, 2 * k + 2)
            V = scaled_monomial_vandermonde(g.centroid, g.diameter, q.nodes, k)
            Q = orthonormalize_element_basis(g.centroid, g.diameter, q, k).evaluate(V)
            gx, gy = build_vector_basis(g.centroid, g.diameter, k, "orthonormal", q).evaluate(V)
            w = q.weights[:, None]
            for G in (Q.T @ (w * Q), gx.T @ (w * gx) + gy.T @ (w * gy)):
                worst = max(worst, np.abs(G - np.eye(len(G))).max())
    r = gauss_legendre_unit_interval(10)
    T = orthonormalize_unit_interval_basis(8).evaluate(r.nodes)
    worst = max(worst, np.abs(T.T @ (r.weights[:, None] * T) - np.eye(T.shape[1])).max())
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 1.0
    assert verdict(1, ok, f"max |G - I| = {worst:.1e}, {elapsed:.2f} s")


def test_polynomial_reproduction(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for name in sorted(ELEMENTS):
        g = element_geometry(name)
        for k in range(6):
            for variant in ALL_VARIANTS:
                ctx = element_context(g, k, variant)
                Pi, _ = l2_projector(ctx)
                field = random_poly_field(ctx, k, np.random.default_rng(k))
                coef = Pi @ interpolate_dofs(field, ctx)
                q = ctx.fine_quad
                gx, gy = ctx.vector_at(q.nodes)
                ref = field(q.nodes)
                gap = (gx @ coef - ref[:, 0]) ** 2 + (gy @ coef - ref[:, 1]) ** 2
                worst = max(worst, np.sqrt(q.weights @ gap / (q.weights @ (ref**2).sum(axis=1))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 5.0
    assert verdict(2, ok, f"max relative L2 gap {worst:.1e}, {elapsed:.2f} s")


def test_patch_test(verdict):
    t0 = time.perf_counter()
    mesh = build_sine_distorted(4, 4, amplitude=0.3)
    worst = 0.0
    for k in range(4):
        problem = polynomial_problem(k)
        for variant in ("Mon(a)", "Ortho(b)"):
            for stab in (DofiDofi(1.0), DofiDofi(1e4), DRecipe(1.0), EdgeNormalDRecipe()):
                system = assemble_global(mesh, problem, k, variant, stab)
                errs = compute_errors(solve_direct(system), system, problem)
                worst = max(worst, errs.err_p, errs.err_u)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 10.0
    assert verdict(3, ok, f"max error {worst:.1e}, {elapsed:.2f} s")


def test_divergence_identity_in_sweeps(verdict):
    configs = [
        RunConfig("test1", family="concave", refinements=(1, 2), degrees=(0, 1, 2, 3), variants=ALL_VARIANTS),
        RunConfig("test2", params={"epsilon": 1e-6, "bc": "nearly-neumann"}, family="distorted",
                  refinements=(1, 2), degrees=(0, 2), variants=ALL_VARIANTS),
        RunConfig("test3", params={"d_par": 1e8, "bc": "mixed"}, refinements=(1, 2), degrees=(0, 1)),
    ]
    rows = [r for cfg in configs for r in run_convergence_study(replace(cfg, condition=False)).rows]
    failures = [r for r in rows if r.error]
    worst = max(r.div_defect for r in rows if r.div_defect is not None)
    ok = not failures and worst <= 1e-10
    assert verdict(4, ok, f"{len(rows)} runs, max relative defect {worst:.1e}, {len(failures)} failed")


def test_variant_equivalence(verdict):
    t0 = time.perf_counter()
    problem = make_test1()
    mesh = family_mesh("test2", "cartesian", 1, problem.domain)  # 5x5 grid
    dp = du = 0.0
    for k in range(4):
        for mono, ortho in (("Mon(a)", "Ortho(a)"), ("Mon(b)", "Ortho(b)")):
            systems = [assemble_global(mesh, problem, k, v, DofiDofi(1.0)) for v in (mono, ortho)]
            sols = [solve_direct(s) for s in systems]
            p, u = ([], []), ([], [])
            for c in range(mesh.n_cells):
                nodes = systems[0].contexts[c].fine_quad.nodes
                for i, (s, sol) in enumerate(zip(systems, sols)):
                    ctx = s.contexts[c]
                    p[i].append(ctx.pressure_at(nodes) @ sol.pressure[c])
                    u[i].append(np.column_stack([m @ sol.projected[c] for m in ctx.vector_at(nodes)]))
            # relative to the mesh-wide maximum: single cells can carry a zero mean pressure
            (p0, p1), (u0, u1) = [tuple(np.concatenate(x) for x in pair) for pair in (p, u)]
            dp = max(dp, np.abs(p0 - p1).max() / np.abs(p1).max())
            du = max(du, np.abs(u0 - u1).max() / np.abs(u1).max())
    elapsed = time.perf_counter() - t0
    ok = max(dp, du) <= 1e-8 and elapsed < 30.0
    assert verdict(5, ok, f"pressure gap {dp:.1e}, velocity gap {du:.1e}, {elapsed:.1f} s")


@pytest.fixture(scope="module")
def concave_sweep():
    t0 = time.perf_counter()
    report = _sweep(problem="test1", family="concave", refinements=(1, 2, 3), degrees=(0, 1, 2, 3),
                    stabilizations=("dofi-dofi(1)",))
    return report, time.perf_counter() - t0


def _rate_line(rates, floor):
    return ", ".join(f"k={k}: {r:.2f} (>= {k + floor})" for k, r in sorted(rates.items()))


def test_rates_concave_pressure(verdict, concave_sweep):
    report, elapsed = concave_sweep
    rates = _rates(report, "rate_p")
    ok = all(r >= k + 0.8 for k, r in rates.items())
    assert verdict("6a", ok, f"concave err_p rates {_rate_line(rates, 0.8)}, {elapsed:.0f} s")


def test_rates_concave_velocity(verdict, concave_sweep):
    report, elapsed = concave_sweep
    rates = _rates(report, "rate_u")
    ok = all(r >= k + 0.8 for k, r in rates.items())
    assert verdict("6b", ok, f"concave err_u rates {_rate_line(rates, 0.8)}")


def test_rates_magnetic_islands(verdict):
    t0 = time.perf_counter()
    report = _sweep(problem="test3", params={"d_par": 1.0, "bc": "dirichlet"}, refinements=(1, 2, 3),
                    degrees=(0, 2), stabilizations=("dofi-dofi(1)",))
    rp, ru = _rates(report, "rate_p"), _rates(report, "rate_u")
    ok = all(min(rp[k], ru[k]) >= k + 0.7 for k in rp)
    detail = f"err_p {_rate_line(rp, 0.7)}; err_u {_rate_line(ru, 0.7)}, {time.perf_counter() - t0:.0f} s"
    assert verdict("6c", ok, detail)


def test_conditioning_growth(verdict):
    t0 = time.perf_counter()
    problem = make_test1()
    mesh = build_agglomerated_concave(1, problem.domain)
    logc = {}
    for variant in ("Mon(a)", "Ortho(b)"):
        logc[variant] = np.array([
            np.log10(condition_number(assemble_global(mesh, problem, k, variant, DofiDofi(1.0))))
            for k in range(2, 6)
        ])
    elapsed = time.perf_counter() - t0
    ratio = logc["Mon(a)"][-1] - logc["Ortho(b)"][-1]
    ortho_steps = np.diff(logc["Ortho(b)"])
    mono_mean = np.diff(logc["Mon(a)"]).mean()
    ok = ratio >= 2 and ortho_steps.max() <= 1.5 and mono_mean >= 2 and elapsed < 120
    detail = (f"log10 cond k=5 gap {ratio:.1f}; Ortho(b) max step {ortho_steps.max():.2f}; "
              f"Mon(a) mean step {mono_mean:.2f}; {elapsed:.0f} s")
    assert verdict(7, ok, detail)


def test_anisotropy_rate(verdict):
    report = _sweep(problem="test2", params={"epsilon": 1e-6, "bc": "dirichlet"}, refinements=(1, 2, 3),
                    degrees=(1,), stabilizations=("dofi-dofi(1)",))
    rate = report.rows[0].rate_p
    assert verdict("8a", rate >= 1.7, f"eps=1e-6 err_p rate {rate:.2f} (>= 1.7)")


def _locking_ratios(variant, stab_for):
    errs = {}
    for eps in (1.0, 1e-6):
        report = _sweep(problem="test2", params={"epsilon": eps, "bc": "nearly-neumann"}, family="distorted",
                        refinements=(1, 2), degrees=(0,), variants=(variant,), stabilizations=(stab_for(eps),))
        errs[eps] = np.array([r.err_p for r in report.rows])
    return errs[1e-6] / errs[1.0]


def test_anisotropy_locking_shift(verdict):
    ratios = _locking_ratios("Ortho(a)", lambda eps: f"dofi-dofi({1 / eps!r})")
    ok = bool(np.all(ratios >= 5))
    info = _locking_ratios("Ortho(b)", lambda eps: "dofi-dofi(1)")
    detail = (f"Ortho(a) + dofi-dofi(1/eps) err_p ratios {np.round(ratios, 1).tolist()} (>= 5); "
              f"for reference Ortho(b) + dofi-dofi(1) gives {np.round(info, 2).tolist()}")
    assert verdict("8b", ok, detail)


def test_stabilization_scale(verdict):
    d_par = 1e8
    err = {}
    for stab in (DRecipe(1.0), DofiDofi(1 / d_par)):
        report = _sweep(problem="test3", params={"d_par": d_par, "bc": "mixed"}, refinements=(4,), degrees=(0,),
                        stabilizations=(stab.label,))
        err[stab.label] = report.rows[0].err_u
    d, s = err[DRecipe(1.0).label], err[DofiDofi(1 / d_par).label]
    assert verdict(9, d <= s, f"64x32 mesh err_u d-recipe {d:.4e} <= dofi-dofi(1/D_par) {s:.4e}")
