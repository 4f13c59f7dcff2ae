import numpy as np
import pytest

from jmfem.assembly import assemble
from jmfem.benchmarks import Benchmark, make_benchmark
from jmfem.estimate import (SubQuadrature, energy_norm, estimate, hypercircle_local,
                            hypercircle_terms, incompressible_local, l2_density, oscillation_f,
                            oscillation_g)
from jmfem.mesh import (BoundaryTag, generate_unit_square, refine_uniform, split_coords,
                        split_mesh, square_sides)
from jmfem.postprocess import AveragedDisplacement
from jmfem.solve import solve_saddle
from jmfem.spaces import projected_load, projected_traction
from jmfem.study import orders, solve_level
from jmfem.tensors import (Material, compliance_apply, contract, elasticity_apply,
                           lame_from_engineering, traction)

MAT = lame_from_engineering(1.0, 0.3)


# a clamped quadratic displacement with linear stress, which the method reproduces
def q_disp(x):
    X, Y = x[:, 0], x[:, 1]
    return np.stack([X * (1.0 + 0.5 * Y - 0.3 * X), X * (0.4 - 0.2 * X + 0.7 * Y)], axis=1)


def q_strain(x):
    X, Y = x[:, 0], x[:, 1]
    exx = 1.0 + 0.5 * Y - 0.6 * X
    eyy = 0.7 * X
    exy = 0.5 * (0.5 * X + 0.4 - 0.4 * X + 0.7 * Y)
    return np.stack([exx, eyy, exy], axis=1)


def quadratic_benchmark(material):
    def stress(x):
        return elasticity_apply(material, q_strain(x))

    # div of the linear stress; constant
    h = 1e-3
    x0 = np.array([[0.3, 0.4]])
    d = [(stress(x0 + h * e) - stress(x0 - h * e)) / (2 * h) for e in np.eye(2)]
    div = np.array([d[0][0, 0] + d[1][0, 2], d[0][0, 2] + d[1][0, 1]])
    return Benchmark(
        name="quadratic", material=material,
        base_mesh=lambda: generate_unit_square(2, square_sides(left=BoundaryTag.DIRICHLET)),
        body_load=lambda x: np.broadcast_to(-div, np.shape(x)).copy(),
        traction=lambda x, n: traction(stress(x), n),
        displacement=q_disp, stress=stress, strain=q_strain, pure_traction=False)


def continuous_p2(mesh, fun):
    pts = np.vstack([mesh.vertices, mesh.vertices[mesh.edges].mean(axis=1)])
    return AveragedDisplacement(mesh, fun(pts))


def nodal(mesh, fun):
    pts = split_coords(mesh.coords)
    return fun(pts.reshape(-1, 2)).reshape(pts.shape[:3] + (3,))


# ----------------------------------------------------------------------
def test_energy_norm_zero():
    m = generate_unit_square(2)
    assert energy_norm(MAT, lambda x: np.zeros((len(x), 3)), m) == 0.0


def test_energy_norm_identity_unit_square():
    # pointwise density of I is 1/2 for mu = lambda = 1 on a unit area
    m = generate_unit_square(3)
    val = energy_norm(Material(1.0, 1.0), lambda x: np.tile([1.0, 1.0, 0.0], (len(x), 1)), m)
    assert val == pytest.approx(np.sqrt(0.5), rel=1e-14)


def test_energy_norm_agrees_with_contraction():
    m = generate_unit_square(2)
    mat = Material(0.7, 3.2)

    def tau(x):
        return np.stack([np.sin(x[:, 0]), x[:, 0] * x[:, 1], np.cos(x[:, 1])], axis=1)

    q = SubQuadrature.on(m, 8)
    t = q.evaluate(tau)
    ref = np.sqrt(q.integrate(contract(compliance_apply(mat, t), t)).sum())
    assert energy_norm(mat, tau, m) == pytest.approx(ref, rel=1e-12)


def test_local_estimators_vanish_for_consistent_fields():
    m = generate_unit_square(2)
    ua = continuous_p2(m, q_disp)
    s = nodal(m, lambda x: elasticity_apply(MAT, q_strain(x)))
    assert hypercircle_local(s, ua, MAT).max() <= 1e-13
    assert incompressible_local(s, ua, MAT).max() <= 1e-13
    assert hypercircle_local(s, ua, MAT, triangle=3) <= 1e-13


def test_local_estimators_homogeneous():
    m = generate_unit_square(2)
    rng = np.random.default_rng(0)
    ua = continuous_p2(m, q_disp)
    s = rng.standard_normal((m.n_triangles, 3, 3, 3))
    base = hypercircle_local(s, ua, MAT)
    scaled = hypercircle_local(2.5 * s, AveragedDisplacement(m, 2.5 * ua.nodal), MAT)
    assert np.allclose(scaled, 2.5 * base, rtol=1e-13)
    base = incompressible_local(s, ua, MAT)
    scaled = incompressible_local(-3.0 * s, AveragedDisplacement(m, -3.0 * ua.nodal), MAT)
    assert np.allclose(scaled, 3.0 * base, rtol=1e-13)


def test_incompressible_local_direct_recomputation():
    m = generate_unit_square(2)
    rng = np.random.default_rng(1)
    ua = continuous_p2(m, q_disp)
    s = rng.standard_normal((m.n_triangles, 3, 3, 3))
    q = SubQuadrature.on(m, 2)
    for lam in (0.0, 1.0, 1e6):
        mat = Material(0.8, lam)
        d = compliance_apply(mat, q.stress(s)) - q.strain(ua)
        ref = np.sqrt(0.8 * q.integrate(l2_density(d)))
        assert np.allclose(incompressible_local(s, ua, mat), ref, rtol=1e-13)


def test_oscillation_constant_load_and_linear_traction_vanish():
    m = generate_unit_square(3)
    assert oscillation_f(lambda x: np.tile([2.0, -1.0], (len(x), 1)), m) <= 1e-14
    assert oscillation_f(None, m) == 0.0

    def g(x, n):
        return np.stack([1.0 + 2.0 * x[:, 0] - x[:, 1], 0.5 * x[:, 1] + 3.0 * x[:, 0]], axis=1)

    assert oscillation_g(g, m) <= 1e-13
    assert oscillation_g(None, m) == 0.0


def _dense_triangle_rule(n=30):
    # collapsed Gauss-Legendre rule on the reference triangle, barycentric points
    s, w = np.polynomial.legendre.leggauss(n)
    s, w = 0.5 * (s + 1.0), 0.5 * w
    a, b = np.meshgrid(s, s, indexing="ij")
    wa, wb = np.meshgrid(w, w, indexing="ij")
    x, y = a.ravel(), (b * (1.0 - a)).ravel()
    weights = (wa * wb * (1.0 - a)).ravel() * 2.0        # sums to 1
    return np.column_stack([1.0 - x - y, x, y]), weights


def test_oscillation_f_matches_dense_oracle():
    m = generate_unit_square(2)

    def f(x):
        return np.stack([x[:, 0] ** 2, np.zeros(len(x))], axis=1)

    bary, w = _dense_triangle_rule()
    total = 0.0
    for k in range(m.n_triangles):
        subs = split_coords(m.coords[k])                  # (3, 3, 2)
        area = m.areas[k] / 3.0
        pts = np.einsum("qa,iad->iqd", bary, subs)
        z = m.coords[k]
        T = np.array([z[1] - z[0], z[2] - z[0]]).T
        l12 = np.linalg.solve(T, (pts.reshape(-1, 2) - z[0]).T).T.reshape(3, -1, 2)
        lam = np.concatenate([1.0 - l12.sum(-1, keepdims=True), l12], axis=-1)
        fv = f(pts.reshape(-1, 2)).reshape(3, -1, 2)
        # sub-triangle constants c_i with (c, lambda_j)_K = (f, lambda_j)_K
        M = area * np.einsum("q,iqj->ji", w, lam)          # M[j, i] = int_{K_i} lambda_j
        rhs = area * np.einsum("q,iqj,iqk->jk", w, lam, fv)
        c = np.linalg.solve(M, rhs)                        # (3 sub, 2)
        d = fv - c[:, None, :]
        total += m.diameters[k] ** 2 * area * np.einsum("q,iqk,iqk->", w, d, d)
    assert oscillation_f(f, m) == pytest.approx(np.sqrt(total), rel=1e-10)


# ----------------------------------------------------------------------
def test_exact_data_gives_zero_errors():
    b = quadratic_benchmark(MAT)
    lv = solve_level(b, b.base_mesh())
    r = lv.report
    for key in ("e0_sigma", "e0_u", "eC_sigma", "eC_Aeps", "e_mean", "eta", "eta_inc"):
        assert getattr(r, key) <= 1e-9, key
    assert r.osc_f <= 1e-12 and r.osc_g <= 1e-12


def test_report_bookkeeping(manufactured_levels):
    _, levels = manufactured_levels
    for lv in levels:
        r = lv.report
        assert r.c_eff == pytest.approx(r.err_mean_abs / r.eta_abs, rel=1e-12)
        assert r.e_mean == pytest.approx(r.err_mean_abs / r.sigma_C, rel=1e-12)
        assert r.c_eff == pytest.approx(r.e_mean / r.eta, rel=1e-12)
        assert np.sum(r.eta_K**2) == pytest.approx(r.eta_abs**2, rel=1e-12)
        assert np.sum(r.eta_inc_K**2) == pytest.approx(r.eta_inc_abs**2, rel=1e-12)
        assert r.N == lv.mesh.n_triangles
        assert all(v >= 0 for k, v in r.scalars().items()
                   if isinstance(v, float) and not np.isnan(v))


def test_estimate_without_exact_solution(manufactured_levels):
    b, levels = manufactured_levels
    lv = levels[0]
    r = estimate(lv.solution, lv.u_a, None)
    assert np.isnan(r.e0_sigma) and np.isnan(r.c_eff)
    assert r.eta_abs == pytest.approx(lv.report.eta_abs, rel=1e-12)
    assert r.eta > 0 and r.eta_inc > 0


def test_estimator_orders_track_errors(manufactured_levels):
    _, levels = manufactured_levels
    reps = [lv.report for lv in levels]
    assert abs(orders(reps, "eta")[-1] - orders(reps, "e_mean")[-1]) <= 0.3
    inc_err = [r.e0_sigma + r.e0_u_inc for r in reps]
    err_order = np.log(inc_err[-2] / inc_err[-1]) / np.log(2.0)
    assert abs(orders(reps, "eta_inc")[-1] - err_order) <= 0.3
    assert 0.95 <= reps[-1].c_eff <= 1.05


def test_lambda_robust_band():
    mesh = refine_uniform(make_benchmark("manufactured").base_mesh())
    for nu in (0.3, 0.4, 0.49, 0.49999):
        r = solve_level(make_benchmark("manufactured", 1.0, nu), mesh).report
        ratio = r.eta_inc / (r.e0_sigma + r.e0_u_inc)
        assert 1.0 / 20.0 <= ratio <= 20.0, (nu, ratio)


def test_hypercircle_identities_against_reference():
    b = make_benchmark("manufactured", 1.0, 0.3)
    coarse = refine_uniform(b.base_mesh())
    lv = solve_level(b, coarse)
    fine = refine_uniform(split_mesh(coarse), 2)
    assert fine.n_triangles >= 16 * coarse.n_triangles
    system = assemble(fine, b.material, projected_load(b.body_load, coarse),
                      projected_traction(b.traction, coarse))
    ref, _ = solve_saddle(system)
    h = hypercircle_terms(lv.solution, lv.u_a, ref)
    assert h.pythagoras_defect <= 1e-2
    assert h.mean_defect <= 1e-7
    assert h.ref_mean == pytest.approx(0.5 * h.gap, rel=1e-6)
