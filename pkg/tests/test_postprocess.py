import numpy as np
import pytest

from jmfem.mesh import generate_lshape, generate_unit_square, split_coords
from jmfem.postprocess import P2Field, enhance_local, oswald_average, p2_dofs, p2_to_p1_projection
from jmfem.quadrature import make_quadrature
from jmfem.spaces import project_displacement_jm, project_displacement_P_h
from jmfem.study import orders
from jmfem.tensors import elasticity_apply, lame_from_engineering

MAT = lame_from_engineering(1.0, 0.3)


def quadratic(x):
    X, Y = x[:, 0], x[:, 1]
    return np.stack([0.3 + X - 0.5 * Y + 0.7 * X**2 - 0.4 * X * Y + 0.2 * Y**2,
                     -0.1 + 0.6 * X + 0.25 * Y - 0.3 * X**2 + 0.9 * X * Y + 0.5 * Y**2], axis=1)


def quadratic_strain(x):
    X, Y = x[:, 0], x[:, 1]
    exx = 1.0 + 1.4 * X - 0.4 * Y
    eyy = 0.25 + 0.9 * X + 1.0 * Y
    exy = 0.5 * ((-0.5 - 0.4 * X + 0.4 * Y) + (0.6 - 0.6 * X + 0.9 * Y))
    return np.stack([exx, eyy, exy], axis=1)


def nodal_stress(mesh, strain):
    """Sub-triangle nodal values ``(nt, 3, 3, 3)`` of ``A strain`` for a linear strain."""
    pts = split_coords(mesh.coords)
    vals = elasticity_apply(MAT, strain(pts.reshape(-1, 2)))
    return vals.reshape(pts.shape[:3] + (3,))


def p2_nodes(mesh):
    z = mesh.coords
    mids = 0.5 * (z[:, [1, 2, 0]] + z[:, [2, 0, 1]])
    return np.concatenate([z, mids], axis=1)                 # (nt, 6, 2)


def interpolate_p2(mesh, fun):
    x = p2_nodes(mesh)
    return P2Field(mesh, fun(x.reshape(-1, 2)).reshape(x.shape).transpose(0, 2, 1))


@pytest.fixture(scope="module")
def mesh():
    return generate_unit_square(3)


@pytest.mark.parametrize("kind, proj", [("jm", project_displacement_jm),
                                        ("l2", project_displacement_P_h)])
def test_enhance_reproduces_global_quadratic(mesh, kind, proj):
    u_h = proj(quadratic, mesh)
    u_star = enhance_local(u_h, nodal_stress(mesh, quadratic_strain), MAT, mesh, kind)
    rng = np.random.default_rng(1)
    bary = rng.dirichlet(np.ones(3), size=(mesh.n_triangles, 5)).reshape(-1, 3)
    tri = np.repeat(np.arange(mesh.n_triangles), 5)
    x = np.einsum("ma,mad->md", bary, mesh.coords[tri])
    assert np.abs(u_star.values_at(tri, bary) - quadratic(x)).max() <= 1e-10


def test_enhance_constant_with_zero_stress(mesh):
    u_h = np.zeros((mesh.n_triangles, 2, 3))
    u_h[:, 0], u_h[:, 1] = 1.5, -0.25
    u_star = enhance_local(u_h, np.zeros((mesh.n_triangles, 3, 3, 3)), MAT, mesh)
    assert np.allclose(u_star.coef[:, 0], 1.5, atol=1e-13, rtol=0)
    assert np.allclose(u_star.coef[:, 1], -0.25, atol=1e-13, rtol=0)


@pytest.mark.parametrize("kind", ["jm", "l2"])
def test_enhance_constraint_rows_hold(kind):
    m = generate_lshape(1.0, 2)
    rng = np.random.default_rng(2)
    u_h = rng.standard_normal((m.n_triangles, 2, 3))
    s = rng.standard_normal((m.n_triangles, 3, 3, 3))
    u_star = enhance_local(u_h, s, MAT, m, kind)
    assert np.abs(u_star.project_p1(kind) - u_h).max() <= 1e-11


def test_p2_to_p1_projection_fixes_linears():
    for kind in ("jm", "l2"):
        P = p2_to_p1_projection(kind)
        # P2 nodal values of the three barycentric functions
        nodal = np.vstack([np.eye(3), 0.5 * (np.eye(3)[[1, 2, 0]] + np.eye(3)[[2, 0, 1]])])
        assert np.allclose(P @ nodal, np.eye(3), atol=1e-14)
    with pytest.raises(ValueError):
        p2_to_p1_projection("h1")


def test_oswald_keeps_continuous_field(mesh):
    u = interpolate_p2(mesh, quadratic)
    ua = oswald_average(u, orthogonalize=False)
    assert np.abs(ua.coef - u.coef).max() <= 1e-14


def test_oswald_mean_of_two_values():
    m = generate_unit_square(1)
    assert m.n_triangles == 2
    coef = np.zeros((2, 2, 6))
    coef[1] = 2.0
    ua = oswald_average(P2Field(m, coef), orthogonalize=False)
    shared = np.intersect1d(m.triangles[0], m.triangles[1])
    assert np.allclose(ua.nodal[shared], 1.0)
    # unshared vertices keep their own value
    own = np.setdiff1d(m.triangles[1], shared)
    assert np.allclose(ua.nodal[own], 2.0)


def test_oswald_output_continuous():
    m = generate_lshape(1.0, 2)
    rng = np.random.default_rng(3)
    ua = oswald_average(P2Field(m, rng.standard_normal((m.n_triangles, 2, 6))))
    interior = np.flatnonzero(~m.boundary_edge_mask)
    s = np.linspace(0.0, 1.0, 5)
    worst = 0.0
    for e in interior:
        a, b = m.edges[e]
        x = m.vertices[a] + s[:, None] * (m.vertices[b] - m.vertices[a])
        vals = []
        for t in m.e2t[e]:
            z = m.coords[t]
            T = np.array([z[1] - z[0], z[2] - z[0]]).T
            l12 = np.linalg.solve(T, (x - z[0]).T).T
            bary = np.column_stack([1 - l12.sum(1), l12])
            vals.append(ua.values_at(np.full(len(s), t), bary))
        worst = max(worst, np.abs(vals[0] - vals[1]).max())
    assert worst <= 1e-12


def test_oswald_vanishes_on_clamped_boundary(manufactured_levels):
    _, levels = manufactured_levels
    lv = levels[1]
    m = lv.mesh
    d = m.dirichlet_edges()
    assert len(d)
    nodes = np.concatenate([np.unique(m.edges[d]), m.n_vertices + d])
    assert np.all(lv.u_a.nodal[nodes] == 0.0)


def test_pure_traction_average_orthogonal_to_rigid_modes():
    m = generate_lshape(1.0, 2)
    rng = np.random.default_rng(4)
    ua = oswald_average(P2Field(m, rng.standard_normal((m.n_triangles, 2, 6))))
    rule = make_quadrature(4)
    x = rule.physical_points(m.coords)
    vals = ua.values(rule.points)
    w = m.areas[:, None] * rule.weights
    for mode in (lambda p: np.stack([np.ones(p.shape[:-1]), np.zeros(p.shape[:-1])], -1),
                 lambda p: np.stack([np.zeros(p.shape[:-1]), np.ones(p.shape[:-1])], -1),
                 lambda p: np.stack([-p[..., 1], p[..., 0]], -1)):
        assert abs(np.einsum("tq,tqk,tqk->", w, mode(x), vals)) <= 1e-12


def test_p2_dofs_shape(mesh):
    d = p2_dofs(mesh)
    assert d.shape == (mesh.n_triangles, 6)
    assert d.max() == mesh.n_vertices + mesh.n_edges - 1


def test_superconvergence_transfer(manufactured_levels):
    _, levels = manufactured_levels
    reps = [lv.report for lv in levels]
    post = orders(reps, "e0_u")[-1]
    raw = orders(reps, "e0_u_raw")[-1]
    gap = orders(reps, "gap_h")[-1]
    assert 1.7 <= post <= 2.3
    assert post - raw >= 0.7
    assert 1.7 <= gap <= 2.3
