"""Energy norms, a posteriori estimators, oscillations and exact-solution errors.

All integrals run over the sub-triangles of the barycentric split, on which
the discrete stresses are polynomial.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .mesh import MacroMesh, locate_points
from .postprocess import P2Field
from .quadrature import gauss_line, make_quadrature
from .spaces import (bary_gradients, edge_traction_moments, equilibrium_projection, sub_coordinates,
                     project_displacement_jm, project_displacement_P_h, sub_quadrature)
from .tensors import FROB_WEIGHTS, Material, compliance_apply, elasticity_apply, energy_density

ERROR_ORDER = 8
GRADED_LEVELS = 40


@lru_cache(maxsize=None)
def graded_rule(order: int, levels: int = GRADED_LEVELS):
    """Composite rule on the reference triangle graded towards vertex 0.

    The triangle is shrunk by halves towards the vertex; each ring consists
    of three of the four red-refinement children. Returns barycentric points
    ``(m, 3)`` and weights summing to one.
    """
    rule = make_quadrature(order)
    pts, wts = [], []
    corners = np.eye(3)
    for k in range(levels + 1):
        s = 0.5**k
        T = np.array([corners[0], corners[0] + s * (corners[1] - corners[0]),
                      corners[0] + s * (corners[2] - corners[0])])
        m01, m02, m12 = (T[0] + T[1]) / 2, (T[0] + T[2]) / 2, (T[1] + T[2]) / 2
        kids = [(m01, T[1], m12), (m02, m12, T[2]), (m01, m12, m02)]
        if k == levels:
            kids = [tuple(T)]
        for kid in kids:
            kid = np.array(kid)
            area = (0.25 if k < levels else 1.0) * s * s
            pts.append(rule.points @ kid)
            wts.append(rule.weights * area)
    return np.concatenate(pts), np.concatenate(wts)


@dataclass(frozen=True)
class SubQuadrature:
    """Quadrature on all sub-triangles of a mesh, stored as flat point lists.

    ``tri`` and ``sub`` give the macro triangle and sub-triangle of each
    point, ``mu`` its sub-triangle and ``bary`` its macro barycentric
    coordinates. Sub-triangles with a vertex at one of ``singular_points``
    use a rule graded towards that vertex.
    """

    n_triangles: int
    tri: np.ndarray
    sub: np.ndarray
    mu: np.ndarray
    bary: np.ndarray
    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def on(cls, mesh: MacroMesh, order: int = ERROR_ORDER, singular_points=()) -> "SubQuadrature":
        nt = mesh.n_triangles
        rule = make_quadrature(order)
        nq = len(rule.weights)
        tri = np.repeat(np.arange(nt), 3 * nq)
        sub = np.tile(np.repeat(np.arange(3), nq), nt)
        mu = np.tile(rule.points, (3 * nt, 1))
        w = np.tile(rule.weights, 3 * nt) * (mesh.areas / 3.0)[tri]
        extra = []
        for sp in singular_points:
            hit_t, hit_v = np.nonzero(np.all(np.isclose(mesh.coords, np.asarray(sp, float),
                                                        rtol=0.0, atol=1e-12), axis=2))
            for t, v in zip(hit_t, hit_v):
                # the vertex is node 0 of sub-triangle v-1 and node 1 of sub-triangle v-2
                for i, node in (((v - 1) % 3, 0), ((v - 2) % 3, 1)):
                    extra.append((t, i, node))
        if extra:
            gp, gw = graded_rule(order)
            drop = np.zeros(len(tri), dtype=bool)
            add = []
            for t, i, node in extra:
                drop[(t * 3 + i) * nq:(t * 3 + i + 1) * nq] = True
                perm = [node] + [k for k in range(3) if k != node]
                m = np.empty_like(gp)
                m[:, perm] = gp
                add.append((t, i, m, gw * mesh.areas[t] / 3.0))
            keep = ~drop
            tri = np.concatenate([tri[keep]] + [np.full(len(a[2]), a[0]) for a in add])
            sub = np.concatenate([sub[keep]] + [np.full(len(a[2]), a[1]) for a in add])
            mu = np.concatenate([mu[keep]] + [a[2] for a in add])
            w = np.concatenate([w[keep]] + [a[3] for a in add])
        bary = np.empty_like(mu)
        for i in range(3):
            sel = sub == i
            bary[sel, i] = mu[sel, 2] / 3.0
            bary[sel, (i + 1) % 3] = mu[sel, 0] + mu[sel, 2] / 3.0
            bary[sel, (i + 2) % 3] = mu[sel, 1] + mu[sel, 2] / 3.0
        pts = np.einsum("ma,mad->md", bary, mesh.coords[tri])
        return cls(nt, tri, sub, mu, bary, pts, w)

    def evaluate(self, fun: Callable) -> np.ndarray:
        """Apply a point function ``(m, 2) -> (m, c)`` at every point."""
        return np.asarray(fun(self.points))

    def stress(self, nodal: np.ndarray) -> np.ndarray:
        """Discrete stress from sub-triangle nodal tensors ``(nt, 3, 3, 3)``."""
        return np.einsum("ma,mac->mc", self.mu, nodal[self.tri, self.sub])

    def strain(self, u: P2Field) -> np.ndarray:
        return u.strain_at(self.tri, self.bary)

    def integrate(self, density: np.ndarray) -> np.ndarray:
        """Per-triangle integrals of a scalar density given at the points."""
        return np.bincount(self.tri, weights=self.weights * density, minlength=self.n_triangles)


def l2_density(tau: np.ndarray) -> np.ndarray:
    return np.einsum("...c,c,...c->...", tau, FROB_WEIGHTS, tau)


def energy_norm(material: Material, tau, mesh: MacroMesh, order: int = ERROR_ORDER) -> float:
    """``(sum_K int_K (C tau):tau)^(1/2)`` for a point function ``tau(x) -> (m, 3)``."""
    q = SubQuadrature.on(mesh, order)
    vals = q.evaluate(tau) if callable(tau) else np.asarray(tau)
    return float(np.sqrt(q.integrate(energy_density(material, vals)).sum()))


def _select(local: np.ndarray, triangle):
    return local if triangle is None else float(local[triangle])


def hypercircle_local(sigma_nodal: np.ndarray, u_a: P2Field, material: Material,
                      triangle: Optional[int] = None, order: int = 2):
    """``eta(K) = 1/2 ||sigma_h - A eps(u^a)||_{C,K}`` on every (or one) triangle."""
    q = SubQuadrature.on(u_a.mesh, order)
    d = q.stress(sigma_nodal) - elasticity_apply(material, q.strain(u_a))
    return _select(0.5 * np.sqrt(q.integrate(energy_density(material, d))), triangle)


def incompressible_local(sigma_nodal: np.ndarray, u_a: P2Field, material: Material,
                         triangle: Optional[int] = None, order: int = 2):
    """``eta_inc(K) = mu^(1/2) ||C sigma_h - eps(u^a)||_{0,K}`` on every (or one) triangle.

    The squared local values sum to the square of the global robust estimator.
    """
    q = SubQuadrature.on(u_a.mesh, order)
    d = compliance_apply(material, q.stress(sigma_nodal)) - q.strain(u_a)
    return _select(np.sqrt(material.mu * q.integrate(l2_density(d))), triangle)


def oscillation_f(f: Optional[Callable], mesh: MacroMesh, order: int = ERROR_ORDER) -> float:
    """``(sum_K h_K^2 ||f - P f||_K^2)^(1/2)`` with ``P f`` the equilibrium projection.

    ``P f`` is the sub-triangle-wise constant load balanced by ``div sigma_h``.
    """
    if f is None:
        return 0.0
    q = SubQuadrature.on(mesh, order)
    Pf = equilibrium_projection(f, mesh, order)             # (nt, 3, 2)
    d = q.evaluate(f) - Pf[q.tri, q.sub]
    per = q.integrate(np.einsum("mk,mk->m", d, d))
    return float(np.sqrt(np.sum(mesh.diameters**2 * per)))


def oscillation_g(g: Optional[Callable], mesh: MacroMesh, npts: int = 10) -> float:
    """``(sum_{E in Gamma_N} h_E ||g - Q_E g||_E^2)^(1/2)``."""
    edges = mesh.traction_edges()
    if g is None or len(edges) == 0:
        return 0.0
    mom = edge_traction_moments(g, mesh, edges, npts=npts)
    s, w = gauss_line(npts + 2)
    v = mesh.vertices
    p0, p1 = v[mesh.edges[edges, 0]], v[mesh.edges[edges, 1]]
    x = p0[:, None] + s[None, :, None] * (p1 - p0)[:, None]
    n = np.broadcast_to(mesh.edge_normals[edges][:, None], x.shape)
    vals = np.asarray(g(x.reshape(-1, 2), n.reshape(-1, 2))).reshape(x.shape)
    Qg = mom[:, None, :2] + (2.0 * s - 1.0)[None, :, None] * mom[:, None, 2:]
    L = mesh.edge_lengths[edges]
    sq = L * np.einsum("q,eqk->e", w, (vals - Qg) ** 2)
    return float(np.sqrt(np.sum(L * sq)))


# ----------------------------------------------------------------------
# broken norm of discontinuous P1 fields
def _edge_endpoint_values(v_local: np.ndarray, mesh: MacroMesh, side: int, edges: np.ndarray):
    """Values ``(m, 2, 2)`` (endpoint, component) of a P1 field from one side of each edge."""
    t = mesh.e2t[edges, side]
    out = np.empty((len(edges), 2, 2))
    for k in range(2):
        gv = mesh.edges[edges, k]
        loc = np.argmax(mesh.triangles[t] == gv[:, None], axis=1)
        out[:, k] = v_local[t, :, loc]
    return out


def broken_norm(v_local: np.ndarray, mesh: MacroMesh) -> float:
    """``||v||_h`` of a discontinuous P1 field ``(nt, 2, 3)``.

    Elementwise strains plus ``h_E^-1``-scaled squared jumps over interior
    edges and squared traces over clamped edges.
    """
    v_local = np.asarray(v_local, dtype=float)
    g = np.einsum("tka,tad->tkd", v_local, bary_gradients(mesh.coords))
    eps = np.stack([g[:, 0, 0], g[:, 1, 1], 0.5 * (g[:, 0, 1] + g[:, 1, 0])], axis=1)
    total = np.sum(mesh.areas * l2_density(eps))

    def scaled_sq(j):
        # h_E^-1 ||linear jump||^2_E with endpoint values j (m, 2, 2)
        return np.sum((j[:, 0] ** 2 + j[:, 0] * j[:, 1] + j[:, 1] ** 2), axis=1) / 3.0

    interior = np.flatnonzero(~mesh.boundary_edge_mask)
    if len(interior):
        jump = _edge_endpoint_values(v_local, mesh, 0, interior) \
            - _edge_endpoint_values(v_local, mesh, 1, interior)
        total += scaled_sq(jump).sum()
    clamped = mesh.dirichlet_edges()
    if len(clamped):
        total += scaled_sq(_edge_endpoint_values(v_local, mesh, 0, clamped)).sum()
    return float(np.sqrt(total))


# ----------------------------------------------------------------------
@dataclass
class ErrorReport:
    """Errors and estimators on one mesh.

    Relative quantities follow the benchmark definitions; without an exact
    solution the error fields are NaN and the estimators are scaled by the
    discrete stress norms instead.
    """

    N: int
    n_dofs: int = 0
    e0_sigma: float = np.nan
    e0_u: float = np.nan
    eC_sigma: float = np.nan
    eC_Aeps: float = np.nan
    e_mean: float = np.nan
    c_eff: float = np.nan
    eta: float = np.nan
    eta_inc: float = np.nan
    e0_u_inc: float = np.nan
    osc_f: float = 0.0
    osc_g: float = 0.0
    gap_h: float = np.nan          # ||P u - u_h||_h
    e0_u_raw: float = np.nan       # broken ||eps(u) - eps(u_h)|| / ||eps(u)||
    h_min: float = np.nan
    h_min_center: tuple = (np.nan, np.nan)
    # absolute numerators and scales
    err_mean_abs: float = np.nan
    eta_abs: float = np.nan
    eta_inc_abs: float = np.nan
    sigma_C: float = np.nan
    sigma_0: float = np.nan
    eta_K: np.ndarray = field(default=None, repr=False)
    eta_inc_K: np.ndarray = field(default=None, repr=False)

    def scalars(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if f.name not in ("eta_K", "eta_inc_K")}


def estimate(solution, u_a: P2Field, benchmark=None, order: int = ERROR_ORDER,
             gap_projection: str = "jm") -> ErrorReport:
    """Estimators, oscillations and (when available) exact errors.

    Parameters
    ----------
    solution : MixedSolution
    u_a : AveragedDisplacement
    benchmark : Benchmark, optional
        Supplies the load, the traction and possibly the exact solution.
    """
    mesh, m = solution.mesh, solution.material
    sing = getattr(benchmark, "singular_points", ()) if benchmark is not None else ()
    q = SubQuadrature.on(mesh, order, sing)
    sh = q.stress(solution.stress_nodal())
    ea = q.strain(u_a)
    Aea = elasticity_apply(m, ea)
    integ = q.integrate

    eta_K = 0.5 * np.sqrt(integ(energy_density(m, sh - Aea)))
    eta_inc_K = np.sqrt(m.mu * integ(l2_density(compliance_apply(m, sh) - ea)))
    eta_abs = float(np.sqrt(np.sum(eta_K**2)))
    eta_inc_abs = float(np.sqrt(np.sum(eta_inc_K**2)))
    k = int(np.argmin(mesh.diameters))
    rep = ErrorReport(N=mesh.n_triangles,
                      n_dofs=solution.space.n_sigma + solution.space.n_u,
                      eta_K=eta_K, eta_inc_K=eta_inc_K, eta_abs=eta_abs,
                      eta_inc_abs=eta_inc_abs, h_min=float(mesh.diameters[k]),
                      h_min_center=tuple(mesh.barycenters[k]))
    f = g = None
    if benchmark is not None:
        f, g = benchmark.body_load, benchmark.traction
    rep.osc_f = oscillation_f(f, mesh, order)
    rep.osc_g = oscillation_g(g, mesh)

    if benchmark is None or not benchmark.has_exact:
        sC = float(np.sqrt(integ(energy_density(m, sh)).sum()))
        s0 = float(np.sqrt(integ(l2_density(sh)).sum()))
        rep.sigma_C, rep.sigma_0 = sC, s0
        rep.eta = eta_abs / sC if sC > 0 else np.nan
        rep.eta_inc = eta_inc_abs * m.mu**0.5 / s0 if s0 > 0 else np.nan
        return rep

    s = q.evaluate(benchmark.stress)
    e = q.evaluate(benchmark.strain)
    sC = float(np.sqrt(integ(energy_density(m, s)).sum()))
    s0 = float(np.sqrt(integ(l2_density(s)).sum()))
    e0 = float(np.sqrt(integ(l2_density(e)).sum()))

    def cnorm(t):
        return float(np.sqrt(integ(energy_density(m, t)).sum()))

    def l2norm(t):
        return float(np.sqrt(integ(l2_density(t)).sum()))

    rep.sigma_C, rep.sigma_0 = sC, s0
    rep.e0_sigma = l2norm(s - sh) / s0
    rep.e0_u = l2norm(e - ea) / e0
    rep.eC_sigma = cnorm(s - sh) / sC
    rep.eC_Aeps = cnorm(s - Aea) / sC
    rep.err_mean_abs = cnorm(s - 0.5 * (sh + Aea))
    rep.e_mean = rep.err_mean_abs / sC
    rep.eta = eta_abs / sC
    rep.c_eff = rep.err_mean_abs / eta_abs if eta_abs > 0 else np.inf
    # mu^(1/2) ||.|| / (mu^(-1/2) ||sigma||)
    rep.eta_inc = eta_inc_abs * m.mu**0.5 / s0
    rep.e0_u_inc = m.mu * l2norm(e - ea) / s0

    if benchmark.displacement is not None:
        proj = project_displacement_jm if gap_projection == "jm" else project_displacement_P_h
        Pu = proj(benchmark.displacement, mesh, order)
        rep.gap_h = broken_norm(Pu - solution.u_local(), mesh)
    g_h = np.einsum("tka,tad->tkd", solution.u_local(), bary_gradients(mesh.coords))
    eh = np.stack([g_h[:, 0, 0], g_h[:, 1, 1], 0.5 * (g_h[:, 0, 1] + g_h[:, 1, 0])], axis=1)
    rep.e0_u_raw = l2norm(e - eh[q.tri]) / e0
    return rep



# ----------------------------------------------------------------------
# hypercircle check against a reference solution
@dataclass(frozen=True)
class HypercircleTerms:
    """Energy distances between a reference stress and the two admissible fields."""

    ref_sigma: float      # ||sigma_ref - sigma_h||_C
    ref_Aeps: float       # ||sigma_ref - A eps(u^a)||_C
    gap: float            # ||sigma_h - A eps(u^a)||_C
    ref_mean: float       # ||sigma_ref - (sigma_h + A eps(u^a)) / 2||_C
    ref_norm: float       # ||sigma_ref||_C

    @property
    def pythagoras_defect(self) -> float:
        """Relative defect of ``ref_sigma^2 + ref_Aeps^2 = gap^2``."""
        return abs(self.ref_sigma**2 + self.ref_Aeps**2 - self.gap**2) / self.gap**2

    @property
    def mean_defect(self) -> float:
        """``| ref_mean - gap / 2 | / ||sigma_ref||_C``."""
        return abs(self.ref_mean - 0.5 * self.gap) / self.ref_norm


def hypercircle_terms(solution, u_a: P2Field, reference, order: int = 4) -> HypercircleTerms:
    """Compare a coarse solution with a reference on a nested finer mesh.

    All integrals use the reference mesh's sub-triangles, on which the
    coarse fields are polynomial when the reference mesh refines the
    barycentric split of the coarse one.
    """
    m = solution.material
    q = SubQuadrature.on(reference.mesh, order)
    ref = q.stress(reference.stress_nodal())
    tri, bary = locate_points(solution.mesh, q.points)
    sub, mu = sub_coordinates(bary)
    sh = np.einsum("ma,mac->mc", mu, solution.stress_nodal()[tri, sub])
    Aea = elasticity_apply(m, u_a.strain_at(tri, bary))

    def cnorm(t):
        return float(np.sqrt(q.integrate(energy_density(m, t)).sum()))

    return HypercircleTerms(cnorm(ref - sh), cnorm(ref - Aea), cnorm(sh - Aea),
                            cnorm(ref - 0.5 * (sh + Aea)), cnorm(ref))
