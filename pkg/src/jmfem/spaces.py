"""Johnson-Mercier composite stress element and discontinuous P1 displacements.

Each macro triangle ``K`` is split at its barycenter ``c`` into sub-triangles
``K_i = (z_{i+1}, z_{i+2}, c)``. A stress field is linear on each ``K_i`` and
stored by its nodal tensors, 27 numbers indexed ``9*i + 3*a + comp`` with
``a`` the node inside ``K_i`` and ``comp`` in ``(xx, yy, xy)``.

The 15 local degrees of freedom are

* per macro edge ``i``: the mean of ``tau n_E`` and three times the mean of
  ``(tau n_E) * phi`` with ``phi`` the Legendre-linear weight running from -1
  at the lower global vertex index to +1 at the higher one (4 values);
* the means of ``tau_xx``, ``tau_yy``, ``tau_xy`` over ``K``.

``n_E`` is the global edge normal of :attr:`MacroMesh.edge_normals`, so the
edge values of two neighbours coincide and no sign fix-up is needed. The
basis is constructed on every physical triangle by solving the 27x27 system
made of 12 internal traction-continuity rows and the 15 functionals.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np

from .mesh import MacroMesh, locate_points, split_coords
from .quadrature import gauss_line, make_quadrature
from .tensors import SymTensor2

COND_LIMIT = 1e12

# mean of barycentric coordinate j over sub-triangle i (value at its centroid)
SUB_CENTROID_BARY = np.full((3, 3), 4.0 / 9.0) - np.eye(3) / 3.0


class IllConditionedElement(ValueError):
    """Raised when a local element system is numerically singular."""


def traction_operator(n: np.ndarray) -> np.ndarray:
    """Matrix ``(..., 2, 3)`` mapping ``(xx, yy, xy)`` to ``tau n``."""
    n = np.asarray(n, dtype=float)
    z = np.zeros(n.shape[:-1])
    return np.stack(
        [np.stack([n[..., 0], z, n[..., 1]], -1), np.stack([z, n[..., 1], n[..., 0]], -1)], -2
    )


def bary_gradients(coords: np.ndarray) -> np.ndarray:
    """Gradients of barycentric coordinates of triangles ``(..., 3, 2)``."""
    x, y = coords[..., 0], coords[..., 1]
    area2 = (x[..., 1] - x[..., 0]) * (y[..., 2] - y[..., 0]) - (x[..., 2] - x[..., 0]) * (y[..., 1] - y[..., 0])
    gx = np.roll(y, -1, axis=-1) - np.roll(y, -2, axis=-1)
    gy = np.roll(x, -2, axis=-1) - np.roll(x, -1, axis=-1)
    return np.stack([gx, gy], axis=-1) / area2[..., None, None]


def _unit_normal(p, q):
    d = q - p
    n = np.stack([d[..., 1], -d[..., 0]], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def continuity_matrix(coords: np.ndarray) -> np.ndarray:
    """The 12 internal traction-continuity rows, shape ``(..., 12, 27)``."""
    coords = np.asarray(coords, dtype=float)
    c = coords.mean(axis=-2)
    rows = np.zeros(coords.shape[:-2] + (12, 27))
    for j in range(3):
        R = traction_operator(_unit_normal(c, coords[..., j, :]))
        left, right = (j + 1) % 3, (j + 2) % 3   # K_left has z_j as node 1, K_right as node 0
        r0 = 4 * j
        for pair, (na, nb) in enumerate(((1, 0), (2, 2))):
            sl_a = slice(9 * left + 3 * na, 9 * left + 3 * na + 3)
            sl_b = slice(9 * right + 3 * nb, 9 * right + 3 * nb + 3)
            rows[..., r0 + 2 * pair:r0 + 2 * pair + 2, sl_a] += R
            rows[..., r0 + 2 * pair:r0 + 2 * pair + 2, sl_b] -= R
    return rows


def dof_functionals(edge_normals: np.ndarray, start_first: np.ndarray) -> np.ndarray:
    """The 15 degree-of-freedom functionals acting on nodal coefficients, ``(..., 15, 27)``.

    Parameters
    ----------
    edge_normals : (..., 3, 2)
        Normal used for macro edge ``i`` (the edge opposite ``z_i``).
    start_first : (..., 3) bool
        True when ``z_{i+1}`` is the start (lower global index) of edge ``i``.
    """
    edge_normals = np.asarray(edge_normals, dtype=float)
    start_first = np.asarray(start_first, dtype=bool)
    L = np.zeros(edge_normals.shape[:-2] + (15, 27))
    for i in range(3):
        R = traction_operator(edge_normals[..., i, :])          # (..., 2, 3)
        sgn = np.where(start_first[..., i], 1.0, -1.0)[..., None, None]
        n0 = slice(9 * i, 9 * i + 3)        # node z_{i+1}
        n1 = slice(9 * i + 3, 9 * i + 6)    # node z_{i+2}
        L[..., 4 * i:4 * i + 2, n0] = 0.5 * R
        L[..., 4 * i:4 * i + 2, n1] = 0.5 * R
        L[..., 4 * i + 2:4 * i + 4, n0] = -0.5 * sgn * R
        L[..., 4 * i + 2:4 * i + 4, n1] = 0.5 * sgn * R
    for comp in range(3):
        L[..., 12 + comp, comp::3] = 1.0 / 9.0
    return L


def build_jm_basis(coords: np.ndarray, edge_normals: np.ndarray | None = None,
                   start_first: np.ndarray | None = None, check: bool = True):
    """Nodal coefficients of the 15 dual basis fields on each triangle.

    Parameters
    ----------
    coords : (..., 3, 2)
        Macro triangle vertices, counter-clockwise.
    edge_normals, start_first
        Edge orientation data (see :func:`dof_functionals`). Defaults: outward
        normals and ``z_{i+1}`` as start of every edge.

    Returns
    -------
    X : (..., 27, 15)
        Column ``j`` holds the nodal coefficients of basis field ``j``.
    cond : (...)
        1-norm condition number of the local 27x27 system.
    """
    coords = np.asarray(coords, dtype=float)
    if edge_normals is None:
        z1, z2 = np.roll(coords, -1, axis=-2), np.roll(coords, -2, axis=-2)
        edge_normals = _unit_normal(z1, z2)
    if start_first is None:
        start_first = np.ones(coords.shape[:-1], dtype=bool)
    M = np.concatenate([continuity_matrix(coords), dof_functionals(edge_normals, start_first)], axis=-2)
    Minv = np.linalg.inv(M)
    cond = np.linalg.norm(M, 1, axis=(-2, -1)) * np.linalg.norm(Minv, 1, axis=(-2, -1))
    if check and np.any(~np.isfinite(cond) | (cond > COND_LIMIT)):
        bad = np.flatnonzero(~np.isfinite(cond) | (cond > COND_LIMIT))
        raise IllConditionedElement(
            f"local Johnson-Mercier system ill-conditioned on {len(bad)} triangle(s), "
            f"worst condition {np.nanmax(np.where(np.isfinite(cond), cond, np.inf)):.3e}")
    return Minv[..., 12:], cond


# ----------------------------------------------------------------------
@lru_cache(maxsize=None)
def sub_quadrature(order: int):
    """Quadrature on the three sub-triangles, in macro barycentric coordinates.

    Returns ``(macro_bary, sub_bary, weights)`` of shapes ``(3, nq, 3)``,
    ``(nq, 3)``, ``(nq,)``; weights sum to one on each sub-triangle, whose
    area is a third of the macro area.
    """
    rule = make_quadrature(order)
    mu = rule.points                       # coordinates w.r.t. (z_{i+1}, z_{i+2}, c)
    macro = np.zeros((3, len(mu), 3))
    for i in range(3):
        macro[i, :, i] = mu[:, 2] / 3.0
        macro[i, :, (i + 1) % 3] = mu[:, 0] + mu[:, 2] / 3.0
        macro[i, :, (i + 2) % 3] = mu[:, 1] + mu[:, 2] / 3.0
    return macro, mu, rule.weights


@dataclass(frozen=True, eq=False)
class JMSpace:
    """Global Johnson-Mercier stress space with its discontinuous P1 partner.

    Global stress numbering: ``4 * edge + [mean_x, mean_y, lin_x, lin_y]``
    followed by ``4 * n_edges + 3 * triangle + comp`` for interior values.
    Displacement numbering: ``6 * triangle + 3 * comp + vertex`` (nodal P1
    values, fully discontinuous).
    """

    mesh: MacroMesh
    basis: np.ndarray        # (nt, 27, 15)
    cond: np.ndarray         # (nt,)

    @classmethod
    def build(cls, mesh: MacroMesh, check: bool = True) -> "JMSpace":
        t = mesh.triangles
        t2e = mesh.t2e
        normals = mesh.edge_normals[t2e]                  # (nt, 3, 2)
        start_first = t[:, [1, 2, 0]] < t[:, [2, 0, 1]]
        basis, cond = build_jm_basis(mesh.coords, normals, start_first, check=check)
        return cls(mesh, basis, cond)

    @property
    def n_sigma(self) -> int:
        return 4 * self.mesh.n_edges + 3 * self.mesh.n_triangles

    @property
    def n_u(self) -> int:
        return 6 * self.mesh.n_triangles

    @cached_property
    def sigma_dofs(self) -> np.ndarray:
        """Local-to-global stress map ``(nt, 15)``."""
        m = self.mesh
        edge = (4 * m.t2e[:, :, None] + np.arange(4)).reshape(-1, 12)
        inner = 4 * m.n_edges + 3 * np.arange(m.n_triangles)[:, None] + np.arange(3)
        return np.concatenate([edge, inner], axis=1)

    @cached_property
    def u_dofs(self) -> np.ndarray:
        return 6 * np.arange(self.mesh.n_triangles)[:, None] + np.arange(6)

    def edge_dofs(self, edges) -> np.ndarray:
        edges = np.asarray(edges, dtype=np.int64)
        return (4 * edges[:, None] + np.arange(4)).reshape(-1)

    # ------------------------------------------------------------------
    def nodal(self, sigma: np.ndarray) -> np.ndarray:
        """Nodal sub-triangle tensors ``(nt, 3, 3, 3)`` of a global coefficient vector."""
        loc = np.asarray(sigma)[self.sigma_dofs]
        return np.einsum("tkp,tp->tk", self.basis, loc).reshape(-1, 3, 3, 3)

    @cached_property
    def sub_gradients(self) -> np.ndarray:
        """Barycentric gradients of every sub-triangle, ``(nt, 3, 3, 2)``."""
        return bary_gradients(split_coords(self.mesh.coords))

    def divergence(self, sigma: np.ndarray) -> np.ndarray:
        """Constant divergence on each sub-triangle, ``(nt, 3, 2)``."""
        return divergence_from_nodal(self.nodal(sigma), self.sub_gradients)

    def basis_divergence(self) -> np.ndarray:
        """Divergence of each local basis field, ``(nt, 3, 2, 15)``."""
        X = self.basis.reshape(-1, 3, 3, 3, 15)
        R = traction_operator(self.sub_gradients)           # (nt,3,3,2,3)
        return np.einsum("tiakc,tiacp->tikp", R, X)

    def values_at(self, sigma: np.ndarray, order: int) -> np.ndarray:
        """Stress at the sub-triangle quadrature points, ``(nt, 3, nq, 3)``."""
        _, mu, _ = sub_quadrature(order)
        return np.einsum("qa,tiac->tiqc", mu, self.nodal(sigma))


def divergence_from_nodal(nodal: np.ndarray, grads: np.ndarray) -> np.ndarray:
    R = traction_operator(grads)                            # (..., 3 nodes, 2, 3)
    return np.einsum("...akc,...ac->...k", R, nodal)


def locate(coords: np.ndarray, point) -> tuple[int, np.ndarray]:
    """Sub-triangle index and sub-barycentric coordinates of a point in one macro triangle."""
    p = np.asarray(point, dtype=float)
    T = np.array([coords[1] - coords[0], coords[2] - coords[0]]).T
    l12 = np.linalg.solve(T, p - coords[0])
    lam = np.array([1.0 - l12.sum(), l12[0], l12[1]])
    scale = 1e-12
    if np.any(lam < -scale):
        raise ValueError(f"point {p} lies outside the triangle")
    i = int(np.argmin(lam))
    mu = np.array([lam[(i + 1) % 3] - lam[i], lam[(i + 2) % 3] - lam[i], 3.0 * lam[i]])
    return i, mu


def sub_coordinates(bary: np.ndarray):
    """Sub-triangle index and sub-barycentric coordinates from macro ones.

    Sub-triangle ``i`` is the one opposite macro vertex ``i``, so a point
    lies in the sub-triangle of its smallest barycentric coordinate.
    """
    bary = np.asarray(bary, dtype=float)
    i = np.argmin(bary, axis=1)
    r = np.arange(len(bary))
    mu = np.column_stack([bary[r, (i + 1) % 3] - bary[r, i],
                          bary[r, (i + 2) % 3] - bary[r, i], 3.0 * bary[r, i]])
    return i, mu


def evaluate_stress(space: JMSpace, sigma: np.ndarray, t: int, point) -> SymTensor2:
    """Stress of the global field ``sigma`` at ``point`` inside triangle ``t``."""
    i, mu = locate(space.mesh.coords[t], point)
    loc = np.asarray(sigma)[space.sigma_dofs[t]]
    nodal = (space.basis[t] @ loc).reshape(3, 3, 3)[i]
    return SymTensor2(*(mu @ nodal))


def evaluate_divergence(space: JMSpace, sigma: np.ndarray, t: int, point) -> np.ndarray:
    i, _ = locate(space.mesh.coords[t], point)
    loc = np.asarray(sigma)[space.sigma_dofs[t]]
    nodal = (space.basis[t] @ loc).reshape(3, 3, 3)[i]
    return divergence_from_nodal(nodal, space.sub_gradients[t, i])


# ----------------------------------------------------------------------
# projections
def _macro_quadrature_points(mesh: MacroMesh, order: int):
    rule = make_quadrature(order)
    return rule, rule.physical_points(mesh.coords)


def project_displacement_P_h(field: Callable, mesh: MacroMesh, order: int = 8) -> np.ndarray:
    """Elementwise L2 projection of a vector field onto P1.

    Returns nodal values ``(nt, 2, 3)`` (component, vertex).
    """
    rule, x = _macro_quadrature_points(mesh, order)
    vals = np.asarray(field(x.reshape(-1, 2))).reshape(x.shape[0], -1, 2)
    # moments (f_k, lambda_j) / |K| and the P1 mass matrix / |K|
    mom = np.einsum("q,qj,tqk->tkj", rule.weights, rule.points, vals)
    Minv = np.array([[9.0, -3.0, -3.0], [-3.0, 9.0, -3.0], [-3.0, -3.0, 9.0]])  # inv((1+delta)/12)
    return np.einsum("ij,tkj->tki", Minv, mom)


def jm_projection_matrix() -> np.ndarray:
    """P1 nodal values from sub-triangle means (the projection with the divergence property)."""
    return np.linalg.inv(SUB_CENTROID_BARY)


def project_displacement_jm(field: Callable, mesh: MacroMesh, order: int = 8) -> np.ndarray:
    """P1 field with the same means as ``field`` on every sub-triangle.

    Since the divergence of a Johnson-Mercier field is constant on each
    sub-triangle, ``(div tau, v - P v)_K = 0`` holds for this ``P``.
    Returns nodal values ``(nt, 2, 3)``.
    """
    macro, _, w = sub_quadrature(order)
    x = np.einsum("iqa,tad->tiqd", macro, mesh.coords)
    vals = np.asarray(field(x.reshape(-1, 2))).reshape(x.shape[:3] + (2,))
    means = np.einsum("q,tiqk->tki", w, vals)
    return np.einsum("ji,tki->tkj", jm_projection_matrix(), means)


def equilibrium_projection(field: Callable, mesh: MacroMesh, order: int = 8) -> np.ndarray:
    """Sub-triangle-wise constant field with the same P1 moments as ``field``.

    This is the load for which a discrete stress is in exact equilibrium:
    ``div sigma_h = -P f``. Returns ``(nt, 3, 2)`` (sub-triangle, component).
    """
    rule, x = _macro_quadrature_points(mesh, order)
    vals = np.asarray(field(x.reshape(-1, 2))).reshape(x.shape[0], -1, 2)
    mom = np.einsum("q,qj,tqk->tjk", rule.weights, rule.points, vals)   # (f, lambda_j)/|K|
    # (c_i, lambda_j)_K / |K| = sum_i c_i * SUB_CENTROID_BARY[i, j] / 3
    A = SUB_CENTROID_BARY.T / 3.0
    return np.einsum("ij,tjk->tik", np.linalg.inv(A), mom)


def project_traction_Q_E(g: Callable, p0, p1, normal=None, npts: int = 8) -> np.ndarray:
    """L2 projection of a traction onto linear vector functions on one edge.

    Returns ``(2, 2)``: row 0 the mean, row 1 the coefficient of the Legendre
    weight ``phi = 2 s - 1`` (``s`` running from ``p0`` to ``p1``), so that
    ``Q g(s) = row0 + row1 * phi(s)``.
    """
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    s, w = gauss_line(npts)
    x = p0 + s[:, None] * (p1 - p0)
    if normal is None:
        normal = _unit_normal(p0, p1)
    vals = np.asarray(g(x, np.broadcast_to(normal, x.shape)))
    phi = 2.0 * s - 1.0
    return np.stack([w @ vals, 3.0 * (w * phi) @ vals])


def edge_traction_moments(g: Callable, mesh: MacroMesh, edges, npts: int = 8) -> np.ndarray:
    """Vectorized :func:`project_traction_Q_E` over global edges, ``(m, 4)`` in DOF order."""
    edges = np.asarray(edges, dtype=np.int64)
    if len(edges) == 0:
        return np.zeros((0, 4))
    s, w = gauss_line(npts)
    v = mesh.vertices
    p0, p1 = v[mesh.edges[edges, 0]], v[mesh.edges[edges, 1]]
    x = p0[:, None] + s[None, :, None] * (p1 - p0)[:, None]
    n = np.broadcast_to(mesh.edge_normals[edges][:, None], x.shape)
    vals = np.asarray(g(x.reshape(-1, 2), n.reshape(-1, 2))).reshape(x.shape)
    phi = 2.0 * s - 1.0
    return np.concatenate([np.einsum("q,eqk->ek", w, vals),
                           3.0 * np.einsum("q,eqk->ek", w * phi, vals)], axis=1)


def projected_traction(g: Callable, mesh: MacroMesh, npts: int = 8, tol: float = 1e-9) -> Callable:
    """Traction ``x, n -> Q_E g(x)``, piecewise linear on the Neumann edges of ``mesh``.

    Lets a finer nested mesh solve with exactly the traction data that
    ``mesh`` sees. Points farther than ``tol`` (relative to the edge length)
    from every Neumann edge raise ``ValueError``.
    """
    edges = mesh.traction_edges()
    mom = edge_traction_moments(g, mesh, edges, npts)
    v = mesh.vertices
    p0 = v[mesh.edges[edges, 0]]
    d = v[mesh.edges[edges, 1]] - p0
    L2 = np.einsum("ed,ed->e", d, d)

    def q(x, n=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = x[:, None, :] - p0[None]                                # (m, e, 2)
        s = np.einsum("med,ed->me", r, d) / L2
        dist = np.abs(r[..., 0] * d[:, 1] - r[..., 1] * d[:, 0]) / L2
        dist = dist + np.clip(-s, 0.0, None) + np.clip(s - 1.0, 0.0, None)
        e = np.argmin(dist, axis=1)
        rows = np.arange(len(x))
        if np.any(dist[rows, e] > tol):
            raise ValueError("traction requested away from the Neumann boundary")
        phi = 2.0 * s[rows, e] - 1.0
        return mom[e, :2] + phi[:, None] * mom[e, 2:]

    return q


def projected_load(f: Callable, mesh: MacroMesh, order: int = 8) -> Callable:
    """Body load ``x -> P f(x)``, the sub-triangle-wise constant equilibrium projection on ``mesh``."""
    Pf = equilibrium_projection(f, mesh, order)                 # (nt, 3, 2)

    def q(x):
        tri, bary = locate_points(mesh, x)
        return Pf[tri, sub_coordinates(bary)[0]]

    return q
