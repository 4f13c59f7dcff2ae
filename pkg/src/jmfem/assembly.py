"""Assembly of the mixed saddle-point system.

The discrete problem reads: find ``(sigma_h, u_h)`` with ``sigma_h n = Q_h g``
on traction edges such that

    (C sigma_h, tau) + (u_h, div tau) = 0     for tau with tau n = 0 on Gamma_N
    (div sigma_h, v)                 = -(f, v) for all v in V_h

Pure traction problems get three extra rows fixing ``u_h`` orthogonal to the
rigid motions ``(1, 0), (0, 1), (-y, x)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .mesh import MacroMesh
from .quadrature import make_quadrature
from .spaces import SUB_CENTROID_BARY, JMSpace, edge_traction_moments
from .tensors import Material

Load = Callable[[np.ndarray], np.ndarray]
Traction = Callable[[np.ndarray, np.ndarray], np.ndarray]

P1_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0   # (lambda_a, lambda_b)_K / |K|

COMPAT_TOL = 1e-8


class IncompatibleLoadError(ValueError):
    """Pure-traction data with a nonzero resultant force or moment."""


@dataclass(eq=False)
class SaddleSystem:
    """Sparse symmetric system ``[[A, B^T, 0], [B, 0, R^T], [0, R, 0]]``.

    ``fixed`` lists eliminated stress DOFs with their prescribed ``fixed_values``;
    ``matrix`` and ``rhs`` are the full (unreduced) operator and load.
    """

    space: JMSpace
    material: Material
    matrix: sp.csr_matrix
    rhs: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    n_sigma: int
    n_u: int
    n_mult: int
    load_p1: np.ndarray = field(repr=False)   # (nt, 6) moments (f, v)

    @property
    def size(self) -> int:
        return self.n_sigma + self.n_u + self.n_mult

    @property
    def A(self):
        return self.matrix[: self.n_sigma, : self.n_sigma]

    @property
    def B(self):
        return self.matrix[self.n_sigma:self.n_sigma + self.n_u, : self.n_sigma]

    def free(self) -> np.ndarray:
        mask = np.ones(self.size, dtype=bool)
        mask[self.fixed] = False
        return np.flatnonzero(mask)

    def reduced(self):
        """Operator and right-hand side after eliminating fixed DOFs."""
        free = self.free()
        M = self.matrix.tocsc()
        x_fixed = np.zeros(self.size)
        x_fixed[self.fixed] = self.fixed_values
        b = self.rhs - M @ x_fixed
        Mf = M[free][:, free]
        return Mf.tocsc(), b[free], free, x_fixed


def local_matrices(space: JMSpace, material: Material):
    """Element blocks ``A_K`` (nt, 15, 15) and ``B_K`` (nt, 6, 15), integrated exactly."""
    mesh = space.mesh
    X = space.basis.reshape(-1, 3, 3, 3, 15)
    Cm = material.compliance_matrix()
    A = np.einsum("tiacp,ab,cd,tibdq->tpq", X, P1_MASS, Cm, X, optimize=True)
    A *= (mesh.areas / 3.0)[:, None, None]
    A = 0.5 * (A + A.transpose(0, 2, 1))
    div = space.basis_divergence()                         # (nt, 3, 2, 15)
    B = np.einsum("tikp,ij->tkjp", div, SUB_CENTROID_BARY) * (mesh.areas / 3.0)[:, None, None, None]
    return A, B.reshape(-1, 6, 15)


def load_vector(mesh: MacroMesh, f: Optional[Load], order: int = 8) -> np.ndarray:
    """Moments ``(f_k, lambda_j)_K`` in local displacement order, ``(nt, 6)``."""
    if f is None:
        return np.zeros((mesh.n_triangles, 6))
    rule = make_quadrature(order)
    x = rule.physical_points(mesh.coords)
    vals = np.asarray(f(x.reshape(-1, 2))).reshape(x.shape[0], -1, 2)
    mom = np.einsum("q,qj,tqk->tkj", rule.weights, rule.points, vals)
    return (mom * mesh.areas[:, None, None]).reshape(-1, 6)


def rigid_modes_p1(mesh: MacroMesh) -> np.ndarray:
    """Rows ``(3, 6 nt)``: integrals of the rigid motions against each P1 basis function."""
    p = mesh.coords
    a = mesh.areas
    base = np.repeat(a[:, None] / 3.0, 3, axis=1)
    # int_K lambda_j x = |K| (sum x + x_j) / 12
    ix = a[:, None] * (p[:, :, 0].sum(1)[:, None] + p[:, :, 0]) / 12.0
    iy = a[:, None] * (p[:, :, 1].sum(1)[:, None] + p[:, :, 1]) / 12.0
    z = np.zeros_like(base)
    rows = [
        np.concatenate([base, z], axis=1),
        np.concatenate([z, base], axis=1),
        np.concatenate([-iy, ix], axis=1),
    ]
    return np.stack([r.reshape(-1) for r in rows])


def _rigid_nodal(mesh: MacroMesh) -> np.ndarray:
    """Nodal values of the rigid motions in local displacement order, ``(3, 6 nt)``."""
    p = mesh.coords
    one, zero = np.ones(p.shape[:2]), np.zeros(p.shape[:2])
    modes = [
        np.concatenate([one, zero], 1),
        np.concatenate([zero, one], 1),
        np.concatenate([-p[:, :, 1], p[:, :, 0]], 1),
    ]
    return np.stack([m.reshape(-1) for m in modes])


def check_compatibility(mesh: MacroMesh, load_p1: np.ndarray, edges: np.ndarray,
                        moments: np.ndarray) -> float:
    """Relative resultant of the discrete loads against the rigid motions.

    Raises
    ------
    IncompatibleLoadError
        When any resultant exceeds ``COMPAT_TOL`` times the data scale.
    """
    R = _rigid_nodal(mesh)
    vol = R * load_p1.reshape(-1)
    res = vol.sum(axis=1)
    scale = np.abs(vol).sum(axis=1)
    if len(edges):
        v = mesh.vertices
        p0, p1 = v[mesh.edges[edges, 0]], v[mesh.edges[edges, 1]]
        L = mesh.edge_lengths[edges]
        d0, d1 = moments[:, :2], moments[:, 2:]
        for k, (r0, r1) in enumerate(_edge_rigid(p0, p1)):
            contrib = L * (np.sum(d0 * 0.5 * (r0 + r1), 1) + np.sum(d1 * (r1 - r0), 1) / 6.0)
            res[k] += contrib.sum()
            scale[k] += np.abs(L * (np.abs(d0) * np.abs(0.5 * (r0 + r1))).sum(1)).sum() \
                + np.abs(L * (np.abs(d1) * np.abs(r1 - r0)).sum(1) / 6.0).sum()
    rel = np.abs(res) / np.maximum(scale, np.finfo(float).tiny)
    if np.any((np.abs(res) > COMPAT_TOL * scale) & (scale > 0)):
        raise IncompatibleLoadError(
            f"pure-traction data not in equilibrium: resultants {res} (data scale {scale})")
    return float(np.max(np.where(scale > 0, rel, 0.0)))


def _edge_rigid(p0, p1):
    one, zero = np.ones(len(p0)), np.zeros(len(p0))
    yield np.stack([one, zero], 1), np.stack([one, zero], 1)
    yield np.stack([zero, one], 1), np.stack([zero, one], 1)
    yield np.stack([-p0[:, 1], p0[:, 0]], 1), np.stack([-p1[:, 1], p1[:, 0]], 1)


def assemble(mesh: MacroMesh, material: Material, f: Optional[Load] = None,
             g: Optional[Traction] = None, space: Optional[JMSpace] = None,
             load_order: int = 8) -> SaddleSystem:
    """Assemble the saddle-point system for body load ``f`` and traction ``g``.

    ``f(x)`` maps points ``(m, 2)`` to ``(m, 2)``; ``g(x, n)`` additionally
    receives the outward unit normals. Traction DOFs on ``Gamma_N`` are fixed
    to the ``Q_E``-moments of ``g`` (zero when ``g`` is None).
    """
    if space is None:
        space = JMSpace.build(mesh)
    nt = mesh.n_triangles
    ns, nu = space.n_sigma, space.n_u
    A_loc, B_loc = local_matrices(space, material)
    sd, ud = space.sigma_dofs, space.u_dofs + ns
    rows = [np.repeat(sd, 15, axis=1).ravel(), np.repeat(ud, 15, axis=1).ravel(),
            np.tile(sd, (1, 6)).ravel()]
    cols = [np.tile(sd, (1, 15)).ravel(), np.tile(sd, (1, 6)).ravel(),
            np.repeat(ud, 15, axis=1).ravel()]
    vals = [A_loc.ravel(), B_loc.ravel(), B_loc.ravel()]

    pure = mesh.pure_traction
    n_mult = 3 if pure else 0
    if pure:
        R = rigid_modes_p1(mesh)
        scale = 1.0 / max(mesh.areas.sum(), np.finfo(float).tiny)
        R = R * scale
        mr = np.repeat(np.arange(3) + ns + nu, 6 * nt)
        mc = np.tile(np.arange(nu) + ns, 3)
        rows += [mr, mc]
        cols += [mc, mr]
        vals += [R.ravel(), R.ravel()]
    size = ns + nu + n_mult
    M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(size, size)).tocsr()
    M.sum_duplicates()

    F = load_vector(mesh, f, load_order)
    rhs = np.zeros(size)
    rhs[ns:ns + nu] = -F.reshape(-1)

    tedges = mesh.traction_edges()
    fixed = space.edge_dofs(tedges)
    if g is None:
        moments = np.zeros((len(tedges), 4))
    else:
        moments = edge_traction_moments(g, mesh, tedges)
    if pure:
        check_compatibility(mesh, F, tedges, moments)
    return SaddleSystem(space, material, M, rhs, fixed, moments.reshape(-1),
                        ns, nu, n_mult, F)
