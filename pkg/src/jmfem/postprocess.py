"""Two-step displacement postprocessing.

Step I lifts the discontinuous P1 displacement ``u_h`` to a discontinuous P2
field ``u*`` with ``P u* = u_h`` and
``(eps(u*), eps(v))_K = (C sigma_h, eps(v))_K`` for ``v`` in ``(I - P) P2(K)``.
Step II averages ``u*`` at the global P2 Lagrange nodes, giving a continuous
field ``u^a`` that vanishes on the clamped boundary.

Local P2 nodes are the three vertices followed by the edge midpoints, node
``3 + i`` lying on the edge opposite vertex ``i``. Coefficient arrays are
``(nt, 2, 6)`` (component, node).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .mesh import MacroMesh
from .quadrature import make_quadrature
from .spaces import SUB_CENTROID_BARY, bary_gradients, sub_quadrature
from .tensors import FROB_WEIGHTS, Material, compliance_apply

PROJECTIONS = ("jm", "l2")

_NEXT = np.array([1, 2, 0])
_PREV = np.array([2, 0, 1])


def p2_values(bary: np.ndarray) -> np.ndarray:
    """P2 Lagrange basis at barycentric points ``(..., 3)`` -> ``(..., 6)``."""
    lam = np.asarray(bary, dtype=float)
    vert = lam * (2.0 * lam - 1.0)
    mid = 4.0 * lam[..., _NEXT] * lam[..., _PREV]
    return np.concatenate([vert, mid], axis=-1)


def p2_bary_derivatives(bary: np.ndarray) -> np.ndarray:
    """Derivatives of the P2 basis w.r.t. the barycentric coordinates, ``(..., 6, 3)``."""
    lam = np.asarray(bary, dtype=float)
    out = np.zeros(lam.shape[:-1] + (6, 3))
    for i in range(3):
        out[..., i, i] = 4.0 * lam[..., i] - 1.0
        j, k = _NEXT[i], _PREV[i]
        out[..., 3 + i, j] = 4.0 * lam[..., k]
        out[..., 3 + i, k] = 4.0 * lam[..., j]
    return out


def p2_gradients(bary: np.ndarray, grad_lambda: np.ndarray) -> np.ndarray:
    """Physical gradients ``(nt, ..., 6, 2)`` at shared barycentric points."""
    d = p2_bary_derivatives(bary)                           # (..., 6, 3)
    return np.einsum("...pa,tad->t...pd", d, grad_lambda)


def strain_from_p2(coef: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Strain ``(nt, ..., 3)`` of P2 fields ``(nt, 2, 6)`` given basis gradients ``(nt, ..., 6, 2)``."""
    g = np.einsum("tkp,t...pd->t...kd", coef, grads)        # displacement gradient
    return np.stack([g[..., 0, 0], g[..., 1, 1], 0.5 * (g[..., 0, 1] + g[..., 1, 0])], axis=-1)


# P1 -> P2 embedding in nodal coordinates
P1_TO_P2 = np.vstack([np.eye(3), 0.5 * (np.eye(3)[_NEXT] + np.eye(3)[_PREV])])


@lru_cache(maxsize=None)
def p2_to_p1_projection(kind: str = "jm") -> np.ndarray:
    """Matrix ``(3, 6)`` mapping P2 nodal values to the P1 nodal values of their projection.

    ``"jm"`` matches means on the three sub-triangles; ``"l2"`` is the
    elementwise L2 projection. Both are pure barycentric constants.
    """
    if kind == "jm":
        macro, _, w = sub_quadrature(2)
        means = np.einsum("q,iqp->ip", w, p2_values(macro))           # (3 sub, 6)
        return np.linalg.solve(SUB_CENTROID_BARY, means)
    if kind == "l2":
        rule = make_quadrature(4)
        mom = np.einsum("q,qj,qp->jp", rule.weights, rule.points, p2_values(rule.points))
        mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
        return np.linalg.solve(mass, mom)
    raise ValueError(f"unknown projection {kind!r}; choose from {PROJECTIONS}")


class P2Field:
    """Elementwise P2 vector field with coefficients ``(nt, 2, 6)``."""

    def __init__(self, mesh: MacroMesh, coef: np.ndarray):
        self.mesh = mesh
        self.coef = np.asarray(coef, dtype=float)

    @cached_property
    def grad_lambda(self) -> np.ndarray:
        return bary_gradients(self.mesh.coords)

    def values(self, bary: np.ndarray) -> np.ndarray:
        """Values ``(nt, ..., 2)`` at barycentric points shared by all triangles."""
        return np.einsum("tkp,...p->t...k", self.coef, p2_values(bary))

    def strain(self, bary: np.ndarray) -> np.ndarray:
        """Strain ``(nt, ..., 3)`` at shared barycentric points."""
        return strain_from_p2(self.coef, p2_gradients(bary, self.grad_lambda))

    def strain_at(self, tri: np.ndarray, bary: np.ndarray) -> np.ndarray:
        """Strain ``(m, 3)`` at points given by triangle index and barycentric coordinates."""
        d = p2_bary_derivatives(bary)                           # (m, 6, 3)
        grads = np.einsum("mpa,mad->mpd", d, self.grad_lambda[tri])
        g = np.einsum("mkp,mpd->mkd", self.coef[tri], grads)
        return np.stack([g[:, 0, 0], g[:, 1, 1], 0.5 * (g[:, 0, 1] + g[:, 1, 0])], axis=-1)

    def values_at(self, tri: np.ndarray, bary: np.ndarray) -> np.ndarray:
        """Values ``(m, 2)`` at points given by triangle index and barycentric coordinates."""
        return np.einsum("mkp,mp->mk", self.coef[tri], p2_values(bary))

    def project_p1(self, kind: str = "jm") -> np.ndarray:
        """P1 nodal values ``(nt, 2, 3)`` of the elementwise projection."""
        return np.einsum("ap,tkp->tka", p2_to_p1_projection(kind), self.coef)


class EnhancedDisplacement(P2Field):
    """Discontinuous P2 displacement of Step I."""


class AveragedDisplacement(P2Field):
    """Continuous P2 displacement of Step II, also stored at global nodes.

    Global nodes are the mesh vertices followed by the edge midpoints.
    """

    def __init__(self, mesh: MacroMesh, nodal: np.ndarray):
        self.nodal = np.asarray(nodal, dtype=float)          # (nv + ne, 2)
        super().__init__(mesh, self.nodal[p2_dofs(mesh)].transpose(0, 2, 1))


def p2_dofs(mesh: MacroMesh) -> np.ndarray:
    """Global P2 node of every local node, ``(nt, 6)``."""
    return np.concatenate([mesh.triangles, mesh.n_vertices + mesh.t2e], axis=1)


# ----------------------------------------------------------------------
def enhance_local(u_local: np.ndarray, stress_nodal: np.ndarray, material: Material,
                  mesh: MacroMesh, projection: str = "jm") -> EnhancedDisplacement:
    """Step I on every triangle at once.

    Parameters
    ----------
    u_local : (nt, 2, 3)
        Nodal values of ``u_h``.
    stress_nodal : (nt, 3, 3, 3)
        Sub-triangle nodal stresses of ``sigma_h``.
    projection : {"jm", "l2"}
        The projection ``P`` in the constraint ``P u* = u_h``.

    Raises
    ------
    numpy.linalg.LinAlgError
        If a local system is singular (degenerate triangle).
    """
    nt = mesh.n_triangles
    P = p2_to_p1_projection(projection)                        # (3, 6)
    macro, mu, w = sub_quadrature(2)                           # (3, nq, 3)
    grads = p2_gradients(macro, bary_gradients(mesh.coords))   # (nt, 3, nq, 6, 2)

    # strains of the 12 vector basis functions, index 6 * comp + node
    Z = np.zeros(grads.shape[:-1])
    eps = np.stack([
        np.stack([grads[..., 0], Z, 0.5 * grads[..., 1]], -1),
        np.stack([Z, grads[..., 1], 0.5 * grads[..., 0]], -1),
    ], axis=-3).reshape(grads.shape[:3] + (12, 3))             # (nt, 3, nq, 12, 3)
    wq = (mesh.areas / 3.0)[:, None, None] * w                 # (nt, 1, nq)
    G = np.einsum("tiq,tiqpc,c,tiqrc->tpr", np.broadcast_to(wq, eps.shape[:3]), eps,
                  FROB_WEIGHTS, eps, optimize=True)
    Cs = compliance_apply(material, np.einsum("qa,tiac->tiqc", mu, stress_nodal))
    rhs_s = np.einsum("tiq,tiqpc,c,tiqc->tp", np.broadcast_to(wq, eps.shape[:3]), eps,
                      FROB_WEIGHTS, Cs, optimize=True)

    # test space (I - P) applied to the edge bubbles, per component
    Vs = np.eye(6)[:, 3:] - P1_TO_P2 @ P[:, 3:]                # (6, 3)
    V = np.zeros((12, 6))
    V[:6, :3], V[6:, 3:] = Vs, Vs
    Pv = np.zeros((6, 12))
    Pv[:3, :6], Pv[3:, 6:] = P, P

    M = np.empty((nt, 12, 12))
    M[:, :6] = Pv
    M[:, 6:] = np.einsum("pr,tpq->trq", V, G)
    b = np.empty((nt, 12))
    b[:, :6] = np.asarray(u_local).reshape(nt, 6)
    b[:, 6:] = rhs_s @ V
    coef = np.linalg.solve(M, b[..., None])[..., 0]
    return EnhancedDisplacement(mesh, coef.reshape(nt, 2, 6))


def _rigid_projection_p2(mesh: MacroMesh, nodal: np.ndarray) -> np.ndarray:
    """Global P2 nodal values of the L2 projection of a continuous P2 field onto rigid motions."""
    rule = make_quadrature(4)
    x = rule.physical_points(mesh.coords)                      # (nt, nq, 2)
    wa = mesh.areas[:, None] * rule.weights                    # (nt, nq)
    vals = np.einsum("tkp,qp->tqk", nodal[p2_dofs(mesh)].transpose(0, 2, 1),
                     p2_values(rule.points))

    def modes(pts):
        one, zero = np.ones(pts.shape[:-1]), np.zeros(pts.shape[:-1])
        return np.stack([np.stack([one, zero], -1), np.stack([zero, one], -1),
                         np.stack([-pts[..., 1], pts[..., 0]], -1)])

    R = modes(x)                                               # (3, nt, nq, 2)
    gram = np.einsum("tq,atqk,btqk->ab", wa, R, R)
    mom = np.einsum("tq,atqk,tqk->a", wa, R, vals)
    c = np.linalg.solve(gram, mom)
    pts = np.vstack([mesh.vertices, mesh.vertices[mesh.edges].mean(axis=1)])
    return np.einsum("a,anK->nK", c, modes(pts))


def oswald_average(u_star: P2Field, mesh: MacroMesh | None = None,
                   orthogonalize: bool | None = None) -> AveragedDisplacement:
    """Step II: arithmetic mean at each global P2 node, zero on clamped nodes.

    On pure-traction meshes the result is made L2-orthogonal to the rigid
    motions (``orthogonalize=None`` selects this automatically).
    """
    mesh = u_star.mesh if mesh is None else mesh
    dofs = p2_dofs(mesh).ravel()
    n = mesh.n_vertices + mesh.n_edges
    count = np.bincount(dofs, minlength=n).astype(float)
    vals = u_star.coef.transpose(0, 2, 1).reshape(-1, 2)
    nodal = np.stack([np.bincount(dofs, weights=vals[:, k], minlength=n) for k in range(2)], 1)
    nodal /= count[:, None]
    d_edges = mesh.dirichlet_edges()
    if len(d_edges):
        nodal[np.unique(mesh.edges[d_edges])] = 0.0
        nodal[mesh.n_vertices + d_edges] = 0.0
    if orthogonalize is None:
        orthogonalize = mesh.pure_traction
    if orthogonalize:
        nodal = nodal - _rigid_projection_p2(mesh, nodal)
    return AveragedDisplacement(mesh, nodal)


def postprocess(solution, projection: str = "jm"):
    """Both steps for a :class:`~jmfem.solve.MixedSolution`; returns ``(u_star, u_a)``."""
    u_star = enhance_local(solution.u_local(), solution.stress_nodal(), solution.material,
                           solution.mesh, projection)
    return u_star, oswald_average(u_star)
