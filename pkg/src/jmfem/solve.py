"""Solution of the assembled saddle-point system.

The default path hybridizes the stress space: tractions on interior edges
are torn apart and glued again by edge multipliers, every element block
``[[A_K, B_K^T], [B_K, 0]]`` is inverted locally, and the symmetric positive
(semi)definite multiplier system is factorized after a geometric nested
dissection ordering. The result solves the original system; iterative
refinement is measured on its residual. A monolithic sparse LU serves as
fallback for meshes the hybrid path cannot handle.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import SaddleSystem, _rigid_nodal, local_matrices
from .mesh import BoundaryTag
from .spaces import JMSpace
from .tensors import Material

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
PIVOT_TOL = 1e-14
METHODS = ("hybrid", "direct")


class SingularSystemError(RuntimeError):
    """The saddle-point matrix is singular beyond its handled nullspace."""


class SolverConvergenceError(RuntimeError):
    """The residual contract could not be met."""


@dataclass
class SolveReport:
    relative_residual: float
    refinement_steps: int
    n_unknowns: int
    nnz_factor: int
    min_pivot_ratio: float
    success: bool
    method: str = "direct"


@dataclass(eq=False)
class MixedSolution:
    """Global stress and displacement coefficients on one mesh."""

    space: JMSpace
    material: Material
    sigma: np.ndarray
    u: np.ndarray
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    load_p1: np.ndarray | None = None

    @property
    def mesh(self):
        return self.space.mesh

    def u_local(self) -> np.ndarray:
        """Nodal P1 displacement ``(nt, 2, 3)`` (component, vertex)."""
        return self.u.reshape(-1, 2, 3)

    def stress_nodal(self) -> np.ndarray:
        return self.space.nodal(self.sigma)


def _relres(M, x, b):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(M @ x - b)
    return r / nb if nb > 0 else r


def _pivot_ratio(lu) -> float:
    d = np.abs(lu.U.diagonal())
    if d.size == 0 or d.max() == 0:
        return 0.0
    return float(d.min() / d.max())


def _check_tol(tol):
    if not (0 < tol <= 1e-6):
        raise ValueError("tol must lie in (0, 1e-6]")


def _factorize(M, **kw):
    try:
        lu = spla.splu(M, **kw)
    except RuntimeError as exc:
        raise SingularSystemError(f"factorization failed: {exc}") from exc
    ratio = _pivot_ratio(lu)
    if M.shape[0] and (ratio < PIVOT_TOL or not np.isfinite(ratio)):
        raise SingularSystemError(
            f"matrix numerically singular (smallest/largest pivot {ratio:.2e}); "
            "missing rigid-mode constraints or boundary conditions?")
    return lu, ratio


def _refine(M, b, apply, tol, max_refine):
    x = apply(b)
    res = _relres(M, x, b)
    steps = 0
    while res > tol and steps < max_refine:
        x = x + apply(b - M @ x)
        res = _relres(M, x, b)
        steps += 1
    return x, res, steps


def solve_matrix(M, b, tol: float = DEFAULT_TOL, max_refine: int = 3):
    """Solve ``M x = b`` by sparse LU with iterative refinement.

    Returns ``(x, SolveReport)``.
    """
    _check_tol(tol)
    M = sp.csc_matrix(M)
    lu, ratio = _factorize(M, permc_spec="COLAMD")
    x, res, steps = _refine(M, b, lu.solve, tol, max_refine)
    ok = bool(np.isfinite(res) and res <= tol)
    report = SolveReport(float(res), steps, M.shape[0], int(lu.L.nnz + lu.U.nnz), ratio, ok)
    if not ok:
        raise SolverConvergenceError(f"relative residual {res:.3e} above tolerance {tol:.1e}")
    return x, report


# ----------------------------------------------------------------------
def nested_dissection(xy: np.ndarray, graph, leaf: int = 32) -> np.ndarray:
    """Fill-reducing ordering from coordinate bisection of a symmetric graph.

    Each set is split at the median of its wider coordinate; nodes on the
    first side adjacent to the second form the separator, numbered last.
    """
    G = sp.csr_matrix(graph)
    n = len(xy)
    side = np.zeros(n, dtype=bool)
    out = []
    # explicit stack; entries are index sets or finished separators
    stack = [("split", np.arange(n))]
    while stack:
        kind, idx = stack.pop()
        if kind == "emit" or len(idx) <= leaf:
            out.append(idx)
            continue
        p = xy[idx]
        ax = int(np.argmax(np.ptp(p, axis=0)))
        left = p[:, ax] <= np.median(p[:, ax])
        if left.all() or not left.any():
            out.append(idx)
            continue
        a, b = idx[left], idx[~left]
        side[b] = True
        sub = G[a]
        hits = side[sub.indices]
        touch = np.add.reduceat(hits, sub.indptr[:-1]) > 0 if sub.nnz else np.zeros(len(a), bool)
        touch &= np.diff(sub.indptr) > 0
        side[b] = False
        # popped in reverse: first part, second part, then separator
        stack.append(("emit", a[touch]))
        stack.append(("split", b))
        stack.append(("split", a[~touch]))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


class HybridSolver:
    """Static condensation onto interior-edge multipliers.

    ``apply`` solves the reduced saddle system for any right-hand side, so it
    can drive iterative refinement.

    Raises
    ------
    ValueError
        If some triangle has all three edges on the traction boundary.
    """

    def __init__(self, system: SaddleSystem):
        self.system = system
        space = system.space
        mesh = space.mesh
        nt = mesh.n_triangles
        tags = mesh.edge_tags[mesh.t2e]
        if np.any(np.all(tags == BoundaryTag.TRACTION, axis=1)):
            raise ValueError("a triangle with three traction edges cannot be condensed")
        A, B = local_matrices(space, system.material)
        L = np.zeros((nt, 21, 21))
        L[:, :15, :15] = A
        L[:, 15:, :15] = B
        L[:, :15, 15:] = B.transpose(0, 2, 1)
        self.L_full = L.copy()

        isfix = np.zeros(space.n_sigma, dtype=bool)
        isfix[system.fixed] = True
        sd = space.sigma_dofs
        self.fixed_local = isfix[sd]                          # (nt, 15)
        ti, jj = np.nonzero(self.fixed_local)
        L[ti, :, jj] = 0.0
        L[ti, jj, :] = 0.0
        L[ti, jj, jj] = 1.0
        self.Linv = np.linalg.inv(L)

        inter = ~mesh.boundary_edge_mask
        lam_of_edge = -np.ones(mesh.n_edges, dtype=np.int64)
        lam_of_edge[inter] = np.arange(inter.sum())
        e = mesh.t2e
        first = mesh.e2t[e, 0] == np.arange(nt)[:, None]      # (nt, 3)
        sign = np.where(first, 1.0, -1.0) * inter[e]
        self.sgn = np.repeat(sign, 4, axis=1)                 # (nt, 12)
        self.active = self.sgn != 0
        self.lidx = np.where(self.active,
                             (4 * lam_of_edge[e][:, :, None] + np.arange(4)).reshape(nt, 12), 0)
        # edge residuals enter through the first adjacent triangle only
        own = np.ones((nt, 15), dtype=bool)
        own[:, :12] = np.repeat(first, 4, axis=1)
        self.own = own
        self.nl = 4 * int(inter.sum())

        Sk = self.sgn[:, :, None] * self.Linv[:, :12, :12] * self.sgn[:, None, :]
        T, I, J = np.nonzero(self.active[:, :, None] & self.active[:, None, :])
        S = sp.coo_matrix((Sk[T, I, J], (self.lidx[T, I], self.lidx[T, J])),
                          shape=(self.nl, self.nl)).tocsr()
        S = 0.5 * (S + S.T)

        self.pure = system.n_mult > 0
        self.pinned = np.zeros(0, dtype=np.int64)
        if self.pure:
            self._setup_rigid(A, B)
            S = S.tolil()
            for k in self.pinned:
                S.rows[k], S.data[k] = [], []
            S = S.tocsc()
            keep = np.ones(self.nl, dtype=bool)
            keep[self.pinned] = False
            D = sp.diags(keep.astype(float))
            S = (D @ S @ D + sp.diags((~keep).astype(float))).tocsc()

        mid = mesh.vertices[mesh.edges[inter]].mean(axis=1)
        xy = np.repeat(mid, 4, axis=0)
        self.perm = nested_dissection(xy, S)
        Sp = S[self.perm][:, self.perm].tocsc()
        self.lu, self.pivot_ratio = _factorize(Sp, permc_spec="NATURAL", diag_pivot_thresh=0.0,
                                               options=dict(SymmetricMode=True))
        self.nnz = int(self.lu.L.nnz + self.lu.U.nnz)

    # ------------------------------------------------------------------
    def _setup_rigid(self, A, B):
        s = self.system
        mesh = s.space.mesh
        nt = mesh.n_triangles
        self.rho = _rigid_nodal(mesh)                          # (3, 6 nt)
        Bm = s.B
        self.R = s.matrix[s.n_sigma + s.n_u:, s.n_sigma:s.n_sigma + s.n_u].toarray()   # (3, n_u)
        self.Bt_rho = np.asarray(Bm.T @ self.rho.T).T          # (3, n_sigma)
        self.gram_m = self.rho @ self.R.T                      # (3, 3)
        self.gram_u = self.R @ self.rho.T
        # kernel of the multiplier system: lambda generated by rigid displacements
        loc = np.einsum("tkp,atk->atp", B, self.rho.reshape(3, nt, 6))[:, :, :12]
        kern = np.zeros((3, self.nl))
        first = self.active & (self.sgn > 0)
        for a in range(3):
            kern[a, self.lidx[first]] = -loc[a][first]
        _, _, piv = sla.qr(kern, mode="economic", pivoting=True)
        self.pinned = np.sort(piv[:3])

    def apply(self, b: np.ndarray, fixed_values: np.ndarray | None = None) -> np.ndarray:
        """Solve the reduced system for ``b`` (free rows) with given fixed values."""
        s = self.system
        space = s.space
        nt = space.mesh.n_triangles
        ns, nu, nm = s.n_sigma, s.n_u, s.n_mult
        free = s.free()
        full = np.zeros(s.size)
        full[free] = b
        rs, ru, rm = full[:ns], full[ns:ns + nu], full[ns + nu:]
        xfix = np.zeros(ns)
        if fixed_values is not None:
            xfix[s.fixed] = fixed_values

        m = np.zeros(nm)
        if self.pure:
            t = self.Bt_rho[:, s.fixed] @ xfix[s.fixed]
            m = np.linalg.solve(self.gram_m, self.rho @ ru - t)
            ru = ru - self.R.T @ m

        sd = space.sigma_dofs
        rhs = np.zeros((nt, 21))
        rhs[:, :15] = np.where(self.own, rs[sd], 0.0)
        rhs[:, 15:] = ru.reshape(nt, 6)
        vals = np.where(self.fixed_local, xfix[sd], 0.0)
        rhs -= np.einsum("tij,tj->ti", self.L_full[:, :, :15], vals)
        ti, jj = np.nonzero(self.fixed_local)
        rhs[ti, jj] = vals[ti, jj]

        y = np.einsum("tij,tj->ti", self.Linv, rhs)
        rl = np.zeros(self.nl)
        np.add.at(rl, self.lidx[self.active], (self.sgn * y[:, :12])[self.active])
        rl[self.pinned] = 0.0
        lam = np.empty(self.nl)
        lam[self.perm] = self.lu.solve(rl[self.perm])
        g = np.where(self.active, self.sgn * lam[self.lidx], 0.0)
        x_loc = y - np.einsum("tij,tj->ti", self.Linv[:, :, :12], g)

        sigma = np.zeros(ns)
        sigma[sd.ravel()] = x_loc[:, :15].ravel()
        sigma[s.fixed] = xfix[s.fixed]
        u = x_loc[:, 15:].ravel()
        if self.pure:
            c = np.linalg.solve(self.gram_u, rm - self.R @ u)
            u = u + self.rho.T @ c
        return np.concatenate([sigma, u, m])


def solve_saddle(system: SaddleSystem, tol: float = DEFAULT_TOL, method: str = "hybrid",
                 max_refine: int = 5):
    """Solve the system and split the result.

    Parameters
    ----------
    method : {"hybrid", "direct"}
        ``"hybrid"`` falls back to ``"direct"`` when condensation is impossible.

    Returns
    -------
    (MixedSolution, SolveReport)
        The report's residual refers to the reduced (eliminated) system.
    """
    _check_tol(tol)
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    Mf, bf, free, x = system.reduced()
    solver = None
    if method == "hybrid":
        try:
            solver = HybridSolver(system)
        except ValueError as exc:
            log.debug("hybrid path unavailable (%s); using direct LU", exc)
    if solver is None:
        xf, report = solve_matrix(Mf, bf, tol, max_refine)
    else:
        # fixed values are already eliminated from bf
        apply = lambda r: solver.apply(r)[free]          # noqa: E731
        xf, res, steps = _refine(Mf, bf, apply, tol, max_refine)
        ok = bool(np.isfinite(res) and res <= tol)
        report = SolveReport(float(res), steps, Mf.shape[0], solver.nnz, solver.pivot_ratio, ok,
                             "hybrid")
        if not ok:
            raise SolverConvergenceError(
                f"relative residual {res:.3e} above tolerance {tol:.1e} after {steps} refinement steps")
    x = x.copy()
    x[free] = xf
    log.debug("solved %d unknowns, residual %.2e", report.n_unknowns, report.relative_residual)
    ns, nu = system.n_sigma, system.n_u
    sol = MixedSolution(system.space, system.material, x[:ns], x[ns:ns + nu], x[ns + nu:],
                        system.load_p1)
    return sol, report
