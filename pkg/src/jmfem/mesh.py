"""Conforming triangular macro meshes.

A :class:`MacroMesh` stores vertex coordinates, positively oriented
triangles and tagged boundary edges. Triangle vertex order also encodes the
newest-vertex-bisection data: vertex 0 is the newest vertex and the edge
opposite it, ``(v1, v2)``, is the refinement edge.

Local edge ``i`` of a triangle is the edge opposite local vertex ``i``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Mapping, Optional, Union

import numpy as np


class BoundaryTag(enum.IntEnum):
    """Boundary condition type carried by a boundary edge."""

    TRACTION = 1
    DIRICHLET = 2

    @property
    def label(self) -> str:
        return {1: "TractionN", 2: "DirichletD"}[int(self)]

    @classmethod
    def parse(cls, s) -> "BoundaryTag":
        if isinstance(s, BoundaryTag):
            return s
        s = str(s).strip()
        for tag in cls:
            if s in (tag.label, tag.name, str(int(tag))):
                return tag
        raise ValueError(f"unknown boundary tag {s!r}")


TagSpec = Union[BoundaryTag, Mapping[str, BoundaryTag], Callable[[np.ndarray], np.ndarray], None]


def _edge_key(a, b):
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True, eq=False)
class MacroMesh:
    """Triangulation with tagged boundary edges.

    Parameters
    ----------
    vertices : (nv, 2) array
    triangles : (nt, 3) int array, counter-clockwise
    boundary : mapping from sorted vertex pairs to :class:`BoundaryTag`
    parent : optional (nt,) array mapping each triangle to the triangle of the
        mesh it was refined from.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary: Mapping[tuple, BoundaryTag]
    parent: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(
            self, "boundary",
            {_edge_key(int(a), int(b)): BoundaryTag(tag) for (a, b), tag in self.boundary.items()},
        )

    # ------------------------------------------------------------------
    # sizes and geometry
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def coords(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape ``(nt, 3, 2)``."""
        return self.vertices[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.coords
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.coords
        lens = np.linalg.norm(p[:, [1, 2, 0]] - p[:, [2, 0, 1]], axis=2)
        return lens.max(axis=1)

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.coords.mean(axis=1)

    @cached_property
    def refinement_edges(self) -> np.ndarray:
        """Vertex pair of each triangle's bisection edge, shape ``(nt, 2)``."""
        return self.triangles[:, [1, 2]].copy()

    # ------------------------------------------------------------------
    # topology
    @cached_property
    def _topology(self):
        t = self.triangles
        loc = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)  # (nt,3,2)
        flat = np.sort(loc.reshape(-1, 2), axis=1)
        edges, inv = np.unique(flat, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        t2e = inv.reshape(-1, 3)
        e2t = -np.ones((len(edges), 2), dtype=np.int64)
        tri_idx = np.repeat(np.arange(len(t)), 3)
        loc_idx = np.tile(np.arange(3), len(t))
        order = np.argsort(inv, kind="stable")
        first = np.ones(len(inv), dtype=bool)
        first[1:] = inv[order][1:] != inv[order][:-1]
        slot = np.where(first, 0, 1)
        if np.any(np.bincount(inv) > 2):
            raise ValueError("an edge is shared by more than two triangles")
        e2t[inv[order], slot] = tri_idx[order]
        e2l = -np.ones((len(edges), 2), dtype=np.int64)
        e2l[inv[order], slot] = loc_idx[order]
        for arr in (edges, t2e, e2t, e2l):
            arr.setflags(write=False)
        return edges, t2e, e2t, e2l

    @property
    def edges(self) -> np.ndarray:
        """Edges as sorted vertex pairs, ``(ne, 2)``."""
        return self._topology[0]

    @property
    def t2e(self) -> np.ndarray:
        """Global edge of local edge ``i`` (opposite vertex ``i``), ``(nt, 3)``."""
        return self._topology[1]

    @property
    def e2t(self) -> np.ndarray:
        """Adjacent triangles per edge, ``-1`` in the second slot on the boundary."""
        return self._topology[2]

    @property
    def e2l(self) -> np.ndarray:
        """Local edge index inside each adjacent triangle."""
        return self._topology[3]

    @cached_property
    def boundary_edge_mask(self) -> np.ndarray:
        return self.e2t[:, 1] < 0

    @cached_property
    def edge_tags(self) -> np.ndarray:
        """Tag per edge, 0 for interior edges."""
        tags = np.zeros(self.n_edges, dtype=np.int64)
        for i in np.flatnonzero(self.boundary_edge_mask):
            a, b = self.edges[i]
            tags[i] = self.boundary.get((int(a), int(b)), 0)
        return tags

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        v = self.vertices
        return np.linalg.norm(v[self.edges[:, 1]] - v[self.edges[:, 0]], axis=1)

    @cached_property
    def edge_normals(self) -> np.ndarray:
        """Unit normal per edge.

        Interior edges: the tangent from the lower to the higher vertex index
        rotated clockwise. Boundary edges: the outward normal.
        """
        v = self.vertices
        d = v[self.edges[:, 1]] - v[self.edges[:, 0]]
        n = np.stack([d[:, 1], -d[:, 0]], axis=1) / self.edge_lengths[:, None]
        bnd = np.flatnonzero(self.boundary_edge_mask)
        if len(bnd):
            tri = self.e2t[bnd, 0]
            inner = self.barycenters[tri] - v[self.edges[bnd, 0]]
            flip = np.einsum("ij,ij->i", inner, n[bnd]) > 0
            n[bnd[flip]] *= -1.0
        return n

    def dirichlet_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_tags == BoundaryTag.DIRICHLET)

    def traction_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_tags == BoundaryTag.TRACTION)

    @property
    def pure_traction(self) -> bool:
        return not np.any(self.edge_tags == BoundaryTag.DIRICHLET)

    # ------------------------------------------------------------------
    def validate(self) -> None:
        """Check orientation, conformity and boundary tagging.

        Raises
        ------
        ValueError
            Describing the first violated invariant.
        """
        if np.any(self.areas <= 0):
            raise ValueError("triangles must be positively oriented and nondegenerate")
        e2t = self.e2t
        bnd = self.boundary_edge_mask
        keys = {(int(a), int(b)) for a, b in self.edges[bnd]}
        if keys != set(self.boundary):
            missing = keys - set(self.boundary)
            extra = set(self.boundary) - keys
            raise ValueError(f"boundary tags mismatch: untagged {sorted(missing)[:5]}, "
                             f"not on boundary {sorted(extra)[:5]}")
        # hanging nodes show up as vertices lying inside a boundary edge
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.triangles.ravel()] = True
        if not used.all():
            raise ValueError("mesh has unused vertices")
        if np.any(e2t[:, 0] < 0):
            raise ValueError("edge without adjacent triangle")
        v = self.vertices
        bedges = self.edges[bnd]
        a, b = v[bedges[:, 0]], v[bedges[:, 1]]
        bverts = np.unique(bedges)
        for p_idx in bverts:
            p = v[p_idx]
            d = b - a
            t = np.einsum("ij,ij->i", p - a, d) / np.einsum("ij,ij->i", d, d)
            dist = np.abs(d[:, 0] * (p - a)[:, 1] - d[:, 1] * (p - a)[:, 0]) / np.linalg.norm(d, axis=1)
            inside = (t > 1e-10) & (t < 1 - 1e-10) & (dist < 1e-12 * np.linalg.norm(d, axis=1))
            if inside.any():
                raise ValueError(f"hanging node at vertex {p_idx}")

    def min_angles(self) -> np.ndarray:
        """Smallest interior angle of each triangle, in radians."""
        p = self.coords
        angles = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            w = p[:, (i + 2) % 3] - p[:, i]
            c = np.einsum("ij,ij->i", u, w) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
            angles.append(np.arccos(np.clip(c, -1.0, 1.0)))
        return np.min(angles, axis=0)

    # ------------------------------------------------------------------
    @classmethod
    def from_arrays(cls, vertices, triangles, boundary_tag: TagSpec = None,
                    longest_edge_first: bool = True) -> "MacroMesh":
        """Build a mesh, orienting triangles and tagging boundary edges.

        ``boundary_tag`` is a single tag, a callable mapping boundary edge
        midpoints ``(m, 2)`` to tags, or ``None`` (all traction).
        With ``longest_edge_first`` each triangle is rotated so that its
        longest edge becomes the refinement edge.
        """
        v = np.asarray(vertices, dtype=float)
        t = np.array(triangles, dtype=np.int64)
        p = v[t]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
        t[neg] = t[neg][:, [0, 2, 1]]
        if longest_edge_first:
            p = v[t]
            lens = np.linalg.norm(p[:, [1, 2, 0]] - p[:, [2, 0, 1]], axis=2)
            k = np.argmax(lens, axis=1)
            idx = (np.arange(3)[None, :] + k[:, None]) % 3
            t = np.take_along_axis(t, idx, axis=1)
        mesh = cls(v, t, {})
        bedges = mesh.edges[mesh.boundary_edge_mask]
        tags = _resolve_tags(boundary_tag, v, bedges)
        return cls(v, t, {(int(a), int(b)): BoundaryTag(g) for (a, b), g in zip(bedges, tags)})

    def with_tags(self, boundary_tag: TagSpec) -> "MacroMesh":
        bedges = self.edges[self.boundary_edge_mask]
        tags = _resolve_tags(boundary_tag, self.vertices, bedges)
        return MacroMesh(self.vertices, self.triangles,
                         {(int(a), int(b)): BoundaryTag(g) for (a, b), g in zip(bedges, tags)})


def _resolve_tags(spec: TagSpec, v, bedges) -> np.ndarray:
    mid = 0.5 * (v[bedges[:, 0]] + v[bedges[:, 1]])
    if spec is None:
        return np.full(len(bedges), int(BoundaryTag.TRACTION))
    if isinstance(spec, (BoundaryTag, int)):
        return np.full(len(bedges), int(spec))
    if callable(spec):
        return np.asarray([int(BoundaryTag(int(x))) for x in np.broadcast_to(spec(mid), len(mid))])
    raise TypeError(f"unsupported boundary tag specification {spec!r}")


def square_sides(**sides: BoundaryTag) -> Callable[[np.ndarray], np.ndarray]:
    """Tag function for axis-aligned boxes: ``square_sides(left=BoundaryTag.DIRICHLET)``.

    Unnamed sides get :attr:`BoundaryTag.TRACTION`. The box extent is taken
    from the midpoints passed in.
    """
    unknown = set(sides) - {"left", "right", "bottom", "top"}
    if unknown:
        raise ValueError(f"unknown sides {unknown}")

    def tag(mid):
        lo, hi = mid.min(axis=0), mid.max(axis=0)
        out = np.full(len(mid), int(BoundaryTag.TRACTION))
        tol = 1e-12 * max(1.0, float(np.max(np.abs(mid))))
        for name, (ax, val) in {"left": (0, lo[0]), "right": (0, hi[0]),
                                "bottom": (1, lo[1]), "top": (1, hi[1])}.items():
            if name in sides:
                out[np.abs(mid[:, ax] - val) < tol] = int(sides[name])
        return out

    return tag


# ----------------------------------------------------------------------
# generators
def _grid_triangles(n):
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)  # idx[i, j], x index i
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    v01 = idx[:-1, 1:].ravel()
    return np.concatenate([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)])


def generate_unit_square(n: int, boundary_tag: TagSpec = None) -> MacroMesh:
    """Structured mesh of the unit square with ``2 n^2`` triangles."""
    if n < 1:
        raise ValueError("n must be at least 1")
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s, indexing="ij")
    v = np.stack([X.ravel(), Y.ravel()], axis=1)
    return MacroMesh.from_arrays(v, _grid_triangles(n), boundary_tag)


def _merge(vertex_blocks, tri_blocks, tol=1e-12):
    v = np.concatenate(vertex_blocks)
    offs = np.cumsum([0] + [len(b) for b in vertex_blocks[:-1]])
    t = np.concatenate([tb + o for tb, o in zip(tri_blocks, offs)])
    key = np.round(v / tol).astype(np.int64)
    _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    return v[first], inv.reshape(-1)[t]


def generate_lshape(a: float = 1.0, n: int = 1) -> MacroMesh:
    """Rotated L-shaped domain with the reentrant corner at the origin.

    The domain is the diamond ``|x| + |y| <= sqrt(2) a`` minus the diamond
    ``|x - a/sqrt(2)| + |y| <= a/sqrt(2)``; it is the union of three squares of
    side ``a``, each split into ``2 n^2`` triangles. All edges carry tractions.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    r = a / np.sqrt(2.0)
    A, M, Mp, E = np.array([r, r]), np.array([-r, r]), np.array([-r, -r]), np.array([r, -r])
    s = np.linspace(0.0, 1.0, n + 1)
    S, T = np.meshgrid(s, s, indexing="ij")
    S, T = S.ravel()[:, None], T.ravel()[:, None]
    blocks = [S * e1 + T * e2 for e1, e2 in ((A, M), (M, Mp), (Mp, E))]
    tri = _grid_triangles(n)
    v, t = _merge(blocks, [tri] * 3, tol=1e-12 * a)
    v[np.all(np.abs(v) < 1e-13 * a, axis=1)] = 0.0
    return MacroMesh.from_arrays(v, t, BoundaryTag.TRACTION)


def generate_plate_with_hole(a: float = 1.0, b: float = 4.0, w: float = 4.0,
                             segments: int = 16, layers: Optional[int] = None) -> MacroMesh:
    """Rectangle ``(-b, b) x (-w, w)`` minus a polygonal circular hole.

    The hole is the regular ``segments``-gon inscribed in the circle of radius
    ``a``. The mesh is an O-grid with ``layers`` graded rings between hole and
    rectangle; ``segments`` must be a multiple of 8 so that the rectangle
    corners are grid points.
    """
    if not (0 < a < min(b, w)):
        raise ValueError("need 0 < a < min(b, w)")
    if segments < 8 or segments % 8:
        raise ValueError("segments must be a positive multiple of 8")
    theta = 2.0 * np.pi * np.arange(segments) / segments
    c, s = np.cos(theta), np.sin(theta)
    inner = a * np.stack([c, s], axis=1)
    m = np.maximum(np.abs(c), np.abs(s))
    outer = np.stack([b * c / m, w * s / m], axis=1)
    # exact corners/midpoints despite trig rounding
    outer = np.where(np.abs(np.abs(outer) - [b, w]) < 1e-12 * max(b, w), np.sign(outer) * [b, w], outer)
    outer[np.abs(outer) < 1e-12 * max(b, w)] = 0.0
    inner[np.abs(inner) < 1e-14 * a] = 0.0
    if layers is None:
        q = 1.0 + 2.0 * np.pi / segments
        ratio = min(b, w) / a
        layers = max(2, int(np.ceil(np.log(ratio) / np.log(q))))
    q = 1.0 + 2.0 * np.pi / segments
    tt = (q ** np.arange(layers + 1) - 1.0) / (q**layers - 1.0)
    pts = inner[None, :, :] * (1 - tt)[:, None, None] + outer[None, :, :] * tt[:, None, None]
    v = pts.reshape(-1, 2)
    idx = np.arange(len(v)).reshape(layers + 1, segments)
    jn = np.roll(np.arange(segments), -1)
    p00 = idx[:-1, :].ravel()
    p10 = idx[1:, :].ravel()
    p11 = idx[1:, jn].ravel()
    p01 = idx[:-1, jn].ravel()
    d1 = np.linalg.norm(v[p00] - v[p11], axis=1)
    d2 = np.linalg.norm(v[p10] - v[p01], axis=1)
    use1 = d1 <= d2
    tri = np.concatenate([
        np.stack([p00, p10, p11], 1)[use1], np.stack([p00, p11, p01], 1)[use1],
        np.stack([p00, p10, p01], 1)[~use1], np.stack([p10, p11, p01], 1)[~use1],
    ])
    return MacroMesh.from_arrays(v, tri, BoundaryTag.TRACTION)


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class MacroSplit:
    """Barycentric split of one triangle into three sub-triangles.

    Sub-triangle ``i`` is ``(z_{i+1}, z_{i+2}, c)``, i.e. it is opposite macro
    vertex ``z_i`` and contains macro edge ``i``.
    """

    barycenter: np.ndarray
    sub_triangles: np.ndarray  # (3, 3, 2)
    internal_edges: np.ndarray  # (3, 2, 2): segment c -> z_j

    @property
    def sub_areas(self) -> np.ndarray:
        p = self.sub_triangles
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def split_coords(coords: np.ndarray) -> np.ndarray:
    """Sub-triangle vertex coordinates for macro triangles ``(..., 3, 2)`` -> ``(..., 3, 3, 2)``."""
    c = coords.mean(axis=-2)
    z1 = np.roll(coords, -1, axis=-2)
    z2 = np.roll(coords, -2, axis=-2)
    cc = np.broadcast_to(c[..., None, :], z1.shape)
    return np.stack([z1, z2, cc], axis=-2)


def barycentric_split(mesh: MacroMesh, k: int) -> MacroSplit:
    if not 0 <= k < mesh.n_triangles:
        raise IndexError(f"triangle index {k} out of range")
    z = mesh.coords[k]
    c = z.mean(axis=0)
    subs = split_coords(z)
    internal = np.stack([np.stack([c, z[j]]) for j in range(3)])
    return MacroSplit(c, subs, internal)


def split_mesh(mesh: MacroMesh) -> MacroMesh:
    """Promote every sub-triangle of the barycentric split to a macro triangle.

    The returned mesh's ``parent`` holds ``3 * k + i`` for sub-triangle ``i``
    of triangle ``k``.
    """
    nv, nt = mesh.n_vertices, mesh.n_triangles
    v = np.concatenate([mesh.vertices, mesh.barycenters])
    t = mesh.triangles
    c = nv + np.arange(nt)
    tri = np.stack([np.stack([t[:, (i + 1) % 3], t[:, (i + 2) % 3], c], 1) for i in range(3)], 1)
    # newest vertex first: the barycenter, refinement edge = the macro edge
    tri = tri[:, :, [2, 0, 1]].reshape(-1, 3)
    return MacroMesh(v, tri, dict(mesh.boundary), parent=np.arange(3 * nt))


def locate_points(mesh: MacroMesh, x, tol: float = 1e-10, candidates: int = 8):
    """Containing triangle and barycentric coordinates of many points.

    Parameters
    ----------
    x : (m, 2) array_like
    tol : float
        Barycentric slack for points on edges.
    candidates : int
        Nearest barycenters tried before falling back to a full scan.

    Returns
    -------
    tri : (m,) int array
    bary : (m, 3) array

    Raises
    ------
    ValueError
        If a point lies outside the mesh.
    """
    from scipy.spatial import cKDTree

    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, nt = len(x), mesh.n_triangles
    z = mesh.coords
    T = np.stack([z[:, 1] - z[:, 0], z[:, 2] - z[:, 0]], axis=2)     # (nt, 2, 2)
    Tinv = np.linalg.inv(T)

    def bary_in(t, pts):
        l12 = np.einsum("mij,mj->mi", Tinv[t], pts - z[t, 0])
        return np.column_stack([1.0 - l12.sum(axis=1), l12])

    tri = np.full(m, -1)
    bary = np.zeros((m, 3))
    k = min(candidates, nt)
    _, near = cKDTree(mesh.barycenters).query(x, k=k)
    near = near.reshape(m, k)
    for j in range(k):
        todo = np.flatnonzero(tri < 0)
        if not len(todo):
            break
        b = bary_in(near[todo, j], x[todo])
        ok = b.min(axis=1) >= -tol
        tri[todo[ok]], bary[todo[ok]] = near[todo[ok], j], b[ok]
    for i in np.flatnonzero(tri < 0):
        b = bary_in(np.arange(nt), np.broadcast_to(x[i], (nt, 2)))
        t = int(np.argmax(b.min(axis=1)))
        if b[t].min() < -tol:
            raise ValueError(f"point {x[i]} lies outside the mesh")
        tri[i], bary[i] = t, b[t]
    return tri, bary


# ----------------------------------------------------------------------
def refine(mesh: MacroMesh, marked) -> MacroMesh:
    """Newest-vertex bisection of the marked triangles plus conforming closure.

    Every marked triangle is bisected at least once. The result carries
    ``parent`` indices into ``mesh``; boundary edges keep their tags.
    """
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked,
                                  dtype=np.int64))
    nt = mesh.n_triangles
    if len(marked) and (marked.min() < 0 or marked.max() >= nt):
        raise IndexError("marked triangle index out of range")
    if len(marked) == 0:
        return MacroMesh(mesh.vertices, mesh.triangles, dict(mesh.boundary), parent=np.arange(nt))

    t2e = mesh.t2e
    cut = np.zeros(mesh.n_edges, dtype=bool)
    cut[t2e[marked, 0]] = True
    while True:
        need = (cut[t2e[:, 1]] | cut[t2e[:, 2]]) & ~cut[t2e[:, 0]]
        if not need.any():
            break
        cut[t2e[need, 0]] = True

    edges = mesh.edges
    cut_idx = np.flatnonzero(cut)
    nv = mesh.n_vertices
    new_pts = 0.5 * (mesh.vertices[edges[cut_idx, 0]] + mesh.vertices[edges[cut_idx, 1]])
    vertices = np.concatenate([mesh.vertices, new_pts])
    nv_tot = len(vertices)
    cut_keys = edges[cut_idx, 0] * nv_tot + edges[cut_idx, 1]
    order = np.argsort(cut_keys)
    cut_keys = cut_keys[order]
    mid_of = (nv + np.arange(len(cut_idx)))[order]

    def lookup(a, b):
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        key = lo * nv_tot + hi
        pos = np.searchsorted(cut_keys, key)
        pos = np.minimum(pos, len(cut_keys) - 1)
        hit = cut_keys[pos] == key
        return hit, mid_of[pos]

    tri = mesh.triangles.copy()
    parent = np.arange(nt)
    while True:
        hit, mid = lookup(tri[:, 1], tri[:, 2])
        if not hit.any():
            break
        h = np.flatnonzero(hit)
        v0, v1, v2, p = tri[h, 0], tri[h, 1], tri[h, 2], mid[h]
        child1 = np.stack([p, v2, v0], 1)
        child2 = np.stack([p, v0, v1], 1)
        keep = ~hit
        tri = np.concatenate([tri[keep], child1, child2])
        parent = np.concatenate([parent[keep], parent[h], parent[h]])

    boundary = {}
    for (a, b), tag in mesh.boundary.items():
        hit, mid = lookup(np.array([a]), np.array([b]))
        if hit[0]:
            m = int(mid[0])
            boundary[_edge_key(a, m)] = tag
            boundary[_edge_key(m, b)] = tag
        else:
            boundary[(a, b)] = tag
    return MacroMesh(vertices, tri, boundary, parent=parent)


def refine_uniform(mesh: MacroMesh, times: int = 1) -> MacroMesh:
    """Bisect every triangle twice per sweep (four children each); parents compose."""
    parent = np.arange(mesh.n_triangles)
    for _ in range(2 * times):
        mesh = refine(mesh, np.arange(mesh.n_triangles))
        parent = parent[mesh.parent]
    return MacroMesh(mesh.vertices, mesh.triangles, mesh.boundary, parent=parent)


# ----------------------------------------------------------------------
# plain-text IO
def write_mesh(mesh: MacroMesh, path) -> None:
    """Write ``nv nt nb`` then vertex, triangle and boundary-edge lines."""
    lines = [f"{mesh.n_vertices} {mesh.n_triangles} {len(mesh.boundary)}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines += [f"{a} {b} {tag.label}" for (a, b), tag in sorted(mesh.boundary.items())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> MacroMesh:
    """Read the format produced by :func:`write_mesh`; triangle order is kept."""
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()
            and not ln.lstrip().startswith("#")]
    try:
        nv, nt, nb = map(int, rows[0])
        verts = np.array([[float(x) for x in r] for r in rows[1:1 + nv]])
        tris = np.array([[int(x) for x in r] for r in rows[1 + nv:1 + nv + nt]], dtype=np.int64)
        bnd = {(int(r[0]), int(r[1])): BoundaryTag.parse(r[2])
               for r in rows[1 + nv + nt:1 + nv + nt + nb]}
    except (ValueError, IndexError) as exc:
        raise ValueError(f"malformed mesh file {path}: {exc}") from exc
    if len(verts) != nv or len(tris) != nt or len(bnd) != nb:
        raise ValueError(f"malformed mesh file {path}: counts do not match header")
    mesh = MacroMesh(verts.reshape(nv, 2), tris.reshape(nt, 3), bnd)
    mesh.validate()
    return mesh
