"""Symmetric quadrature rules on triangles and Gauss rules on edges.

Rules are stored in barycentric coordinates with weights normalized to sum
to one, so integrating over a triangle ``K`` is ``|K| * sum(w * f(x))``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np

MAX_ORDER = 10


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points ``(n, 3)`` and weights ``(n,)`` summing to one."""

    points: np.ndarray
    weights: np.ndarray
    order: int

    def __len__(self):
        return len(self.weights)

    def physical_points(self, tri: np.ndarray) -> np.ndarray:
        """Map the rule to triangles ``tri`` of shape ``(..., 3, 2)`` -> ``(..., n, 2)``."""
        return np.einsum("qa,...ad->...qd", self.points, tri)


def _orbit(*bary):
    pts = {tuple(p) for p in permutations(bary)}
    return sorted(pts)


def _symmetric(groups):
    pts, wts = [], []
    for bary, w in groups:
        orbit = _orbit(*bary)
        pts.extend(orbit)
        wts.extend([w] * len(orbit))
    return np.array(pts), np.array(wts)


# Dunavant rules (all weights positive for these degrees).
_TABLES = {
    1: [((1 / 3, 1 / 3, 1 / 3), 1.0)],
    2: [((2 / 3, 1 / 6, 1 / 6), 1 / 3)],
    4: [
        ((0.108103018168070, 0.445948490915965, 0.445948490915965), 0.223381589678011),
        ((0.816847572980459, 0.091576213509771, 0.091576213509771), 0.109951743655322),
    ],
    5: [
        ((1 / 3, 1 / 3, 1 / 3), 0.225),
        ((0.059715871789770, 0.470142064105115, 0.470142064105115), 0.132394152788506),
        ((0.797426985353087, 0.101286507323456, 0.101286507323456), 0.125939180544827),
    ],
    6: [
        ((0.501426509658179, 0.249286745170910, 0.249286745170910), 0.116786275726379),
        ((0.873821971016996, 0.063089014491502, 0.063089014491502), 0.050844906370207),
        ((0.053145049844817, 0.310352451033784, 0.636502499121399), 0.082851075618374),
    ],
    8: [
        ((1 / 3, 1 / 3, 1 / 3), 0.144315607677787),
        ((0.081414823414554, 0.459292588292723, 0.459292588292723), 0.095091634267285),
        ((0.658861384496480, 0.170569307751760, 0.170569307751760), 0.103217370534718),
        ((0.898905543365938, 0.050547228317031, 0.050547228317031), 0.032458497623198),
        ((0.008394777409958, 0.263112829634638, 0.728492392955404), 0.027230314174435),
    ],
}


def _collapsed_gauss(order):
    # Duffy-collapsed Gauss rule, then averaged over the six vertex permutations
    n = (order + 3) // 2
    g, gw = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (g + 1.0)
    gw = 0.5 * gw
    u, v = np.meshgrid(s, s, indexing="ij")
    wu, wv = np.meshgrid(gw, gw, indexing="ij")
    x = u.ravel()
    y = (v * (1.0 - u)).ravel()
    w = (wu * wv * (1.0 - u)).ravel() * 2.0
    bary = np.stack([1.0 - x - y, x, y], axis=1)
    pts = np.concatenate([bary[:, p] for p in permutations(range(3))])
    wts = np.tile(w, 6) / 6.0
    return pts, wts


@lru_cache(maxsize=None)
def make_quadrature(order: int) -> QuadratureRule:
    """Symmetric triangle rule exact for polynomials of total degree ``order``.

    Orders without a tabulated Dunavant rule use the next tabulated one; orders
    9 and 10 fall back to a symmetrized collapsed Gauss rule.
    """
    if not (isinstance(order, (int, np.integer)) and 1 <= order <= MAX_ORDER):
        raise ValueError(f"unsupported quadrature order {order!r}; use 1..{MAX_ORDER}")
    for key in sorted(_TABLES):
        if key >= order:
            pts, wts = _symmetric(_TABLES[key])
            break
    else:
        pts, wts = _collapsed_gauss(order)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, int(order))


@lru_cache(maxsize=None)
def gauss_line(n: int):
    """Gauss-Legendre rule on ``[0, 1]``: returns ``(s, w)`` with ``sum(w) == 1``."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w
