"""Benchmark problems with closed-form solutions.

``hole``
    Infinite plate with a traction-free circular hole of radius ``a`` under
    uniaxial tension ``sigma_inf``, cut to ``(-b, b) x (-w, w)``; tractions of
    the exact stress on the whole boundary. The hole is an inscribed polygon.
    Because the exact stress is smooth and divergence free on the polygonal
    domain as well, it is the exact solution of the polygonal problem.

``lshape``
    Rotated L-shaped domain with the leading symmetric corner singularity,
    ``sigma ~ r^(alpha - 1)``, tractions on the whole boundary, no body load.

``manufactured``
    Unit square clamped on ``x = 0``, tractions elsewhere, with

        u = curl(psi) / (2 mu) + w / (lambda + mu),
        psi = cos(pi y) (x cosh(pi x) - sinh(pi x) / pi),
        w = (sinh(pi x) sin(pi y) + x^2, 0),

    so that ``u = 0`` on ``x = 0`` and the stress
    ``sigma = eps(curl psi) + 2 mu/(lambda+mu) eps(w) + lambda/(lambda+mu) div(w) I``
    stays bounded as ``lambda -> infinity``. Since ``Laplace(psi)/2`` is a harmonic
    conjugate of ``div w`` up to the quadratic part, the body load
    ``f = -(1/2 Laplace(curl psi) + mu/(lambda+mu) Laplace(w) + grad div w)``
    reduces to the constant ``(-2 (1 + mu/(lambda+mu)), 0)``. A constant load has
    no data oscillation, which keeps the error estimator asymptotically exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .mesh import (BoundaryTag, MacroMesh, generate_lshape, generate_plate_with_hole,
                   generate_unit_square, square_sides)
from .tensors import Material, SymTensor2, compliance_apply, lame_from_engineering, traction

LSHAPE_ALPHA = 0.544483737
LSHAPE_Q = 0.543075579


@dataclass
class Benchmark:
    """A boundary value problem, optionally with its exact solution.

    All callables are vectorized over points ``(m, 2)``; ``traction(x, n)``
    also receives outward unit normals.
    """

    name: str
    material: Material
    base_mesh: Callable[[], MacroMesh]
    body_load: Optional[Callable] = None
    traction: Optional[Callable] = None
    displacement: Optional[Callable] = None
    stress: Optional[Callable] = None
    strain: Optional[Callable] = None
    pure_traction: bool = True
    singular_points: tuple = ()
    params: dict = field(default_factory=dict)

    @property
    def has_exact(self) -> bool:
        return self.stress is not None

    @property
    def kappa(self) -> float:
        return self.params.get("kappa", np.nan)


def _kappa(material: Material) -> float:
    # kappa = 3 - 4 nu with nu = lam / (2 (lam + mu))
    nu = material.lam / (2.0 * (material.lam + material.mu))
    return 3.0 - 4.0 * nu


def _polar(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.hypot(x[:, 0], x[:, 1]), np.arctan2(x[:, 1], x[:, 0])


# ----------------------------------------------------------------------
# circular hole
def hole_stress(x, a: float = 1.0, sigma_inf: float = 1.0) -> np.ndarray:
    r, th = _polar(x)
    q2, q4 = (a / r) ** 2, (a / r) ** 4
    c2, c4, s2, s4 = np.cos(2 * th), np.cos(4 * th), np.sin(2 * th), np.sin(4 * th)
    sxx = 1.0 - q2 * (1.5 * c2 + c4) + 1.5 * q4 * c4
    syy = -q2 * (0.5 * c2 - c4) - 1.5 * q4 * c4
    sxy = -q2 * (0.5 * s2 + s4) + 1.5 * q4 * s4
    return sigma_inf * np.stack([sxx, syy, sxy], axis=1)


def hole_displacement(x, material: Material, a: float = 1.0, sigma_inf: float = 1.0) -> np.ndarray:
    r, th = _polar(x)
    k = _kappa(material)
    pre = sigma_inf * a / (8.0 * material.mu)
    ux = r / a * (k + 1) * np.cos(th) + 2 * a / r * ((1 + k) * np.cos(th) + np.cos(3 * th)) \
        - 2 * (a / r) ** 3 * np.cos(3 * th)
    uy = r / a * (k - 3) * np.sin(th) + 2 * a / r * ((1 - k) * np.sin(th) + np.sin(3 * th)) \
        - 2 * (a / r) ** 3 * np.sin(3 * th)
    return pre * np.stack([ux, uy], axis=1)


def hole_exact(point, a: float, sigma_inf: float, material: Material, inside_tol: float = 0.0):
    """Exact displacement and stress of the hole problem at one point.

    Raises
    ------
    ValueError
        If ``|point| < a * (1 - inside_tol)``.
    """
    p = np.asarray(point, dtype=float).reshape(1, 2)
    if np.hypot(*p[0]) < a * (1.0 - inside_tol):
        raise ValueError(f"point {p[0]} lies inside the hole of radius {a}")
    return hole_displacement(p, material, a, sigma_inf)[0], SymTensor2(*hole_stress(p, a, sigma_inf)[0])


def hole_benchmark(E: float = 1.0, nu: float = 0.3, a: float = 1.0, b: float = 4.0,
                   w: float = 4.0, segments: int = 32, sigma_inf: float = 1.0) -> Benchmark:
    m = lame_from_engineering(E, nu)

    def stress(x):
        return hole_stress(x, a, sigma_inf)

    return Benchmark(
        name="hole", material=m,
        base_mesh=lambda: generate_plate_with_hole(a, b, w, segments),
        traction=lambda x, n: traction(stress(x), n),
        displacement=lambda x: hole_displacement(x, m, a, sigma_inf),
        stress=stress, strain=lambda x: compliance_apply(m, stress(x)),
        pure_traction=True,
        params=dict(a=a, b=b, w=w, segments=segments, sigma_inf=sigma_inf, E=E, nu=nu,
                    kappa=_kappa(m)),
    )


# ----------------------------------------------------------------------
# L-shape
def _lshape_local_polar(x):
    # theta measured from the domain bisector (the negative x axis), in (-pi, pi]
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.hypot(x[:, 0], x[:, 1]), np.arctan2(-x[:, 1], -x[:, 0])


def lshape_stress(x) -> np.ndarray:
    r, th = _lshape_local_polar(x)
    al, Q = LSHAPE_ALPHA, LSHAPE_Q
    rr = al * r ** (al - 1.0)
    c1, c3 = np.cos((al - 1) * th), np.cos((al - 3) * th)
    s1, s3 = np.sin((al - 1) * th), np.sin((al - 3) * th)
    sxx = rr * ((2 - Q * (al + 1)) * c1 - (al - 1) * c3)
    syy = rr * ((2 + Q * (al + 1)) * c1 + (al - 1) * c3)
    sxy = rr * ((al - 1) * s3 + Q * (al + 1) * s1)
    # a rotation by pi leaves tensor components unchanged
    return np.stack([sxx, syy, sxy], axis=1)


def lshape_displacement(x, material: Material) -> np.ndarray:
    r, th = _lshape_local_polar(x)
    al, Q = LSHAPE_ALPHA, LSHAPE_Q
    k = _kappa(material)
    pre = r**al / (2.0 * material.mu)
    ux = pre * ((k - Q * (al + 1)) * np.cos(al * th) - al * np.cos((al - 2) * th))
    uy = pre * ((k + Q * (al + 1)) * np.sin(al * th) + al * np.sin((al - 2) * th))
    # vector components flip sign under the rotation by pi
    return -np.stack([ux, uy], axis=1)


def lshape_exact(point, material: Material):
    """Exact displacement (up to rigid motions) and stress at one point of the L-shape.

    Raises
    ------
    ValueError
        At the reentrant corner, where the stress is singular.
    """
    p = np.asarray(point, dtype=float).reshape(1, 2)
    if np.hypot(*p[0]) == 0.0:
        raise ValueError("the L-shape solution is singular at the origin")
    return lshape_displacement(p, material)[0], SymTensor2(*lshape_stress(p)[0])


def lshape_benchmark(E: float = 1.0, nu: float = 0.3, a: float = 1.0, n: int = 1) -> Benchmark:
    m = lame_from_engineering(E, nu)
    return Benchmark(
        name="lshape", material=m,
        base_mesh=lambda: generate_lshape(a, n),
        traction=lambda x, nn: traction(lshape_stress(x), nn),
        displacement=lambda x: lshape_displacement(x, m),
        stress=lshape_stress, strain=lambda x: compliance_apply(m, lshape_stress(x)),
        pure_traction=True, singular_points=((0.0, 0.0),),
        params=dict(a=a, n=n, E=E, nu=nu, kappa=_kappa(m)),
    )


# ----------------------------------------------------------------------
# smooth manufactured problem
_PI = np.pi


def manufactured_fields(x, material: Material):
    """Displacement ``(m, 2)``, strain ``(m, 3)``, stress ``(m, 3)`` and load ``(m, 2)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    X, Y = x[:, 0], x[:, 1]
    mu, lam = material.mu, material.lam
    cw = 1.0 / (lam + mu)
    S, C = np.sinh(_PI * X), np.cosh(_PI * X)
    sy, cy = np.sin(_PI * Y), np.cos(_PI * Y)

    curl_psi = np.stack([-sy * (_PI * X * C - S), -_PI * X * S * cy], axis=1)
    w = np.stack([S * sy + X**2, np.zeros_like(X)], axis=1)
    u = curl_psi / (2 * mu) + cw * w
    eps_curl = _PI**2 * X[:, None] * np.stack([-S * sy, S * sy, -C * cy], axis=1)
    eps_w = np.stack([_PI * C * sy + 2 * X, np.zeros_like(X), 0.5 * _PI * S * cy], axis=1)
    div_w = eps_w[:, 0]
    strain = eps_curl / (2 * mu) + cw * eps_w
    stress = eps_curl + 2 * mu * cw * eps_w
    stress[:, 0] += lam * cw * div_w
    stress[:, 1] += lam * cw * div_w
    f = np.zeros_like(x)
    f[:, 0] = -2.0 * (1.0 + mu * cw)
    return u, strain, stress, f


def manufactured_smooth(material: Material, n: int = 4) -> Benchmark:
    """Smooth problem on the unit square, clamped at ``x = 0``; base mesh ``n x n``."""

    def stress(x):
        return manufactured_fields(x, material)[2]

    return Benchmark(
        name="manufactured", material=material,
        base_mesh=lambda: generate_unit_square(n, square_sides(left=BoundaryTag.DIRICHLET)),
        body_load=lambda x: manufactured_fields(x, material)[3],
        traction=lambda x, nn: traction(stress(x), nn),
        displacement=lambda x: manufactured_fields(x, material)[0],
        stress=stress,
        strain=lambda x: manufactured_fields(x, material)[1],
        pure_traction=False,
        params=dict(n=n),
    )


BENCHMARKS = ("manufactured", "lshape", "hole")


def make_benchmark(name: str, E: float = 1.0, nu: float = 0.3, **params) -> Benchmark:
    """Benchmark by name with engineering material constants."""
    if name == "hole":
        return hole_benchmark(E, nu, **params)
    if name == "lshape":
        return lshape_benchmark(E, nu, **params)
    if name == "manufactured":
        return manufactured_smooth(lame_from_engineering(E, nu), **params)
    raise ValueError(f"unknown benchmark {name!r}; choose from {BENCHMARKS}")
