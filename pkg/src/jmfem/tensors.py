"""Symmetric 2x2 tensors and the isotropic plane-strain constitutive law.

Tensors are stored as three numbers ``(xx, yy, xy)`` with the off-diagonal
entry stored once. Every contraction accounts for the weight 2 on ``xy``.
The array-level functions accept any array whose last axis has length 3, so
the same code handles a single tensor and a field sampled at many points.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DIM = 2

#: Weights turning a componentwise product into the Frobenius contraction.
FROB_WEIGHTS = np.array([1.0, 1.0, 2.0])

#: ``(xx, yy, xy)`` representation of the identity.
IDENTITY = np.array([1.0, 1.0, 0.0])


@dataclass(frozen=True)
class SymTensor2:
    """A symmetric 2x2 tensor."""

    xx: float
    yy: float
    xy: float

    @classmethod
    def from_array(cls, a) -> "SymTensor2":
        a = np.asarray(a, dtype=float)
        if a.shape == (2, 2):
            return cls(a[0, 0], a[1, 1], 0.5 * (a[0, 1] + a[1, 0]))
        return cls(*map(float, a.reshape(3)))

    def to_array(self) -> np.ndarray:
        return np.array([self.xx, self.yy, self.xy], dtype=float)

    def to_matrix(self) -> np.ndarray:
        return np.array([[self.xx, self.xy], [self.xy, self.yy]])

    @property
    def trace(self) -> float:
        return self.xx + self.yy

    def frobenius_sq(self) -> float:
        return self.xx**2 + self.yy**2 + 2.0 * self.xy**2

    def __add__(self, other: "SymTensor2") -> "SymTensor2":
        return SymTensor2(self.xx + other.xx, self.yy + other.yy, self.xy + other.xy)

    def __sub__(self, other: "SymTensor2") -> "SymTensor2":
        return SymTensor2(self.xx - other.xx, self.yy - other.yy, self.xy - other.xy)

    def __mul__(self, c: float) -> "SymTensor2":
        return SymTensor2(c * self.xx, c * self.yy, c * self.xy)

    __rmul__ = __mul__


@dataclass(frozen=True)
class Material:
    """Isotropic material given by the Lame pair ``(mu, lam)``.

    Large finite ``lam`` stands in for the incompressible limit.
    """

    mu: float
    lam: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"shear modulus must be positive, got {self.mu}")
        if not (self.lam >= 0 and np.isfinite(self.lam)):
            raise ValueError(f"lambda must be finite and non-negative, got {self.lam}")

    @property
    def dim(self) -> int:
        return DIM

    def compliance_matrix(self) -> np.ndarray:
        """3x3 matrix ``M`` with ``(C s):t = s @ M @ t`` in ``(xx, yy, xy)`` storage."""
        c = self.lam / (2.0 * self.mu + DIM * self.lam)
        return np.array(
            [[1.0 - c, -c, 0.0], [-c, 1.0 - c, 0.0], [0.0, 0.0, 2.0]]
        ) / (2.0 * self.mu)

    def scaled(self, c: float) -> "Material":
        return Material(c * self.mu, c * self.lam)


def lame_from_engineering(E: float, nu: float) -> Material:
    """Lame parameters from Young's modulus and Poisson's ratio.

    Raises
    ------
    ValueError
        If ``nu >= 0.5`` (lambda is unbounded there) or ``E <= 0``.
    """
    if not E > 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if not (0.0 <= nu < 0.5):
        raise ValueError(f"Poisson ratio must lie in [0, 0.5), got {nu}")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return Material(mu=mu, lam=lam)


def _as_array(tau):
    if isinstance(tau, SymTensor2):
        return tau.to_array(), True
    return np.asarray(tau, dtype=float), False


def _wrap(a, scalar_input):
    return SymTensor2(*a) if scalar_input else a


def trace(tau):
    a, _ = _as_array(tau)
    return a[..., 0] + a[..., 1]


def contract(s, t):
    """Frobenius contraction ``s : t``."""
    a, _ = _as_array(s)
    b, _ = _as_array(t)
    return np.sum(a * b * FROB_WEIGHTS, axis=-1)


def frobenius_norm(tau):
    return np.sqrt(contract(tau, tau))


def deviatoric(tau):
    """Trace-free part ``tau - tr(tau)/2 I``."""
    a, scalar = _as_array(tau)
    out = a.copy()
    half_tr = 0.5 * trace(a)
    out[..., 0] -= half_tr
    out[..., 1] -= half_tr
    return _wrap(out, scalar)


def compliance_apply(m: Material, tau):
    """Strain produced by the stress ``tau``.

    Evaluated as ``tau^D / (2 mu) + tr(tau) / (d (2 mu + d lam)) I``, which
    avoids the cancellation of the textbook form for large ``lam``.
    """
    a, scalar = _as_array(tau)
    out = deviatoric(a) / (2.0 * m.mu)
    iso = trace(a) / (DIM * (2.0 * m.mu + DIM * m.lam))
    out[..., 0] += iso
    out[..., 1] += iso
    return _wrap(out, scalar)


def elasticity_apply(m: Material, eps):
    """Stress produced by the strain ``eps``; inverse of :func:`compliance_apply`.

    Evaluated as ``2 mu eps^D + (2 mu / d + lam) tr(eps) I``.
    """
    a, scalar = _as_array(eps)
    out = 2.0 * m.mu * deviatoric(a)
    iso = (2.0 * m.mu / DIM + m.lam) * trace(a)
    out[..., 0] += iso
    out[..., 1] += iso
    return _wrap(out, scalar)


def energy_density(m: Material, tau):
    """Pointwise ``(C tau) : tau``, evaluated through the deviatoric/trace split.

    ``(C tau) : tau = |tau^D|^2 / (2 mu) + tr(tau)^2 / (d (2 mu + d lam))``
    with ``d = 2``.
    """
    a, _ = _as_array(tau)
    dev = deviatoric(a)
    return contract(dev, dev) / (2.0 * m.mu) + trace(a) ** 2 / (DIM * (2.0 * m.mu + DIM * m.lam))


def strain_from_gradient(grad):
    """Symmetric part of a displacement gradient ``grad[..., i, j] = d u_i / d x_j``."""
    g = np.asarray(grad, dtype=float)
    return np.stack(
        [g[..., 0, 0], g[..., 1, 1], 0.5 * (g[..., 0, 1] + g[..., 1, 0])], axis=-1
    )


def traction(tau, n):
    """``tau n`` for tensors ``(..., 3)`` and normals ``(..., 2)``."""
    a, _ = _as_array(tau)
    n = np.asarray(n, dtype=float)
    return np.stack(
        [a[..., 0] * n[..., 0] + a[..., 2] * n[..., 1],
         a[..., 2] * n[..., 0] + a[..., 1] * n[..., 1]],
        axis=-1,
    )
