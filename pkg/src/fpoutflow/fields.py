"""Autonomous vector fields and the built-in catalog.

All callables are vectorized over points: they take an ``(N, d)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class VectorField:
    """A C^2 vector field ``v`` on R^d.

    ``divergence_fn`` is optional; without it the divergence is taken by
    central differences with step ``1e-5 * scale``.
    """

    dim: int
    velocity: Callable[[np.ndarray], np.ndarray]
    divergence_fn: Callable[[np.ndarray], np.ndarray] | None = None
    jacobian_fn: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    smoothness: str = "C2"
    scale: float = 1.0

    def _points(self, x):
        pts = np.asarray(x, dtype=float)
        return pts.reshape(-1, self.dim)

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.velocity(self._points(x)), dtype=float)

    def divergence(self, x) -> np.ndarray:
        pts = self._points(x)
        if self.divergence_fn is not None:
            return np.asarray(self.divergence_fn(pts), dtype=float).reshape(len(pts))
        return self.fd_divergence(pts)

    def fd_divergence(self, x, step: float | None = None) -> np.ndarray:
        pts = self._points(x)
        eps = 1e-5 * self.scale if step is None else step
        div = np.zeros(len(pts))
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = eps
            div += (self(pts + e)[:, k] - self(pts - e)[:, k]) / (2 * eps)
        return div

    def jacobian(self, x) -> np.ndarray:
        """Derivative matrices, shape ``(N, d, d)`` with ``J[n, i, j] = dv_i/dx_j``."""
        pts = self._points(x)
        if self.jacobian_fn is not None:
            return np.asarray(self.jacobian_fn(pts), dtype=float).reshape(len(pts), self.dim, self.dim)
        eps = 1e-5 * self.scale
        jac = np.empty((len(pts), self.dim, self.dim))
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = eps
            jac[:, :, k] = (self(pts + e) - self(pts - e)) / (2 * eps)
        return jac


def constant_drift(velocity) -> VectorField:
    c = np.atleast_1d(np.asarray(velocity, dtype=float))
    d = len(c)
    return VectorField(
        d,
        lambda x: np.broadcast_to(c, x.shape).copy(),
        lambda x: np.zeros(len(x)),
        lambda x: np.zeros((len(x), d, d)),
        name="constant_drift",
        params={"velocity": c.tolist()},
    )


def linear_field(matrix, offset=None, name: str = "linear") -> VectorField:
    """``v(x) = A x + b``."""
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    d = A.shape[0]
    b = np.zeros(d) if offset is None else np.atleast_1d(np.asarray(offset, dtype=float))
    tr = float(np.trace(A))
    return VectorField(
        d,
        lambda x: x @ A.T + b,
        lambda x: np.full(len(x), tr),
        lambda x: np.broadcast_to(A, (len(x), d, d)).copy(),
        name=name,
        params={"matrix": A.tolist(), "offset": b.tolist()},
    )


def linear_1d(a: float = 1.0, b: float = 0.0) -> VectorField:
    f = linear_field([[a]], [b], name="linear_1d")
    return replace(f, params={"a": a, "b": b})


def rotation(omega: float = 1.0) -> VectorField:
    """Rigid rotation ``v = omega (-y, x)``."""
    f = linear_field([[0.0, -omega], [omega, 0.0]], name="rotation")
    return replace(f, params={"omega": omega})


def saddle(a: float = 1.0, b: float = 1.0) -> VectorField:
    f = linear_field([[a, 0.0], [0.0, -b]], name="saddle")
    return replace(f, params={"a": a, "b": b})


def shear(s: float = 1.0) -> VectorField:
    f = linear_field([[0.0, s], [0.0, 0.0]], name="shear")
    return replace(f, params={"s": s})


def gradient_bump(center=(0.0, 0.0), amplitude: float = 1.0, width: float = 0.5) -> VectorField:
    """Gradient ascent of a Gaussian bump ``g``: ``v = grad g``, ``div v = laplace g``."""
    c = np.asarray(center, dtype=float)
    d = len(c)
    s2 = float(width) ** 2

    def g(x):
        return amplitude * np.exp(-np.sum((x - c) ** 2, axis=1) / (2 * s2))

    def velocity(x):
        return -g(x)[:, None] * (x - c) / s2

    def divergence(x):
        r2 = np.sum((x - c) ** 2, axis=1)
        return g(x) * (r2 / s2**2 - d / s2)

    def jacobian(x):
        y = x - c
        outer = y[:, :, None] * y[:, None, :] / s2**2
        return g(x)[:, None, None] * (outer - np.eye(d)[None] / s2)

    return VectorField(d, velocity, divergence, jacobian, name="gradient_bump",
                       params={"center": c.tolist(), "amplitude": amplitude, "width": width})


def zero_field(dim: int) -> VectorField:
    f = constant_drift(np.zeros(dim))
    return replace(f, name="zero", params={"dim": dim})


FIELD_CATALOG = {
    "constant_drift": constant_drift,
    "linear_1d": linear_1d,
    "linear": linear_field,
    "rotation": rotation,
    "saddle": saddle,
    "shear": shear,
    "gradient_bump": gradient_bump,
    "zero": zero_field,
}


def make_field(name: str, **params) -> VectorField:
    try:
        factory = FIELD_CATALOG[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown field {name!r}; choose from {sorted(FIELD_CATALOG)}") from None
    return factory(**params)
